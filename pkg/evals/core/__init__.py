"""
Core experiment infrastructure: config loading, trial runner, result tables.
"""
