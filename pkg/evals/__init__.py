"""
Experiment harness for reproducible multi-trial training runs.
"""
