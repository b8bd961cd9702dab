"""
dppce - Learn low-rank DPP kernels from baskets with maximum likelihood,
contrastive estimation and NCE, and serve next-item predictions.
"""

__version__ = "0.1.0"
__author__ = "dppce contributors"
