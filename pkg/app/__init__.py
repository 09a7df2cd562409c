"""
pinncw - convolution-weighted physics-informed neural network training
"""

__version__ = "0.1.0"
