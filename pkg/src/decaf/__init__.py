"""
Causal decoupling for out-of-distribution node classification.
"""

__version__ = "0.1.0"
