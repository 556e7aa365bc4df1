"""
EBCO Core Module
Explanation-based multi-label combinatorial optimization over tabular features.
"""

__version__ = "1.0.0"
