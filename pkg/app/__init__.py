"""Fully Aligned Network — Application Package"""

# *** exports

# ** version
__version__ = '0.1.0'
