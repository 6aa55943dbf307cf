"""
Mean-value theorem lab: exact counting, exponent fitting and geometric checks
"""
__version__ = "1.0.0"
