"""
aiida_finebalance

Variable-ratio matching with fine balance for observational studies, with
provenance recorded through AiiDA.
"""

__version__ = "0.1.0"
