"""
aiida_finebalance

Workflows comparing variable-ratio matches.
"""
