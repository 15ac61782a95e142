"""
aiida_finebalance

Data types for variable-ratio matching runs.
"""
