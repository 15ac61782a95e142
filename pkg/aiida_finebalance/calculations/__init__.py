"""
aiida_finebalance

Calculation functions recording variable-ratio matches in the provenance graph.
"""
