"""
Test suite for the alpha_discrepancy package.
"""
