"""
Tests for the Endo Key-frame Tool.
Synthetic fixtures live in tests.synthetic.
"""
