"""
Tests for sscm_spectra
"""
