"""Test suite for the epimodulation toolkit."""
