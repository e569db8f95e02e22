"""Test suite for theta-guard."""
