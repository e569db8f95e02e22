"""Held-out accuracy metrics and the optimizer comparison harness."""
