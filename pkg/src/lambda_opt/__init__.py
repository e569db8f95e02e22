"""lambda-opt: Low-rank matrix completion with PID-controlled regularization."""

__version__ = "0.1.0"
