"""Per-entry PID control of the regularization coefficient."""
