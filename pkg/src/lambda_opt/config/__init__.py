"""Defaults, dataset presets and configuration precedence."""
