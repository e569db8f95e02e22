"""Report files, run manifests and the append-only run journal.

Journaling must never block a training run.
"""
