"""Dataset ingestion, normalization, splitting and synthetic generation."""
