"""Per-class style-transfer training: patch pipeline, networks, losses."""
