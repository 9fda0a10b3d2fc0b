"""Pipeline services: acquisition, tracking and per-frame processing."""
