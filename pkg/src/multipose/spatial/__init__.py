"""Spatial indexing."""
