"""Depth and label image ingestion."""
