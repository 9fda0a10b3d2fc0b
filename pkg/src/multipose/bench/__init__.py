"""Synthetic benchmark harness."""
