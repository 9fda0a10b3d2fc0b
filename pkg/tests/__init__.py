"""Tests for multipose."""
