"""Core types: geometry, configuration, interfaces and exceptions."""
