"""Presentation layer - User interfaces and CLI."""
