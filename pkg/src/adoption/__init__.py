"""Visibility, interest and fitness model of item adoption in social streams."""
