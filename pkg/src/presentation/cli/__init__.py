"""Command Line Interface using Rich and Typer."""
