"""Command-line front end: synthetic shapes, metrics, I/O, and pipelines."""
