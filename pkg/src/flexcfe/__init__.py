"""Flexible carbon-free-energy planning toolkit."""
