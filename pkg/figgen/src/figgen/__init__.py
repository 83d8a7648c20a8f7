"""figgen: batch figure regeneration from vaccination-sweep CSV files."""

__version__ = "0.1.0"
