"""Two-component Camassa-Holm simulator and weighted-persistence verification."""
__version__ = "0.1.0"
