"""In-sandbox runner shim; see shim.py for the child protocol."""

__version__ = "0.1.0"
