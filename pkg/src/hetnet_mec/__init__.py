"""Joint communication, computing and caching allocation for virtualized HetNets."""

__version__ = "0.1.0"
