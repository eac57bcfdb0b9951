# file generated by dynamic versioning during build when enabled
__version__ = "1.0.0"
