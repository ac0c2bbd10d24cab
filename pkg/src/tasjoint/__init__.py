"""Joint time-domain separation and end-to-end recognition at desk scale."""
__version__ = "0.1.0"
