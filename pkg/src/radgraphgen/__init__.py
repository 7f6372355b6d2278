"""Image-to-radiology-graph generation with schemata-based prior knowledge."""

__version__ = "0.1.0"
