"""Digital-twin simulator for urban LTE coverage and nomadic-node placement."""

__version__ = "0.1.0"
