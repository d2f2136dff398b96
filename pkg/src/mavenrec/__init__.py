"""Group recommendation with attentive maven detection and a set encoder."""

__version__ = "0.1.0"
