"""rf-puf-sim - transmitter identification from analog impairments."""

__version__ = "0.1.0"
