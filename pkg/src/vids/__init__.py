"""Two-stage vehicular intrusion detection with hybrid model compression."""

__version__ = "0.1.0"
