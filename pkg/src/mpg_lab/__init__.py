"""Independent two-timescale learning in Markov potential games."""

__version__ = "0.1.0"
