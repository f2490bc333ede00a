"""Origin-conditioned trajectory encoding for measuring spatial-perspective asymmetry in cities."""

__version__ = "0.1.0"
