"""Maximum entropy policies for persistent surveillance on gridworlds."""

__version__ = "0.1.0"
