"""Multi-agent performance analysis, tuning and migration on a simulated grid."""

__version__ = "0.1.0"
