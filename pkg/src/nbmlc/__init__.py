"""Non-binary multilevel LDPC reconciliation for energy-time QKD key-rate studies."""

__version__ = "0.1.0"
