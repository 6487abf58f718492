"""Multi-modal similarity integration, synthetic benchmarks and network evaluation."""

__version__ = "0.1.0"
