"""Learning causal models from overlapping datasets, with VC-style generalization bounds."""

__version__ = "0.1.0"
