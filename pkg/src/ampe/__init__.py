"""Physics-guided single-image deraining: synthesis, networks, training, evaluation."""

__version__ = "0.1.0"
