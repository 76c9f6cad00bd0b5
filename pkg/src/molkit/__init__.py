"""Two-layered GNN property prediction and MILP-based chemical graph inference."""

__version__ = "0.1.0"
