"""Off-diagonal solutions of Einstein equations with nonholonomic frames."""

__version__ = "0.1.0"
