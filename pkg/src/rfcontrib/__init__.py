"""Random forests with feature-contribution decomposition, goodness-of-visualization and contribution plots."""

__version__ = "0.1.0"
