"""Sampling recovery and sparse-grid interpolation in Gaussian Bochner spaces."""
