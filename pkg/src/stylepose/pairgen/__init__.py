"""Synthetic data generation, capture simulation, pose providers,
mismatch filtering, and weak-pair construction."""
