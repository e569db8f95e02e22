"""Sparse observations, latent factor pair, prediction and loss."""
