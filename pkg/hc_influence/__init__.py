"""Influence maximization under the Heat Conduction diffusion model."""
