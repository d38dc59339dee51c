"""Weak Galerkin solver for singularly perturbed convection-diffusion on Bakhvalov meshes."""

__version__ = "0.1.0"
