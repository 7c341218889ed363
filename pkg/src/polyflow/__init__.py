"""Convex polytopes as manifolds with corners: face lattices, standard charts,
extension of compatible face data, and flows of stratified vector fields."""
__version__ = "0.1.0"
