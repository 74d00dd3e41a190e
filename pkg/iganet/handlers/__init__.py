from . import convergence, geometry, solve, training

__all__ = ["geometry", "solve", "convergence", "training"]
