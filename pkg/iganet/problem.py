"""Scattering problem settings shared by the solve, convergence and training paths."""
from __future__ import annotations

from dataclasses import dataclass, replace

from iganet.analytic import ExcitationDipole
from iganet.config import RunConfig
from iganet.geometry import MultipatchSurface, make_spheroid, refine_surface
from iganet.quadrature import QuadratureSettings
from iganet.spaces import DivConformingSpace, build_space


@dataclass(frozen=True)
class ProblemSetup:
    excitation: ExcitationDipole
    degree: int = 1
    refinement: int = 1
    quadrature: QuadratureSettings = QuadratureSettings()

    @classmethod
    def from_config(cls, config: RunConfig) -> "ProblemSetup":
        physics = config.physics
        return cls(
            excitation=ExcitationDipole(
                physics.dipole_position, physics.dipole_moment, physics.kappa, physics.permittivity
            ),
            degree=config.discretization.degree,
            refinement=config.discretization.refinement,
            quadrature=QuadratureSettings(**vars(config.quadrature)),
        )

    def at_level(self, refinement: int) -> "ProblemSetup":
        return replace(self, refinement=refinement)

    def refine(self, surface: MultipatchSurface) -> MultipatchSurface:
        return refine_surface(surface, self.refinement)

    def discretize(self, surface: MultipatchSurface) -> DivConformingSpace:
        return build_space(self.refine(surface), self.degree)

    def spheroid_space(self, r_semi: float) -> DivConformingSpace:
        return self.discretize(make_spheroid(r_semi))
