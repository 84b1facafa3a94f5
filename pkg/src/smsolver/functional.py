"""The semiclassical energy, its weighted-Sobolev gradient, and Hessian products.

For a field u on a grid with spacing h the energy is

    E(u) = 1/2 ||u||_eps^2 + (omega/4) G(u) - (1/p) |u+|_{eps,p}^p

with the coupling term  G(u) = (1/eps^d) h^d sum(u^2 v),  v the induced
potential of u.  The first variation tested against w reads

    E'(u)[w] = <u, w>_eps + (1/eps^d) h^d sum( (omega u v - (u+)^{p-1}) w )

so its Riesz representative in the eps-inner product is

    grad E(u) = u - riesz_embed( (u+)^{p-1} - omega u v ).

Taking the gradient in the native inner product preconditions descent: step
sizes stay order one independent of h.  The second variation applied to a
direction phi is assembled the same way from the potential derivative.
Positive parts use 0^x := 0; with p > 4 both (u+)^{p-1} and (u+)^{p-2} are
differentiable where needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import (DomainGrid, Field, dot, h1_inner_eps, h1_norm_eps,
                   lp_power_eps)
from .poisson import CgOptions, PoissonSolver


@dataclass(frozen=True)
class Params:
    """Physical constants of one experiment: eps, omega, q, p, cutoff radius r."""

    eps: float
    omega: float = 1.0
    q: float = 1.0
    p: float = 5.0
    r: float = 0.5

    def __post_init__(self):
        if min(self.eps, self.omega, self.q, self.r) <= 0:
            raise ValueError("eps, omega, q, r must be strictly positive")
        if not 4.0 < self.p < 6.0:
            raise ValueError(f"p out of range (4,6): p={self.p}")


@dataclass
class EnergyBreakdown:
    kinetic: float      # 1/2 ||u||_eps^2
    coupling: float     # (omega/4) G(u)
    potential: float    # (1/p) |u+|_{eps,p}^p
    total: float = field(init=False)

    def __post_init__(self):
        self.total = self.kinetic + self.coupling - self.potential


class EnergyModel:
    """Energy, gradient, constraint data and Hessian products on one grid.

    Owns the Poisson solver so induced potentials are cached across the many
    evaluations a descent makes; all reductions honor the deterministic flag
    of the CG options.
    """

    def __init__(self, grid: DomainGrid, params: Params, cg: CgOptions | None = None):
        self.grid = grid
        self.params = params
        self.cg = cg or CgOptions()
        self.poisson = PoissonSolver(grid, self.cg)

    # -- basic pieces -------------------------------------------------------

    def potential(self, u: Field) -> Field:
        return self.poisson.induced_potential(u, self.params.q)

    def norm_sq_eps(self, u: Field) -> float:
        return h1_inner_eps(u, u, self.params, self.cg.deterministic)

    def inner_eps(self, u: Field, w: Field) -> float:
        return h1_inner_eps(u, w, self.params, self.cg.deterministic)

    def norm_eps(self, u: Field) -> float:
        return h1_norm_eps(u, self.params, self.cg.deterministic)

    def quad_eps(self, values) -> float:
        g = self.grid
        return g.h**g.d / self.params.eps**g.d * float(np.sum(values))

    def coupling_energy(self, u: Field) -> float:
        """G(u) = (1/eps^d) h^d sum(u^2 potential(u)) >= 0."""
        if not u.values.any():
            return 0.0
        v = self.potential(u)
        return self.quad_eps(u.values**2 * v.values)

    def _coupling_term(self, u: Field) -> float:
        # the energy only ever needs omega*G; skip the solve when decoupled
        if self.params.omega == 0.0:
            return 0.0
        return self.coupling_energy(u)

    def lp_power(self, u: Field) -> float:
        return lp_power_eps(u, self.params.p, self.params, positive_part=True)

    # -- energy and derivatives ---------------------------------------------

    def ray_coefficients(self, w: Field) -> tuple[float, float, float]:
        """(A, G, B) with E(t w) = t^2/2 A + t^4/4 omega G - t^p/p B."""
        return self.norm_sq_eps(w), self._coupling_term(w), self.lp_power(w)

    def energy(self, u: Field) -> EnergyBreakdown:
        a, g, b = self.ray_coefficients(u)
        return EnergyBreakdown(kinetic=0.5 * a,
                               coupling=0.25 * self.params.omega * g,
                               potential=b / self.params.p)

    def _nonlinear_embeddings(self, u: Field) -> tuple[Field, Field]:
        """riesz_embed of (u+)^{p-1} and of u*potential(u), warm-started."""
        p, eps = self.params.p, self.params.eps
        up = np.maximum(u.values, 0.0)
        jp = self.poisson.riesz_embed(Field(self.grid, up ** (p - 1)), eps, warm_key="jp")
        if self.params.omega == 0.0:
            jpsi = self.grid.zeros()
        else:
            v = self.potential(u)
            jpsi = self.poisson.riesz_embed(Field(self.grid, u.values * v.values),
                                            eps, warm_key="jpsi")
        return jp, jpsi

    def gradient(self, u: Field) -> Field:
        """Riesz representative of E'(u) in the eps-inner product."""
        jp, jpsi = self._nonlinear_embeddings(u)
        return Field(self.grid,
                     u.values - jp.values + self.params.omega * jpsi.values)

    def gradient_and_normal(self, u: Field) -> tuple[Field, Field]:
        """Gradient plus the constraint-normal direction of N(u) = E'(u)[u].

        N'(u)[w] = 2<u,w>_eps + (1/eps^d) int (4 omega u v - p (u+)^{p-1}) w,
        so the normal is  2u + riesz_embed(4 omega u v - p (u+)^{p-1}).
        """
        jp, jpsi = self._nonlinear_embeddings(u)
        om, p = self.params.omega, self.params.p
        g = Field(self.grid, u.values - jp.values + om * jpsi.values)
        n = Field(self.grid, 2.0 * u.values - p * jp.values + 4.0 * om * jpsi.values)
        return g, n

    def nehari_residual(self, u: Field) -> float:
        """E'(u)[u] = ||u||_eps^2 + omega G(u) - |u+|_p^p; zero on the constraint set."""
        if not u.values.any():
            raise ValueError("nehari residual undefined for the zero field")
        a, g, b = self.ray_coefficients(u)
        return a + self.params.omega * g - b

    def hess_vec(self, u: Field, phi: Field) -> Field:
        """eps-Riesz representative of the second variation applied to phi.

        E''(u)[phi, .] = <phi, .>_eps + (1/eps^d) int [ omega (v phi + u v'(u)[phi])
                          - (p-1) (u+)^{p-2} phi ] . dx
        """
        p, om, q, eps = self.params.p, self.params.omega, self.params.q, self.params.eps
        up = np.maximum(u.values, 0.0)
        dens = -(p - 1.0) * up ** (p - 2.0) * phi.values
        if om != 0.0:
            v = self.potential(u)
            dv = self.poisson.potential_derivative(u, phi, q)
            dens = dens + om * (v.values * phi.values + u.values * dv.values)
        correction = self.poisson.riesz_embed(Field(self.grid, dens), eps)
        return Field(self.grid, phi.values + correction.values)


# -- spec-level convenience wrappers ---------------------------------------

def g_eps(u: Field, params: Params, cg: CgOptions | None = None) -> float:
    return EnergyModel(u.grid, params, cg).coupling_energy(u)


def energy(u: Field, params: Params, cg: CgOptions | None = None) -> EnergyBreakdown:
    return EnergyModel(u.grid, params, cg).energy(u)


def sobolev_gradient(u: Field, params: Params, cg: CgOptions | None = None) -> Field:
    return EnergyModel(u.grid, params, cg).gradient(u)


def nehari_residual(u: Field, params: Params, cg: CgOptions | None = None) -> float:
    return EnergyModel(u.grid, params, cg).nehari_residual(u)


def hess_vec(u: Field, phi: Field, params: Params, cg: CgOptions | None = None) -> Field:
    return EnergyModel(u.grid, params, cg).hess_vec(u, phi)
