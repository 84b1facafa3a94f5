"""Constraint-set projection and projected Sobolev-gradient descent.

Nontrivial critical points of the energy satisfy N(u) = E'(u)[u] = 0.  Along
a ray t*w the residual is the scalar function

    N(t w) = t^2 A + t^4 omega G - t^p B,    A = ||w||_eps^2, B = |w+|_p^p,

so each admissible w (one with B > 0) carries a unique positive scale t(w)
placing it on the constraint set; uniqueness needs p > 4, and the second
derivative of the ray energy is negative there, which the projection
verifies.  Descent alternates a step along the gradient component tangent to
the constraint set with a rescale back onto it, plus Armijo backtracking on
the composed energy.  The coupling term scales exactly as t^4, so a
retraction needs no new potential solve and the rescaled potential is seeded
straight into the cache.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .concentration import barycenter
from .functional import EnergyBreakdown, EnergyModel
from .grid import Field
from .poisson import CgError


class ProjectionError(ValueError):
    """Field has no positive part, so no ray scale exists."""


class SolveError(RuntimeError):
    """No seed produced a converged critical point."""


@dataclass
class DescentOptions:
    grad_tol: float = 1e-6        # relative to ||u||_eps
    nehari_tol: float = 1e-9      # relative to ||u||_eps^2
    max_iter: int = 2000
    step0: float = 1.0
    backtrack: float = 0.5
    armijo: float = 1e-4
    step_floor: float = 1e-8

    def __post_init__(self):
        vals = [self.grad_tol, self.nehari_tol, self.max_iter, self.step0,
                self.backtrack, self.armijo, self.step_floor]
        if min(vals) <= 0:
            raise ValueError("descent options must be positive")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtracking factor must lie in (0,1)")


@dataclass
class SolveReport:
    field: Field
    energy: EnergyBreakdown
    grad_norm: float
    nehari_abs: float
    iterations: int
    barycenter: np.ndarray
    min_value: float
    ray_hessian: float
    converged: bool
    wall_time: float
    trace: list = field(default_factory=list)
    eps: float = 0.0
    seed_label: str = ""

    def summary(self) -> dict:
        return {
            "energy": self.energy.total,
            "kinetic": self.energy.kinetic,
            "coupling": self.energy.coupling,
            "potential": self.energy.potential,
            "grad_norm": self.grad_norm,
            "nehari_abs": self.nehari_abs,
            "iterations": self.iterations,
            "barycenter": [float(x) for x in self.barycenter],
            "min_value": self.min_value,
            "ray_hessian": self.ray_hessian,
            "converged": self.converged,
            "wall_time": self.wall_time,
            "eps": self.eps,
            "seed_label": self.seed_label,
        }


# ---------------------------------------------------------------------------
# ray projection
# ---------------------------------------------------------------------------

def nehari_scale(A: float, G: float, B: float, p: float) -> float:
    """Unique t > 0 with A + G t^2 = B t^{p-2}; G already carries omega.

    Bracketing by doubling, bisection to 1e-12 relative, then a Newton
    polish.  Raises ProjectionError when B = 0 (no positive part).
    """
    if B <= 0.0:
        raise ProjectionError("cannot project: |w+|_p vanishes")
    if A <= 0.0 or G < 0.0 or p <= 4.0:
        raise ValueError("need A > 0, G >= 0, p > 4")

    def f(t):
        return A + G * t * t - B * t ** (p - 2.0)

    hi = 1.0
    for _ in range(200):
        if f(hi) < 0.0:
            break
        hi *= 2.0
    else:
        raise ProjectionError("no sign change found while doubling")
    lo = 0.0
    while hi - lo > 1e-12 * hi:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if f(mid) < 0.0:
            hi = mid
        else:
            lo = mid
    t = 0.5 * (lo + hi)
    for _ in range(3):
        fp = 2.0 * G * t - (p - 2.0) * B * t ** (p - 3.0)
        if fp == 0.0:
            break
        step = f(t) / fp
        t_new = t - step
        if not lo * 0.5 <= t_new <= hi * 2.0:
            break
        t = t_new
    # ray energy is strictly concave at the root for p > 4
    ray_second = A + 3.0 * G * t * t - (p - 1.0) * B * t ** (p - 2.0)
    if ray_second >= 0.0:
        raise ProjectionError(f"ray second derivative {ray_second} not negative at t={t}")
    return float(t)


def retract(w: Field, model: EnergyModel) -> Field:
    """Scale w onto the constraint set; the coupling coefficient is reused as t^4."""
    t, (a, g, b) = _retract_scale(w, model)
    return _apply_scale(w, t, model)


def _retract_scale(w: Field, model: EnergyModel):
    a, g, b = model.ray_coefficients(w)
    t = nehari_scale(a, model.params.omega * g, b, model.params.p)
    return t, (a, g, b)


def _apply_scale(w: Field, t: float, model: EnergyModel) -> Field:
    out = Field(model.grid, t * w.values)
    if model.params.omega != 0.0 and w.values.any():
        v = model.potential(w)
        model.poisson.seed_potential(out, Field(model.grid, t * t * v.values),
                                     model.params.q)
    return out


# ---------------------------------------------------------------------------
# descent
# ---------------------------------------------------------------------------

def solve_critical(u0: Field, model: EnergyModel,
                   opts: DescentOptions | None = None,
                   seed_label: str = "") -> SolveReport:
    """Projected Sobolev-gradient descent from u0 to a low-energy critical point.

    Iterates u <- retract(u - alpha * g_t) where g_t is the gradient minus its
    component along the constraint normal, with Armijo backtracking on the
    composed energy.  Non-convergence is reported, never raised.
    """
    opts = opts or DescentOptions()
    t_start = time.perf_counter()
    p, omega = model.params.p, model.params.omega

    u = retract(u0, model)
    a, g, b = model.ray_coefficients(u)
    e_now = 0.5 * a + 0.25 * omega * g - b / p
    trace = []
    grad_rel = np.inf
    iterations = 0
    step_floor_hit = False

    for iterations in range(1, opts.max_iter + 1):
        grad, normal = model.gradient_and_normal(u)
        nn = model.inner_eps(normal, normal)
        gn = model.inner_eps(grad, normal)
        tangent = Field(model.grid, grad.values - (gn / nn) * normal.values)
        gt_sq = model.inner_eps(tangent, tangent)
        u_norm = np.sqrt(max(a, 0.0))
        grad_rel = np.sqrt(max(gt_sq, 0.0)) / u_norm
        trace.append((e_now, grad_rel))
        if grad_rel <= opts.grad_tol:
            break

        alpha = opts.step0
        accepted = False
        while alpha >= opts.step_floor:
            w = Field(model.grid, u.values - alpha * tangent.values)
            try:
                t, (aw, gw, bw) = _retract_scale(w, model)
            except (ProjectionError, CgError):
                alpha *= opts.backtrack
                continue
            e_trial = (0.5 * t**2 * aw + 0.25 * omega * t**4 * gw - t**p / p * bw)
            if e_trial <= e_now - opts.armijo * alpha * gt_sq:
                u = _apply_scale(w, t, model)
                a, g, b = t**2 * aw, t**4 * gw, t**p * bw
                e_now = e_trial
                accepted = True
                break
            alpha *= opts.backtrack
        if not accepted:
            step_floor_hit = True
            break

    nehari_abs = abs(a + omega * g - b)
    u_norm_sq = max(a, 1e-300)
    min_value = float(u.values.min())
    max_value = float(u.values.max())
    positive_enough = min_value >= -1e-8 * max(max_value, 1e-300)
    converged = (grad_rel <= opts.grad_tol
                 and nehari_abs <= opts.nehari_tol * u_norm_sq
                 and positive_enough
                 and e_now > 0.0
                 and not step_floor_hit)

    hu = model.hess_vec(u, u)
    ray_hessian = model.inner_eps(hu, u)
    report = SolveReport(
        field=u,
        energy=EnergyBreakdown(kinetic=0.5 * a, coupling=0.25 * omega * g,
                               potential=b / p),
        grad_norm=float(grad_rel * np.sqrt(u_norm_sq)),
        nehari_abs=float(nehari_abs),
        iterations=iterations,
        barycenter=barycenter(u, p),
        min_value=min_value,
        ray_hessian=float(ray_hessian),
        converged=bool(converged),
        wall_time=time.perf_counter() - t_start,
        trace=trace,
        eps=model.params.eps,
        seed_label=seed_label,
    )
    return report


def least_energy_estimate(seeds: list[Field], model: EnergyModel,
                          opts: DescentOptions | None = None,
                          labels: list[str] | None = None):
    """Minimum converged energy over descent runs from the given seed fields.

    Adding seeds can only lower the estimate.  Raises SolveError if no seed
    converges.
    """
    labels = labels or [f"seed{i}" for i in range(len(seeds))]
    reports = [solve_critical(s, model, opts, seed_label=lab)
               for s, lab in zip(seeds, labels)]
    converged = [r for r in reports if r.converged]
    if not converged:
        raise SolveError(f"all {len(seeds)} seeds failed to converge")
    best = min(r.energy.total for r in converged)
    return best, reports
