"""Radial ground state of  -Lap U + U = U^(p-1)  on all of R^d.

The profile is found by shooting on the height U(0): the radial equation

    U'' + (d-1)/r U' - U + U^(p-1) = 0,   U'(0) = 0

is integrated with fixed-step RK4 and the height bisected between
"overshoot" runs (U crosses zero) and "undershoot" runs (U' turns positive
while U > 0).  Double precision corrupts the shot once the unstable mode
e^{+r} catches up with the decaying tail, so the table is spliced onto the
asymptotic form  U(r) ~ c r^{-(d-1)/2} e^{-a r}  well before that happens
and extended with it down to U < 1e-8.

The least-energy level of the limit problem is

    m_inf = (1/2 - 1/p) * ||U||_{H^1(R^d)}^2

which equals (1/2 - 1/p) |U|_p^p through the identity obtained by testing
the equation with U itself; every accepted profile satisfies that identity
to 1e-6 relative and the constructor enforces it.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.integrate import simpson


class ShootingError(RuntimeError):
    """Bracket not found or bisection tolerance not reached."""


_SPHERE_AREA = {1: 2.0, 2: 2.0 * np.pi, 3: 4.0 * np.pi}  # |S^{d-1}|, factor 2 in 1-D


@dataclass
class RadialProfile:
    """Sampled radial ground state with its exponential tail and energy data."""

    d: int
    p: float
    dr: float
    r: NDArray
    u: NDArray
    du: NDArray
    u0: float
    decay_a: float
    decay_c: float
    splice_r: float
    mh1sq: float = 0.0
    lpp: float = 0.0
    m_inf: float = 0.0

    def __post_init__(self):
        if self.u0 <= 0:
            raise ShootingError("ground state height must be positive")
        if np.any(self.u[:-1] <= self.u[1:]):
            raise ShootingError("profile is not strictly decreasing")
        if np.any(self.u <= 0):
            raise ShootingError("profile must stay positive on [0, r_max)")
        self.mh1sq = self._h1_norm_sq()
        self.lpp = self._lp_power()
        rel = abs(self.mh1sq - self.lpp) / self.mh1sq
        if rel > 1e-6:
            raise ShootingError(f"ground-state identity off by {rel:.2e} relative")
        self.m_inf = (0.5 - 1.0 / self.p) * self.mh1sq

    @property
    def r_max(self) -> float:
        return float(self.r[-1])

    def __call__(self, s):
        return self.eval(s)

    def eval(self, s):
        """U at radius s >= 0: table interpolation, exponential tail beyond."""
        s = np.asarray(s, dtype=float)
        out = np.interp(s, self.r, self.u)
        tail = s > self.r_max
        if np.any(tail):
            out = np.where(tail, self.tail_value(s), out)
        return out if out.ndim else float(out)

    def tail_value(self, s):
        s = np.asarray(s, dtype=float)
        m = 0.5 * (self.d - 1)
        with np.errstate(divide="ignore"):
            val = self.decay_c * np.exp(-self.decay_a * s) / np.where(s > 0, s**m, 1.0)
        return val

    def _h1_norm_sq(self) -> float:
        w = self.r ** (self.d - 1)
        integrand = (self.du**2 + self.u**2) * w
        return _SPHERE_AREA[self.d] * float(simpson(integrand, dx=self.dr))

    def _lp_power(self) -> float:
        w = self.r ** (self.d - 1)
        return _SPHERE_AREA[self.d] * float(simpson(self.u**self.p * w, dx=self.dr))

    def export(self, csv_path: str, json_path: str):
        """CSV table (r, U) plus a JSON sidecar with the scalar data."""
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["r", "U"])
            for r, u in zip(self.r, self.u):
                writer.writerow([repr(float(r)), repr(float(u))])
        sidecar = {"d": self.d, "p": self.p, "U0": self.u0, "mh1sq": self.mh1sq,
                   "lpp": self.lpp, "m_inf": self.m_inf,
                   "decay_c": self.decay_c, "decay_a": self.decay_a}
        with open(json_path, "w") as fh:
            json.dump(sidecar, fh, indent=2)


def m_infinity(profile: RadialProfile) -> float:
    """Least-energy level (1/2 - 1/p)||U||^2 of the whole-space problem."""
    return (0.5 - 1.0 / profile.p) * profile.mh1sq


# ---------------------------------------------------------------------------
# shooting
# ---------------------------------------------------------------------------

def _rhs(r, u, v, p, d):
    # odd power for possibly negative u during a shot: sign(u)|u|^{p-1}
    au = abs(u)
    nl = au ** (p - 1.0)
    f = u - (nl if u >= 0.0 else -nl)
    if r == 0.0:
        return v, f / d
    return v, f - (d - 1.0) / r * v


def _rk4_step(r, u, v, dr, p, d):
    k1u, k1v = _rhs(r, u, v, p, d)
    k2u, k2v = _rhs(r + dr / 2, u + dr / 2 * k1u, v + dr / 2 * k1v, p, d)
    k3u, k3v = _rhs(r + dr / 2, u + dr / 2 * k2u, v + dr / 2 * k2v, p, d)
    k4u, k4v = _rhs(r + dr, u + dr * k3u, v + dr * k3v, p, d)
    return (u + dr / 6 * (k1u + 2 * k2u + 2 * k3u + k4u),
            v + dr / 6 * (k1v + 2 * k2v + 2 * k3v + k4v))


def _series_start(u0, dr, p, d):
    # U(r) ~ U0 + (U0 - U0^{p-1}) r^2 / (2d) regularizes the (d-1)/r term
    beta = (u0 - u0 ** (p - 1)) / d
    return u0 + 0.5 * beta * dr**2, beta * dr


def _shoot(u0, p, d, dr, r_cap):
    """Integrate one shot; returns (sign, r, u, v arrays up to the event).

    sign +1 = undershoot (U' >= 0 with U > 0), -1 = overshoot (U <= 0),
    0 = reached r_cap without either event.
    """
    n_cap = int(round(r_cap / dr))
    rs = np.empty(n_cap + 1)
    us = np.empty(n_cap + 1)
    vs = np.empty(n_cap + 1)
    rs[0], us[0], vs[0] = 0.0, u0, 0.0
    u, v = _series_start(u0, dr, p, d)
    rs[1], us[1], vs[1] = dr, u, v
    k = 1
    while k < n_cap:
        u, v = _rk4_step(rs[k], us[k], vs[k], dr, p, d)
        k += 1
        rs[k], us[k], vs[k] = k * dr, u, v
        if u <= 0.0:
            return -1, rs[:k + 1], us[:k + 1], vs[:k + 1]
        if v >= 0.0:
            return +1, rs[:k + 1], us[:k + 1], vs[:k + 1]
    return 0, rs[:k + 1], us[:k + 1], vs[:k + 1]


def shoot_ground_state(p: float, d: int = 3, tol: float = 1e-12,
                       dr: float = 1e-3, r_cap: float = 40.0) -> RadialProfile:
    """Compute the positive radial ground state by bisection on U(0).

    The exponent is restricted to 4 < p < 6 (the regime the solver targets,
    subcritical for d <= 3); tol is the relative bisection width on U(0).
    """
    if not 4.0 < p < 6.0:
        raise ValueError(f"p out of range (4,6): p={p}")
    if d not in (1, 2, 3):
        raise ValueError("d must be 1, 2 or 3")
    if tol <= 0:
        raise ValueError("tol must be positive")

    # classify heights: just above 1 must undershoot, growing heights overshoot
    lo, hi = None, None
    u0 = 1.05
    for _ in range(80):
        sign, *_ = _shoot(u0, p, d, dr, r_cap)
        if sign > 0:
            lo = u0
        elif sign < 0:
            hi = u0
            break
        u0 *= 1.3
    if lo is None or hi is None:
        raise ShootingError("no overshoot/undershoot bracket found on U(0)")

    max_iter = 200
    for _ in range(max_iter):
        if hi - lo <= tol * hi:
            break
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        sign, *_ = _shoot(mid, p, d, dr, r_cap)
        if sign > 0:
            lo = mid
        else:
            hi = mid
    else:
        raise ShootingError(f"bisection stalled: bracket [{lo}, {hi}] after {max_iter} iters")

    u0 = 0.5 * (lo + hi)
    _, rs, us, vs = _shoot(u0, p, d, dr, r_cap)

    # keep the clean part of the shot: stop before the unstable mode bites
    keep = us > 1e-4 * u0
    n_keep = int(np.argmin(keep)) if not keep.all() else len(us)
    rising = np.flatnonzero(np.diff(us) >= 0)
    if rising.size:
        n_keep = min(n_keep, int(rising[0]) + 1)
    if n_keep < 10:
        raise ShootingError("shot corrupted too early for a usable table")
    rs, us, vs = rs[:n_keep], us[:n_keep], vs[:n_keep]

    a, c = _fit_tail(rs, us, d)
    # extend the table with the fitted tail down to 1e-8 (or to r_cap)
    r_end = min(r_cap, rs[-1] + np.log(max(us[-1], 1e-300) / 1e-8) / a + 5.0)
    m = 0.5 * (d - 1)
    ext_r = np.arange(len(rs), int(round(r_end / dr)) + 1) * dr
    ext_u = c * np.exp(-a * ext_r) / ext_r**m
    ext_v = ext_u * (-a - m / ext_r)
    cut = np.searchsorted(-ext_u, -1e-8)  # first index with u < 1e-8
    ext_r, ext_u, ext_v = ext_r[:cut + 1], ext_u[:cut + 1], ext_v[:cut + 1]

    return RadialProfile(
        d=d, p=p, dr=dr,
        r=np.concatenate([rs, ext_r]), u=np.concatenate([us, ext_u]),
        du=np.concatenate([vs, ext_v]),
        u0=float(u0), decay_a=float(a), decay_c=float(c), splice_r=float(rs[-1]),
    )


def _fit_tail(rs, us, d):
    """Log-linear fit of r^{(d-1)/2} U over the last decade, anchored at the end."""
    m = 0.5 * (d - 1)
    u_end = us[-1]
    window = us <= 10.0 * u_end
    if window.sum() < 5:
        window = np.zeros_like(window)
        window[-max(5, len(us) // 10):] = True
    y = np.log(rs[window] ** m * us[window])
    slope, intercept = np.polyfit(rs[window], y, 1)
    a = -slope
    # anchor c so the tail passes exactly through the splice sample
    c = u_end * rs[-1] ** m * np.exp(a * rs[-1])
    return a, c
