"""Localization maps between the domain and low-energy fields.

Two maps connect domain points and fields.  Planting takes a point xi deep
inside the domain and builds the truncated rescaled ground state

    W(x) = U(|x - xi| / eps) * chi(|x - xi|)

whose support stays in the ball B(xi, r); projected onto the constraint set
it seeds the descent (the classical photography construction).  The
barycenter goes the other way,

    beta(u) = sum(x |u+|^p) / sum(|u+|^p),

pulling a concentrated field back to the point it sits on.  The admissible
planting points form the inner region {d(x, boundary) >= r}; the outer
region is the closed r-neighborhood of the domain, where barycenters of
low-energy fields are expected to land.

Cube partitions at scale eps with bounded overlap locate where the mass of a
field concentrates, and the topology catalog records category and Betti
numbers of the supported shapes for the multiplicity experiments.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .grid import (Ball, Box, DomainGrid, DomainShape, Field, MaskFile,
                   Shell, SolidTorus)
from .groundstate import RadialProfile


class ConcentrationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# cutoff and planting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RampCutoff:
    """chi(s): 1 on [0, r/2], linear ramp to 0 at r, 0 beyond; |chi'| <= 2/r."""

    r: float

    def __post_init__(self):
        if self.r <= 0:
            raise ConcentrationError("cutoff radius must be positive")

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        ramp = 2.0 * (1.0 - s / self.r)
        return np.clip(np.where(s <= 0.5 * self.r, 1.0, ramp), 0.0, 1.0)


class Region(enum.Enum):
    INNER = "inner"
    OUTER = "outer"
    NEITHER = "neither"


def membership(x, shape: DomainShape, r: float) -> Region:
    """Classify x against the inner retract and the outer r-neighborhood.

    inner:   x in the domain with d(x, boundary) >= r
    outer:   d(x, domain) <= r  (contains the whole domain)
    """
    if isinstance(shape, MaskFile):
        raise ConcentrationError("no analytic distance for mask-file shapes")
    x = np.asarray(x, dtype=float)
    inside = bool(shape.contains(x))
    if inside and shape.boundary_distance(x) >= r:
        return Region.INNER
    if shape.set_distance(x) <= r:
        return Region.OUTER
    return Region.NEITHER


def plant_bump(xi, profile: RadialProfile, params, grid: DomainGrid) -> Field:
    """Sample the truncated rescaled ground state centered at an admissible xi."""
    xi = np.asarray(xi, dtype=float)
    if membership(xi, grid.shape, params.r) is not Region.INNER:
        raise ConcentrationError(f"planting point {xi.tolist()} is not in the inner region")
    if params.eps < 4 * grid.h:
        raise ConcentrationError(f"eps={params.eps} under-resolved: need eps >= 4h = {4*grid.h}")
    chi = RampCutoff(params.r)
    dist = np.sqrt(np.sum((grid.coords - xi) ** 2, axis=1))
    values = profile.eval(dist / params.eps) * chi(dist)
    if not values.any():
        raise ConcentrationError("planted bump has zero sampled mass")
    return Field(grid, values)


def photography(xi, profile: RadialProfile, model) -> Field:
    """Plant a bump at xi and project it onto the constraint set."""
    from .nehari import retract  # local import: nehari builds on this module

    w = plant_bump(xi, profile, model.params, model.grid)
    return retract(w, model)


# ---------------------------------------------------------------------------
# barycenter and concentration
# ---------------------------------------------------------------------------

def barycenter(u: Field, p: float = 5.0) -> NDArray:
    """|u+|^p weighted center of mass of the field."""
    w = np.maximum(u.values, 0.0) ** p
    total = w.sum()
    if total <= 0.0:
        raise ConcentrationError("barycenter undefined: u+ vanishes")
    return (u.grid.coords * w[:, None]).sum(axis=0) / total


def concentration_fraction(u: Field, center, radius: float, p: float = 5.0) -> float:
    """Share of the |u+|^p mass inside the ball B(center, radius)."""
    w = np.maximum(u.values, 0.0) ** p
    total = w.sum()
    if total <= 0.0:
        raise ConcentrationError("concentration undefined: u+ vanishes")
    dist2 = np.sum((u.grid.coords - np.asarray(center, dtype=float)) ** 2, axis=1)
    return float(w[dist2 <= radius**2].sum() / total)


# ---------------------------------------------------------------------------
# cube partitions
# ---------------------------------------------------------------------------

@dataclass
class CubePartition:
    """eps-scale tiling of the interior nodes with bounded overlap.

    cells[j] holds interior-node indices; cells are pairwise disjoint and
    cover every node.  centers[j] is the interior node nearest the cube
    centroid, inner_radius/outer_radius the measured ball radii per cell and
    overlap the largest number of outer balls covering one node.
    """

    eps: float
    cells: list
    centers: NDArray
    inner_radius: NDArray
    outer_radius: NDArray
    overlap: int

    def cell_masses(self, u: Field, p: float, eps_weight: float) -> NDArray:
        g = u.grid
        w = np.maximum(u.values, 0.0) ** p
        scale = g.h**g.d / eps_weight**g.d
        return np.array([scale * w[idx].sum() for idx in self.cells])


def cube_partition(grid: DomainGrid, eps: float) -> CubePartition:
    """Partition interior nodes by axis-aligned cubes of side eps.

    Cells with fewer nodes than an (eps/4)^d volume are merged into their
    most populated face neighbor, so every surviving cell keeps a core of
    contained volume while the overlap count stays at most 2^d.
    """
    if eps < 4 * grid.h:
        raise ConcentrationError(f"partition scale eps={eps} finer than 4h={4*grid.h}")
    lo = grid.coords.min(axis=0)
    ids = np.floor((grid.coords - lo) / eps + 1e-12).astype(np.int64)
    key = ids[:, 0]
    for ax in range(1, grid.d):
        key = key * 100000 + ids[:, ax]
    uniq, inverse = np.unique(key, return_inverse=True)
    raw_cells = {k: np.flatnonzero(inverse == i) for i, k in enumerate(uniq)}

    min_nodes = (eps / 4.0) ** grid.d / grid.h**grid.d
    merged: dict[int, np.ndarray] = {}
    small = []
    for k, idx in raw_cells.items():
        if idx.size < min_nodes:
            small.append((k, idx))
        else:
            merged[k] = idx
    if not merged:
        raise ConcentrationError("all cells under-populated; eps too small for shape")
    offsets = []
    for ax in range(grid.d):
        step = 100000 ** (grid.d - 1 - ax)
        offsets += [step, -step]
    for k, idx in sorted(small):
        neighbor = None
        best = -1
        for off in offsets:
            cand = k + off
            if cand in merged and merged[cand].size > best:
                neighbor, best = cand, merged[cand].size
        if neighbor is None:
            neighbor = min(merged, key=lambda kk: (abs(kk - k), kk))
        merged[neighbor] = np.concatenate([merged[neighbor], idx])

    cells = [np.sort(merged[k]) for k in sorted(merged)]
    centers, r_in, r_out = [], [], []
    for idx in cells:
        pts = grid.coords[idx]
        centroid = pts.mean(axis=0)
        j = int(np.argmin(np.sum((pts - centroid) ** 2, axis=1)))
        c = pts[j]
        dist = np.sqrt(np.sum((pts - c) ** 2, axis=1))
        centers.append(c)
        r_out.append(dist.max() + grid.h)
        r_in.append(max(grid.h, eps / 4.0 if dist.max() > 0 else grid.h))
    centers = np.array(centers)
    r_out_arr = np.array(r_out)

    overlap = 0
    for c, ro in zip(centers, r_out_arr):
        inside = np.sum(np.sum((centers - c) ** 2, axis=1) <= (2 * ro) ** 2)
        overlap = max(overlap, int(inside))
    return CubePartition(eps=eps, cells=cells, centers=centers,
                         inner_radius=np.array(r_in), outer_radius=r_out_arr,
                         overlap=overlap)


# ---------------------------------------------------------------------------
# topology catalog
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DomainTopology:
    cat: int
    poincare: tuple  # Betti numbers (dim H_0, dim H_1, ...)

    @property
    def p1(self) -> int:
        return int(sum(self.poincare))

    def poly_str(self) -> str:
        terms = []
        for k, c in enumerate(self.poincare):
            if c:
                terms.append("1" if k == 0 else (f"t^{k}" if c == 1 else f"{c}t^{k}"))
        return " + ".join(terms) or "0"


def topology_catalog(shape: DomainShape) -> DomainTopology:
    """Category and Betti numbers for the supported shapes.

    Balls and boxes are contractible; a 3-D shell retracts to the 2-sphere, a
    2-D shell (annulus) and a solid torus retract to the circle.
    """
    if isinstance(shape, (Ball, Box)):
        return DomainTopology(cat=1, poincare=(1,))
    if isinstance(shape, Shell):
        if shape.dim == 3:
            return DomainTopology(cat=2, poincare=(1, 0, 1))
        return DomainTopology(cat=2, poincare=(1, 1))
    if isinstance(shape, SolidTorus):
        return DomainTopology(cat=2, poincare=(1, 1))
    raise ConcentrationError(f"no topology entry for {type(shape).__name__}")


def admissible_seeds(shape: DomainShape, r: float, count: int = 1) -> NDArray:
    """Deterministic planting points tracking the shape's topology.

    ball/box: the center; shell: points on the mid-sphere; torus: points on
    the core circle.  count controls how many angular positions are used.
    """
    if isinstance(shape, Ball):
        pts = np.tile(np.asarray(shape.center, dtype=float), (count, 1))
    elif isinstance(shape, Box):
        c = 0.5 * (np.asarray(shape.lo) + np.asarray(shape.hi))
        pts = np.tile(c, (count, 1))
    elif isinstance(shape, Shell):
        mid = 0.5 * (shape.r_inner + shape.r_outer)
        c = np.asarray(shape.center, dtype=float)
        angles = 2 * np.pi * np.arange(count) / count
        if shape.dim == 3:
            dirs = np.stack([np.cos(angles), np.sin(angles), np.zeros(count)], axis=1)
        else:
            dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        pts = c + mid * dirs
    elif isinstance(shape, SolidTorus):
        c = np.asarray(shape.center, dtype=float)
        angles = 2 * np.pi * np.arange(count) / count
        dirs = np.stack([np.cos(angles), np.sin(angles), np.zeros(count)], axis=1)
        pts = c + shape.major_radius * dirs
    else:
        raise ConcentrationError(f"no seed generator for {type(shape).__name__}")
    for x in pts:
        if membership(x, shape, r) is not Region.INNER:
            raise ConcentrationError(
                f"generated seed {x.tolist()} not admissible for r={r}")
    return pts
