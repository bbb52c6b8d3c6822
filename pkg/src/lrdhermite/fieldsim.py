"""Gaussian random fields on rectangular lattices.

Exact simulation factorizes the full covariance matrix; spectral synthesis
sums random cosines over frequency cells. Replicates are drawn in fixed
chunks, each with its own seed-derived stream, so output does not depend
on the number of workers.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from .errors import (DomainError, GridSizeError, LagError, NonPSDCovarianceError,
                     SpectralDiscretizationError)
from .rng import chunk_ranges, stream
from .spectral import SpectralDiscretization

MAX_EXACT_POINTS = 8192
JITTER_SCHEDULE = (0.0, 1e-12, 1e-10)
EIGEN_CLIP_TOL = 1e-8
CHUNK = 256


@dataclass(frozen=True)
class GridSpec:
    counts: tuple
    spacing: tuple = None
    origin: tuple = None

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        n = len(counts)
        spacing = tuple(float(s) for s in (self.spacing or (1.0,) * n))
        origin = tuple(float(o) for o in (self.origin or (0.0,) * n))
        if n == 0 or any(c < 1 for c in counts):
            raise DomainError("grid needs at least one point per axis")
        if len(spacing) != n or len(origin) != n or any(s <= 0 for s in spacing):
            raise DomainError("spacing must be positive with one entry per axis")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @classmethod
    def lattice(cls, lo: Sequence[int], hi: Sequence[int]) -> "GridSpec":
        """Integer lattice covering lo..hi inclusive on each axis."""
        return cls(tuple(h - l + 1 for l, h in zip(lo, hi)), None, tuple(float(l) for l in lo))

    @classmethod
    def refined(cls, extents: Sequence[float], q: int) -> "GridSpec":
        """Cell midpoints of [0, T_l] at spacing 1/q."""
        counts = tuple(int(round(T * q)) for T in extents)
        return cls(counts, (1.0 / q,) * len(counts), (0.5 / q,) * len(counts))

    @property
    def n(self) -> int:
        return len(self.counts)

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    def axes(self):
        return [o + s * np.arange(c) for c, s, o in zip(self.counts, self.spacing, self.origin)]

    def points(self) -> np.ndarray:
        grids = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def describe(self) -> str:
        return (f"n={self.n};counts={'x'.join(map(str, self.counts))};"
                f"spacing={','.join(map(repr, self.spacing))};origin={','.join(map(repr, self.origin))}")


@dataclass
class FieldSample:
    """Field values of shape (*batch, *grid.counts)."""

    grid: GridSpec
    values: np.ndarray
    method: str
    seed: int
    fingerprint: str = ""
    info: dict = field(default_factory=dict)

    @property
    def batch_shape(self):
        return self.values.shape[: self.values.ndim - self.grid.n]

    def flat(self) -> np.ndarray:
        """Values as (replicates, points)."""
        return self.values.reshape(-1, self.grid.size)

    def to_csv(self, path) -> None:
        pts = self.grid.points()
        vals = self.flat()
        with open(path, "w") as fh:
            fh.write(f"# {self.grid.describe()};method={self.method};seed={self.seed};"
                     f"model={self.fingerprint};replicates={vals.shape[0]}\n")
            cols = [f"x{l}" for l in range(self.grid.n)] + [f"v{r}" for r in range(vals.shape[0])]
            fh.write(",".join(cols) + "\n")
            for k, p in enumerate(pts):
                fh.write(",".join([repr(float(c)) for c in p] + [repr(float(v)) for v in vals[:, k]]) + "\n")


def _distance_matrix(pts: np.ndarray) -> np.ndarray:
    diff = pts[:, None, :] - pts[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


@lru_cache(maxsize=8)
def _factor_cached(fingerprint: str, grid: GridSpec, model):
    C = np.asarray(model.cov(_distance_matrix(grid.points())), dtype=float)
    C = 0.5 * (C + C.T)
    for jitter in JITTER_SCHEDULE:
        try:
            F = linalg.cholesky(C + jitter * np.eye(len(C)), lower=True, check_finite=False)
            return F, {"factorization": "cholesky", "jitter": jitter}
        except linalg.LinAlgError:
            continue
    w, V = linalg.eigh(C)
    if w.min() < -EIGEN_CLIP_TOL * max(w.max(), 1.0):
        raise NonPSDCovarianceError(
            f"covariance has eigenvalue {w.min():.3g}, beyond clipping tolerance")
    F = V * np.sqrt(np.clip(w, 0.0, None))
    return F, {"factorization": "eigh", "jitter": 0.0, "clipped_min_eig": float(w.min())}


def covariance_factor(model, grid: GridSpec):
    """Matrix F with F F^T equal to the grid covariance (cached)."""
    if grid.size > MAX_EXACT_POINTS:
        raise GridSizeError(
            f"{grid.size} points exceed the exact limit {MAX_EXACT_POINTS}; use simulate_field_spectral")
    return _factor_cached(model.fingerprint(), grid, model)


def _draw(F: np.ndarray, reps: int, seed: int, tag: int, workers: int) -> np.ndarray:
    m = F.shape[1]
    out = np.empty((reps, F.shape[0]))

    def job(args):
        idx, lo, hi = args
        z = stream(seed, tag, idx).standard_normal((hi - lo, m))
        out[lo:hi] = z @ F.T

    blocks = list(chunk_ranges(reps, CHUNK))
    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            list(ex.map(job, blocks))
    else:
        for b in blocks:
            job(b)
    return out


def simulate_field_exact(model, grid: GridSpec, seed: int, reps: Optional[int] = None,
                         workers: int = 1) -> FieldSample:
    F, info = covariance_factor(model, grid)
    nrep = 1 if reps is None else int(reps)
    vals = _draw(F, nrep, seed, 101, workers)
    shape = tuple(grid.counts) if reps is None else (nrep,) + tuple(grid.counts)
    return FieldSample(grid, vals.reshape(shape), "exact_factorization", int(seed),
                       model.fingerprint(), dict(info))


def simulate_field_spectral(s, grid: GridSpec, seed: int, cutoff: float = 40.0,
                            cells_per_axis: int = 64, reps: Optional[int] = None,
                            workers: int = 1) -> FieldSample:
    """Random-cosine synthesis over half-space frequency cells.

    Each positive-half cell c contributes sqrt(2 m_c) (A_c cos<lam_c, x> +
    B_c sin<lam_c, x>), m_c the integrated density over the cell, so the
    pointwise variance equals the total discretized spectral mass.
    """
    if grid.n != s.n:
        raise DomainError("grid and spectral model dimensions differ")
    if cells_per_axis < 16:
        raise SpectralDiscretizationError("cells_per_axis must be at least 16")
    disc = SpectralDiscretization(s.n, float(cutoff), int(cells_per_axis))
    mass = disc.density_masses(s)
    pos, _ = disc.half_space()
    lam = disc.centers[pos]
    amp = np.sqrt(2.0 * mass[pos])
    phase = grid.points() @ lam.T
    basis = np.concatenate([np.cos(phase) * amp, np.sin(phase) * amp], axis=1)
    nrep = 1 if reps is None else int(reps)
    vals = _draw(basis, nrep, seed, 202, workers)
    if not np.all(np.isfinite(vals)):
        raise SpectralDiscretizationError("non-finite synthesized values")
    shape = tuple(grid.counts) if reps is None else (nrep,) + tuple(grid.counts)
    info = {"cutoff": float(cutoff), "cells_per_axis": int(cells_per_axis),
            "total_mass": float(mass.sum())}
    return FieldSample(grid, vals.reshape(shape), "spectral", int(seed),
                       f"spectral;n={s.n};alpha={s.alpha!r};{s.L.to_record()}", info)


def spectral_lag_covariance(s, cutoff: float, cells_per_axis: int, lag) -> float:
    """Covariance of the synthesized field at a lag (deterministic)."""
    disc = SpectralDiscretization(s.n, float(cutoff), int(cells_per_axis))
    mass = disc.density_masses(s)
    return float(np.sum(mass * np.cos(disc.centers @ np.asarray(lag, dtype=float))))


def _replicates(samples) -> tuple:
    if isinstance(samples, FieldSample):
        return samples.grid, samples.values.reshape((-1,) + samples.grid.counts)
    samples = list(samples)
    grid = samples[0].grid
    if any(sm.grid != grid for sm in samples):
        raise DomainError("samples must share a grid")
    return grid, np.concatenate([sm.values.reshape((-1,) + grid.counts) for sm in samples])


def empirical_covariance(samples, lag) -> tuple:
    """Mean over replicates of the lattice average of xi(x) xi(x + lag), with its stderr."""
    grid, V = _replicates(samples)
    lag = tuple(int(l) for l in lag)
    if len(lag) != grid.n:
        raise LagError("lag dimension differs from the grid")
    if any(abs(l) >= c for l, c in zip(lag, grid.counts)):
        raise LagError(f"lag {lag} does not fit in grid {grid.counts}")
    if V.shape[0] < 30:
        raise DomainError("need at least 30 replicates")
    a = [slice(None)]
    b = [slice(None)]
    for l, c in zip(lag, grid.counts):
        a.append(slice(max(0, -l), c - max(0, l)))
        b.append(slice(max(0, l), c - max(0, -l)))
    prod = V[tuple(a)] * V[tuple(b)]
    per_rep = prod.reshape(V.shape[0], -1).mean(axis=1)
    return float(per_rep.mean()), float(per_rep.std(ddof=1) / math.sqrt(len(per_rep)))


def empirical_mean(samples) -> tuple:
    _, V = _replicates(samples)
    per_rep = V.reshape(V.shape[0], -1).mean(axis=1)
    return float(per_rep.mean()), float(per_rep.std(ddof=1) / math.sqrt(len(per_rep)))
