"""Uniform cell discretization of frequency space with a singular density at 0."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import SpectralDiscretizationError
from .quadrature import corner_singular_integral, gauss_legendre, tensor_rule


@dataclass(frozen=True)
class SpectralDiscretization:
    """Cells tiling [-cutoff, cutoff]^n on a uniform grid.

    With an odd number of cells per axis the cell centred at the origin is
    excluded; with an even number the origin is a shared corner and the
    adjacent cells carry integrated masses. Arrays are ordered row-major
    over the cell index grid with the excluded cell removed.
    """

    n: int
    cutoff: float
    cells_per_axis: int

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise SpectralDiscretizationError(f"unsupported dimension {self.n}")
        if not (self.cutoff > 0 and math.isfinite(self.cutoff)):
            raise SpectralDiscretizationError("cutoff must be positive and finite")
        if self.cells_per_axis < 2:
            raise SpectralDiscretizationError("need at least two cells per axis")

    @property
    def width(self) -> float:
        return 2.0 * self.cutoff / self.cells_per_axis

    @property
    def excludes_origin(self) -> bool:
        return self.cells_per_axis % 2 == 1

    def _index_grid(self):
        N = self.cells_per_axis
        idx = np.array(list(itertools.product(range(N), repeat=self.n)), dtype=int)
        if self.excludes_origin:
            idx = idx[~np.all(idx == N // 2, axis=1)]
        return idx

    @property
    def indices(self) -> np.ndarray:
        return self._index_grid()

    @property
    def centers(self) -> np.ndarray:
        return -self.cutoff + (self.indices + 0.5) * self.width

    @property
    def volume(self) -> float:
        return self.width ** self.n

    def half_space(self):
        """(positive, mirror) index arrays pairing each cell with its reflection.

        A cell is in the positive half if its first nonzero centre coordinate
        is positive.
        """
        N = self.cells_per_axis
        idx = self.indices
        lookup = {tuple(v): k for k, v in enumerate(idx)}
        pos = []
        for k, v in enumerate(idx):
            c = v - (N - 1) / 2.0
            nz = c[np.nonzero(c)[0]]
            if nz.size and nz[0] > 0:
                pos.append(k)
        pos = np.array(pos, dtype=int)
        mirror = np.array([lookup[tuple(N - 1 - idx[k])] for k in pos], dtype=int)
        return pos, mirror

    def masses(self, exponent: float, radial_factor=None, p: int = 6) -> np.ndarray:
        """Integrals over each cell of |lam|^(-exponent) * radial_factor(|lam|).

        Cells touching the origin use the dyadic corner integrator; the rest a
        p-point tensor Gauss-Legendre rule.
        """
        if exponent >= self.n:
            raise SpectralDiscretizationError("density is not integrable at the origin")
        h = self.width
        n = self.n

        def dens(lam):
            r = np.sqrt(np.sum(lam * lam, axis=-1))
            out = r ** (-exponent)
            if radial_factor is not None:
                out = out * radial_factor(r)
            return out

        lo = -self.cutoff + self.indices * h
        x, w = gauss_legendre(p)
        ref, rw = tensor_rule([(x, w)] * n)
        pts = lo[:, None, :] + h * ref[None]
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = dens(pts)
        out = (vals * rw[None]).sum(axis=1) * h ** n
        touching = np.all((lo == 0) | (lo + h == 0) | np.isclose(lo, 0) | np.isclose(lo + h, 0), axis=1)
        if np.any(touching):
            corner = corner_singular_integral(dens, h, n, exponent)
            out[touching] = corner
        if not np.all(np.isfinite(out)) or np.any(out <= 0):
            raise SpectralDiscretizationError("non-finite or non-positive cell mass")
        return out

    def density_masses(self, spectral_model, p: int = 6) -> np.ndarray:
        """Cell masses of the model's spectral density c1 |lam|^(alpha-n) L(1/|lam|)."""
        L = spectral_model.L
        c1 = spectral_model.c1

        def factor(r):
            return c1 * L(1.0 / np.maximum(r, 1e-300))

        return self.masses(self.n - spectral_model.alpha, factor, p)
