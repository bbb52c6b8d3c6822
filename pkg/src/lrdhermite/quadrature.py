"""Shared quadrature building blocks.

Composite Gauss-Legendre panels, tensor-product rules over boxes, and an
integrator for cubes with an integrable power singularity at one corner.
"""
from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss


@lru_cache(maxsize=64)
def gauss_legendre(p: int):
    """p-point Gauss-Legendre rule on [0, 1]."""
    x, w = leggauss(int(p))
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def panel_rule(edges, p: int):
    """Composite rule with p Gauss-Legendre nodes on each panel of ``edges``."""
    edges = np.asarray(edges, dtype=float)
    x, w = gauss_legendre(p)
    a = edges[:-1, None]
    h = np.diff(edges)[:, None]
    return (a + h * x).ravel(), (h * w).ravel()


def tensor_rule(rules):
    """Tensor product of 1-D rules -> points (N, n), weights (N,)."""
    xs = [r[0] for r in rules]
    ws = [r[1] for r in rules]
    grids = np.meshgrid(*xs, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    wgrid = np.ones(())
    for w in ws:
        wgrid = np.multiply.outer(wgrid, w)
    return pts, wgrid.ravel()


def box_rule(lo, hi, p: int, panel_width: float = 1.0):
    """Tensor rule over the box prod [lo_l, hi_l] with roughly unit panels."""
    rules = []
    for a, b in zip(lo, hi):
        k = max(1, int(np.ceil((b - a) / panel_width - 1e-12)))
        rules.append(panel_rule(np.linspace(a, b, k + 1), p))
    return tensor_rule(rules)


@lru_cache(maxsize=32)
def _unit_shell(n: int, p: int):
    # [0,1]^n minus [0,1/2]^n as 2^n - 1 half-width cubes
    x, w = gauss_legendre(p)
    cube, cw = tensor_rule([(0.5 * x, 0.5 * w)] * n)
    pts, wts = [], []
    for offset in itertools.product((0.0, 0.5), repeat=n):
        if not any(offset):
            continue
        pts.append(cube + np.asarray(offset))
        wts.append(cw)
    return np.concatenate(pts), np.concatenate(wts)


def corner_singular_integral(func, width: float, n: int, exponent: float,
                             p: int = 16, depth: int = 40):
    """Integrate ``func`` over [0, width]^n when it behaves like |h|^-exponent at 0.

    The cube is peeled into dyadic shells, each integrated by a tensor
    Gauss-Legendre rule away from the singular corner. The innermost cube
    left after ``depth`` levels is closed with the geometric tail implied by
    homogeneity of degree -exponent, which is exact for a pure power and
    accurate to O(2^-depth) when the remaining factor is smooth.

    ``func`` receives an array of shape (N, n) and returns shape (N,).
    Requires exponent < n.
    """
    if exponent >= n:
        raise ValueError("corner singularity is not integrable: exponent >= n")
    ref_x, ref_w = _unit_shell(n, p)
    scales = width * 0.5 ** np.arange(depth)
    pts = (scales[:, None, None] * ref_x[None]).reshape(-1, n)
    vals = np.asarray(func(pts), dtype=float).reshape(depth, -1)
    shells = (vals * ref_w[None]).sum(axis=1) * scales ** n
    ratio = 0.5 ** (n - exponent)
    tail = shells[-1] * ratio / (1.0 - ratio)
    return float(np.sum(shells[::-1]) + tail)


def singular_box_integral(func, widths, exponent: float, p: int = 16, depth: int = 40,
                          panels: int = 4):
    """Integrate over prod [0, widths_l] with a |h|^-exponent singularity at 0.

    The cube [0, min(widths)]^n goes through ``corner_singular_integral``;
    the remaining slabs are regular and use tensor Gauss-Legendre panels.
    """
    widths = [float(w) for w in widths]
    n = len(widths)
    wmin = min(widths)
    total = corner_singular_integral(func, wmin, n, exponent, p=p, depth=depth)
    for l in range(n):
        if widths[l] <= wmin:
            continue
        rules = []
        for k in range(n):
            if k == l:
                lo, hi = wmin, widths[k]
            else:
                lo, hi = 0.0, (wmin if k < l else widths[k])
            rules.append(panel_rule(np.linspace(lo, hi, panels + 1), p))
        pts, w = tensor_rule(rules)
        total += float(np.dot(func(pts), w))
    return total
