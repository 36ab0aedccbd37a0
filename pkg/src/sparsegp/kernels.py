"""Compactly-supported, non-stationary kernels and the analytic sparsity bound.

The sparsity-discovering kernel is

    k_s(x1, x2) = k_cs(x1, x2) * sum_i f_i(x1) f_i(x2)

where ``k_cs`` is a compactly-supported stationary kernel and each ``f_i`` is
a sum of bump functions.  Any core kernel ``k_c`` can be multiplied on top;
the product inherits the compact support of ``k_s``.

All support tests use strict inequalities on the floating-point distance so
zeros are exact and reproducible.  Scalar entry points (``bump_eval``,
``sparsity_kernel_eval`` ...) delegate to the vectorised matrix routines, so a
Gram matrix built from either path is bit-identical.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .errors import InvalidInputError

#: Value of the compactly-supported stationary kernel at zero distance.
CS_PEAK = math.sqrt(2.0) / (3.0 * math.sqrt(math.pi))

CORE_KINDS = ("none", "squared_exponential")


def _as_points(x, dim: int | None = None) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] < 1:
        raise InvalidInputError(f"expected points of shape (m, dim), got {arr.shape}")
    if dim is not None and arr.shape[1] != dim:
        raise InvalidInputError(f"dimension mismatch: points have dim {arr.shape[1]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("point coordinates must be finite")
    return arr


@dataclass(frozen=True)
class DomainBox:
    """Axis-aligned box housing the input space."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise InvalidInputError("lower and upper must be vectors of equal length")
        if not np.all(hi > lo):
            raise InvalidInputError("upper must exceed lower in every dimension")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unit(cls, dim: int) -> "DomainBox":
        return cls(np.zeros(dim), np.ones(dim))

    @classmethod
    def bounding(cls, points, pad: float = 0.0) -> "DomainBox":
        """Bounding box of ``points`` expanded by ``pad`` times its extent.

        Degenerate (zero-width) dimensions get unit width.
        """
        pts = _as_points(points)
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        width = np.where(hi > lo, hi - lo, 1.0)
        centre = np.where(hi > lo, lo, lo - 0.5)
        lo, hi = centre - pad * width, centre + (1.0 + pad) * width
        return cls(lo, hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)


@dataclass(frozen=True)
class BumpParams:
    """One bump ``a * exp(beta - beta / (1 - d^2/r^2))`` centred at ``x0``."""

    a: float
    beta: float
    r: float
    x0: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x0", np.atleast_1d(np.asarray(self.x0, dtype=float)))
        if not self.a >= 0:
            raise InvalidInputError("bump amplitude must be >= 0")
        if not self.beta > 0:
            raise InvalidInputError("bump shape beta must be > 0")
        if not self.r > 0:
            raise InvalidInputError("bump radius must be > 0")


@dataclass(frozen=True)
class SparsityKernelSpec:
    """Parameters of the sparsity-discovering kernel.

    Arrays are indexed ``[i, j]`` by sum index ``i < n_sums`` and bump index
    ``j < n_bumps``; ``centers`` carries a trailing ``dim`` axis.
    """

    amplitude: np.ndarray
    shape: np.ndarray
    radius: np.ndarray
    centers: np.ndarray
    base_radius: float

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.amplitude, dtype=float))
        b = np.atleast_2d(np.asarray(self.shape, dtype=float))
        r = np.atleast_2d(np.asarray(self.radius, dtype=float))
        c = np.asarray(self.centers, dtype=float)
        if c.ndim == 2:
            c = c[:, :, None]
        if not (a.shape == b.shape == r.shape == c.shape[:2]) or c.ndim != 3:
            raise InvalidInputError("amplitude/shape/radius/centers shapes are inconsistent")
        if a.shape[0] < 1 or a.shape[1] < 1:
            raise InvalidInputError("need at least one sum and one bump")
        if np.any(a < 0) or not np.all(b > 0) or not np.all(r > 0):
            raise InvalidInputError("bumps need a >= 0, beta > 0, r > 0")
        if not self.base_radius > 0:
            raise InvalidInputError("base_radius must be > 0")
        if not np.all(np.isfinite(c)):
            raise InvalidInputError("bump centres must be finite")
        for name, v in (("amplitude", a), ("shape", b), ("radius", r), ("centers", c)):
            object.__setattr__(self, name, v)
        object.__setattr__(self, "base_radius", float(self.base_radius))

    @classmethod
    def from_bumps(cls, sums: Sequence[Sequence[BumpParams]], base_radius: float) -> "SparsityKernelSpec":
        if not sums or any(len(f) != len(sums[0]) for f in sums):
            raise InvalidInputError("every sum needs the same, nonzero number of bumps")
        return cls(
            amplitude=[[p.a for p in f] for f in sums],
            shape=[[p.beta for p in f] for f in sums],
            radius=[[p.r for p in f] for f in sums],
            centers=[[p.x0 for p in f] for f in sums],
            base_radius=base_radius,
        )

    @property
    def n_sums(self) -> int:
        return self.amplitude.shape[0]

    @property
    def n_bumps(self) -> int:
        return self.amplitude.shape[1]

    @property
    def dim(self) -> int:
        return self.centers.shape[2]

    def bumps(self, i: int) -> list[BumpParams]:
        """Bump list of the ``i``-th sum."""
        return [
            BumpParams(self.amplitude[i, j], self.shape[i, j], self.radius[i, j], self.centers[i, j])
            for j in range(self.n_bumps)
        ]


@dataclass(frozen=True)
class CoreKernelSpec:
    kind: str = "none"
    signal_variance: float = 1.0
    length_scale: float = 1.0

    def __post_init__(self):
        if self.kind not in CORE_KINDS:
            raise InvalidInputError(f"unknown core kernel {self.kind!r}; choose from {CORE_KINDS}")
        if not (self.signal_variance > 0 and self.length_scale > 0):
            raise InvalidInputError("signal_variance and length_scale must be > 0")


@dataclass(frozen=True)
class DeltaKernelSpec:
    """Kronecker-delta switches on a set of anchor points."""

    anchor_points: np.ndarray
    hf: np.ndarray
    hg: np.ndarray
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        pts = _as_points(self.anchor_points)
        hf = np.asarray(self.hf, dtype=float).ravel()
        hg = np.asarray(self.hg, dtype=float).ravel()
        if not (len(pts) == hf.size == hg.size):
            raise InvalidInputError("hf, hg and anchor_points must have equal length")
        if np.any(hf < 0) or np.any(hg < 0):
            raise InvalidInputError("delta coefficients must be >= 0")
        object.__setattr__(self, "anchor_points", pts)
        object.__setattr__(self, "hf", hf)
        object.__setattr__(self, "hg", hg)
        object.__setattr__(self, "_index", {tuple(p): k for k, p in enumerate(pts)})

    def lookup(self, x) -> int | None:
        return self._index.get(tuple(np.asarray(x, dtype=float).ravel()))


# --------------------------------------------------------------------------
# vectorised evaluation


def bump_values(amplitude, shape, radius, centers, points) -> np.ndarray:
    """Evaluate a flat collection of bumps at ``points``.

    ``amplitude``, ``shape`` and ``radius`` have shape ``(n,)`` and
    ``centers`` ``(n, dim)``.  Returns an ``(m, n)`` array.
    """
    pts = _as_points(points)
    d = cdist(pts, np.atleast_2d(centers))
    out = np.zeros_like(d)
    inside = d < radius
    if np.any(inside):
        rr = np.broadcast_to(radius, d.shape)[inside]
        bb = np.broadcast_to(shape, d.shape)[inside]
        aa = np.broadcast_to(amplitude, d.shape)[inside]
        q = d[inside] / rr
        out[inside] = aa * np.exp(bb - bb / (1.0 - q * q))
    return out


def bump_sums(spec: SparsityKernelSpec, points) -> np.ndarray:
    """``f_i(x)`` for every point and sum; shape ``(m, n_sums)``."""
    pts = _as_points(points, spec.dim)
    n1, n2 = spec.n_sums, spec.n_bumps
    vals = bump_values(
        spec.amplitude.ravel(), spec.shape.ravel(), spec.radius.ravel(),
        spec.centers.reshape(n1 * n2, spec.dim), pts,
    ).reshape(len(pts), n1, n2)
    out = vals[:, :, 0].copy()
    for j in range(1, n2):
        out += vals[:, :, j]
    return out


def compact_stationary(d, r: float) -> np.ndarray:
    """Compactly-supported stationary kernel as a function of distance."""
    d = np.asarray(d, dtype=float)
    out = np.zeros_like(d)
    inside = d < r
    q = d[inside] / r
    q2 = q * q
    s = np.sqrt(1.0 - q2)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_term = np.where(q > 0, 3.0 * q2 * np.log(q / (1.0 + s)), 0.0)
    out[inside] = CS_PEAK * (log_term + (2.0 * q2 + 1.0) * s)
    return out


def core_values(core: CoreKernelSpec, d) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    if core.kind == "none":
        return np.ones_like(d)
    return core.signal_variance * np.exp(-0.5 * d * d / core.length_scale**2)


def _product_sum(f1: np.ndarray, f2: np.ndarray) -> np.ndarray:
    # explicit sequential sum over i keeps rounding independent of BLAS
    out = np.multiply.outer(f1[:, 0], f2[:, 0])
    for i in range(1, f1.shape[1]):
        out += np.multiply.outer(f1[:, i], f2[:, i])
    return out


def composed_kernel_matrix(core: CoreKernelSpec, spec: SparsityKernelSpec, x1, x2) -> np.ndarray:
    """Dense ``k_c * k_s`` Gram block between two point sets."""
    x1 = _as_points(x1, spec.dim)
    x2 = _as_points(x2, spec.dim)
    d = cdist(x1, x2)
    prod = _product_sum(bump_sums(spec, x1), bump_sums(spec, x2))
    out = np.zeros_like(d)
    nz = (d < spec.base_radius) & (prod > 0)
    if np.any(nz):
        dn = d[nz]
        out[nz] = core_values(core, dn) * (compact_stationary(dn, spec.base_radius) * prod[nz])
    return out


def sparsity_kernel_matrix(spec: SparsityKernelSpec, x1, x2) -> np.ndarray:
    return composed_kernel_matrix(CoreKernelSpec("none"), spec, x1, x2)


def delta_kernel_matrix(spec: DeltaKernelSpec, r: float, x1, x2) -> np.ndarray:
    x1 = _as_points(x1)
    x2 = _as_points(x2)
    idx1 = [spec.lookup(p) for p in x1]
    idx2 = [spec.lookup(p) for p in x2]

    def coeffs(idx):
        hf = np.array([spec.hf[k] if k is not None else 0.0 for k in idx])
        hg = np.array([spec.hg[k] if k is not None else 0.0 for k in idx])
        return np.column_stack([hf, hg])

    prod = _product_sum(coeffs(idx1), coeffs(idx2))
    return compact_stationary(cdist(x1, x2), r) * prod


# --------------------------------------------------------------------------
# scalar API


def _pair(x1, x2):
    a = np.atleast_1d(np.asarray(x1, dtype=float))
    b = np.atleast_1d(np.asarray(x2, dtype=float))
    if a.shape != b.shape or a.ndim != 1:
        raise InvalidInputError("points must be vectors of equal dimension")
    return a, b


def bump_eval(p: BumpParams, x) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != p.x0.shape:
        raise InvalidInputError("dimension mismatch between point and bump centre")
    return float(bump_values(np.array([p.a]), np.array([p.beta]), np.array([p.r]), p.x0[None], x)[0, 0])


def bump_sum_eval(f: Sequence[BumpParams], x) -> float:
    return float(sum(bump_eval(p, x) for p in f))


def compact_stationary_eval(r: float, x1, x2) -> float:
    if not r > 0:
        raise InvalidInputError("support radius must be > 0")
    a, b = _pair(x1, x2)
    return float(compact_stationary(cdist(a[None], b[None]), r)[0, 0])


def sparsity_kernel_eval(spec: SparsityKernelSpec, x1, x2) -> float:
    a, b = _pair(x1, x2)
    return float(sparsity_kernel_matrix(spec, a, b)[0, 0])


def composed_kernel_eval(core: CoreKernelSpec, spec: SparsityKernelSpec, x1, x2) -> float:
    a, b = _pair(x1, x2)
    return float(composed_kernel_matrix(core, spec, a, b)[0, 0])


def delta_kernel_eval(spec: DeltaKernelSpec, r: float, x1, x2) -> float:
    a, b = _pair(x1, x2)
    return float(delta_kernel_matrix(spec, r, a, b)[0, 0])


def sphere_volume(dim: int, r) -> float | np.ndarray:
    """Volume of a ``dim``-dimensional ball of radius ``r``."""
    if dim < 1:
        raise InvalidInputError("dim must be >= 1")
    return math.pi ** (dim / 2) * np.power(r, dim) / math.gamma(dim / 2 + 1)


def sparsity_upper_bound(spec: SparsityKernelSpec, domain: DomainBox) -> float:
    """Upper bound on the fraction of non-zero covariances.

    Assumes uniformly distributed points and disjoint bump supports; the
    value is not clamped and may exceed 1.
    """
    if domain.dim != spec.dim:
        raise InvalidInputError("domain and kernel dimensions differ")
    vols = sphere_volume(spec.dim, spec.radius)
    return float(np.sum(vols.sum(axis=1) ** 2) / domain.volume**2)
