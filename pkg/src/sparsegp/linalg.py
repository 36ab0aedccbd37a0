"""Sparse symmetric storage, conjugate gradients and a randomized log-determinant.

``SparseSymMatrix`` accumulates coordinate triplets while blocks arrive and
is sealed into compressed-row form by :func:`finalize`.  Storage and the
matrix-vector kernel are backed by ``scipy.sparse.csr_matrix``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp

from .errors import ConvergenceWarning, IntegrityError, InvalidInputError, NumericalBreakdownError


class SparseSymMatrix:
    """Symmetric sparse matrix of order ``n``.

    Entries are inserted as ``(row, col, value)`` triplets in either
    triangle; :meth:`finalize` mirrors them so both triangles are stored.
    Inserting the same position twice is tolerated only if the values agree.
    """

    def __init__(self, n: int):
        if n < 1:
            raise InvalidInputError("matrix order must be >= 1")
        self.n = int(n)
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []
        self._csr: sp.csr_matrix | None = None

    @classmethod
    def from_scipy(cls, mat) -> "SparseSymMatrix":
        coo = sp.coo_matrix(mat)
        if coo.shape[0] != coo.shape[1]:
            raise InvalidInputError("matrix must be square")
        out = cls(coo.shape[0])
        upper = coo.row <= coo.col
        out.insert(coo.row[upper], coo.col[upper], coo.data[upper])
        lower = ~upper
        out.insert(coo.col[lower], coo.row[lower], coo.data[lower])
        return finalize(out)

    @classmethod
    def from_dense(cls, a) -> "SparseSymMatrix":
        a = np.asarray(a, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or not np.array_equal(a, a.T, equal_nan=True):
            raise InvalidInputError("dense input must be a symmetric square array")
        return cls.from_scipy(sp.coo_matrix(a))

    @property
    def finalized(self) -> bool:
        return self._csr is not None

    @property
    def csr(self) -> sp.csr_matrix:
        if self._csr is None:
            raise InvalidInputError("matrix is not finalized")
        return self._csr

    @property
    def nnz(self) -> int:
        if self._csr is not None:
            return int(self._csr.nnz)
        return int(sum(r.size for r in self._rows))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    def insert(self, rows, cols, values) -> None:
        if self._csr is not None:
            raise InvalidInputError("cannot insert into a finalized matrix")
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        values = np.asarray(values, dtype=float).ravel()
        if not (rows.size == cols.size == values.size):
            raise InvalidInputError("rows, cols and values must have equal length")
        if rows.size and (rows.min() < 0 or cols.min() < 0 or rows.max() >= self.n or cols.max() >= self.n):
            raise InvalidInputError("index out of range")
        self._rows.append(rows)
        self._cols.append(cols)
        self._vals.append(values)

    def insert_block(self, row_offset: int, col_offset: int, block) -> None:
        """Insert the non-zeros of a dense block at the given offsets."""
        block = np.asarray(block, dtype=float)
        r, c = np.nonzero(block)
        self.insert(r + row_offset, c + col_offset, block[r, c])

    def diagonal(self) -> np.ndarray:
        return self.csr.diagonal()

    def toarray(self) -> np.ndarray:
        return self.csr.toarray()

    def add_diagonal(self, d) -> "SparseSymMatrix":
        """Return a new finalized matrix ``A + diag(d)``."""
        d = np.broadcast_to(np.asarray(d, dtype=float), (self.n,))
        out = SparseSymMatrix(self.n)
        out._csr = (self.csr + sp.diags(d, format="csr")).tocsr()
        out._csr.sort_indices()
        return out

    def __matmul__(self, v):
        return self.csr @ v

    def __repr__(self):
        state = "finalized" if self.finalized else "open"
        return f"SparseSymMatrix(n={self.n}, nnz={self.nnz}, {state})"


def finalize(A: SparseSymMatrix) -> SparseSymMatrix:
    """Seal accumulated triplets into a symmetric CSR matrix (in place).

    Idempotent.  Raises :class:`IntegrityError` when one position (in either
    triangle) was given two different values.
    """
    if A.finalized:
        return A
    n = A.n
    if A._rows:
        rows = np.concatenate(A._rows)
        cols = np.concatenate(A._cols)
        vals = np.concatenate(A._vals)
    else:
        rows = cols = np.zeros(0, dtype=np.int64)
        vals = np.zeros(0)
    lo = np.minimum(rows, cols)
    hi = np.maximum(rows, cols)
    key = lo * n + hi
    order = np.lexsort((vals, key))
    key, vals, lo, hi = key[order], vals[order], lo[order], hi[order]
    first = np.ones(key.size, dtype=bool)
    first[1:] = key[1:] != key[:-1]
    # within a key group values are sorted, so a conflict shows as a differing neighbour
    same = (vals[1:] == vals[:-1]) | (np.isnan(vals[1:]) & np.isnan(vals[:-1]))
    conflict = np.flatnonzero(~first[1:] & ~same)
    if conflict.size:
        bad = conflict[0] + 1
        raise IntegrityError(f"conflicting values at ({lo[bad]}, {hi[bad]})")
    lo, hi, vals = lo[first], hi[first], vals[first]
    off = lo != hi
    r = np.concatenate([lo, hi[off]])
    c = np.concatenate([hi, lo[off]])
    v = np.concatenate([vals, vals[off]])
    csr = sp.csr_matrix((v, (r, c)), shape=(n, n))
    csr.sort_indices()
    A._csr = csr
    A._rows, A._cols, A._vals = [], [], []
    return A


def spmv(A: SparseSymMatrix, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape[0] != A.n:
        raise InvalidInputError(f"vector length {v.shape[0]} does not match order {A.n}")
    return A.csr @ v


# --------------------------------------------------------------------------
# conjugate gradients


@dataclass(frozen=True)
class CGConfig:
    rel_tolerance: float = 1e-8
    max_iters: int | None = None  # None means 10 * n
    preconditioner: str = "jacobi"

    def __post_init__(self):
        if not 0 < self.rel_tolerance < 1:
            raise InvalidInputError("rel_tolerance must lie in (0, 1)")
        if self.max_iters is not None and self.max_iters < 1:
            raise InvalidInputError("max_iters must be positive")
        if self.preconditioner not in ("none", "jacobi"):
            raise InvalidInputError("preconditioner must be 'none' or 'jacobi'")


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    residual: float
    converged: bool


def cg_solve(A: SparseSymMatrix, b, cfg: CGConfig = CGConfig()) -> CGResult:
    """Solve ``A x = b`` for SPD ``A`` by (Jacobi-preconditioned) CG.

    ``residual`` is the true relative residual ``||A x - b|| / ||b||``.  A
    run that hits ``max_iters`` returns ``converged=False`` rather than
    raising; NaN or non-positive curvature raises
    :class:`NumericalBreakdownError`.
    """
    b = np.asarray(b, dtype=float)
    n = A.n
    if b.shape != (n,):
        raise InvalidInputError(f"right-hand side must have shape ({n},)")
    max_iters = cfg.max_iters if cfg.max_iters is not None else 10 * n
    bnorm = np.linalg.norm(b)
    x = np.zeros(n)
    if bnorm == 0.0:
        return CGResult(x, 0, 0.0, True)
    tol = cfg.rel_tolerance * bnorm
    mat = A.csr
    if cfg.preconditioner == "jacobi":
        diag = mat.diagonal()
        if np.any(diag <= 0):
            raise NumericalBreakdownError("non-positive diagonal entry; matrix is not SPD")
        minv = 1.0 / diag
    else:
        minv = None

    it = 0
    r = b.copy()
    while True:
        # restart loop: recurrence residuals can drift from the true residual
        z = r * minv if minv is not None else r
        p = z.copy()
        rz = r @ z
        while it < max_iters:
            ap = mat @ p
            curv = p @ ap
            if not np.isfinite(curv):
                raise NumericalBreakdownError(f"NaN encountered at iteration {it}")
            if curv <= 0:
                raise NumericalBreakdownError(f"non-positive curvature at iteration {it}")
            alpha = rz / curv
            x += alpha * p
            r -= alpha * ap
            it += 1
            if np.linalg.norm(r) <= tol:
                break
            z = r * minv if minv is not None else r
            rz_new = r @ z
            p = z + (rz_new / rz) * p
            rz = rz_new
        r = b - mat @ x
        res = np.linalg.norm(r)
        if not np.isfinite(res):
            raise NumericalBreakdownError("NaN in solution")
        if res <= tol:
            return CGResult(x, it, res / bnorm, True)
        if it >= max_iters:
            return CGResult(x, it, res / bnorm, False)


# --------------------------------------------------------------------------
# log-determinant


@dataclass(frozen=True)
class LogDetConfig:
    probes: int = 30
    taylor_terms: int = 50
    eig_margin: float = 1.05
    power_iters: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.probes < 1 or self.taylor_terms < 1 or self.power_iters < 1:
            raise InvalidInputError("probes, taylor_terms and power_iters must be >= 1")
        if not self.eig_margin > 1:
            raise InvalidInputError("eig_margin must exceed 1")


def power_iteration(A: SparseSymMatrix, iters: int, rng: np.random.Generator, rtol: float = 1e-2):
    """Rayleigh-quotient estimate of the largest eigenvalue.

    Returns ``(estimate, converged)`` where convergence means the last step
    changed the estimate by less than ``rtol`` relative.
    """
    mat = A.csr
    v = rng.standard_normal(A.n)
    v /= np.linalg.norm(v)
    lam = prev = np.nan
    for _ in range(iters):
        w = mat @ v
        prev, lam = lam, float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0 or not np.isfinite(nw):
            break
        v = w / nw
    converged = np.isfinite(prev) and abs(lam - prev) <= rtol * abs(lam)
    return lam, bool(converged)


def logdet_rla(A: SparseSymMatrix, cfg: LogDetConfig = LogDetConfig()) -> tuple[float, float]:
    """Randomized estimate of ``log det A`` for SPD ``A``.

    With ``alpha`` an upper bound on the spectrum and ``C = I - A/alpha``,
    ``log det A = n log alpha - sum_k tr(C^k)/k``.  The series is truncated at
    ``taylor_terms`` and each trace is estimated with the same Rademacher
    probes.  Returns ``(estimate, standard_error)``; the error is NaN for a
    single probe.
    """
    n = A.n
    rng = np.random.default_rng(cfg.seed)
    lam, ok = power_iteration(A, cfg.power_iters, rng)
    if not (np.isfinite(lam) and lam > 0):
        raise NumericalBreakdownError("power iteration gave a non-positive eigenvalue estimate")
    alpha = cfg.eig_margin * lam
    if not ok:
        gersh = float(np.max(np.abs(A.csr).sum(axis=1)))
        warnings.warn(
            f"power iteration did not settle in {cfg.power_iters} steps; using row-sum bound {gersh:.4g}",
            ConvergenceWarning, stacklevel=2,
        )
        alpha = max(alpha, gersh)
    mat = A.csr
    z = rng.choice(np.array([-1.0, 1.0]), size=(n, cfg.probes))
    v = z
    acc = np.zeros(cfg.probes)
    for k in range(1, cfg.taylor_terms + 1):
        v = v - (mat @ v) / alpha
        acc += np.einsum("ij,ij->j", z, v) / k
    samples = n * math.log(alpha) - acc
    est = float(samples.mean())
    if not np.isfinite(est):
        raise NumericalBreakdownError("log-determinant estimate is not finite")
    stderr = float(samples.std(ddof=1) / math.sqrt(cfg.probes)) if cfg.probes > 1 else float("nan")
    return est, stderr


# --------------------------------------------------------------------------
# Matrix Market


def write_matrix_market(path, A: SparseSymMatrix, comment: str = "") -> None:
    scipy.io.mmwrite(str(path), A.csr, comment=comment, field="real", symmetry="symmetric")


def read_matrix_market(path) -> SparseSymMatrix:
    return SparseSymMatrix.from_scipy(scipy.io.mmread(str(path)))
