"""Likelihood, sparsity-aware objectives, MCMC training and posterior prediction."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .assembly import AssemblyStats, Dataset, assemble_covariance, cross_covariance, plan_batches
from .errors import ConstraintViolationError, ConvergenceWarning, InvalidInputError, NumericalBreakdownError
from .kernels import (
    CoreKernelSpec,
    DomainBox,
    SparsityKernelSpec,
    composed_kernel_matrix,
    sparsity_upper_bound,
)
from .linalg import CGConfig, LogDetConfig, SparseSymMatrix, cg_solve, logdet_rla

SCHEMA_VERSION = 1
OBJECTIVES = ("plain", "augmented", "constrained")


# --------------------------------------------------------------------------
# hyperparameters


@dataclass(frozen=True)
class Layout:
    """Shape information fixing the length and order of the hyperparameter vector.

    Order: ``noise_variance``; ``signal_variance, length_scale`` (only for a
    squared-exponential core); ``base_radius``; for each sum ``i`` and bump
    ``j``: ``a, beta, r, x0[0..dim-1]``; ``prior_mean``.
    """

    n_sums: int
    n_bumps: int
    dim: int
    core_kind: str = "none"

    def names(self) -> list[str]:
        out = ["noise_variance"]
        if self.core_kind != "none":
            out += ["signal_variance", "length_scale"]
        out.append("base_radius")
        for i in range(self.n_sums):
            for j in range(self.n_bumps):
                out += [f"a[{i},{j}]", f"beta[{i},{j}]", f"r[{i},{j}]"]
                out += [f"x0[{i},{j}][{k}]" for k in range(self.dim)]
        out.append("prior_mean")
        return out

    @property
    def size(self) -> int:
        return len(self.names())

    def kinds(self) -> np.ndarray:
        """Per-entry kind: ``'pos'`` (log-transformed), ``'loc'`` or ``'mean'``."""
        kinds = []
        for name in self.names():
            if name.startswith("x0"):
                kinds.append("loc")
            elif name == "prior_mean":
                kinds.append("mean")
            else:
                kinds.append("pos")
        return np.array(kinds)

    def as_dict(self) -> dict:
        return {"n_sums": self.n_sums, "n_bumps": self.n_bumps, "dim": self.dim, "core_kind": self.core_kind}


@dataclass(frozen=True)
class Hyperparameters:
    noise_variance: float
    core: CoreKernelSpec
    kernel: SparsityKernelSpec
    prior_mean: float

    def __post_init__(self):
        if not self.noise_variance > 0:
            raise InvalidInputError("noise_variance must be > 0")

    @property
    def layout(self) -> Layout:
        k = self.kernel
        return Layout(k.n_sums, k.n_bumps, k.dim, self.core.kind)

    def to_vector(self) -> np.ndarray:
        k = self.kernel
        out = [self.noise_variance]
        if self.core.kind != "none":
            out += [self.core.signal_variance, self.core.length_scale]
        out.append(k.base_radius)
        for i in range(k.n_sums):
            for j in range(k.n_bumps):
                out += [k.amplitude[i, j], k.shape[i, j], k.radius[i, j], *k.centers[i, j]]
        out.append(self.prior_mean)
        return np.array(out, dtype=float)

    @classmethod
    def from_vector(cls, vec, layout: Layout) -> "Hyperparameters":
        vec = np.asarray(vec, dtype=float)
        if vec.size != layout.size:
            raise InvalidInputError(f"expected {layout.size} hyperparameters, got {vec.size}")
        pos = 0
        noise = vec[pos]
        pos += 1
        if layout.core_kind != "none":
            core = CoreKernelSpec(layout.core_kind, vec[pos], vec[pos + 1])
            pos += 2
        else:
            core = CoreKernelSpec("none")
        base = vec[pos]
        pos += 1
        per = 3 + layout.dim
        n = layout.n_sums * layout.n_bumps
        blocks = vec[pos:pos + n * per].reshape(layout.n_sums, layout.n_bumps, per)
        kernel = SparsityKernelSpec(blocks[..., 0], blocks[..., 1], blocks[..., 2], blocks[..., 3:], base)
        return cls(float(noise), core, kernel, float(vec[-1]))


def default_hyperparameters(ds: Dataset, n_sums: int = 2, n_bumps: int = 2,
                            core_kind: str = "none") -> Hyperparameters:
    """Deterministic starting point derived from the data.

    base radius half the domain diameter, bumps ``a=1, beta=1`` with radius
    ``diameter / n_bumps`` centred on a regular grid of cell centres, noise
    one percent of ``var(y)`` (floored at 1e-6), prior mean ``mean(y)``.
    """
    dom = ds.domain
    diam = dom.diameter
    k = n_sums * n_bumps
    g = math.ceil(k ** (1.0 / ds.dim) - 1e-9)
    axes = [dom.lower[d] + (np.arange(g) + 0.5) / g * (dom.upper[d] - dom.lower[d]) for d in range(ds.dim)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, ds.dim)[:k]
    var_y = float(np.var(ds.y))
    kernel = SparsityKernelSpec(
        amplitude=np.ones((n_sums, n_bumps)),
        shape=np.ones((n_sums, n_bumps)),
        radius=np.full((n_sums, n_bumps), diam / n_bumps),
        centers=grid.reshape(n_sums, n_bumps, ds.dim),
        base_radius=0.5 * diam,
    )
    core = CoreKernelSpec(core_kind, var_y if var_y > 0 else 1.0, 0.5 * diam) if core_kind != "none" else CoreKernelSpec()
    return Hyperparameters(max(0.01 * var_y, 1e-6), core, kernel, float(np.mean(ds.y)))


def save_hyperparameters(path, h: Hyperparameters, extra: dict | None = None) -> None:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "layout": h.layout.as_dict(),
        "names": h.layout.names(),
        "values": [float(v) for v in h.to_vector()],
    }
    if extra:
        doc["extra"] = extra
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)


def load_hyperparameters(path) -> Hyperparameters:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise InvalidInputError(f"unsupported hyperparameter schema {doc.get('schema_version')!r}")
    return Hyperparameters.from_vector(doc["values"], Layout(**doc["layout"]))


# --------------------------------------------------------------------------
# model and likelihood


@dataclass
class GPModel:
    dataset: Dataset
    hyperparameters: Hyperparameters
    K: SparseSymMatrix
    stats: AssemblyStats
    batch_size: int
    workers: int = 1

    @property
    def core(self) -> CoreKernelSpec:
        return self.hyperparameters.core

    @property
    def spec(self) -> SparsityKernelSpec:
        return self.hyperparameters.kernel

    def noise(self) -> np.ndarray:
        if self.dataset.noise_variance is not None:
            return self.dataset.noise_variance
        return np.full(self.dataset.n, self.hyperparameters.noise_variance)

    def system_matrix(self) -> SparseSymMatrix:
        """``K + V``."""
        return self.K.add_diagonal(self.noise())

    def s_bound(self) -> float:
        return sparsity_upper_bound(self.spec, self.dataset.domain)


def build_model(ds: Dataset, h: Hyperparameters, batch_size: int = 1000, workers: int = 1) -> GPModel:
    if h.kernel.dim != ds.dim:
        raise InvalidInputError("kernel dimension does not match the dataset")
    b = min(batch_size, ds.n)
    K, stats = assemble_covariance(ds, plan_batches(ds.n, b), h.core, h.kernel, workers)
    return GPModel(ds, h, K, stats, b, workers)


def marginal_log_likelihood(model: GPModel, cg_config: CGConfig = CGConfig(),
                            logdet_config: LogDetConfig = LogDetConfig(),
                            logdet: Callable[[SparseSymMatrix], float] | None = None,
                            return_info: bool = False):
    """``-1/2 r^T (K+V)^{-1} r - 1/2 log|K+V|`` with ``r = y - m``.

    The solve uses CG and the log-determinant the randomized estimator
    unless a ``logdet`` callable is supplied.  A CG solve that misses its
    tolerance triggers a :class:`ConvergenceWarning`; ``return_info=True``
    additionally returns the diagnostics.
    """
    A = model.system_matrix()
    resid = model.dataset.y - model.hyperparameters.prior_mean
    sol = cg_solve(A, resid, cg_config)
    quad = float(resid @ sol.x)
    if logdet is None:
        ld, ld_err = logdet_rla(A, logdet_config)
    else:
        ld, ld_err = float(logdet(A)), 0.0
    value = -0.5 * quad - 0.5 * ld
    if not sol.converged:
        warnings.warn(
            f"CG stopped after {sol.iterations} iterations at relative residual {sol.residual:.3g}",
            ConvergenceWarning, stacklevel=2,
        )
    if not return_info:
        return value
    info = {
        "quadratic": quad, "logdet": ld, "logdet_stderr": ld_err,
        "cg_iterations": sol.iterations, "cg_residual": sol.residual, "cg_converged": sol.converged,
    }
    return value, info


def augmented_objective(lnL: float, s_bound: float) -> float:
    """``lnL + (1 - s) lnL`` with ``s`` clamped into ``[0, 1]``."""
    s = min(1.0, max(0.0, s_bound))
    return lnL + (1.0 - s) * lnL


def constraint_satisfied(s_bound: float, requirement: float) -> bool:
    if not 0 < requirement <= 1:
        raise InvalidInputError("sparsity requirement must lie in (0, 1]")
    return min(1.0, s_bound) < requirement


# --------------------------------------------------------------------------
# MCMC


@dataclass(frozen=True)
class MCMCConfig:
    iterations: int = 160
    proposal_scale: float = 0.1
    seed: int = 0
    objective: str = "plain"
    sparsity_requirement: float = 1.0

    def __post_init__(self):
        if self.iterations < 1:
            raise InvalidInputError("iterations must be >= 1")
        if not self.proposal_scale > 0:
            raise InvalidInputError("proposal_scale must be > 0")
        if self.objective not in OBJECTIVES:
            raise InvalidInputError(f"objective must be one of {OBJECTIVES}")
        if not 0 < self.sparsity_requirement <= 1:
            raise InvalidInputError("sparsity_requirement must lie in (0, 1]")


@dataclass
class MCMCRecord:
    iteration: int
    hyperparameters: list[float]
    log_likelihood: float | None
    objective: float | None
    s_bound: float
    accepted: bool
    best_log_likelihood: float
    empirical_s: float | None = None
    note: str = ""

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class MCMCTrace:
    layout: Layout
    initial: MCMCRecord
    records: list[MCMCRecord] = field(default_factory=list)
    best_hyperparameters: np.ndarray | None = None
    best_log_likelihood: float = -math.inf

    def best_so_far(self) -> np.ndarray:
        return np.array([r.best_log_likelihood for r in self.records])

    def accepted_states(self) -> list[MCMCRecord]:
        return [self.initial] + [r for r in self.records if r.accepted]

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for r in self.records:
                fh.write(json.dumps(r.as_dict()) + "\n")


def read_trace_jsonl(path) -> list[MCMCRecord]:
    with open(path) as fh:
        return [MCMCRecord(**json.loads(line)) for line in fh if line.strip()]


class _Evaluator:
    def __init__(self, ds, layout, cfg, batch_size, workers, cg_config, logdet_config):
        self.ds, self.layout, self.cfg = ds, layout, cfg
        self.batch_size, self.workers = batch_size, workers
        self.cg_config, self.logdet_config = cg_config, logdet_config

    def __call__(self, vec):
        """Return ``(s_bound, lnL, objective, empirical_s, note)``; lnL is None when rejected outright."""
        try:
            h = Hyperparameters.from_vector(vec, self.layout)
        except InvalidInputError as exc:
            return math.inf, None, None, None, f"invalid: {exc}"
        s = sparsity_upper_bound(h.kernel, self.ds.domain)
        if self.cfg.objective == "constrained" and not constraint_satisfied(s, self.cfg.sparsity_requirement):
            return s, None, None, None, "constraint"
        model = build_model(self.ds, h, self.batch_size, self.workers)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            try:
                lnL, info = marginal_log_likelihood(model, self.cg_config, self.logdet_config, return_info=True)
            except NumericalBreakdownError as exc:
                return s, None, None, model.stats.empirical_s, f"breakdown: {exc}"
        if not info["cg_converged"]:
            return s, None, None, model.stats.empirical_s, "cg not converged"
        obj = augmented_objective(lnL, s) if self.cfg.objective == "augmented" else lnL
        return s, lnL, obj, model.stats.empirical_s, ""


def mcmc_train(ds: Dataset, init: Hyperparameters, cfg: MCMCConfig = MCMCConfig(), workers: int = 1,
               batch_size: int = 1000, cg_config: CGConfig = CGConfig(),
               logdet_config: LogDetConfig = LogDetConfig(), callback=None):
    """Random-walk Metropolis over the hyperparameters, used as a maximizer.

    Positive parameters move in log space with step ``proposal_scale``; bump
    centres move linearly with step ``proposal_scale`` times the domain
    width and are clipped to the data bounding box padded by 10%; the prior
    mean moves with step ``proposal_scale * std(y)``.  Per-point noise given
    with the dataset freezes the noise hyperparameter.  Every state is
    evaluated with the same log-determinant probes, so the chain is
    deterministic for a fixed seed.

    Returns ``(trace, model)`` with the model rebuilt at the best visited
    state.
    """
    layout = init.layout
    if layout.dim != ds.dim:
        raise InvalidInputError("initial hyperparameters do not match the dataset dimension")
    evaluate = _Evaluator(ds, layout, cfg, batch_size, workers, cg_config, logdet_config)
    rng = np.random.default_rng(cfg.seed)

    kinds = layout.kinds()
    pos = kinds == "pos"
    loc = np.flatnonzero(kinds == "loc")
    box = DomainBox.bounding(ds.points, pad=0.1)
    loc_dims = np.arange(loc.size) % layout.dim
    step = np.full(layout.size, cfg.proposal_scale)
    step[loc] *= (box.upper - box.lower)[loc_dims]
    sd_y = float(np.std(ds.y))
    step[kinds == "mean"] *= sd_y if sd_y > 0 else 1.0
    if ds.noise_variance is not None:
        step[0] = 0.0

    def to_u(v):
        u = v.copy()
        u[pos] = np.log(v[pos])
        return u

    def from_u(u, ref_u, ref):
        # components that did not move keep their exact value (exp(log(x)) != x)
        v = u.copy()
        v[pos] = np.exp(u[pos])
        same = u == ref_u
        v[same] = ref[same]
        return v

    lo_u, hi_u = np.full(layout.size, -np.inf), np.full(layout.size, np.inf)
    lo_u[loc], hi_u[loc] = box.lower[loc_dims], box.upper[loc_dims]

    cur = init.to_vector()
    s0, l0, o0, e0, note = evaluate(cur)
    if l0 is None:
        if note == "constraint":
            raise ConstraintViolationError(
                f"initial state violates the sparsity constraint: bound {min(1.0, s0):.4g} "
                f">= requirement {cfg.sparsity_requirement}"
            )
        raise NumericalBreakdownError(f"initial state could not be evaluated ({note})")
    trace = MCMCTrace(layout, MCMCRecord(0, cur.tolist(), l0, o0, s0, True, l0, e0))
    trace.best_hyperparameters, trace.best_log_likelihood = cur.copy(), l0
    cur_obj = o0
    cur_u = to_u(cur)

    for it in range(1, cfg.iterations + 1):
        prop_u = np.clip(cur_u + step * rng.standard_normal(layout.size), lo_u, hi_u)
        prop = from_u(prop_u, cur_u, cur)
        log_u = math.log(rng.random())
        s, lnL, obj, emp, note = evaluate(prop)
        accepted = lnL is not None and log_u < obj - cur_obj
        if accepted:
            cur, cur_u, cur_obj = prop, prop_u, obj
            if lnL > trace.best_log_likelihood:
                trace.best_hyperparameters, trace.best_log_likelihood = prop.copy(), lnL
        rec = MCMCRecord(it, prop.tolist(), lnL, obj, s, bool(accepted), trace.best_log_likelihood, emp, note)
        trace.records.append(rec)
        if callback is not None:
            callback(rec)

    best = Hyperparameters.from_vector(trace.best_hyperparameters, layout)
    return trace, build_model(ds, best, batch_size, workers)


# --------------------------------------------------------------------------
# prediction


@dataclass
class PosteriorResult:
    mean: np.ndarray
    variance: np.ndarray
    raw_variance: np.ndarray
    cg_iterations: list[int]
    converged: np.ndarray


def posterior_predict(model: GPModel, queries, cg_config: CGConfig = CGConfig()) -> PosteriorResult:
    """Posterior mean and marginal variance at ``queries``.

    Queries outside all kernel support get the prior mean and prior variance
    without a solve.  Reported variances are clamped at zero;
    ``raw_variance`` keeps the unclamped values.
    """
    ds, h = model.dataset, model.hyperparameters
    q = np.atleast_2d(np.asarray(queries, dtype=float))
    A = model.system_matrix()
    kappa = cross_covariance(ds, q, h.core, h.kernel)
    sol = cg_solve(A, ds.y - h.prior_mean, cg_config)
    iters = [sol.iterations]
    converged = np.ones(len(q), dtype=bool) & sol.converged
    mean = h.prior_mean + kappa @ sol.x
    prior_var = np.array([composed_kernel_matrix(h.core, h.kernel, x, x)[0, 0] for x in q])
    raw = prior_var.copy()
    for k in range(len(q)):
        row = kappa.getrow(k)
        if row.nnz == 0:
            continue
        kq = row.toarray().ravel()
        s = cg_solve(A, kq, cg_config)
        iters.append(s.iterations)
        converged[k] &= s.converged
        raw[k] -= kq @ s.x
    if not converged.all():
        warnings.warn(f"{int((~converged).sum())} queries did not reach the CG tolerance",
                      ConvergenceWarning, stacklevel=2)
    return PosteriorResult(mean, np.maximum(raw, 0.0), raw, iters, converged)
