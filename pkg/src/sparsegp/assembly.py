"""Batched, parallel assembly of the sparse covariance matrix.

The dataset is cut into contiguous batches; every batch pair ``(i, j)`` with
``i <= j`` is a task.  Workers compute the dense block, drop zeros, and hand
coordinate entries to a single collector (the calling thread) which inserts
them into the host matrix.  Diagonal tasks emit only their upper triangle.
"""
from __future__ import annotations

import csv
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import InvalidInputError
from .kernels import CoreKernelSpec, DomainBox, SparsityKernelSpec, _as_points, composed_kernel_matrix
from .linalg import SparseSymMatrix, finalize

#: Entries with smaller magnitude are treated as zero.
DUST = 1e-12


@dataclass
class Dataset:
    """Observations ``y`` at ``points``.

    ``noise_variance`` is either ``None`` (noise is a trained scalar
    hyperparameter) or fixed per-point variances.  ``domain`` defaults to the
    bounding box of the points.
    """

    points: np.ndarray
    y: np.ndarray
    noise_variance: np.ndarray | None = None
    domain: DomainBox | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = _as_points(self.points)
        self.y = np.asarray(self.y, dtype=float).ravel()
        if len(self.points) != self.y.size or self.y.size < 1:
            raise InvalidInputError("points and y must have equal, nonzero length")
        if self.noise_variance is not None:
            nv = np.broadcast_to(np.asarray(self.noise_variance, dtype=float), self.y.shape).copy()
            if not np.all(nv > 0):
                raise InvalidInputError("noise variances must be > 0")
            self.noise_variance = nv
        if self.domain is None:
            self.domain = DomainBox.bounding(self.points)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class BatchPlan:
    batch_size: int
    boundaries: tuple[tuple[int, int], ...]

    @property
    def n_batches(self) -> int:
        return len(self.boundaries)

    @property
    def n_tasks(self) -> int:
        b = self.n_batches
        return b * (b + 1) // 2

    def tasks(self) -> list["BlockTask"]:
        return [BlockTask(i, j) for i in range(self.n_batches) for j in range(i, self.n_batches)]


@dataclass(frozen=True)
class BlockTask:
    i: int
    j: int


@dataclass
class BlockResult:
    task: BlockTask
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    seconds: float


@dataclass
class AssemblyStats:
    n: int
    nnz: int
    empirical_s: float
    wall_time: float
    tasks_executed: int
    per_block_times: list[float]

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "nnz": self.nnz,
            "empirical_s": self.empirical_s,
            "wall_time": self.wall_time,
            "tasks_executed": self.tasks_executed,
            "mean_block_time": float(np.mean(self.per_block_times)) if self.per_block_times else 0.0,
        }


def plan_batches(n: int, batch_size: int) -> BatchPlan:
    if n < 1 or not 1 <= batch_size <= n:
        raise InvalidInputError(f"need 1 <= batch_size <= N, got batch_size={batch_size}, N={n}")
    bounds = tuple((s, min(s + batch_size, n)) for s in range(0, n, batch_size))
    return BatchPlan(batch_size, bounds)


def _sparsify(block: np.ndarray):
    keep = np.abs(block) >= DUST
    r, c = np.nonzero(keep)
    return r, c, block[r, c]


def compute_block(ds: Dataset, task: BlockTask, plan: BatchPlan,
                  core: CoreKernelSpec, spec: SparsityKernelSpec) -> BlockResult:
    """Dense covariance of one batch pair, returned as global coordinate entries."""
    nb = plan.n_batches
    if not 0 <= task.i <= task.j < nb:
        raise InvalidInputError(f"task {task} invalid for {nb} batches")
    t0 = time.perf_counter()
    (a0, a1), (b0, b1) = plan.boundaries[task.i], plan.boundaries[task.j]
    block = composed_kernel_matrix(core, spec, ds.points[a0:a1], ds.points[b0:b1])
    if task.i == task.j:
        block = np.triu(block)
    r, c, v = _sparsify(block)
    return BlockResult(task, r + a0, c + b0, v, time.perf_counter() - t0)


def assemble_covariance(ds: Dataset, plan: BatchPlan, core: CoreKernelSpec,
                        spec: SparsityKernelSpec, workers: int = 1):
    """Assemble the finalized kernel matrix (without noise) and its statistics.

    The result does not depend on ``workers`` or on task completion order.
    """
    if workers < 1:
        raise InvalidInputError("workers must be >= 1")
    if plan.boundaries[-1][1] != ds.n:
        raise InvalidInputError("batch plan does not cover the dataset")
    t0 = time.perf_counter()
    host = SparseSymMatrix(ds.n)
    times = []
    tasks = plan.tasks()
    if workers == 1:
        for task in tasks:
            res = compute_block(ds, task, plan, core, spec)
            host.insert(res.rows, res.cols, res.values)
            times.append(res.seconds)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(compute_block, ds, t, plan, core, spec) for t in tasks]
            for fut in as_completed(futures):
                res = fut.result()
                host.insert(res.rows, res.cols, res.values)
                times.append(res.seconds)
    finalize(host)
    wall = time.perf_counter() - t0
    stats = AssemblyStats(
        n=ds.n, nnz=host.nnz, empirical_s=host.nnz / ds.n**2, wall_time=wall,
        tasks_executed=len(times), per_block_times=times,
    )
    return host, stats


def cross_covariance(ds: Dataset, queries, core: CoreKernelSpec, spec: SparsityKernelSpec):
    """Sparse ``(len(queries), N)`` covariance between query and data points."""
    q = _as_points(queries, ds.dim)
    block = composed_kernel_matrix(core, spec, q, ds.points)
    r, c, v = _sparsify(block)
    return sp.csr_matrix((v, (r, c)), shape=(len(q), ds.n))


# --------------------------------------------------------------------------
# scaling model


@dataclass(frozen=True)
class ScalingModelInput:
    dataset_size: float
    batch_size: float
    workers: float
    block_time: float

    def __post_init__(self):
        if min(self.dataset_size, self.batch_size, self.workers, self.block_time) <= 0:
            raise InvalidInputError("scaling model inputs must be positive")


def scaling_model_time(inp: ScalingModelInput, exact: bool = True) -> float:
    """Theoretical covariance computation time.

    exact: ``D/(2 n b) * (D/b + 1) * t_b``; otherwise the large-``D/b``
    approximation ``D^2 t_b / (2 n b^2)``.
    """
    d, b, n, tb = inp.dataset_size, inp.batch_size, inp.workers, inp.block_time
    if exact:
        return d / (2 * n * b) * (d / b + 1) * tb
    return d * d * tb / (2 * n * b * b)


@dataclass
class BenchmarkRow:
    workers: int
    wall_time_s: float
    model_time_s: float
    mean_block_time_s: float


def run_scaling_benchmark(ds: Dataset, plan: BatchPlan, core: CoreKernelSpec,
                          spec: SparsityKernelSpec, worker_counts, repeats: int = 1) -> list[BenchmarkRow]:
    """Time ``assemble_covariance`` for each worker count.

    The model column uses the exact scaling formula with ``t_b`` taken as the
    mean single-block time of the first measured configuration.
    """
    worker_counts = list(worker_counts)
    if not worker_counts:
        raise InvalidInputError("worker_counts must be non-empty")
    rows, t_b = [], None
    for w in worker_counts:
        walls, blocks = [], []
        for _ in range(repeats):
            _, stats = assemble_covariance(ds, plan, core, spec, workers=w)
            walls.append(stats.wall_time)
            blocks.extend(stats.per_block_times)
        mean_block = float(np.mean(blocks))
        if t_b is None:
            t_b = mean_block
        model = scaling_model_time(ScalingModelInput(ds.n, plan.batch_size, w, t_b))
        rows.append(BenchmarkRow(w, float(np.median(walls)), model, mean_block))
    return rows


BENCHMARK_FIELDS = ("workers", "wall_time_s", "model_time_s", "mean_block_time_s")


def write_benchmark_csv(path, rows: list[BenchmarkRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(BENCHMARK_FIELDS)
        for r in rows:
            w.writerow([r.workers, repr(r.wall_time_s), repr(r.model_time_s), repr(r.mean_block_time_s)])


def read_benchmark_csv(path) -> list[BenchmarkRow]:
    with open(path, newline="") as fh:
        return [
            BenchmarkRow(int(r["workers"]), float(r["wall_time_s"]), float(r["model_time_s"]),
                         float(r["mean_block_time_s"]))
            for r in csv.DictReader(fh)
        ]

