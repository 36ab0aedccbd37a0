"""CSV ingestion with unit-box normalization, CSV export, and synthetic clustered data."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .assembly import Dataset
from .errors import InvalidInputError
from .kernels import DomainBox

log = logging.getLogger(__name__)

MISSING = {"", "na", "nan", "null", "none", "-9999"}


@dataclass(frozen=True)
class Normalization:
    """Per-dimension affine map ``u = (x - lower) / scale``."""

    lower: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, raw: np.ndarray) -> "Normalization":
        lo, hi = raw.min(axis=0), raw.max(axis=0)
        # a constant column maps to 0
        return cls(lo, np.where(hi > lo, hi - lo, 1.0))

    @classmethod
    def identity(cls, dim: int) -> "Normalization":
        return cls(np.zeros(dim), np.ones(dim))

    def normalize(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.lower) / self.scale

    def denormalize(self, u) -> np.ndarray:
        return np.asarray(u, dtype=float) * self.scale + self.lower

    def as_dict(self) -> dict:
        return {"lower": self.lower.tolist(), "scale": self.scale.tolist()}


@dataclass
class IngestReport:
    rows_read: int = 0
    dropped_missing: list[int] = field(default_factory=list)
    malformed: list[tuple[int, str]] = field(default_factory=list)

    def summary(self) -> str:
        return (f"{self.rows_read} rows read, {len(self.dropped_missing)} dropped for missing values, "
                f"{len(self.malformed)} malformed")


def _parse(field_value: str):
    """Float value, ``None`` for a missing marker; raises ValueError otherwise."""
    v = field_value.strip()
    if v.lower() in MISSING:
        return None
    x = float(v)
    if math.isnan(x):
        return None
    if math.isinf(x):
        raise ValueError(f"non-finite value {v!r}")
    return x


def ingest_csv(path, coords: Sequence[str], value: str, noise: str | None = None,
               normalize: bool = True, max_malformed: float = 0.01,
               subsample: int | None = None, seed: int = 0) -> Dataset:
    """Read a headed CSV into a :class:`Dataset`.

    Rows with missing entries are dropped and counted; rows that cannot be
    parsed are reported, and more than ``max_malformed`` of them aborts.
    Coordinates are min-max scaled to the unit box unless ``normalize`` is
    false.  ``subsample`` keeps a seeded uniform random subset of rows while
    preserving file order.  The report, the normalization and the raw
    coordinates are stored in ``ds.meta``.
    """
    cols = list(coords) + [value] + ([noise] if noise else [])
    report = IngestReport()
    raw_rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InvalidInputError(f"{path}: empty file") from None
        missing_cols = [c for c in cols if c not in header]
        if missing_cols:
            raise InvalidInputError(f"{path}: missing columns {missing_cols}")
        idx = [header.index(c) for c in cols]
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not f.strip() for f in row):
                continue
            report.rows_read += 1
            if len(row) != len(header):
                report.malformed.append((lineno, f"expected {len(header)} fields, got {len(row)}"))
                continue
            try:
                vals = [_parse(row[k]) for k in idx]
            except ValueError as exc:
                report.malformed.append((lineno, str(exc)))
                continue
            if any(v is None for v in vals):
                report.dropped_missing.append(lineno)
                continue
            raw_rows.append(vals)
    if report.rows_read == 0:
        raise InvalidInputError(f"{path}: no data rows")
    if len(report.malformed) > max_malformed * report.rows_read:
        detail = "; ".join(f"line {n}: {why}" for n, why in report.malformed[:10])
        raise InvalidInputError(f"{path}: {len(report.malformed)} malformed rows ({detail})")
    for n, why in report.malformed:
        log.warning("%s line %d skipped: %s", path, n, why)
    if not raw_rows:
        raise InvalidInputError(f"{path}: every row had missing values")
    table = np.array(raw_rows, dtype=float)
    if subsample is not None and subsample < len(table):
        keep = np.sort(np.random.default_rng(seed).choice(len(table), size=subsample, replace=False))
        table = table[keep]
    d = len(coords)
    raw = table[:, :d]
    y = table[:, d]
    nv = table[:, d + 1] if noise else None
    norm = Normalization.fit(raw) if normalize else Normalization.identity(d)
    pts = norm.normalize(raw)
    domain = DomainBox.unit(d) if normalize else None
    meta = {"normalization": norm, "raw_points": raw, "report": report,
            "columns": {"coords": list(coords), "value": value, "noise": noise}}
    return Dataset(pts, y, nv, domain, meta)


def export_csv(path, ds: Dataset, coords: Sequence[str] | None = None, value: str = "value",
               noise: str | None = "noise") -> None:
    """Write a dataset in raw (de-normalized) units so it re-ingests identically."""
    raw = ds.meta.get("raw_points")
    if raw is None:
        raw = ds.meta.get("normalization", Normalization.identity(ds.dim)).denormalize(ds.points)
    coords = list(coords) if coords else [f"x{k}" for k in range(ds.dim)]
    header = coords + [value]
    with_noise = ds.noise_variance is not None and noise
    if with_noise:
        header.append(noise)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k in range(ds.n):
            row = [repr(float(v)) for v in raw[k]] + [repr(float(ds.y[k]))]
            if with_noise:
                row.append(repr(float(ds.noise_variance[k])))
            w.writerow(row)


# --------------------------------------------------------------------------
# synthetic data

LATENTS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "sine": lambda x: np.sin(2.0 * np.pi * x.sum(axis=1)),
    "cluster_offset": lambda x: np.sin(6.0 * np.pi * x[:, 0]) + 2.0 * (x[:, 0] > 0.5),
}


@dataclass
class ClusterSpec:
    """Points uniform in balls around ``centers``; ``y = latent(x) + noise``.

    ``latent`` is a name from :data:`LATENTS`, ``"constant"`` (using
    ``constant``), or a callable mapping ``(m, dim)`` points to values.
    """

    centers: np.ndarray
    radii: Sequence[float]
    counts: Sequence[int]
    latent: str | Callable = "sine"
    constant: float = 0.0
    noise_std: float = 0.0

    def __post_init__(self):
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        if not (len(self.centers) == len(self.radii) == len(self.counts)):
            raise InvalidInputError("centers, radii and counts must have equal length")

    @classmethod
    def two_clusters(cls, n_per: int = 100, dim: int = 1, radius: float = 0.05,
                     latent="cluster_offset", noise_std: float = 0.05) -> "ClusterSpec":
        c = np.full((2, dim), 0.5)
        c[0, 0], c[1, 0] = 0.2, 0.8
        return cls(c, [radius, radius], [n_per, n_per], latent, noise_std=noise_std)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        if callable(self.latent):
            return np.asarray(self.latent(x), dtype=float)
        if self.latent == "constant":
            return np.full(len(x), float(self.constant))
        try:
            return LATENTS[self.latent](x)
        except KeyError:
            raise InvalidInputError(f"unknown latent function {self.latent!r}") from None


def generate_synthetic(spec: ClusterSpec, seed: int = 0) -> Dataset:
    """Reproducible clustered dataset with known latent values (``meta['latent']``)."""
    rng = np.random.default_rng(seed)
    dim = spec.centers.shape[1]
    pts, labels = [], []
    for k, (c, r, m) in enumerate(zip(spec.centers, spec.radii, spec.counts)):
        direction = rng.standard_normal((m, dim))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        rad = r * rng.random(m) ** (1.0 / dim)
        pts.append(c + direction * rad[:, None])
        labels.append(np.full(m, k))
    x = np.concatenate(pts)
    f = spec.evaluate(x)
    y = f + spec.noise_std * rng.standard_normal(len(x)) if spec.noise_std > 0 else f.copy()
    return Dataset(x, y, meta={"latent": f, "labels": np.concatenate(labels),
                               "normalization": Normalization.identity(dim)})
