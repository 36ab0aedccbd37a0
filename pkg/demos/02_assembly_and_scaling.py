"""
Batched covariance assembly and the scaling model
=================================================

The dataset is split into batches of size b.  Every pair of batches (i <= j)
is one block task, so there are nb(nb+1)/2 tasks.  Workers compute blocks and
one collector merges the non-zero entries into a sparse matrix.
"""
import os

import numpy as np

from sparsegp import (
    ClusterSpec,
    CoreKernelSpec,
    Dataset,
    ScalingModelInput,
    SparsityKernelSpec,
    assemble_covariance,
    generate_synthetic,
    plan_batches,
    run_scaling_benchmark,
    scaling_model_time,
)

ds = generate_synthetic(ClusterSpec.two_clusters(1000), seed=0)
spec = SparsityKernelSpec([[1.0], [1.0]], [[1.0], [1.0]], [[0.08], [0.08]], [[[0.2]], [[0.8]]], 0.3)
plan = plan_batches(ds.n, 250)
print(f"N={ds.n}, b={plan.batch_size}, batches={plan.n_batches}, tasks={plan.n_tasks}")

K, stats = assemble_covariance(ds, plan, CoreKernelSpec(), spec, workers=2)
print(f"nnz={stats.nnz}  empirical_s={stats.empirical_s:.4f}  wall={stats.wall_time:.3f}s")

# cluster labels confirm that no entry links the two clusters
coo = K.csr.tocoo()
labels = ds.meta["labels"]
print("cross-cluster entries:", int(np.sum(labels[coo.row] != labels[coo.col])))

# %%
# The model: T = D/(2nb) (D/b + 1) t_b, roughly D^2 t_b / (2 n b^2) for D >> b.
for n in (1, 2, 4, 8, 16):
    inp = ScalingModelInput(20000, 500, n, 0.02)
    print(f"workers={n:2d}  model={scaling_model_time(inp):7.3f}s  approx={scaling_model_time(inp, exact=False):7.3f}s")

# %%
# Measured times next to the model.  Threads only help with several cores.
rng = np.random.default_rng(0)
big = Dataset(rng.uniform(0, 1, (8000, 2)), np.zeros(8000))
sparse_spec = SparsityKernelSpec([[1.0]], [[1.0]], [[0.6]], [[[0.5, 0.5]]], 0.05)
counts = [1, 2, 4] if (os.cpu_count() or 1) >= 4 else [1, 2]
for row in run_scaling_benchmark(big, plan_batches(big.n, 500), CoreKernelSpec(), sparse_spec, counts):
    print(f"workers={row.workers}  measured={row.wall_time_s:.3f}s  model={row.model_time_s:.3f}s")
