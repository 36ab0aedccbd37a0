"""
Bump kernels and discovered sparsity
====================================

A sparsity kernel is a compactly supported stationary kernel multiplied by
sums of bump functions.  Where no bump covers a pair of points, the
covariance is exactly zero, so the covariance matrix is sparse without any
approximation.
"""
import numpy as np

from sparsegp import (
    BumpParams,
    CoreKernelSpec,
    DomainBox,
    SparsityKernelSpec,
    bump_eval,
    composed_kernel_matrix,
    sparsity_upper_bound,
)
from sparsegp.kernels import compact_stationary

# a single bump: peak a at the centre, smooth decay to 0 at radius r
p = BumpParams(a=1.0, beta=1.0, r=0.5, x0=np.array([0.0]))
for d in (0.0, 0.1, 0.25, 0.4, 0.49, 0.5, 0.7):
    print(f"bump at d={d:4.2f}: {bump_eval(p, [d]):.6g}")

# larger beta gives a flatter top and a steeper edge
for beta in (0.5, 1.0, 4.0):
    q = BumpParams(1.0, beta, 0.5, np.array([0.0]))
    print(f"beta={beta}: f(0.25)={bump_eval(q, [0.25]):.4f}")

# the stationary factor falls to zero at its radius
d = np.linspace(0, 1.2, 7)
print("compact stationary, r=1:", np.round(compact_stationary(d, 1.0), 5))

# %%
# Two bump sums, one per cluster.  Points of different clusters are never
# covered by a common sum, so their covariance vanishes.
spec = SparsityKernelSpec(
    amplitude=[[1.0], [1.0]],
    shape=[[1.0], [1.0]],
    radius=[[0.1], [0.1]],
    centers=[[[0.2]], [[0.8]]],
    base_radius=0.3,
)
x = np.array([[0.15], [0.2], [0.25], [0.75], [0.8], [0.85], [0.5]])
K = composed_kernel_matrix(CoreKernelSpec(), spec, x, x)
np.set_printoptions(precision=3, suppress=True, linewidth=120)
print(K)
print("non-zero fraction:", np.count_nonzero(K) / K.size)

# %%
# The bound on the non-zero fraction only needs the bump radii.
unit = DomainBox.unit(1)
for r in (0.05, 0.1, 0.2, 0.3):
    s = SparsityKernelSpec([[1.0], [1.0]], [[1.0], [1.0]], [[r], [r]], [[[0.2]], [[0.8]]], 0.3)
    print(f"bump radius {r:.2f}: s_bound = {sparsity_upper_bound(s, unit):.3f}")
