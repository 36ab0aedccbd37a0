"""Acceptance criteria, one test per criterion.

Each test records a ``PASS``/``FAIL`` line that is printed in the pytest
terminal summary, then asserts the same condition.
"""
import math
import os
import time
from fractions import Fraction

import numpy as np

import conftest
import oracles
from conftest import random_spd, random_spec
from sparsegp import (
    BumpParams,
    CGConfig,
    ClusterSpec,
    CoreKernelSpec,
    Dataset,
    DomainBox,
    Hyperparameters,
    MCMCConfig,
    ScalingModelInput,
    SparseSymMatrix,
    SparsityKernelSpec,
    assemble_covariance,
    augmented_objective,
    bump_eval,
    bump_sum_eval,
    build_model,
    cg_solve,
    compact_stationary_eval,
    constraint_satisfied,
    default_hyperparameters,
    generate_synthetic,
    logdet_rla,
    mcmc_train,
    plan_batches,
    posterior_predict,
    run_scaling_benchmark,
    scaling_model_time,
    sphere_volume,
    sparsity_upper_bound,
)

CS0 = math.sqrt(2) / (3 * math.sqrt(math.pi))


def record(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def test_1_exact_gp_equivalence():
    worst_k, worst_dust, worst_mean, worst_var, lib_time = 0.0, 0.0, 0.0, 0.0, 0.0
    pattern_ok = True
    for seed in range(5):
        rng = np.random.default_rng(1000 + seed)
        x = rng.uniform(0, 1, (300, 2))
        y = np.cos(3 * x[:, 0]) * x[:, 1] + 0.05 * rng.standard_normal(300)
        core = CoreKernelSpec("squared_exponential", rng.uniform(0.5, 2), rng.uniform(0.2, 1)) if seed % 2 else CoreKernelSpec()
        spec = random_spec(rng, n_sums=2, n_bumps=3, r_range=(0.2, 0.5))
        h = Hyperparameters(0.05, core, spec, 0.2)
        q = rng.uniform(0, 1, (50, 2))

        t0 = time.perf_counter()
        model = build_model(Dataset(x, y), h, batch_size=64, workers=2)
        post = posterior_predict(model, q, CGConfig(rel_tolerance=1e-12))
        lib_time += time.perf_counter() - t0

        dense = oracles.gram(core, spec, x)
        got = model.K.toarray()
        pattern_ok &= np.array_equal(got != 0, np.abs(dense) >= 1e-12)
        kept = got != 0
        worst_k = max(worst_k, float(np.max(np.abs(got - dense)[kept])))
        worst_dust = max(worst_dust, float(np.max(np.abs(dense[~kept]))))
        Kq = oracles.gram(core, spec, q, x)
        kqq = np.array([oracles.kernel(core, spec, p, p) for p in q])
        mean, var = oracles.posterior(dense, Kq, kqq, y, 0.05, 0.2)
        worst_mean = max(worst_mean, float(np.max(np.abs(post.mean - mean) / np.maximum(np.abs(mean), 1e-300))))
        big = np.abs(var) > 1e-12
        worst_var = max(worst_var, float(np.max(np.abs(post.raw_variance - var)[big] / np.abs(var[big]))))
        worst_var_abs = float(np.max(np.abs(post.raw_variance - var)[~big], initial=0.0))
        pattern_ok &= worst_var_abs <= 1e-12
    ok = pattern_ok and worst_k <= 1e-12 and worst_dust < 1e-12 and worst_mean <= 1e-5 and worst_var <= 1e-5 and lib_time < 30
    assert record(1, ok, f"pattern identical={pattern_ok} max|K-K_dense| on kept entries={worst_k:.2e} "
                         f"largest dropped dust={worst_dust:.2e} "
                         f"mean rel={worst_mean:.2e} var rel={worst_var:.2e} time={lib_time:.2f}s")


def test_2_sparsity_discovery():
    ds = generate_synthetic(ClusterSpec.two_clusters(1000), seed=0)
    spec = SparsityKernelSpec(np.ones((2, 1)), np.ones((2, 1)), np.full((2, 1), 0.08), [[[0.2]], [[0.8]]], 0.3)
    t0 = time.perf_counter()
    K, stats = assemble_covariance(ds, plan_batches(ds.n, 250), CoreKernelSpec(), spec, workers=2)
    elapsed = time.perf_counter() - t0
    labels = ds.meta["labels"]
    csr = K.csr.tocoo()
    block_diag = bool(np.all(labels[csr.row] == labels[csr.col]))
    ok = block_diag and stats.empirical_s <= 0.51 and elapsed < 60
    assert record(2, ok, f"block-diagonal={block_diag} empirical_s={stats.empirical_s:.4f} time={elapsed:.2f}s")


def test_3_bound_validity():
    rng = np.random.default_rng(3)
    x = rng.uniform(0, 1, (2000, 2))
    ds = Dataset(x, np.zeros(2000), domain=DomainBox.unit(2))
    plan = plan_batches(2000, 500)
    margins = []
    for _ in range(10):
        spec = random_spec(rng, n_sums=rng.integers(1, 4), n_bumps=rng.integers(1, 4), r_range=(0.05, 0.4))
        _, stats = assemble_covariance(ds, plan, CoreKernelSpec(), spec)
        bound = min(1.0, sparsity_upper_bound(spec, ds.domain))
        margins.append(bound + 0.05 - stats.empirical_s)
    ok = min(margins) >= 0
    assert record(3, ok, f"min(bound+0.05-empirical_s) over 10 specs = {min(margins):.4f}")


def scaling_oracle(d, b, n, tb, exact):
    d, b, n, tb = map(Fraction, (d, b, n, tb))
    return d / (2 * n * b) * (d / b + 1) * tb if exact else d * d * tb / (2 * n * b * b)


def test_4_scaling_model():
    cases = [(10000, 1000, 10, 1.0), (100, 10, 10, 2.0), (5165718, 20000, 256, 0.37), (1, 1, 1, 1.0),
             (20000, 500, 8, 0.01), (20000, 500, 1, 0.01), (1e6, 1e3, 64, 0.5), (2000, 250, 3, 0.125),
             (777, 7, 5, 3.5), (4096, 64, 16, 1e-3)]
    table = [(c, e) for c in cases for e in (True, False)]
    worst = 0.0
    for (d, b, n, tb), exact in table:
        got = scaling_model_time(ScalingModelInput(d, b, n, tb), exact=exact)
        ref = float(scaling_oracle(d, b, n, tb, exact))
        worst = max(worst, abs(got - ref) / ref)
    formula_ok = worst <= 1e-15 and len(table) == 20
    assert scaling_model_time(ScalingModelInput(10000, 1000, 10, 1.0)) == 5.5
    assert scaling_model_time(ScalingModelInput(10000, 1000, 10, 1.0), exact=False) == 5.0

    rng = np.random.default_rng(4)
    ds = Dataset(rng.uniform(0, 1, (20000, 2)), np.zeros(20000))
    spec = random_spec(rng, n_sums=2, n_bumps=2, r_range=(0.3, 0.6), base_radius=0.05)
    rows = run_scaling_benchmark(ds, plan_batches(20000, 500), CoreKernelSpec(), spec, [1, 8])
    ratio = rows[1].wall_time_s / rows[0].wall_time_s
    ok = formula_ok and ratio <= 0.45
    assert record(4, ok, f"20-case formula max rel err={worst:.1e}; time(8)/time(1)={ratio:.3f} "
                         f"(t1={rows[0].wall_time_s:.2f}s, t8={rows[1].wall_time_s:.2f}s, cpus={os.cpu_count()})")


def test_5_solver_fidelity():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst_cg, worst_ld, worst_cond = 0.0, 0.0, 0.0
    for _ in range(20):
        while True:
            a = random_spd(rng, 200, extra=(0.02, 3.0), log_extra=True)
            cond = np.linalg.cond(a)
            if cond < 100:
                break
        worst_cond = max(worst_cond, cond)
        A = SparseSymMatrix.from_dense(a)
        b = rng.standard_normal(200)
        x = cg_solve(A, b).x
        ref = np.linalg.solve(a, b)
        worst_cg = max(worst_cg, float(np.linalg.norm(x - ref) / np.linalg.norm(ref)))
        est, _ = logdet_rla(A)
        ld = np.linalg.slogdet(a)[1]
        worst_ld = max(worst_ld, abs(est - ld) / abs(ld))
    elapsed = time.perf_counter() - t0
    ok = worst_cg <= 1e-6 and worst_ld <= 0.05 and elapsed < 60
    assert record(5, ok, f"max cond={worst_cond:.1f} CG rel={worst_cg:.2e} logdet rel={worst_ld:.4f} "
                         f"time={elapsed:.2f}s")


def test_6_training_improves():
    ds = generate_synthetic(ClusterSpec.two_clusters(100), seed=0)
    t0 = time.perf_counter()
    trace, _ = mcmc_train(ds, default_hyperparameters(ds), MCMCConfig(iterations=160, seed=0))
    elapsed = time.perf_counter() - t0
    best = trace.best_so_far()
    monotone = bool(np.all(np.diff(best) >= 0))
    ok = (len(trace.records) == 160 and trace.best_log_likelihood > trace.initial.log_likelihood
          and monotone and elapsed < 600)
    assert record(6, ok, f"initial lnL={trace.initial.log_likelihood:.3f} best lnL={trace.best_log_likelihood:.3f} "
                         f"monotone={monotone} time={elapsed:.1f}s")


def test_7_constraint_soundness():
    ds = generate_synthetic(ClusterSpec.two_clusters(100), seed=0)
    spec = SparsityKernelSpec(np.ones((2, 1)), np.ones((2, 1)), np.full((2, 1), 0.12), [[[0.2]], [[0.8]]], 0.3)
    init = Hyperparameters(0.01, CoreKernelSpec(), spec, float(ds.y.mean()))
    # start feasible but near the limit so that the constraint actually binds
    assert sparsity_upper_bound(spec, ds.domain) < 0.3
    trace, _ = mcmc_train(ds, init, MCMCConfig(iterations=160, seed=7, objective="constrained",
                                               sparsity_requirement=0.3, proposal_scale=0.05))
    accepted = trace.accepted_states()
    rejected = sum(r.note == "constraint" for r in trace.records)
    sound = all(constraint_satisfied(r.s_bound, 0.3) for r in accepted)
    table = [(10.0, 0.0, 20.0), (10.0, 1.0, 10.0), (-50.0, 0.0, -100.0), (-50.0, 1.0, -50.0),
             (4.0, 0.5, 6.0), (-8.0, 0.25, -14.0), (0.0, 0.3, 0.0), (100.0, 0.9, 110.0),
             (1.5, 0.75, 1.875), (-2.0, 0.1, -3.8)]
    arith = max(abs(augmented_objective(l, s) - e) for l, s, e in table)
    ok = sound and arith <= 1e-12
    assert record(7, ok, f"{len(accepted)} accepted states, all satisfy s<0.3: {sound} "
                         f"({rejected} proposals rejected by the constraint); "
                         f"10-case augmented table max err={arith:.1e}")


def test_8_kernel_unit_oracles():
    p = lambda a, beta, r, x0: BumpParams(a, beta, r, np.atleast_1d(np.asarray(x0, dtype=float)))
    cases = [
        (bump_eval(p(1.7, 2.0, 0.5, [0.3, 0.4]), [0.3, 0.4]), 1.7),
        (bump_eval(p(1.0, 1.0, 1.0, [0.0]), [1.0]), 0.0),
        (bump_eval(p(1.0, 1.0, 1.0, [0.0]), [1.5]), 0.0),
        (bump_eval(p(1.0, 1.0, 2.0, [0.0]), [1.0]), math.exp(-1 / 0.75 + 1)),
        (bump_eval(p(1.0, 1.0, 2.0, [0.0]), [1.0]), 0.7165313),
        (bump_sum_eval([p(1.0, 1.0, 0.1, [0.0]), p(1.0, 1.0, 0.1, [1.0])], [0.5]), 0.0),
        (bump_sum_eval([p(2.0, 1.0, 0.1, [0.0]), p(1.0, 1.0, 0.1, [1.0])], [0.0]), 2.0),
        (bump_sum_eval([p(1.0, 1.0, 1.0, [0.0]), p(1.0, 1.0, 1.0, [0.5])], [0.25]),
         2 * oracles.bump(1.0, 1.0, 1.0, [0.0], [0.25])),
        (compact_stationary_eval(0.7, [0.2, 0.2], [0.2, 0.2]), CS0),
        (compact_stationary_eval(0.7, [0.2, 0.2], [0.2, 0.2]), 0.2659615),
        (compact_stationary_eval(0.5, [0.0], [0.5]), 0.0),
        (compact_stationary_eval(0.5, [0.0], [0.9]), 0.0),
        (compact_stationary_eval(1.0, [0.0], [0.3]), oracles.compact_stationary(0.3, 1.0)),
        (sphere_volume(2, 1.0), math.pi),
        (sphere_volume(3, 1.0), 4 * math.pi / 3),
        (sphere_volume(1, 2.0), 4.0),
    ]
    unit = DomainBox.unit(2)
    for rho in (0.05, 0.1, 0.3):
        one = SparsityKernelSpec([[1.0]], [[1.0]], [[rho]], [[[0.5, 0.5]]], 0.5)
        cases.append((sparsity_upper_bound(one, unit), (math.pi * rho**2) ** 2))
        two = SparsityKernelSpec([[1.0, 1.0]], [[1.0, 1.0]], [[rho, rho]], [[[0.2], [0.7]]], 0.5)
        for L in (1.0, 2.5):
            cases.append((sparsity_upper_bound(two, DomainBox([0.0], [L])), 16 * rho**2 / L**2))
    tiny = SparsityKernelSpec([[1.0]], [[1.0]], [[1e-9]], [[[0.5, 0.5]]], 0.5)
    cases.append((sparsity_upper_bound(tiny, unit), 0.0))
    # the rounded tabled constants carry 5e-8 of rounding; compare those at their own precision
    rounded_ok = abs(cases[4][0] - 0.7165313) < 5e-8 and abs(cases[9][0] - 0.2659615) < 5e-8
    exact = [c for k, c in enumerate(cases) if k not in (4, 9)]
    worst = max(abs(got - want) for got, want in exact)
    ok = worst <= 1e-9 and rounded_ok
    assert record(8, ok, f"{len(cases)} tabled examples, max abs err={worst:.1e}")
