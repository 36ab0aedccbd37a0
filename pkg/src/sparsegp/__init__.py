"""Exact Gaussian processes whose covariance sparsity is discovered by the kernel."""
from .assembly import (
    AssemblyStats,
    BatchPlan,
    BlockTask,
    Dataset,
    ScalingModelInput,
    assemble_covariance,
    compute_block,
    cross_covariance,
    plan_batches,
    run_scaling_benchmark,
    scaling_model_time,
)
from .data import ClusterSpec, Normalization, export_csv, generate_synthetic, ingest_csv
from .errors import (
    ConstraintViolationError,
    ConvergenceWarning,
    IntegrityError,
    InvalidInputError,
    NumericalBreakdownError,
)
from .kernels import (
    BumpParams,
    CoreKernelSpec,
    DeltaKernelSpec,
    DomainBox,
    SparsityKernelSpec,
    bump_eval,
    bump_sum_eval,
    compact_stationary_eval,
    composed_kernel_eval,
    composed_kernel_matrix,
    delta_kernel_eval,
    sparsity_kernel_eval,
    sparsity_upper_bound,
    sphere_volume,
)
from .linalg import (
    CGConfig,
    LogDetConfig,
    SparseSymMatrix,
    cg_solve,
    finalize,
    logdet_rla,
    read_matrix_market,
    spmv,
    write_matrix_market,
)
from .training import (
    GPModel,
    Hyperparameters,
    Layout,
    MCMCConfig,
    augmented_objective,
    build_model,
    constraint_satisfied,
    default_hyperparameters,
    load_hyperparameters,
    marginal_log_likelihood,
    mcmc_train,
    posterior_predict,
    save_hyperparameters,
)

__version__ = "0.1.0"
