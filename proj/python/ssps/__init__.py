"""Python bindings for the ssps C++ core."""

from ._ssps import (
    ConfigError,
    DimensionError,
    EmptyInputError,
    InvalidArgument,
    IoError,
    NumericalError,
    SspsError,
    StaleCacheError,
    ZeroNormError,
    cluster_purity,
    default_config,
    eer,
    generate_dataset,
    kmeans,
    min_dcf,
    nmi,
    normalize_config,
    run_cli,
    run_experiment,
    sinkhorn_codes,
)

__all__ = [
    "ConfigError",
    "DimensionError",
    "EmptyInputError",
    "InvalidArgument",
    "IoError",
    "NumericalError",
    "SspsError",
    "StaleCacheError",
    "ZeroNormError",
    "cluster_purity",
    "default_config",
    "eer",
    "generate_dataset",
    "kmeans",
    "min_dcf",
    "nmi",
    "normalize_config",
    "run_cli",
    "run_experiment",
    "sinkhorn_codes",
]
