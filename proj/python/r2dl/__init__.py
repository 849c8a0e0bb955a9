from ._core import (
    ConfigError,
    DegenerateDataError,
    Error,
    FormatError,
    InvalidDictionaryError,
    NumericError,
    Program,
    ShapeError,
    SourceModel,
    codes_to_theta,
    evaluate,
    ksvd_run,
    normalize_dictionary,
    omp_encode,
    reprogram,
    softmax,
    thin_svd,
    train_source,
)

__all__ = [
    "ConfigError",
    "DegenerateDataError",
    "Error",
    "FormatError",
    "InvalidDictionaryError",
    "NumericError",
    "Program",
    "ShapeError",
    "SourceModel",
    "codes_to_theta",
    "evaluate",
    "ksvd_run",
    "normalize_dictionary",
    "omp_encode",
    "reprogram",
    "softmax",
    "thin_svd",
    "train_source",
]
