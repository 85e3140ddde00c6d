"""Adaptive IMU/landmark SLAM: simulator, filter and observability analysis."""

from ._core import (
    AslamError,
    compare,
    error_quat,
    observability,
    orientation_error,
    pi_condition,
    process_noise,
    quat_from_matrix,
    quat_product,
    quat_propagate,
    rank_test,
    rotation_matrix,
    run,
    state_transition,
)

__all__ = [
    "AslamError",
    "compare",
    "error_quat",
    "observability",
    "orientation_error",
    "pi_condition",
    "process_noise",
    "quat_from_matrix",
    "quat_product",
    "quat_propagate",
    "rank_test",
    "rotation_matrix",
    "run",
    "state_transition",
]
