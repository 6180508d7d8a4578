"""Simulation and verification tools for the run-and-tumble kinetic equation."""

import os

# the TBB build shipped with some numba wheels is too old and warns on import
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

__version__ = "0.1.0"

from .fields import ChemoField, FieldKind, check_hypotheses, field_eval  # noqa: E402
from .kernels import KernelKind, KernelShape, KernelSpec, compute_C_kappa, compute_lambda_tilde  # noqa: E402
from .rates import PsiKind, PsiSpec, RateSpec, check_H2, psi_derived_constants, tumbling_rate  # noqa: E402

__all__ = [
    "ChemoField",
    "FieldKind",
    "KernelKind",
    "KernelShape",
    "KernelSpec",
    "PsiKind",
    "PsiSpec",
    "RateSpec",
    "check_H2",
    "check_hypotheses",
    "compute_C_kappa",
    "compute_lambda_tilde",
    "field_eval",
    "psi_derived_constants",
    "tumbling_rate",
]
