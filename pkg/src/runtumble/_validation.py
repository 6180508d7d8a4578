"""Exception types and small input-validation helpers shared by all modules."""

import numpy as np


class RunTumbleError(Exception):
    """Base class for package errors."""


class InputError(RunTumbleError, ValueError):
    """Malformed or out-of-domain input."""


class ConfigError(RunTumbleError, ValueError):
    """Inconsistent configuration (CFL, missing keys, incompatible bins)."""


class SimulationError(RunTumbleError, RuntimeError):
    """A particle reached a non-finite state.

    ``events`` holds the particle's event log up to the failure.
    """

    def __init__(self, message, events=None):
        super().__init__(message)
        self.events = [] if events is None else events


class ToleranceError(RunTumbleError, RuntimeError):
    """A numerical procedure did not reach its tolerance."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class CertificationError(RunTumbleError, RuntimeError):
    """Constants cannot be selected (e.g. m_star = 0, non-positive weight)."""


class DegenerateGeometryError(RunTumbleError, ValueError):
    """Geometry without a finite enclosing circle (zero heading increment)."""


class FitError(RunTumbleError, ValueError):
    """Too few usable points for a rate fit."""


class NotApplicableError(RunTumbleError, TypeError):
    """Operation undefined for the given kernel kind."""


def as_points(x, dim):
    """Return ``x`` as a float array of shape (n, dim); also report if it was a single point."""
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise InputError(f"expected points of dimension {dim}, got shape {np.shape(x)}")
    if not np.all(np.isfinite(arr)):
        raise InputError("non-finite coordinates")
    return arr, single


def check_positive(name, value, strict=True):
    value = float(value)
    if not np.isfinite(value) or (value <= 0 if strict else value < 0):
        raise InputError(f"{name} must be {'>' if strict else '>='} 0, got {value}")
    return value
