"""Tumbling rate lambda(m) = 1 - chi * psi(m) and checks of its hypotheses."""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from ._validation import InputError, check_positive


class PsiKind(str, Enum):
    SIGN = "Sign"
    TANH = "Tanh"
    SCALED_ARCTAN = "ScaledArctan"


@dataclass(frozen=True)
class PsiSpec:
    kind: PsiKind = PsiKind.SIGN
    slope: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", PsiKind(self.kind))
        check_positive("slope", self.slope)

    def __call__(self, m):
        m = np.asarray(m, dtype=float)
        if self.kind is PsiKind.SIGN:
            return np.sign(m)
        if self.kind is PsiKind.TANH:
            return np.tanh(self.slope * m)
        return 2.0 / np.pi * np.arctan(self.slope * m)

    def derivative(self, m):
        """psi'(m); the Sign kind uses the a.e. derivative 0."""
        m = np.asarray(m, dtype=float)
        if self.kind is PsiKind.SIGN:
            return np.zeros_like(m)
        if self.kind is PsiKind.TANH:
            return self.slope / np.cosh(self.slope * m) ** 2
        return 2.0 / np.pi * self.slope / (1.0 + (self.slope * m) ** 2)

    @property
    def code(self):
        return list(PsiKind).index(self.kind)


@dataclass(frozen=True)
class RateSpec:
    chi: float = 0.5
    psi: PsiSpec = PsiSpec()

    def __post_init__(self):
        if not 0.0 <= float(self.chi) < 1.0:
            raise InputError(f"chi must lie in [0, 1), got {self.chi}")
        if isinstance(self.psi, dict):
            object.__setattr__(self, "psi", PsiSpec(**self.psi))

    def packed(self):
        return np.array([self.chi, self.psi.code, self.psi.slope], dtype=float)

    def __call__(self, m):
        return 1.0 - self.chi * self.psi(m)


def tumbling_rate(rate, m):
    """lambda(m) = 1 - chi psi(m); always inside [1 - chi, 1 + chi]."""
    return rate(m)


@dataclass(frozen=True)
class H2Result:
    b: int | None
    c: float

    @property
    def ok(self):
        return self.b is not None

    def __iter__(self):
        return iter((self.b, self.c))


def _h2_grid(B):
    pos = np.concatenate([np.geomspace(1e-8, B, 4000), [B]])
    return np.concatenate([-pos[::-1], pos])


def check_H2(psi, B, b_candidates=(1, 2, 3, 4)):
    """Smallest b with inf_{0<|m|<=B} m psi(m) / |m|^b > 0 on a log grid reaching 1e-8.

    A candidate counts as working when the sampled infimum is positive and does not collapse
    towards the small-|m| end of the grid (ratio between the two smallest decades above 1e-3).
    Returns ``H2Result(b=None, c=0.0)`` if no candidate works.
    """
    B = check_positive("B", B)
    m = _h2_grid(B)
    mp = m * psi(m)
    small = np.abs(m) <= 1e-7
    mid = (np.abs(m) >= 1e-5) & (np.abs(m) <= 1e-4)
    for b in sorted(int(x) for x in b_candidates):
        if b <= 0:
            raise InputError("b candidates must be positive integers")
        ratio = mp / np.abs(m) ** b
        inf = float(ratio.min())
        collapsing = ratio[small].min() < 0.5 * ratio[mid].min()
        if inf > 0 and not collapsing:
            return H2Result(b=b, c=inf)
    return H2Result(b=None, c=0.0)


def psi_derived_constants(psi, z_max=50.0, n=200001):
    """Return (sup_z z psi'(z), Lipschitz constant of z psi(z)) by grid scan over |z| <= z_max."""
    z = np.linspace(-z_max, z_max, n)
    sup_zpp = float(max(0.0, np.max(z * psi.derivative(z))))
    zp = z * psi(z)
    lip = float(np.max(np.abs(np.diff(zp)) / np.diff(z)))
    return sup_zpp, lip
