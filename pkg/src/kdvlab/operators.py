"""Potential, Fourier symbols and discrete application of the generators.

H0 = -p^3 - 4p,  H = H0 + c p V,  H* = H0 + c V p,
Htilde0 = H0 + (c/2)(p V + V p)  (so that H = Htilde0 - i (c/2) V'),
with p = -i d/dx, V = cosh^{-2} x and c = 12 unless overridden.

Products with V are taken in position space and p is applied spectrally.
No dealiasing filter is used: V is fixed and smooth, so the products do not
cascade energy to high modes.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.fft as sfft

from .conventions import COUPLING, H0_CUBIC, H0_LINEAR, check_branch
from .grid import Grid, WaveField

RESOLUTION_TOL = 1e-10


class ResolutionWarning(UserWarning):
    """A field has significant content in the top third of the band."""


def potential(x):
    """cosh^{-2}(x), written as 4 e^{-2|x|} / (1 + e^{-2|x|})^2 to avoid overflow."""
    e = np.exp(-2.0 * np.abs(np.asarray(x, dtype=float)))
    return 4.0 * e / (1.0 + e) ** 2


def deriv_potential(x):
    """V'(x) = -2 sinh x / cosh^3 x = -2 tanh(x) cosh^{-2}(x)."""
    x = np.asarray(x, dtype=float)
    return -2.0 * np.tanh(x) * potential(x)


def h0_symbol(xi):
    """Symbol of H0: -(xi^3 + 4 xi)."""
    xi = np.asarray(xi)
    return H0_CUBIC * xi**3 + H0_LINEAR * xi


def _check_alpha(alpha):
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")


def conjugated_symbol(xi, alpha, branch):
    """Symbol of e^{+-a x} H0 e^{-+a x}, i.e. h0_symbol(xi +- i a).

    Expanded: -xi^3 + (3a^2 - 4) xi + i(-+3a xi^2 +- a^3 -+ 4a), with the upper
    sign for ``branch=UPPER``.
    """
    _check_alpha(alpha)
    b = check_branch(branch)
    return h0_symbol(np.asarray(xi, dtype=float) + 1j * b * alpha)


@dataclass(frozen=True)
class MultiplierSymbol:
    """A function of frequency defining an exact Fourier-multiplier operator."""

    name: str
    fn: Callable = field(repr=False)
    params: dict = field(default_factory=dict)

    def __call__(self, xi):
        return self.fn(np.asarray(xi))

    def on(self, grid: Grid):
        return self(grid.xi)


H0_SYMBOL = MultiplierSymbol("h0", h0_symbol)


def conjugated_multiplier(alpha, branch) -> MultiplierSymbol:
    _check_alpha(alpha)
    b = check_branch(branch)
    return MultiplierSymbol(
        "conjugated_h0",
        lambda xi: conjugated_symbol(xi, alpha, b),
        {"alpha": alpha, "branch": b},
    )


class GeneratorTag(str, enum.Enum):
    H0 = "H0"
    H = "H"
    HSTAR = "Hstar"
    HTILDE0 = "Htilde0"
    NEG_H = "NegH"
    NEG_HSTAR = "NegHstar"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        for t in cls:
            if str(value).lower() in (t.value.lower(), t.name.lower()):
                return t
        raise ValueError(f"unknown generator {value!r}")

    @property
    def negated(self):
        return _NEGATED[self]


_NEGATED = {
    GeneratorTag.H: GeneratorTag.NEG_H,
    GeneratorTag.NEG_H: GeneratorTag.H,
    GeneratorTag.HSTAR: GeneratorTag.NEG_HSTAR,
    GeneratorTag.NEG_HSTAR: GeneratorTag.HSTAR,
}


class SpectralOps:
    """Cached symbols for one grid; array-level helpers on the last axis."""

    def __init__(self, grid: Grid, coupling: float = COUPLING):
        self.grid = grid
        self.coupling = float(coupling)
        self.xi = np.asarray(grid.xi)
        self.h0 = h0_symbol(self.xi)
        self.V = potential(grid.x)
        self.dV = deriv_potential(grid.x)

    def p(self, u):
        return sfft.ifft(self.xi * sfft.fft(u, axis=-1), axis=-1)

    def free_part(self, u):
        return sfft.ifft(self.h0 * sfft.fft(u, axis=-1), axis=-1)

    def perturbation(self, tag, u):
        """The non-H0 part of the generator applied to position samples."""
        tag = GeneratorTag.parse(tag)
        c = self.coupling
        V = self.V
        if tag is GeneratorTag.H0:
            return np.zeros_like(u, dtype=complex)
        if tag in (GeneratorTag.H, GeneratorTag.NEG_H):
            out = c * self.p(V * u)
        elif tag in (GeneratorTag.HSTAR, GeneratorTag.NEG_HSTAR):
            out = c * V * self.p(u)
        else:
            out = 0.5 * c * (self.p(V * u) + V * self.p(u))
        if tag in (GeneratorTag.NEG_H, GeneratorTag.NEG_HSTAR):
            out = -out
        return out

    def free_sign(self, tag):
        tag = GeneratorTag.parse(tag)
        return -1.0 if tag in (GeneratorTag.NEG_H, GeneratorTag.NEG_HSTAR) else 1.0

    def apply(self, tag, u):
        return self.free_sign(tag) * self.free_part(u) + self.perturbation(tag, u)

    # Fourier-side right-hand sides used by the stepper: F(-i B u) for û.
    def rhs_hat(self, tag):
        tag = GeneratorTag.parse(tag)
        c = self.coupling
        V = self.V
        xi = self.xi
        fft, ifft = sfft.fft, sfft.ifft
        if tag is GeneratorTag.H0:
            return None
        s = -1.0 if tag in (GeneratorTag.NEG_H, GeneratorTag.NEG_HSTAR) else 1.0
        if tag in (GeneratorTag.H, GeneratorTag.NEG_H):
            k = -1j * s * c * xi

            def f(vh):
                return k * fft(V * ifft(vh, axis=-1), axis=-1)

        elif tag in (GeneratorTag.HSTAR, GeneratorTag.NEG_HSTAR):
            k = -1j * s * c

            def f(vh):
                return k * fft(V * ifft(xi * vh, axis=-1), axis=-1)

        else:
            k = -0.5j * c

            def f(vh):
                return k * (
                    xi * fft(V * ifft(vh, axis=-1), axis=-1)
                    + fft(V * ifft(xi * vh, axis=-1), axis=-1)
                )

        return f


_OPS_CACHE: dict = {}


def spectral_ops(grid: Grid, coupling: float = COUPLING) -> SpectralOps:
    key = (grid.L, grid.N, float(coupling))
    ops = _OPS_CACHE.get(key)
    if ops is None:
        if len(_OPS_CACHE) > 32:
            _OPS_CACHE.clear()
        ops = _OPS_CACHE[key] = SpectralOps(grid, coupling)
    return ops


def check_resolution(f: WaveField, tol=RESOLUTION_TOL):
    ratio = f.grid.resolution_ratio(f.values)
    if ratio > tol:
        warnings.warn(
            f"field not resolved: top-third Fourier content is {ratio:.2e} of the peak",
            ResolutionWarning,
            stacklevel=3,
        )
    return ratio


def apply(tag, f: WaveField, coupling: float = COUPLING) -> WaveField:
    """Apply one of the generators to a field.

    H f = H0 f + c p(V f);  H* f = H0 f + c V (p f);
    Htilde0 f = H0 f + (c/2)(p(V f) + V (p f));  NegH / NegHstar negate H / H*.
    """
    check_resolution(f)
    ops = spectral_ops(f.grid, coupling)
    return WaveField(f.grid, ops.apply(tag, f.values))


def apply_p(f: WaveField) -> WaveField:
    return WaveField(f.grid, spectral_ops(f.grid).p(f.values))
