"""Periodic grid on [-L, L), Fourier transforms, L2 and weighted norms."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid with N points on [-L, L).

    Positions are ``x[j] = -L + 2L j / N``.  Frequencies ``xi`` are stored in
    FFT-native order (0, 1, ..., N/2-1, -N/2, ..., -1) times pi/L; use
    :attr:`xi_symmetric` / :meth:`to_symmetric` for the ordered set
    {-N/2, ..., N/2-1} * pi/L.
    """

    L: float
    N: int

    def __post_init__(self):
        if not isinstance(self.N, (int, np.integer)) or isinstance(self.N, bool):
            raise ValueError(f"N must be an integer, got {self.N!r}")
        if self.N % 2:
            raise ValueError(f"N must be even, got {self.N}")
        if self.N < 8:
            raise ValueError(f"N must be at least 8, got {self.N}")
        if not np.isfinite(self.L) or self.L <= 0:
            raise ValueError(f"L must be positive, got {self.L}")
        object.__setattr__(self, "L", float(self.L))
        object.__setattr__(self, "N", int(self.N))

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def dxi(self) -> float:
        return np.pi / self.L

    @property
    def xi_max(self) -> float:
        """Nyquist frequency N pi / (2L)."""
        return self.N * np.pi / (2.0 * self.L)

    @cached_property
    def x(self) -> np.ndarray:
        x = -self.L + self.dx * np.arange(self.N)
        x.setflags(write=False)
        return x

    @cached_property
    def xi(self) -> np.ndarray:
        k = sfft.fftfreq(self.N, d=1.0 / self.N)
        xi = k * self.dxi
        xi.setflags(write=False)
        return xi

    @cached_property
    def xi_symmetric(self) -> np.ndarray:
        xi = sfft.fftshift(self.xi)
        xi.setflags(write=False)
        return xi

    @cached_property
    def _phase(self) -> np.ndarray:
        # e^{-i xi x_0}; makes transform() approximate the continuous FT
        ph = self.dx * np.exp(1j * self.xi * self.L)
        ph.setflags(write=False)
        return ph

    def to_symmetric(self, fhat):
        return sfft.fftshift(fhat, axes=-1)

    def transform(self, values):
        """Approximation of the continuous transform of samples, FFT order."""
        return sfft.fft(values, axis=-1) * self._phase

    def inverse_transform(self, fhat):
        return sfft.ifft(fhat / self._phase, axis=-1)

    def resolution_ratio(self, values) -> float:
        """Largest |coefficient| in the top third of the band relative to the peak."""
        a = np.abs(sfft.fft(values, axis=-1))
        peak = a.max()
        if peak == 0:
            return 0.0
        top = np.abs(self.xi) > (2.0 / 3.0) * self.xi_max
        return float(a[..., top].max() / peak)

    def describe(self) -> dict:
        return {"L": self.L, "N": self.N, "dx": self.dx, "dxi": self.dxi}


def make_grid(L, N) -> Grid:
    return Grid(L, N)


@dataclass(frozen=True, eq=False)
class WaveField:
    """Complex samples of a function on a :class:`Grid` (position space)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        if v.shape != (self.grid.N,):
            raise ValueError(f"expected {self.grid.N} samples, got shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid, fn):
        return cls(grid, fn(grid.x))

    def hat(self):
        return self.grid.transform(self.values)

    def __add__(self, other):
        return WaveField(self.grid, self.values + _vals(other))

    def __sub__(self, other):
        return WaveField(self.grid, self.values - _vals(other))

    def __mul__(self, c):
        return WaveField(self.grid, self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return WaveField(self.grid, -self.values)


def _vals(f):
    return f.values if isinstance(f, WaveField) else np.asarray(f)


def l2_norm(f) -> float:
    """sqrt(dx * sum |f_j|^2); the rectangle rule is exact for the periodic trapezoid."""
    return float(np.sqrt(f.grid.dx) * np.linalg.norm(f.values))


def l2_norm_hat(grid: Grid, fhat) -> float:
    """L2 norm computed on the frequency side, (1/2pi) int |fhat|^2 dxi."""
    return float(np.sqrt(grid.dxi / (2.0 * np.pi)) * np.linalg.norm(fhat))


def inner(f, g) -> complex:
    """<f, g> = int conj(f) g dx."""
    return complex(f.grid.dx * np.vdot(f.values, g.values))


@dataclass(frozen=True)
class ExpAbs:
    """Weight e^{-alpha |x|}."""

    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"exp_abs weight needs alpha > 0, got {self.alpha}")

    def __call__(self, x):
        return np.exp(-self.alpha * np.abs(x))

    def describe(self):
        return {"kind": "exp_abs", "alpha": self.alpha}


@dataclass(frozen=True)
class InvBracket:
    """Weight <x>^{-1} = (1 + x^2)^{-1/2}."""

    def __call__(self, x):
        return 1.0 / np.sqrt(1.0 + np.asarray(x) ** 2)

    def describe(self):
        return {"kind": "inv_bracket"}


def parse_weight(spec):
    """'inv_bracket' or 'exp_abs:<alpha>' (or an existing weight object)."""
    if isinstance(spec, (ExpAbs, InvBracket)):
        return spec
    s = str(spec).strip().lower()
    if s == "inv_bracket":
        return InvBracket()
    if s.startswith("exp_abs"):
        _, _, a = s.partition(":")
        return ExpAbs(float(a) if a else 1.0)
    raise ValueError(f"unknown weight {spec!r}")


def weighted_norm(f, weight) -> float:
    w = parse_weight(weight)
    return float(np.sqrt(f.grid.dx) * np.linalg.norm(w(f.grid.x) * f.values))
