"""Fourier pseudospectral primitives on a truncated periodic line [-L, L).

The open line is replaced by a periodic box; all operators are diagonal in
Fourier space. Convolution with the Green's kernel G(x) = exp(-|x|)/2 of
(1 - d^2/dx^2) becomes multiplication by 1/(1 + k^2).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import ShapeError, WindowError

__all__ = [
    "Grid",
    "Field",
    "derivative",
    "helmholtz_inverse",
    "apply_PD",
    "second_kernel_apply",
    "weighted_lp_norm",
    "write_field_csv",
    "read_field_csv",
    "capped_window",
]

WeightLike = Union[None, Callable[[np.ndarray], np.ndarray], np.ndarray]

DEFAULT_EDGE = 5.0


@dataclass(frozen=True)
class Grid:
    """Uniform grid x_j = -L + j*dx, j = 0..N-1, with dx = 2L/N."""

    L: float
    N: int

    def __post_init__(self):
        if not (self.L > 0 and np.isfinite(self.L)):
            raise ValueError(f"half-width L must be positive, got {self.L}")
        n = int(self.N)
        if n != self.N or n < 16 or n & (n - 1):
            raise ValueError(f"N must be a power of two >= 16, got {self.N}")

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.N

    @cached_property
    def x(self) -> np.ndarray:
        x = -self.L + self.dx * np.arange(self.N)
        x.setflags(write=False)
        return x

    @cached_property
    def k(self) -> np.ndarray:
        """Non-negative wavenumbers of the real FFT (length N//2 + 1)."""
        k = 2.0 * np.pi * np.fft.rfftfreq(self.N, d=self.dx)
        k.setflags(write=False)
        return k

    @property
    def kmax(self) -> float:
        return np.pi / self.dx

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3-rule mask: keep modes with |k| <= (2/3) kmax."""
        m = (self.k <= (2.0 / 3.0) * self.kmax).astype(float)
        m.setflags(write=False)
        return m

    @cached_property
    def _ik(self) -> np.ndarray:
        ik = 1j * self.k
        ik[-1] = 0.0  # Nyquist mode has no odd derivative
        return ik

    # -- raw-array kernels (used on hot paths) -------------------------------

    def fft(self, f: np.ndarray) -> np.ndarray:
        return np.fft.rfft(f)

    def ifft(self, fh: np.ndarray) -> np.ndarray:
        return np.fft.irfft(fh, n=self.N)

    def symbol(self, name: str) -> np.ndarray:
        k = self.k
        if name == "d":
            return self._ik
        if name == "dd":
            return -k**2
        if name == "helmholtz":
            return 1.0 / (1.0 + k**2)
        if name == "PD":
            return -self._ik / (1.0 + k**2)
        raise KeyError(name)

    def apply(self, symbol: np.ndarray, f: np.ndarray) -> np.ndarray:
        return np.fft.irfft(symbol * np.fft.rfft(f), n=self.N)

    def diff(self, f: np.ndarray, order: int = 1) -> np.ndarray:
        fh = np.fft.rfft(f)
        if order % 2:
            fh = fh * self._ik ** order
        else:
            fh = fh * (-(self.k**2)) ** (order // 2)
        return np.fft.irfft(fh, n=self.N)

    def reflect(self, f: np.ndarray) -> np.ndarray:
        """Samples of f(-x); x_j -> x_{N-j} is an exact grid permutation."""
        return np.roll(f[::-1], 1)

    def window_mask(self, window: Optional[Sequence[float]] = None) -> np.ndarray:
        lo, hi = self.default_window() if window is None else window
        mask = (self.x >= lo) & (self.x <= hi)
        if not mask.any():
            raise WindowError(f"window [{lo}, {hi}] contains no grid points")
        return mask

    def default_window(self) -> tuple:
        edge = min(DEFAULT_EDGE, 0.25 * self.L)
        return (-self.L + edge, self.L - edge)

    def spectral_tail(self, f: np.ndarray, fraction: float = 0.1) -> float:
        """Largest |f_hat| in the top `fraction` of wavenumbers, relative to max |f_hat|."""
        fh = np.abs(np.fft.rfft(f))
        top = fh.max()
        if top == 0.0:
            return 0.0
        return float(fh[self.k >= (1.0 - fraction) * self.kmax].max() / top)


@dataclass(frozen=True)
class Field:
    """Real samples on a Grid. Non-finite values poison the field."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.N,):
            raise ShapeError(f"expected {self.grid.N} samples, got shape {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def valid(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable[[np.ndarray], np.ndarray]) -> "Field":
        return cls(grid, fn(grid.x))

    def _with(self, values: np.ndarray) -> "Field":
        return Field(self.grid, values)


def _check_same_grid(*fields: Field) -> Grid:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise ShapeError("fields live on different grids")
    return grid


def derivative(f: Field, order: int = 1) -> Field:
    """Spectral derivative; a poisoned input yields an all-NaN output."""
    if not f.valid:
        return f._with(np.full(f.grid.N, np.nan))
    return f._with(f.grid.diff(f.values, order))


def helmholtz_inverse(f: Field) -> Field:
    """(1 - d^2/dx^2)^{-1} f, i.e. periodized convolution with exp(-|x|)/2."""
    if not f.valid:
        return f._with(np.full(f.grid.N, np.nan))
    return f._with(f.grid.apply(f.grid.symbol("helmholtz"), f.values))


def apply_PD(f: Field) -> Field:
    """P(D) f = -d/dx (1 - d^2/dx^2)^{-1} f, symbol -ik/(1+k^2)."""
    if not f.valid:
        return f._with(np.full(f.grid.N, np.nan))
    return f._with(f.grid.apply(f.grid.symbol("PD"), f.values))


def second_kernel_apply(f: Field) -> Field:
    """G'' * f computed as G*f - f, avoiding a second differentiation."""
    g = helmholtz_inverse(f)
    return f._with(g.values - f.values)


def _weight_values(grid_x: np.ndarray, w: WeightLike) -> np.ndarray:
    if w is None:
        return np.ones_like(grid_x)
    if callable(w):
        return np.asarray(w(grid_x), dtype=float)
    w = np.asarray(w, dtype=float)
    if w.shape != grid_x.shape:
        raise ShapeError("weight array does not match grid")
    return w


def weighted_lp_norm(
    f: Union[Field, np.ndarray],
    w: WeightLike = None,
    p: float = 2.0,
    window: Optional[Sequence[float]] = None,
    grid: Optional[Grid] = None,
) -> float:
    """Rectangle-rule ||w f||_p over the grid samples inside `window`.

    `window` defaults to [-L+5, L-5], excluding the wrap-around zone.
    """
    if isinstance(f, Field):
        grid, vals = f.grid, f.values
    else:
        if grid is None:
            raise ShapeError("raw arrays need an explicit grid")
        vals = np.asarray(f, dtype=float)
    if p < 1:
        raise ValueError(f"norm order must be >= 1, got {p}")
    mask = grid.window_mask(window)
    g = np.abs(_weight_values(grid.x, w)[mask] * vals[mask])
    if np.isinf(p):
        return float(g.max())
    gmax = g.max()
    if gmax == 0.0 or not np.isfinite(gmax):
        return float(gmax)
    return float(gmax * (np.sum((g / gmax) ** p) * grid.dx) ** (1.0 / p))


def write_field_csv(path: Union[str, Path], f: Field) -> None:
    data = np.column_stack([f.grid.x, f.values])
    np.savetxt(path, data, delimiter=",", header="x,value", comments="", fmt="%.17g")


def read_field_csv(path: Union[str, Path]) -> Field:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    x = data[:, 0]
    n = len(x)
    L = -x[0]
    grid = Grid(L, n)
    if not np.allclose(x, grid.x, rtol=0, atol=1e-12 * max(1.0, L)):
        raise ShapeError(f"{path}: abscissae are not a uniform [-L, L) grid")
    return Field(grid, data[:, 1])


def capped_window(grid: Grid, log_weight: np.ndarray, cap: float,
                  window: Optional[Sequence[float]] = None) -> tuple:
    """Largest interval around x = 0 inside `window` on which the weight stays <= cap.

    Spectral round-off is an absolute error of roughly 1e-13 in second
    derivatives; multiplied by a growing weight it swamps the signal, so
    weighted norms are only taken where weight * round-off stays small.
    """
    lo, hi = grid.default_window() if window is None else window
    x = grid.x
    ok = (x >= lo) & (x <= hi) & (np.asarray(log_weight) <= np.log(cap))
    i0 = int(np.argmin(np.abs(x)))
    if not ok[i0]:
        raise WindowError("weight exceeds the noise cap already at x = 0")
    left = i0
    while left > 0 and ok[left - 1]:
        left -= 1
    right = i0
    while right < grid.N - 1 and ok[right + 1]:
        right += 1
    return (float(x[left]), float(x[right]))
