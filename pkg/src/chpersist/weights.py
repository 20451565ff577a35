"""Moderate weight functions phi_{a,b,c,d} and their certificates.

    phi(x) = exp(a |x|^b) (1 + |x|)^c (log(e + |x|))^d

A weight is admissible when it is locally absolutely continuous with
|phi'| <= A phi a.e., v-moderate (phi(x+y) <= c_mod v(x) phi(y)) for a
sub-multiplicative v with inf v > 0, and int v(x) exp(-|x|) dx < inf.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np
from scipy import integrate, optimize

from .errors import AdmissibilityError, ConfigError, ShapeError, WeightRangeError
from .spectral import Field, Grid

__all__ = [
    "WeightSpec",
    "ModerateCertificate",
    "YoungCheck",
    "eval_weight",
    "companion_v",
    "certify",
    "truncate",
    "TruncatedWeight",
    "weighted_young_check",
    "v_decay_norm",
    "psi_weight",
    "random_pair",
    "young_sweep",
]

_LOG_MAX = math.log(np.finfo(float).max) - 1.0
SIDES = ("both", "right")
SMOOTHINGS = ("exact", "regularized")


@dataclass(frozen=True)
class WeightSpec:
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0
    d: float = 0.0
    side: str = "both"
    smoothing: str = "exact"

    def __post_init__(self):
        for name in ("a", "b", "c", "d"):
            val = float(getattr(self, name))
            if not math.isfinite(val):
                raise ValueError(f"weight parameter {name} must be finite")
            object.__setattr__(self, name, val)
        if self.side not in SIDES:
            raise ValueError(f"side must be one of {SIDES}, got {self.side!r}")
        if self.smoothing not in SMOOTHINGS:
            raise ValueError(f"smoothing must be one of {SMOOTHINGS}, got {self.smoothing!r}")

    # -- evaluation ----------------------------------------------------------

    def _exponent(self, r: np.ndarray) -> np.ndarray:
        # r = |x|. b = 0 makes exp(a) a constant factor; it is normalized away
        # so that phi(0) = 1 for every spec.
        if self.a == 0.0 or self.b == 0.0:
            return np.zeros_like(r)
        if self.smoothing == "regularized":
            return self.a * (np.power(1.0 + r * r, 0.5 * self.b) - 1.0)
        return self.a * np.power(r, self.b)

    def log_eval(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r = np.abs(x)
        out = self._exponent(r)
        if self.c:
            out = out + self.c * np.log1p(r)
        if self.d:
            out = out + self.d * np.log(np.log(np.e + r))
        if self.side == "right":
            out = np.where(x >= 0, out, 0.0)
        return out

    def __call__(self, x) -> np.ndarray:
        lg = self.log_eval(x)
        if np.any(lg > _LOG_MAX):
            bad = np.asarray(x, dtype=float)[np.argmax(lg)] if np.ndim(lg) else x
            raise WeightRangeError(f"weight overflows double precision at x={float(bad):.6g}")
        return np.exp(lg)

    def log_derivative(self, r: np.ndarray) -> np.ndarray:
        """phi'/phi at x = r > 0 (the even branch)."""
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        if self.a and self.b:
            if self.smoothing == "regularized":
                out += self.a * self.b * r * np.power(1.0 + r * r, 0.5 * self.b - 1.0)
            else:
                out += self.a * self.b * np.power(r, self.b - 1.0)
        out += self.c / (1.0 + r)
        out += self.d / ((np.e + r) * np.log(np.e + r))
        return out

    # -- derived specs -------------------------------------------------------

    def sqrt(self) -> "WeightSpec":
        """phi^{1/2}, again a member of the family."""
        return replace(self, a=self.a / 2, c=self.c / 2, d=self.d / 2)

    def admissibility_problem(self) -> Optional[str]:
        if self.a < 0:
            return f"a = {self.a} < 0"
        if not 0.0 <= self.b <= 1.0:
            return f"b = {self.b} outside [0, 1]"
        if self.a * self.b >= 1.0:
            return f"a*b = {self.a * self.b} >= 1: int v(x) exp(-|x|) dx diverges"
        return None

    @property
    def admissible(self) -> bool:
        return self.admissibility_problem() is None

    def check_admissible(self) -> None:
        problem = self.admissibility_problem()
        if problem is not None:
            raise AdmissibilityError(f"weight {self.describe()} is not admissible: {problem}")

    def describe(self) -> str:
        return (f"phi(a={self.a:g}, b={self.b:g}, c={self.c:g}, d={self.d:g}, "
                f"side={self.side}, smoothing={self.smoothing})")

    # -- serialization -------------------------------------------------------

    def to_text(self) -> str:
        side = "right" if self.side == "right" else "both"
        return (f"a={self.a!r}\nb={self.b!r}\nc={self.c!r}\nd={self.d!r}\n"
                f"side={side}\nsmoothing={self.smoothing}\n")

    @classmethod
    def from_text(cls, text: str, source: str = "<text>") -> "WeightSpec":
        fields = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key in ("a", "b", "c", "d"):
                try:
                    fields[key] = float(value)
                except ValueError:
                    raise ConfigError(f"{source}:{lineno}: {key} must be a number, got {value!r}") from None
            elif key in ("side", "smoothing"):
                fields[key] = value
            else:
                raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            return cls(**fields)
        except ValueError as exc:
            raise ConfigError(f"{source}: {exc}") from None


def eval_weight(spec: WeightSpec, x) -> np.ndarray:
    return spec(x)


def psi_weight(d: float) -> WeightSpec:
    """exp(|x|/2) (1+|x|)^{1/2} (log(e+|x|))^d, the far-field condition weight."""
    return WeightSpec(a=0.5, b=1.0, c=0.5, d=d)


def _is_critical(spec: WeightSpec) -> bool:
    # exp(a|x|) dominates any non-positive polynomial/log factor, so v = exp(a|x|)
    return spec.b == 1.0 and spec.c <= 0.0 and spec.d <= 0.0 and spec.a > 0.0


def companion_v(spec: WeightSpec, allow_critical: bool = False) -> WeightSpec:
    """Standard sub-multiplicative companion exp(a|x|^b)(1+|x|)^|c|(log(e+|x|))^|d|.

    With `allow_critical`, weights exp(a|x|)(1+|x|)^c(log)^d with c, d <= 0 are
    accepted outside the admissible range and paired with v = exp(a|x|).
    """
    if allow_critical and _is_critical(spec):
        return WeightSpec(a=spec.a, b=1.0, smoothing=spec.smoothing)
    spec.check_admissible()
    return WeightSpec(a=spec.a, b=spec.b, c=abs(spec.c), d=abs(spec.d), smoothing=spec.smoothing)


@dataclass(frozen=True)
class ModerateCertificate:
    c_mod: float
    A: float
    v_integral: float
    dGv_l1: float
    Gv_l1: float
    sample_box: float
    weight: WeightSpec
    companion: WeightSpec

    def to_text(self) -> str:
        lines = [f"{k}={getattr(self, k)!r}" for k in ("c_mod", "A", "v_integral", "dGv_l1", "Gv_l1", "sample_box")]
        return "\n".join(lines) + "\n"


def _log_ratio(spec: WeightSpec, v: WeightSpec, x, y):
    return spec.log_eval(x + y) - v.log_eval(x) - spec.log_eval(y)


def moderateness_constant(spec: WeightSpec, v: WeightSpec, box: float = 40.0, samples: int = 801,
                          polish: bool = True) -> float:
    """max of phi(x+y)/(v(x) phi(y)) over a lattice on [-box, box]^2, locally refined."""
    s = np.linspace(-box, box, samples)
    best = -np.inf
    arg = (0.0, 0.0)
    for i in range(0, samples, 64):  # row blocks keep memory flat
        X = s[i:i + 64, None]
        R = _log_ratio(spec, v, X, s[None, :])
        j = np.unravel_index(np.argmax(R), R.shape)
        if R[j] > best:
            best = float(R[j])
            arg = (float(s[i + j[0]]), float(s[j[1]]))
    if polish:
        def neg(z):
            zx, zy = np.clip(z, -box, box)
            return -float(_log_ratio(spec, v, np.array(zx), np.array(zy)))
        res = optimize.minimize(neg, np.array(arg), method="Nelder-Mead",
                                options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 4000})
        best = max(best, -float(res.fun))
    return float(math.exp(best))


def derivative_bound(spec: WeightSpec) -> float:
    """ess sup |phi'/phi|; the kink of one-sided or |x|-type weights at 0 is excluded."""
    if spec.a > 0 and 0.0 < spec.b < 1.0 and spec.smoothing == "exact":
        return math.inf
    r = np.concatenate([[0.0], np.logspace(-12, 6, 20000), np.linspace(0.0, 100.0, 20001)[1:]])
    return float(np.max(np.abs(spec.log_derivative(r))))


def _radial_integral(log_integrand) -> float:
    """2 * int_0^inf exp(log_integrand(r)) dr with a cutoff where the integrand < 1e-14."""
    tiny = math.log(1e-16)
    X = 8.0
    while X < 1e7:
        tail = log_integrand(np.linspace(X, 2 * X, 64))
        if tail.max() < tiny and np.all(np.diff(tail) < 0):
            break
        X *= 2
    else:
        return math.inf
    edges = np.unique(np.concatenate([[0.0], np.geomspace(1e-3, X, 40)]))
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(lambda r: math.exp(float(log_integrand(np.array(r)))), lo, hi,
                                epsabs=1e-15, epsrel=1e-13, limit=200)
        total += val
    return 2.0 * total


def _v_integral_diverges(v: WeightSpec) -> bool:
    return v.b == 1.0 and v.a >= 1.0


def v_decay_norm(v: WeightSpec, p: float) -> float:
    """|| v exp(-|.|) ||_p; math.inf when the integrability condition fails."""
    if np.isinf(p):
        if v.b == 1.0 and (v.a > 1.0 or (v.a == 1.0 and (v.c > 0 or v.d > 0))):
            return math.inf
        r = np.linspace(0.0, 1e4, 200001)
        return float(np.exp(np.max(v.log_eval(r) - r)))
    if _v_integral_diverges(v):
        return math.inf
    return _radial_integral(lambda r: p * (v.log_eval(r) - r)) ** (1.0 / p)


@lru_cache(maxsize=256)
def certify(spec: WeightSpec, box: float = 40.0, samples: int = 801,
            require_admissible: bool = True) -> ModerateCertificate:
    """Estimate the moderateness data of `spec` and its companion v.

    With require_admissible=False the integrability condition on v may fail;
    the integral fields are then reported as inf instead of raising.
    """
    if box <= 0:
        raise ValueError("box must be positive")
    if require_admissible:
        spec.check_admissible()
    v = companion_v(spec, allow_critical=not require_admissible)
    A = derivative_bound(spec)
    if require_admissible and not math.isfinite(A):
        raise AdmissibilityError(
            f"{spec.describe()}: |phi'/phi| is unbounded near 0 in exact mode; use smoothing=regularized")
    c_mod = moderateness_constant(spec, v, box, samples)
    if _v_integral_diverges(v):
        if require_admissible:
            raise AdmissibilityError(f"{spec.describe()}: int v(x) exp(-|x|) dx diverges")
        v_int = math.inf
    else:
        v_int = _radial_integral(lambda r: v.log_eval(r) - r)
    return ModerateCertificate(c_mod=c_mod, A=A, v_integral=v_int, dGv_l1=0.5 * v_int,
                               Gv_l1=0.5 * v_int, sample_box=box, weight=spec, companion=v)


class TruncatedWeight:
    """x -> min(phi(x), n); bounded by n, same moderateness data as phi."""

    def __init__(self, spec: WeightSpec, n: float):
        if not n > 0:
            raise ValueError("truncation level must be positive")
        self.spec = spec
        self.n = float(n)

    def __call__(self, x) -> np.ndarray:
        lg = np.minimum(self.spec.log_eval(x), math.log(self.n))
        return np.exp(lg)

    def __repr__(self):
        return f"TruncatedWeight({self.spec.describe()}, n={self.n:g})"


def truncate(spec: WeightSpec, n: float) -> TruncatedWeight:
    return TruncatedWeight(spec, n)


@dataclass(frozen=True)
class YoungCheck:
    lhs: float
    rhs: float
    c_mod: float
    holds: bool


def _lp(values: np.ndarray, dx: float, p: float) -> float:
    g = np.abs(values)
    if np.isinf(p):
        return float(g.max()) if g.size else 0.0
    return float(np.sum(g**p) * dx) ** (1.0 / p)


def weighted_young_check(f1: Field, f2: Field, spec: WeightSpec, p: float,
                         c_mod: Optional[float] = None, tol: float = 1e-12) -> YoungCheck:
    """Compare ||(f1*f2) phi||_p with c_mod ||f1 v||_1 ||f2 phi||_p.

    The convolution is the exact lattice convolution on the grid's 2N-1 sums
    x_i + x_j, so the discrete inequality is a theorem, not an approximation.
    """
    if f1.grid != f2.grid:
        raise ShapeError("f1 and f2 must be sampled on the same grid")
    if not 1 <= p:
        raise ValueError("p must be in [1, inf]")
    grid = f1.grid
    v = companion_v(spec, allow_critical=True)
    if c_mod is None:
        c_mod = certify(spec, require_admissible=False).c_mod
    conv = np.convolve(f1.values, f2.values) * grid.dx
    xs = 2.0 * grid.x[0] + grid.dx * np.arange(conv.size)
    lhs = _lp(conv * spec(xs), grid.dx, p)
    rhs = _lp(f1.values * v(grid.x), grid.dx, 1.0) * _lp(f2.values * spec(grid.x), grid.dx, p)
    holds = lhs <= c_mod * rhs * (1.0 + tol)
    return YoungCheck(lhs=lhs, rhs=rhs, c_mod=c_mod, holds=bool(holds))


def random_pair(rng: np.random.Generator, grid: Grid) -> Tuple[Field, Field]:
    """Two random sums of Gaussian bumps, well inside the grid."""
    def one():
        k = int(rng.integers(1, 5))
        centers = rng.uniform(-0.4 * grid.L, 0.4 * grid.L, k)
        widths = rng.uniform(0.2, 2.0, k)
        amps = rng.normal(0.0, 1.0, k)
        x = grid.x[:, None]
        return Field(grid, np.sum(amps * np.exp(-((x - centers) / widths) ** 2), axis=1))
    return one(), one()


def young_sweep(spec: WeightSpec, p: float, n: int = 200, seed: int = 0,
                grid: Optional[Grid] = None) -> List[YoungCheck]:
    """weighted_young_check on `n` seeded random pairs."""
    grid = grid or Grid(16.0, 256)
    rng = np.random.default_rng(seed)
    c_mod = certify(spec, require_admissible=False).c_mod
    return [weighted_young_check(*random_pair(rng, grid), spec, p, c_mod=c_mod) for _ in range(n)]
