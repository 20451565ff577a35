"""Weighted L_p persistence checks on simulated trajectories.

The central quantity is the quintuple norm

    N_p(t) = ||w u||_p + ||w u_x||_p + ||w u_xx||_p + ||w rho||_p + ||w rho_x||_p

which must obey N_p(t) <= exp(C M t) N_p(0) with C traced through the
energy estimates, M the run-wide sup of ||u||+||u_x||+||u_xx||+||rho||+||rho_x||.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize

from .dynamics import State, Trajectory
from .errors import AdmissibilityError, PreconditionError, WindowError
from .spectral import Grid, capped_window
from .weights import ModerateCertificate, WeightSpec, certify, companion_v, v_decay_norm

__all__ = [
    "PersistenceReport",
    "InequalityReport",
    "Corollary1Report",
    "DecayReport",
    "quintuple_norm",
    "quintuple_series",
    "traced_constants",
    "gronwall_constant",
    "verify_theorem1",
    "verify_differential_inequalities",
    "verify_corollary1",
    "decay_preservation_check",
    "analysis_window",
    "COMPONENTS",
]

COMPONENTS = ("u", "ux", "uxx", "rho", "rhox")
NOISE_CAP = 1e8
SHELL_FRACTION = 0.1
VERDICT_RTOL = 1e-9

Weight = Union[WeightSpec, Callable[[np.ndarray], np.ndarray], None]


class RefusedCheck(PreconditionError):
    """The trajectory cannot support the requested check (e.g. stride too coarse)."""


def _log_weight(grid: Grid, w: Weight) -> np.ndarray:
    if w is None:
        return np.zeros(grid.N)
    if isinstance(w, WeightSpec):
        return w.log_eval(grid.x)
    with np.errstate(divide="ignore", over="ignore"):
        return np.log(np.asarray(w(grid.x), dtype=float))


def analysis_window(grid: Grid, w: Weight, window: Optional[Sequence[float]] = None,
                    cap: float = NOISE_CAP) -> Tuple[float, float]:
    """Standard window [-L+5, L-5] shrunk to where the weight stays below `cap`."""
    if window is not None:
        return tuple(window)
    return capped_window(grid, _log_weight(grid, w), cap)


def _rowwise_norm(G: np.ndarray, dx: float, p: float) -> np.ndarray:
    """||.||_p of each row of |w f| restricted to the window, inf when not decaying.

    A weighted profile whose mass sits in the outer shell of the window is
    growing toward the edge: its norm on the line is infinite, and the grid
    value only reflects where the window happens to stop.
    """
    G = np.atleast_2d(G)
    n = G.shape[1]
    s = max(1, int(SHELL_FRACTION * n))
    shell = np.zeros(n, dtype=bool)
    shell[:s] = shell[-s:] = True
    out = np.empty(G.shape[0])
    for i, g in enumerate(G):
        if not np.all(np.isfinite(g)):
            out[i] = math.inf
            continue
        gmax = g.max()
        if gmax == 0.0:
            out[i] = 0.0
            continue
        if np.isinf(p):
            inner = g[~shell].max() if (~shell).any() else 0.0
            out[i] = math.inf if g[shell].max() > inner else gmax
            continue
        q = (g / gmax) ** p
        total = q.sum()
        if q[shell].sum() > 0.5 * total:
            out[i] = math.inf
        else:
            out[i] = gmax * (total * dx) ** (1.0 / p)
    return out


def _weight_on_window(grid: Grid, w: Weight, window) -> Tuple[np.ndarray, np.ndarray]:
    mask = (grid.x >= window[0]) & (grid.x <= window[1])
    if not mask.any():
        raise WindowError(f"window {window} contains no grid points")
    return mask, np.exp(_log_weight(grid, w)[mask])


def _component_series(traj: Trajectory, w: Weight, p: float, window=None) -> Dict[str, np.ndarray]:
    grid = traj.grid
    window = analysis_window(grid, w, window)
    mask, wv = _weight_on_window(grid, w, window)
    fields = traj.derivatives
    return {name: _rowwise_norm(np.abs(fields[name][:, mask]) * wv, grid.dx, p) for name in COMPONENTS}


def quintuple_series(traj: Trajectory, w: Weight, p: float, window=None) -> np.ndarray:
    """N_p at every snapshot; inf marks a weighted field that does not decay."""
    comps = _component_series(traj, w, p, window)
    return sum(comps[name] for name in COMPONENTS)


def quintuple_norm(s: State, w: Weight, p: float, window=None) -> float:
    """||w u||_p + ||w u_x||_p + ||w u_xx||_p + ||w rho||_p + ||w rho_x||_p at one state."""
    g = s.grid
    fields = {"u": s.u, "ux": g.diff(s.u, 1), "uxx": g.diff(s.u, 2), "rho": s.rho, "rhox": g.diff(s.rho, 1)}
    window = analysis_window(g, w, window)
    mask, wv = _weight_on_window(g, w, window)
    return float(sum(_rowwise_norm(np.abs(fields[n][mask]) * wv, g.dx, p)[0] for n in COMPONENTS))


def traced_constants(cert: ModerateCertificate) -> Dict[str, float]:
    """Constants of the energy estimates for u, u_x, u_xx, rho, rho_x.

    C2 bounds ||w (G_x * F)||_p / ||w F||_p, C3 the same for G_xx = G - delta,
    C5 the u_xx coefficient. C adds up every coefficient of the five
    estimates: (C2+1), (C3+1), C5, 1 for rho, and 1 + (3+A) for rho_x.
    """
    C2 = cert.c_mod * cert.dGv_l1
    C3 = cert.c_mod * cert.Gv_l1 + 1.0
    C5 = max(cert.A + 4.0, 2.0 + C2)
    C = (C2 + 1.0) + (C3 + 1.0) + C5 + 1.0 + (1.0 + (3.0 + cert.A))
    return {"C2": C2, "C3": C3, "C5": C5, "C": C, "A": cert.A}


def gronwall_constant(cert: ModerateCertificate) -> float:
    return traced_constants(cert)["C"]


@dataclass
class PersistenceReport:
    times: np.ndarray
    N_p: np.ndarray
    M: float
    C_used: float
    bound: np.ndarray
    margin: np.ndarray
    verdict: bool
    p: float
    weight: WeightSpec
    window: Tuple[float, float] = (math.nan, math.nan)

    @property
    def worst_ratio(self) -> float:
        with np.errstate(invalid="ignore", divide="ignore"):
            r = np.where(self.bound > 0, self.N_p / self.bound, 0.0)
        return float(np.max(r))

    def header(self) -> str:
        w = self.weight.describe() if isinstance(self.weight, WeightSpec) else str(self.weight)
        return (f"# p={self.p}\n# weight={w}\n# C_used={self.C_used!r}\n# M={self.M!r}\n"
                f"# window={self.window}\n# verdict={'pass' if self.verdict else 'fail'}\n")

    def to_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write(self.header())
            fh.write("t,N,bound,margin\n")
            for row in zip(self.times, self.N_p, self.bound, self.margin):
                fh.write(",".join("%.17g" % v for v in row) + "\n")


def _require_admissible(spec: Weight) -> WeightSpec:
    if not isinstance(spec, WeightSpec):
        raise TypeError("persistence checks need a WeightSpec (constants are traced from it)")
    spec.check_admissible()
    return spec


def verify_theorem1(traj: Trajectory, spec: WeightSpec, p: float, window=None,
                    cert: Optional[ModerateCertificate] = None) -> PersistenceReport:
    """Check N_p(t) <= exp(C M t) N_p(0) at every snapshot with the traced C."""
    spec = _require_admissible(spec)
    cert = cert or certify(spec)
    C = gronwall_constant(cert)
    window = analysis_window(traj.grid, spec, window)
    N = quintuple_series(traj, spec, p, window)
    if not math.isfinite(N[0]):
        raise PreconditionError(f"initial weighted norm is infinite for {spec.describe()}, p={p}")
    M = traj.M
    elapsed = traj.times - traj.times[0]
    with np.errstate(over="ignore", invalid="ignore"):
        bound = np.exp(C * M * elapsed) * N[0] if N[0] > 0 else np.zeros_like(N)
        margin = bound - N
    ok = np.isfinite(N) & (margin >= -VERDICT_RTOL * bound)
    return PersistenceReport(times=traj.times.copy(), N_p=N, M=M, C_used=C, bound=bound, margin=margin,
                             verdict=bool(ok.all()), p=p, weight=spec, window=tuple(window))


@dataclass
class ComponentCheck:
    name: str
    worst: float           # max over times of (d/dt N_i - rhs_i) / rhs_i
    worst_time: float
    holds: bool


@dataclass
class InequalityReport:
    components: Dict[str, ComponentCheck]
    holds: bool
    p: float
    weight: WeightSpec
    constants: Dict[str, float]
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    derivative: Dict[str, np.ndarray] = field(default_factory=dict)
    rhs: Dict[str, np.ndarray] = field(default_factory=dict)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write(f"# p={self.p}\n# weight={self.weight.describe()}\n")
            fh.write("".join(f"# {k}={v!r}\n" for k, v in self.constants.items()))
            fh.write(f"# verdict={'pass' if self.holds else 'fail'}\n")
            cols = [f"d_{n},rhs_{n}" for n in COMPONENTS]
            fh.write("t," + ",".join(cols) + "\n")
            for i, t in enumerate(self.times):
                vals = [t]
                for n in COMPONENTS:
                    vals += [self.derivative[n][i], self.rhs[n][i]]
                fh.write(",".join("%.17g" % v for v in vals) + "\n")


def verify_differential_inequalities(traj: Trajectory, spec: WeightSpec, p: float, window=None,
                                     tol: float = 1e-6, max_stride: float = 1e-2,
                                     cert: Optional[ModerateCertificate] = None) -> InequalityReport:
    """Centered differences of the five weighted norms against their estimate bounds."""
    spec = _require_admissible(spec)
    if len(traj) < 3:
        raise RefusedCheck("need at least three snapshots for centered differences")
    if traj.stride > max_stride * (1 + 1e-9):
        raise RefusedCheck(f"snapshot stride {traj.stride:g} exceeds {max_stride:g}")
    cert = cert or certify(spec)
    k = traced_constants(cert)
    n = _component_series(traj, spec, p, window)
    if not all(np.all(np.isfinite(v)) for v in n.values()):
        raise PreconditionError(f"weighted norms are infinite for {spec.describe()}, p={p}")
    M = np.array([d.M_t for d in traj.diagnostics])
    A = k["A"]
    base = n["u"] + n["ux"] + n["rho"]
    rhs_all = {
        "u": (k["C2"] + 1.0) * M * base,
        "ux": (k["C3"] + 1.0) * M * base,
        "uxx": k["C5"] * M * (base + n["uxx"]),
        "rho": M * (n["rho"] + n["rhox"]),
        "rhox": M * n["rho"] + (3.0 + A) * M * n["rhox"],
    }
    t = traj.times
    inner = slice(1, -1)
    comps, derivs, rhss = {}, {}, {}
    for name in COMPONENTS:
        d = (n[name][2:] - n[name][:-2]) / (t[2:] - t[:-2])
        r = rhs_all[name][inner]
        excess = d - r
        with np.errstate(invalid="ignore", divide="ignore"):
            rel = np.where(r > 0, excess / np.where(r > 0, r, 1.0), np.where(excess > 0, math.inf, 0.0))
        j = int(np.argmax(rel))
        comps[name] = ComponentCheck(name, float(rel[j]), float(t[1 + j]), bool(rel[j] <= tol))
        derivs[name] = d
        rhss[name] = r
    return InequalityReport(components=comps, holds=all(c.holds for c in comps.values()), p=p,
                            weight=spec, constants=k, times=t[inner].copy(), derivative=derivs, rhs=rhss)


@dataclass
class Corollary1Report:
    times: np.ndarray
    tier1: np.ndarray          # (phi, p)
    tier2: np.ndarray          # (phi^{1/2}, 2)
    sup1: float
    sup2: float
    fit1: Tuple[float, float, float]   # (alpha, tau, beta) of alpha*exp(tau t) + beta
    fit2: Tuple[float, float, float]
    verdict: bool
    p: float
    weight: WeightSpec
    windows: Tuple[Tuple[float, float], Tuple[float, float]]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write(f"# p={self.p}\n# weight={self.weight.describe()}\n")
            fh.write(f"# sup_tier1={self.sup1!r}\n# sup_tier2={self.sup2!r}\n")
            fh.write(f"# fit_tier1={self.fit1}\n# fit_tier2={self.fit2}\n")
            fh.write(f"# verdict={'pass' if self.verdict else 'fail'}\n")
            fh.write("t,tier1,tier2\n")
            for row in zip(self.times, self.tier1, self.tier2):
                fh.write(",".join("%.17g" % v for v in row) + "\n")


def _fit_growth(t: np.ndarray, y: np.ndarray) -> Tuple[float, float, float]:
    """Least-squares alpha*exp(tau t) + beta, for reporting only."""
    if len(t) < 4 or not np.all(np.isfinite(y)) or np.ptp(y) == 0:
        return (0.0, 0.0, float(y[0]) if len(y) else 0.0)
    t0 = t - t[0]
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            popt, _ = optimize.curve_fit(lambda s, a, tau, b: a * np.exp(tau * s) + b, t0, y,
                                         p0=(np.ptp(y) + 1e-12, 1.0, y[0]), maxfev=5000)
        return tuple(float(v) for v in popt)
    except (RuntimeError, ValueError):
        return (math.nan, math.nan, math.nan)


def verify_corollary1(traj: Trajectory, spec: WeightSpec, p: float, window=None,
                      window_half=None) -> Corollary1Report:
    """Both the (phi, p) and the (phi^{1/2}, 2) quintuple norms stay finite on the run.

    The weight need not be admissible: it has to be v-moderate with
    |phi'| <= A phi, inf v > 0 and v exp(-|.|) in L_p.
    """
    cert = certify(spec, require_admissible=False)
    if not math.isfinite(cert.A):
        raise AdmissibilityError(f"{spec.describe()}: |phi'/phi| is unbounded")
    v = companion_v(spec, allow_critical=True)
    if not math.isfinite(v_decay_norm(v, p)):
        raise PreconditionError(f"v exp(-|x|) is not in L_p for p={p} (v = {v.describe()})")
    half = spec.sqrt()
    w1 = analysis_window(traj.grid, spec, window)
    w2 = analysis_window(traj.grid, half, window_half if window_half is not None else w1)
    tier1 = quintuple_series(traj, spec, p, w1)
    tier2 = quintuple_series(traj, half, 2.0, w2)
    if not math.isfinite(tier1[0]):
        raise PreconditionError("initial (phi, p) quintuple norm is infinite")
    if not math.isfinite(tier2[0]):
        raise PreconditionError("initial (phi^{1/2}, 2) quintuple norm is infinite")
    ok = bool(np.all(np.isfinite(tier1)) and np.all(np.isfinite(tier2)))
    return Corollary1Report(times=traj.times.copy(), tier1=tier1, tier2=tier2,
                            sup1=float(np.max(tier1)), sup2=float(np.max(tier2)),
                            fit1=_fit_growth(traj.times, tier1), fit2=_fit_growth(traj.times, tier2),
                            verdict=ok, p=p, weight=spec, windows=(w1, w2))


@dataclass
class DecayReport:
    kind: str
    stated_rate: float
    times: np.ndarray
    rates: np.ndarray          # fitted decay rate per snapshot (min over fitted sides)
    initial_rate: float
    verdict: bool
    vacuous: bool = False

    def to_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write(f"# kind={self.kind}\n# stated_rate={self.stated_rate!r}\n")
            fh.write(f"# initial_rate={self.initial_rate!r}\n")
            fh.write(f"# verdict={'pass' if self.verdict else 'fail'}{' (vacuous)' if self.vacuous else ''}\n")
            fh.write("t,rate\n")
            for row in zip(self.times, self.rates):
                fh.write(",".join("%.17g" % v for v in row) + "\n")


DECAY_KINDS = ("algebraic", "one_sided_exponential")


def _envelope(traj: Trajectory) -> np.ndarray:
    f = traj.derivatives
    return sum(np.abs(f[n]) for n in COMPONENTS)


def _fit_rate(x: np.ndarray, e: np.ndarray, kind: str, floor: float) -> float:
    keep = e > floor
    if keep.sum() < 10:
        raise WindowError(f"envelope below the noise floor {floor:g} across the fit window")
    xs, ys = x[keep], np.log(e[keep])
    xs = np.log(xs) if kind == "algebraic" else xs
    slope = np.polyfit(xs, ys, 1)[0]
    return float(-slope)


def decay_preservation_check(traj: Trajectory, kind: str, rate: float,
                             fit_window: Tuple[float, Optional[float]] = (10.0, None),
                             floor: float = 1e-12, slack: float = 0.05) -> DecayReport:
    """Fit the far-field decay of |u|+|u_x|+|u_xx|+|rho|+|rho_x| at every snapshot.

    kind='algebraic' fits log-log slopes on both sides (decay like |x|^-rate);
    kind='one_sided_exponential' fits a log-linear slope on x > 0 only. The
    decay is preserved when every later rate is >= initial rate - slack.
    """
    if kind not in DECAY_KINDS:
        raise ValueError(f"kind must be one of {DECAY_KINDS}")
    grid = traj.grid
    lo = fit_window[0]
    hi = fit_window[1] if fit_window[1] is not None else grid.L - 10.0
    if hi <= lo:
        raise WindowError(f"fit window [{lo}, {hi}] is empty")
    E = _envelope(traj)
    if not np.any(E[0]):
        return DecayReport(kind, rate, traj.times.copy(), np.full(len(traj), math.nan), math.nan,
                           verdict=True, vacuous=True)
    x = grid.x
    right = (x >= lo) & (x <= hi)
    left = (x <= -lo) & (x >= -hi)
    rates = np.empty(len(traj))
    for i in range(len(traj)):
        r = [_fit_rate(x[right], E[i, right], kind, floor)]
        if kind == "algebraic":
            r.append(_fit_rate(-x[left], E[i, left], kind, floor))
        rates[i] = min(r)
    if rates[0] < rate - slack:
        raise PreconditionError(f"initial datum decays at rate {rates[0]:.4g} < stated {rate:g}")
    ok = bool(np.all(rates[1:] >= rates[0] - slack))
    return DecayReport(kind, rate, traj.times.copy(), rates, float(rates[0]), verdict=ok)
