"""Far-field profile of solutions with peakon-like exp(-|x|) decay.

For data decaying at least like psi(x)^{-1},
psi(x) = exp(|x|/2)(1+|x|)^{1/2}(log(e+|x|))^d with d > 1/2, the solution
behaves as

    u(x,t) - u0(x) ~  exp(-x) t Phi+(t)   (x -> +inf)
    u(x,t) - u0(x) ~ -exp(x)  t Phi-(t)   (x -> -inf)

with Phi±(t) = 1/2 int exp(±y) h(y,t) dy and h the time average of F, while
rho - rho0 is o(exp(-|x|) t).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid

from .dynamics import State, Trajectory
from .errors import PreconditionError, WindowError
from .persistence import COMPONENTS, _rowwise_norm, analysis_window
from .spectral import capped_window
from .weights import psi_weight

__all__ = [
    "ProfileReport",
    "PropagationReport",
    "LimitValueWarning",
    "check_condition",
    "check_condition_series",
    "profile_Phi",
    "extract_far_field",
    "rho_remainder",
    "profile_report",
    "infinite_propagation_check",
    "write_profile_csv",
]

SIGNAL_FLOOR = 1e-11
PHI_CAP = 1e16  # F is quadratic, so its round-off (~1e-30) stays small under exp(|x|) up to here
DEFAULT_FAR_WINDOW = (12.0, 20.0)


class LimitValueWarning(UserWarning):
    """Phi was requested at the initial time; the t -> 0+ limit is returned."""


def _sign(side) -> int:
    if side in ("+", 1, "plus", "right"):
        return 1
    if side in ("-", -1, "minus", "left"):
        return -1
    raise ValueError(f"side must be '+' or '-', got {side!r}")


def _envelope(grid, u, rho):
    return (np.abs(u) + np.abs(grid.diff(u, 1)) + np.abs(grid.diff(u, 2))
            + np.abs(rho) + np.abs(grid.diff(rho, 1)))


def check_condition(s: State, d: float, window=None) -> float:
    """sup psi (|u|+|u_x|+|u_xx|+|rho|+|rho_x|); inf when the product grows toward the edge."""
    if not d > 0.5:
        raise PreconditionError(f"the far-field weight needs d > 1/2, got {d}")
    psi = psi_weight(d)
    g = s.grid
    lo, hi = analysis_window(g, psi, window)
    mask = (g.x >= lo) & (g.x <= hi)
    env = _envelope(g, s.u, s.rho)[mask] * psi(g.x[mask])
    return float(_rowwise_norm(env, g.dx, math.inf)[0])


def check_condition_series(traj: Trajectory, d: float, window=None) -> np.ndarray:
    return np.array([check_condition(traj.state(i), d, window) for i in range(len(traj))])


def _time_average_F(traj: Trajectory, i: int) -> np.ndarray:
    t0 = traj.times[0]
    if i == 0:
        return traj.F[0]
    return trapezoid(traj.F[: i + 1], traj.times[: i + 1], axis=0) / (traj.times[i] - t0)


def profile_Phi(traj: Trajectory, t: float, sign) -> float:
    """1/2 int exp(±y) h(y,t) dy with h the trapezoid time average of stored F.

    At the initial time the t -> 0+ limit 1/2 int exp(±y) F(u0, rho0) dy is
    returned and a LimitValueWarning is issued.
    """
    sg = _sign(sign)
    i = traj.index_of(t)
    if i == 0:
        warnings.warn("Phi at t = 0 is the t -> 0+ limit value", LimitValueWarning, stacklevel=2)
    else:
        if traj.stride > 1e-2 * (1 + 1e-9):
            raise PreconditionError(f"snapshot stride {traj.stride:g} too coarse for the time average")
    g = traj.grid
    h = _time_average_F(traj, i)
    lo, hi = capped_window(g, np.abs(g.x), PHI_CAP)
    m = (g.x >= lo) & (g.x <= hi)
    return float(0.5 * np.sum(np.exp(sg * g.x[m]) * h[m]) * g.dx)


def _far_window(traj: Trajectory, t: float, sg: int, window, phi: float) -> np.ndarray:
    g = traj.grid
    lo, hi = window
    elapsed = t - traj.times[0]
    x = g.x
    region = (sg * x >= lo) & (sg * x <= hi) & (np.abs(x) <= g.L - 5.0)
    region &= np.exp(-np.abs(x)) * elapsed * phi > SIGNAL_FLOOR
    if not region.any():
        limit = math.exp(-lo) * elapsed * phi
        raise WindowError(f"no samples in [{lo}, {hi}] with signal above {SIGNAL_FLOOR:g} "
                          f"(signal at the inner edge ~ {limit:.2e})")
    return region


def extract_far_field(traj: Trajectory, t: float, side, window=DEFAULT_FAR_WINDOW) -> Tuple[float, float]:
    """(mean of ±(u - u0) exp(±x)/t over the window, max deviation from that mean)."""
    sg = _sign(side)
    if t <= traj.times[0]:
        raise PreconditionError("far-field extraction needs t > 0")
    i = traj.index_of(t)
    phi = profile_Phi(traj, t, sg)
    if phi == 0.0:
        return 0.0, 0.0
    region = _far_window(traj, t, sg, window, phi)
    x = traj.grid.x[region]
    elapsed = t - traj.times[0]
    coef = sg * (traj.u[i, region] - traj.u[0, region]) * np.exp(sg * x) / elapsed
    mean = float(coef.mean())
    return mean, float(np.max(np.abs(coef - mean)))


def rho_remainder(traj: Trajectory, t: float, side, window=DEFAULT_FAR_WINDOW) -> float:
    """sup over the window of |rho(x,t) - rho0(x)| exp(±x) / t."""
    sg = _sign(side)
    if t <= traj.times[0]:
        raise PreconditionError("the remainder needs t > 0")
    i = traj.index_of(t)
    phi = profile_Phi(traj, t, sg)
    if phi == 0.0:
        return 0.0
    region = _far_window(traj, t, sg, window, phi)
    x = traj.grid.x[region]
    elapsed = t - traj.times[0]
    r = np.abs(traj.rho[i, region] - traj.rho[0, region]) * np.exp(sg * x) / elapsed
    return float(r.max())


@dataclass
class ProfileReport:
    t: float
    Phi_plus: float
    Phi_minus: float
    extracted_plus: float
    extracted_minus: float
    residual_plus: float
    residual_minus: float
    rho_remainder_plus: float
    rho_remainder_minus: float
    c1: float
    c2: float
    window: Tuple[float, float]

    @property
    def match_plus(self) -> float:
        """|extracted - Phi| / Phi on the right."""
        return abs(self.extracted_plus - self.Phi_plus) / self.Phi_plus if self.Phi_plus else 0.0

    @property
    def match_minus(self) -> float:
        return abs(self.extracted_minus - self.Phi_minus) / self.Phi_minus if self.Phi_minus else 0.0


def _phi_bounds(traj: Trajectory) -> Tuple[float, float]:
    vals = []
    for t in traj.times[1:]:
        vals += [profile_Phi(traj, t, 1), profile_Phi(traj, t, -1)]
    if not vals:
        return math.nan, math.nan
    return float(min(vals)), float(max(vals))


def profile_report(traj: Trajectory, t: float, window=DEFAULT_FAR_WINDOW,
                   bounds: Optional[Tuple[float, float]] = None) -> ProfileReport:
    c1, c2 = bounds if bounds is not None else _phi_bounds(traj)
    ep, rp = extract_far_field(traj, t, "+", window)
    em, rm = extract_far_field(traj, t, "-", window)
    return ProfileReport(
        t=float(t), Phi_plus=profile_Phi(traj, t, 1), Phi_minus=profile_Phi(traj, t, -1),
        extracted_plus=ep, extracted_minus=em, residual_plus=rp, residual_minus=rm,
        rho_remainder_plus=rho_remainder(traj, t, "+", window),
        rho_remainder_minus=rho_remainder(traj, t, "-", window),
        c1=c1, c2=c2, window=tuple(window))


PROFILE_COLUMNS = ("t", "Phi_plus", "Phi_minus", "extracted_plus", "extracted_minus",
                   "residual_plus", "residual_minus", "rho_rem_plus", "rho_rem_minus")


def write_profile_csv(path, reports: Iterable[ProfileReport]) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(PROFILE_COLUMNS) + "\n")
        for r in reports:
            row = (r.t, r.Phi_plus, r.Phi_minus, r.extracted_plus, r.extracted_minus,
                   r.residual_plus, r.residual_minus, r.rho_remainder_plus, r.rho_remainder_minus)
            fh.write(",".join("%.17g" % v for v in row) + "\n")


@dataclass
class PropagationReport:
    t: float
    max_outside: float
    detected: bool
    rate: float
    rate_ok: bool
    passed: bool
    vacuous: bool = False


def infinite_propagation_check(traj: Trajectory, t: Optional[float] = None, support: float = 1.0,
                               beyond: float = 2.0, threshold: float = 1e-10,
                               fit_from: float = 3.0, floor: float = 1e-11,
                               rate_band: Tuple[float, float] = (0.95, 1.05)) -> PropagationReport:
    """Compactly supported data must immediately develop an exp(-x) tail.

    Checks at the first positive output time (or `t`) that |u| exceeds
    `threshold` somewhere beyond |x| = `beyond`, and that a log-linear fit of
    the right tail over x >= fit_from (samples above `floor`) has rate in `rate_band`.
    """
    g = traj.grid
    x = g.x
    u0 = traj.u[0]
    if not np.any(u0) and not np.any(traj.rho[0]):
        return PropagationReport(math.nan, 0.0, False, math.nan, False, passed=True, vacuous=True)
    if np.any(np.abs(u0[np.abs(x) > support]) > 0) or np.any(np.abs(traj.rho[0][np.abs(x) > support]) > 0):
        raise PreconditionError(f"initial datum is not supported in [-{support}, {support}]")
    if len(traj) < 2:
        raise PreconditionError("need a snapshot at positive time")
    i = 1 if t is None else traj.index_of(t)
    u = traj.u[i]
    far = (np.abs(x) > beyond) & (np.abs(x) <= g.L - 5.0)
    max_out = float(np.abs(u[far]).max())
    fit = (x >= fit_from) & (x <= g.L - 5.0) & (np.abs(u) > floor)
    if fit.sum() < 10:
        raise WindowError("right tail is below the noise floor over the fit window")
    rate = -float(np.polyfit(x[fit], np.log(np.abs(u[fit])), 1)[0])
    rate_ok = rate_band[0] <= rate <= rate_band[1]
    detected = max_out > threshold
    return PropagationReport(float(traj.times[i]), max_out, detected, rate, rate_ok, passed=detected and rate_ok)
