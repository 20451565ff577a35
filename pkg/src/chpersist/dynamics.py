"""Method-of-lines evolution of the two-component Camassa-Holm system.

The nonlocal form is discretized:

    u_t + u u_x = P(D) F,       F = u^2 + u_x^2/2 + rho^2/2
    rho_t + u rho_x = -rho u_x

with P(D) = -d/dx (1 - d^2/dx^2)^{-1}. Spatial operators are Fourier
pseudospectral, time stepping is classical RK4.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from .errors import BlowUpError, ConfigError, DomainTooSmallError, ShapeError, UnresolvedDataError
from .spectral import Field, Grid

log = logging.getLogger(__name__)

__all__ = [
    "State",
    "Diagnostics",
    "Trajectory",
    "rhs",
    "step_rk4",
    "evolve",
    "diagnostics",
    "initial_state",
    "PRESETS",
    "save_trajectory",
    "load_trajectory",
]

PRESETS = ("sech", "gaussian", "bump", "zero")
UX_BLOWUP = 1e4
TAIL_TOL = 1e-12
RESOLUTION_TOL = 1e-10


@dataclass(frozen=True)
class State:
    grid: Grid
    u: np.ndarray
    rho: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        rho = np.asarray(self.rho, dtype=float)
        if u.shape != (self.grid.N,) or rho.shape != (self.grid.N,):
            raise ShapeError("u and rho must both be sampled on the state's grid")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "rho", rho)

    @property
    def valid(self) -> bool:
        return bool(np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.rho)))

    def fields(self) -> Tuple[Field, Field]:
        return Field(self.grid, self.u), Field(self.grid, self.rho)

    def reflected(self) -> "State":
        """(u, rho)(x) -> (-u, rho)(-x), the x -> -x symmetry of the system."""
        g = self.grid
        return State(g, -g.reflect(self.u), g.reflect(self.rho), self.t)


@dataclass(frozen=True)
class Diagnostics:
    t: float
    M_t: float
    H1: float
    H2: float
    min_mx: float
    tail_max: float


def _bump(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    inside = np.abs(x) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - x[inside] ** 2))
    return out


_PROFILES = {
    "sech": lambda x: 1.0 / np.cosh(x),
    "gaussian": lambda x: np.exp(-x * x),
    "bump": _bump,
    "zero": np.zeros_like,
}

DEFAULT_AMPLITUDES = {"sech": (0.5, 0.3), "gaussian": (0.5, 0.3), "bump": (1.0, 0.5), "zero": (0.0, 0.0)}
DEFAULT_GRIDS = {"sech": (60.0, 4096), "gaussian": (60.0, 4096), "bump": (40.0, 16384), "zero": (60.0, 4096)}


def initial_state(preset: str, grid: Optional[Grid] = None, amplitude_u: Optional[float] = None,
                  amplitude_rho: Optional[float] = None) -> State:
    """Preset data u0 = A_u f(x), rho0 = A_rho f(x) with f = sech, Gaussian or compact bump."""
    if preset not in _PROFILES:
        raise ConfigError(f"unknown preset {preset!r}; choose from {PRESETS}")
    if grid is None:
        grid = Grid(*DEFAULT_GRIDS[preset])
    au, ar = DEFAULT_AMPLITUDES[preset]
    au = au if amplitude_u is None else amplitude_u
    ar = ar if amplitude_rho is None else amplitude_rho
    prof = _PROFILES[preset](grid.x)
    return State(grid, au * prof, ar * prof, 0.0)


def _rhs_arrays(grid: Grid, u: np.ndarray, rho: np.ndarray):
    # 2/3 rule: every quadratic product is formed from band-limited factors,
    # so aliasing lands only in discarded modes. Products stay pointwise,
    # which keeps relative precision in the exponentially small far field.
    mask = grid.dealias_mask
    ik = grid.symbol("d")
    uh = np.fft.rfft(u) * mask
    rh = np.fft.rfft(rho) * mask
    ub = np.fft.irfft(uh, n=grid.N)
    ux = np.fft.irfft(ik * uh, n=grid.N)
    rb = np.fft.irfft(rh, n=grid.N)
    rx = np.fft.irfft(ik * rh, n=grid.N)
    F = ub * ub + 0.5 * ux * ux + 0.5 * rb * rb
    pdf = np.fft.irfft(grid.symbol("PD") * mask * np.fft.rfft(F), n=grid.N)
    du = -ub * ux + pdf
    drho = -ub * rx - rb * ux
    return du, drho


def rhs(s: State) -> Tuple[Field, Field]:
    du, drho = _rhs_arrays(s.grid, s.u, s.rho)
    return Field(s.grid, du), Field(s.grid, drho)


def _rk4_arrays(grid, u, rho, t, dt):
    k1u, k1r = _rhs_arrays(grid, u, rho)
    k2u, k2r = _rhs_arrays(grid, u + 0.5 * dt * k1u, rho + 0.5 * dt * k1r)
    k3u, k3r = _rhs_arrays(grid, u + 0.5 * dt * k2u, rho + 0.5 * dt * k2r)
    k4u, k4r = _rhs_arrays(grid, u + dt * k3u, rho + dt * k3r)
    un = u + (dt / 6.0) * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
    rn = rho + (dt / 6.0) * (k1r + 2.0 * k2r + 2.0 * k3r + k4r)
    if not (np.isfinite(un).all() and np.isfinite(rn).all()):
        raise BlowUpError(t + dt, "non-finite values in RK4 stage")
    return un, rn


def step_rk4(s: State, dt: float) -> State:
    """One classical RK4 step; raises BlowUpError when NaN/inf appears."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    un, rn = _rk4_arrays(s.grid, s.u, s.rho, s.t, dt)
    return State(s.grid, un, rn, s.t + dt)


def _tail_max(grid: Grid, u: np.ndarray, rho: np.ndarray) -> float:
    outer = np.abs(grid.x) >= 0.95 * grid.L
    return float(max(np.abs(u[outer]).max(), np.abs(rho[outer]).max()))


def _diagnostics_arrays(grid: Grid, u, rho, t) -> Diagnostics:
    ux = grid.diff(u, 1)
    uxx = grid.diff(u, 2)
    rx = grid.diff(rho, 1)
    m = u - uxx
    dx = grid.dx
    M_t = sum(float(np.abs(f).max()) for f in (u, ux, uxx, rho, rx))
    H1 = 0.5 * float(np.sum(u * m + rho * rho)) * dx
    H2 = 0.5 * float(np.sum(u * rho * rho + u**3 + u * ux * ux)) * dx
    return Diagnostics(t=float(t), M_t=M_t, H1=H1, H2=H2, min_mx=float(m.min()),
                       tail_max=_tail_max(grid, u, rho))


def diagnostics(s: State) -> Diagnostics:
    """Sup-norm sum M_t, the Hamiltonians H1, H2, min(u - u_xx) and tail size."""
    return _diagnostics_arrays(s.grid, s.u, s.rho, s.t)


def source_F(grid: Grid, u: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """F(u, rho) = u^2 + u_x^2/2 + rho^2/2 (works row-wise on stacked snapshots)."""
    ux = np.fft.irfft(grid.symbol("d") * np.fft.rfft(u, axis=-1), n=grid.N, axis=-1)
    return u * u + 0.5 * ux * ux + 0.5 * rho * rho


@dataclass
class Trajectory:
    """Snapshots at output times plus per-snapshot diagnostics and source F."""

    grid: Grid
    times: np.ndarray
    u: np.ndarray
    rho: np.ndarray
    F: np.ndarray
    diagnostics: List[Diagnostics]
    config: Dict[str, object] = field(default_factory=dict)
    blown_up: bool = False
    blowup_time: Optional[float] = None
    blowup_reason: str = ""

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.size and np.any(np.diff(self.times) <= 0):
            raise ValueError("snapshot times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.times)

    @property
    def snapshots(self) -> List[State]:
        return [self.state(i) for i in range(len(self))]

    def state(self, i: int) -> State:
        return State(self.grid, self.u[i], self.rho[i], float(self.times[i]))

    @property
    def initial(self) -> State:
        return self.state(0)

    def index_of(self, t: float, tol: float = 1e-9) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > tol * max(1.0, abs(t)):
            raise ValueError(f"t={t} is not a snapshot time")
        return i

    @property
    def stride(self) -> float:
        return float(np.max(np.diff(self.times))) if len(self) > 1 else math.inf

    @property
    def M(self) -> float:
        return max(d.M_t for d in self.diagnostics)

    @cached_property
    def derivatives(self) -> Dict[str, np.ndarray]:
        """Stacked (K, N) arrays u, u_x, u_xx, rho, rho_x."""
        g = self.grid
        uh = np.fft.rfft(self.u, axis=-1)
        rh = np.fft.rfft(self.rho, axis=-1)
        ik = g.symbol("d")
        return {
            "u": self.u,
            "ux": np.fft.irfft(ik * uh, n=g.N, axis=-1),
            "uxx": np.fft.irfft(-(g.k**2) * uh, n=g.N, axis=-1),
            "rho": self.rho,
            "rhox": np.fft.irfft(ik * rh, n=g.N, axis=-1),
        }

    def subsample(self, every: int) -> "Trajectory":
        sl = slice(None, None, every)
        return Trajectory(self.grid, self.times[sl], self.u[sl], self.rho[sl], self.F[sl],
                          self.diagnostics[sl], dict(self.config), self.blown_up,
                          self.blowup_time, self.blowup_reason)

    def truncated(self, t_end: float) -> "Trajectory":
        k = int(np.searchsorted(self.times, t_end + 1e-12, side="right"))
        return Trajectory(self.grid, self.times[:k], self.u[:k], self.rho[:k], self.F[:k],
                          self.diagnostics[:k], dict(self.config), False, None, "")


def _output_times(T_end: float, every: float) -> np.ndarray:
    if T_end == 0:
        return np.zeros(0)
    n = int(math.floor(T_end / every + 1e-9))
    ts = every * np.arange(1, n + 1)
    if n == 0 or T_end - ts[-1] > 1e-9 * max(1.0, T_end):
        ts = np.append(ts, T_end)
    else:
        ts[-1] = T_end
    return ts


def cfl_dt(grid: Grid, u: np.ndarray, cfl: float = 0.3) -> float:
    return cfl * grid.dx / max(1.0, float(np.abs(u).max()))


def check_resolution(s: State, tol: float = RESOLUTION_TOL) -> None:
    for name, f in (("u", s.u), ("rho", s.rho)):
        tail = s.grid.spectral_tail(f)
        if tail > tol:
            raise UnresolvedDataError(
                f"initial {name} is not resolved: relative spectral tail {tail:.2e} > {tol:g} "
                f"in the top 10% of wavenumbers (N={s.grid.N}, L={s.grid.L})")


def evolve(initial: State, T_end: float, output_every: float = 0.1, cfl: float = 0.3,
           dt: Optional[float] = None, cfl_every: int = 10, ux_blowup: float = UX_BLOWUP,
           tail_tol: Optional[float] = TAIL_TOL, spectral_filter: bool = False,
           resolution_tol: Optional[float] = RESOLUTION_TOL) -> Trajectory:
    """Integrate from `initial` to T_end, storing snapshots every `output_every`.

    Step size follows the CFL policy dt = cfl*dx/max(1, ||u||_inf), refreshed
    every `cfl_every` steps and shortened to land on output times; a fixed
    `dt` overrides the policy. Breakdown (NaN, ||u_x||_inf > ux_blowup) ends
    the run early with `blown_up` set. Tails above `tail_tol` at the domain
    edge raise DomainTooSmallError.
    """
    if T_end < 0:
        raise ValueError("T_end must be non-negative")
    if not output_every > 0:
        raise ValueError("output_every must be positive")
    grid = initial.grid
    if resolution_tol is not None:
        check_resolution(initial, resolution_tol)
    u = initial.u.copy()
    rho = initial.rho.copy()
    t0 = float(initial.t)
    filt = np.exp(-36.0 * (grid.k / grid.kmax) ** 36) if spectral_filter else None

    times = [t0]
    us, rhos = [u.copy()], [rho.copy()]
    diags = [_diagnostics_arrays(grid, u, rho, t0)]
    config = dict(T_end=T_end, output_every=output_every, cfl=cfl, dt_fixed=dt, cfl_every=cfl_every,
                  ux_blowup=ux_blowup, spectral_filter=spectral_filter, L=grid.L, N=grid.N)
    traj_kw = dict(blown_up=False, blowup_time=None, blowup_reason="")

    def check_tail(t, d):
        if tail_tol is not None and d.tail_max >= tail_tol:
            raise DomainTooSmallError(t, d.tail_max)

    check_tail(t0, diags[0])
    t = t0
    h = dt if dt is not None else cfl_dt(grid, u, cfl)
    nsteps = 0
    try:
        for target in t0 + _output_times(T_end, output_every):
            while t < target:
                if dt is None and nsteps % cfl_every == 0:
                    h = cfl_dt(grid, u, cfl)
                    uxmax = float(np.abs(grid.diff(u)).max())
                    if uxmax > ux_blowup:
                        raise BlowUpError(t, f"||u_x||_inf = {uxmax:.3e} > {ux_blowup:g}")
                step = min(h, target - t)
                if target - (t + step) < 1e-12 * max(1.0, target):
                    step = target - t
                u, rho = _rk4_arrays(grid, u, rho, t, step)
                if filt is not None:
                    u = grid.apply(filt, u)
                    rho = grid.apply(filt, rho)
                nsteps += 1
                t = t + step
                if abs(t - target) < 1e-12 * max(1.0, target):
                    t = target
            d = _diagnostics_arrays(grid, u, rho, t)
            if not all(math.isfinite(getattr(d, k)) for k in ("M_t", "H1", "H2")):
                raise BlowUpError(t, "non-finite diagnostics")
            times.append(t)
            us.append(u.copy())
            rhos.append(rho.copy())
            diags.append(d)
            uxmax = float(np.abs(grid.diff(u)).max())
            if uxmax > ux_blowup:
                raise BlowUpError(t, f"||u_x||_inf = {uxmax:.3e} > {ux_blowup:g}")
            check_tail(t, d)
    except BlowUpError as exc:
        log.warning("run terminated early: %s", exc)
        traj_kw = dict(blown_up=True, blowup_time=exc.t, blowup_reason=exc.reason)
    config["steps"] = nsteps
    U = np.array(us)
    R = np.array(rhos)
    return Trajectory(grid, np.array(times), U, R, source_F(grid, U, R), diags, config, **traj_kw)


# -- persistence on disk ---------------------------------------------------

def _fmt(a) -> str:
    return "%.17g" % a


def save_trajectory(traj: Trajectory, directory: Union[str, Path], meta: Optional[Dict[str, object]] = None) -> Path:
    """Write `meta`, `snap_<i>.csv` (x,u,rho) and `diag.csv`."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    info = dict(traj.config)
    info.update(meta or {})
    info.update(L=traj.grid.L, N=traj.grid.N, snapshots=len(traj), blown_up=traj.blown_up,
                blowup_time=traj.blowup_time, dt_policy="cfl*dx/max(1,|u|_inf)")
    with open(d / "meta", "w", newline="\n") as fh:
        for k in sorted(info):
            fh.write(f"{k}={info[k]}\n")
    x = traj.grid.x
    width = len(str(max(len(traj) - 1, 0)))
    for i in range(len(traj)):
        np.savetxt(d / f"snap_{i:0{width}d}.csv", np.column_stack([x, traj.u[i], traj.rho[i]]),
                   delimiter=",", header="x,u,rho", comments="", fmt="%.17g")
    with open(d / "diag.csv", "w", newline="\n") as fh:
        fh.write("t,M,H1,H2,min_m,tail_max\n")
        for g in traj.diagnostics:
            fh.write(",".join(_fmt(v) for v in (g.t, g.M_t, g.H1, g.H2, g.min_mx, g.tail_max)) + "\n")
    return d


def load_trajectory(directory: Union[str, Path]) -> Trajectory:
    d = Path(directory)
    meta = {}
    for line in (d / "meta").read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            meta[k] = v
    grid = Grid(float(meta["L"]), int(meta["N"]))
    diag = np.loadtxt(d / "diag.csv", delimiter=",", skiprows=1, ndmin=2)
    snaps = sorted(d.glob("snap_*.csv"), key=lambda p: int(p.stem.split("_")[1]))
    if len(snaps) != len(diag):
        raise ShapeError(f"{d}: {len(snaps)} snapshots but {len(diag)} diagnostic rows")
    U, R = [], []
    for p in snaps:
        data = np.loadtxt(p, delimiter=",", skiprows=1)
        U.append(data[:, 1])
        R.append(data[:, 2])
    U, R = np.array(U), np.array(R)
    diags = [Diagnostics(*row) for row in diag]
    blown = meta.get("blown_up") == "True"
    bt = meta.get("blowup_time")
    return Trajectory(grid, diag[:, 0], U, R, source_F(grid, U, R), diags, meta, blown,
                      float(bt) if blown and bt not in (None, "None") else None)
