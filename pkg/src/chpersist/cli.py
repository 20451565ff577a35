"""Command-line experiment runner.

    chpersist simulate  --config run.cfg [--out DIR]
    chpersist verify    --config run.cfg --check theorem1 --check decay [--trajectory DIR]
    chpersist weights-check weight.spec
    chpersist sweep     a.cfg b.cfg ... [--workers 4]

Configs are key=value text, one per line, '#' starts a comment. Outputs go to
--out, else $CHPERSIST_OUTPUT/<config name>, else ./runs/<config name>.

Exit status: 0 all checks pass, 1 a check failed, 2 precondition or
configuration error, 3 blow-up before T_end, 4 unexpected internal error.
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.signal import resample

from . import asymptotics, dynamics, persistence, weights
from .errors import BlowUpError, ConfigError, DomainTooSmallError, PreconditionError
from .spectral import Grid

log = logging.getLogger("chpersist")

EXIT_OK, EXIT_FAIL, EXIT_PRECONDITION, EXIT_BLOWUP, EXIT_INTERNAL = 0, 1, 2, 3, 4
CHECKS = ("theorem1", "diffineq", "corollary1", "corollary2", "decay", "propagation", "young")
OUTPUT_ENV = "CHPERSIST_OUTPUT"
PRESET_CHOICES = dynamics.PRESETS + ("custom-file",)


@dataclass(frozen=True)
class RunConfig:
    name: str = "run"
    preset: str = "sech"
    amplitude_u: Optional[float] = None
    amplitude_rho: Optional[float] = None
    custom_file: Optional[str] = None
    L: Optional[float] = None
    N: Optional[int] = None
    T_end: float = 1.0
    output_stride: float = 0.01
    weight: weights.WeightSpec = field(default_factory=lambda: weights.WeightSpec(0, 0, 0, 0))
    p: float = 2.0
    checks: Tuple[str, ...] = ()
    # per-check parameters
    decay_kind: str = "one_sided_exponential"
    decay_rate: float = 0.9
    psi_d: float = 1.0
    profile_times: Tuple[float, ...] = (0.25, 0.5, 1.0)
    young_pairs: int = 200
    seed: int = 0
    ux_blowup: float = dynamics.UX_BLOWUP
    tail_tol: Optional[float] = dynamics.TAIL_TOL
    spectral_filter: bool = False

    def grid(self) -> Grid:
        L0, N0 = dynamics.DEFAULT_GRIDS.get(self.preset, (60.0, 4096))
        return Grid(self.L if self.L is not None else L0, self.N if self.N is not None else N0)

    def validate(self) -> None:
        if self.preset not in PRESET_CHOICES:
            raise ConfigError(f"unknown preset {self.preset!r}; choose from {PRESET_CHOICES}")
        if self.preset == "custom-file" and not self.custom_file:
            raise ConfigError("preset=custom-file needs custom_file=<path>")
        if not self.T_end >= 0:
            raise ConfigError(f"T_end must be >= 0, got {self.T_end}")
        if not self.output_stride > 0:
            raise ConfigError("output_stride must be positive")
        if self.T_end > 0:
            n = self.T_end / self.output_stride
            if abs(n - round(n)) > 1e-9 * max(1.0, n):
                raise ConfigError(f"output_stride {self.output_stride} does not divide T_end {self.T_end}")
        if not (self.p >= 1):
            raise ConfigError(f"p must be >= 1 or inf, got {self.p}")
        bad = set(self.checks) - set(CHECKS)
        if bad:
            raise ConfigError(f"unknown checks {sorted(bad)}; choose from {CHECKS}")
        if self.decay_kind not in persistence.DECAY_KINDS:
            raise ConfigError(f"decay_kind must be one of {persistence.DECAY_KINDS}")
        try:
            self.grid()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


_FLOAT_KEYS = {"amplitude_u", "amplitude_rho", "L", "T_end", "output_stride", "decay_rate", "psi_d", "ux_blowup"}
_INT_KEYS = {"N", "young_pairs", "seed"}
_WEIGHT_KEYS = {"weight_a": "a", "weight_b": "b", "weight_c": "c", "weight_d": "d",
                "weight_side": "side", "weight_smoothing": "smoothing"}


def _split_list(v: str) -> List[str]:
    return [s.strip() for s in v.replace(";", ",").split(",") if s.strip()]


def parse_config(text: str, source: str = "<config>", name: Optional[str] = None) -> RunConfig:
    vals: Dict[str, object] = {}
    wkw: Dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, v = (s.strip() for s in line.split("=", 1))
        try:
            if key in _FLOAT_KEYS:
                vals[key] = float(v)
            elif key in _INT_KEYS:
                vals[key] = int(v)
            elif key == "p":
                vals[key] = math.inf if v.lower() in ("inf", "infinity") else float(v)
            elif key == "checks":
                vals[key] = tuple(_split_list(v))
            elif key == "profile_times":
                vals[key] = tuple(float(s) for s in _split_list(v))
            elif key == "tail_tol":
                vals[key] = None if v.lower() == "none" else float(v)
            elif key == "spectral_filter":
                if v.lower() not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(v)
                vals[key] = v.lower() in ("true", "1", "yes")
            elif key in ("preset", "custom_file", "decay_kind", "name"):
                vals[key] = v
            elif key in _WEIGHT_KEYS:
                k = _WEIGHT_KEYS[key]
                wkw[k] = v if k in ("side", "smoothing") else float(v)
            else:
                raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        except ValueError:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {v!r}") from None
    if wkw:
        base = dict(a=0.0, b=0.0, c=0.0, d=0.0)
        base.update(wkw)
        try:
            vals["weight"] = weights.WeightSpec(**base)
        except ValueError as exc:
            raise ConfigError(f"{source}: {exc}") from None
    if name is not None and "name" not in vals:
        vals["name"] = name
    cfg = RunConfig(**vals)
    cfg.validate()
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path), name=path.stem)


def _read_custom(cfg: RunConfig) -> dynamics.State:
    try:
        data = np.loadtxt(cfg.custom_file, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read custom datum {cfg.custom_file}: {exc}") from None
    if data.shape[1] not in (2, 3):
        raise ConfigError(f"{cfg.custom_file}: expected columns x,u or x,u,rho")
    x = data[:, 0]
    L_file = -x[0]
    dx = np.diff(x)
    if not np.allclose(dx, 2 * L_file / len(x), rtol=1e-9, atol=0):
        raise ConfigError(f"{cfg.custom_file}: abscissae must be a uniform periodic grid on [-L, L)")
    grid = Grid(cfg.L if cfg.L is not None else L_file, cfg.N if cfg.N is not None else 4096)
    if not math.isclose(grid.L, L_file, rel_tol=1e-9):
        raise ConfigError(f"{cfg.custom_file}: file spans L={L_file}, config asks for L={grid.L}")
    u = resample(data[:, 1], grid.N)
    rho = resample(data[:, 2], grid.N) if data.shape[1] == 3 else np.zeros(grid.N)
    au = 1.0 if cfg.amplitude_u is None else cfg.amplitude_u
    ar = 1.0 if cfg.amplitude_rho is None else cfg.amplitude_rho
    return dynamics.State(grid, au * u, ar * rho, 0.0)


def initial_from_config(cfg: RunConfig) -> dynamics.State:
    if cfg.preset == "custom-file":
        return _read_custom(cfg)
    return dynamics.initial_state(cfg.preset, cfg.grid(), cfg.amplitude_u, cfg.amplitude_rho)


def output_dir(cfg: RunConfig, override: Optional[str] = None) -> Path:
    if override:
        return Path(override)
    root = os.environ.get(OUTPUT_ENV)
    return Path(root if root else "runs") / cfg.name


def simulate(cfg: RunConfig) -> dynamics.Trajectory:
    s0 = initial_from_config(cfg)
    dynamics.check_resolution(s0)
    return dynamics.evolve(s0, cfg.T_end, output_every=cfg.output_stride, ux_blowup=cfg.ux_blowup,
                           tail_tol=cfg.tail_tol, spectral_filter=cfg.spectral_filter)


# -- checks ----------------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _check_theorem1(traj, cfg, out: Path) -> CheckResult:
    r = persistence.verify_theorem1(traj, cfg.weight, cfg.p)
    r.to_csv(out / "theorem1.csv")
    return CheckResult("theorem1", r.verdict, f"C={r.C_used:.6g} M={r.M:.6g} worst N/bound={r.worst_ratio:.6g}")


def _check_diffineq(traj, cfg, out: Path) -> CheckResult:
    r = persistence.verify_differential_inequalities(traj, cfg.weight, cfg.p)
    r.to_csv(out / "diffineq.csv")
    worst = ", ".join(f"{c.name}:{c.worst:.3g}" for c in r.components.values())
    return CheckResult("diffineq", r.holds, f"worst relative excess {worst}")


def _check_corollary1(traj, cfg, out: Path) -> CheckResult:
    r = persistence.verify_corollary1(traj, cfg.weight, cfg.p)
    r.to_csv(out / "corollary1.csv")
    return CheckResult("corollary1", r.verdict, f"sup tier1={r.sup1:.6g} sup tier2={r.sup2:.6g}")


def _check_corollary2(traj, cfg, out: Path) -> CheckResult:
    times = [t for t in cfg.profile_times if 0 < t <= traj.times[-1] + 1e-12]
    if not times:
        raise PreconditionError("no profile_times inside (0, T_end]")
    cond = asymptotics.check_condition_series(traj, cfg.psi_d)
    bounds = asymptotics._phi_bounds(traj)
    reports, notes, ok = [], [], bool(np.all(np.isfinite(cond)))
    for t in times:
        r = asymptotics.profile_report(traj, t, bounds=bounds)
        reports.append(r)
        rems = [asymptotics.rho_remainder(traj, t, "+", w) for w in ((12, 16), (16, 20), (20, 24))]
        mono = all(b < a for a, b in zip(rems, rems[1:])) or not any(rems)
        good = r.match_plus <= 0.1 and r.Phi_plus > 0 and r.Phi_minus > 0 and mono
        ok &= good
        notes.append(f"t={t:g}: match={r.match_plus:.2e} rho_rem={['%.2e' % v for v in rems]}")
    asymptotics.write_profile_csv(out / "corollary2.csv", reports)
    with open(out / "corollary2_condition.csv", "w", newline="\n") as fh:
        fh.write("t,condition\n")
        for t, c in zip(traj.times, cond):
            fh.write("%.17g,%.17g\n" % (t, c))
    return CheckResult("corollary2", ok, f"c1={bounds[0]:.6g} c2={bounds[1]:.6g}; " + "; ".join(notes))


def _check_decay(traj, cfg, out: Path) -> CheckResult:
    r = persistence.decay_preservation_check(traj, cfg.decay_kind, cfg.decay_rate)
    r.to_csv(out / "decay.csv")
    return CheckResult("decay", r.verdict, f"initial rate={r.initial_rate:.6g} min rate={np.nanmin(r.rates) if not r.vacuous else math.nan:.6g}")


def _check_propagation(traj, cfg, out: Path) -> CheckResult:
    r = asymptotics.infinite_propagation_check(traj)
    with open(out / "propagation.csv", "w", newline="\n") as fh:
        fh.write("t,max_outside,rate,passed\n")
        fh.write("%.17g,%.17g,%.17g,%s\n" % (r.t, r.max_outside, r.rate, r.passed))
    return CheckResult("propagation", r.passed, f"max|u| beyond |x|=2: {r.max_outside:.3e}, rate={r.rate:.6g}")


def _check_young(traj, cfg, out: Path) -> CheckResult:
    res = weights.young_sweep(cfg.weight, cfg.p, n=cfg.young_pairs, seed=cfg.seed)
    with open(out / "young.csv", "w", newline="\n") as fh:
        fh.write("i,lhs,rhs,c_mod,holds\n")
        for i, r in enumerate(res):
            fh.write("%d,%.17g,%.17g,%.17g,%s\n" % (i, r.lhs, r.rhs, r.c_mod, r.holds))
    n_ok = sum(r.holds for r in res)
    return CheckResult("young", n_ok == len(res), f"{n_ok}/{len(res)} pairs hold")


_RUNNERS = {
    "theorem1": _check_theorem1, "diffineq": _check_diffineq, "corollary1": _check_corollary1,
    "corollary2": _check_corollary2, "decay": _check_decay, "propagation": _check_propagation,
    "young": _check_young,
}


def _write_summary(out: Path, cfg: RunConfig, traj, results: Sequence[CheckResult], status: int) -> None:
    lines = [f"config={cfg.name}", f"preset={cfg.preset}", f"weight={cfg.weight.describe()}", f"p={cfg.p}"]
    if traj is not None:
        lines.append(f"T_reached={traj.times[-1]:.17g}")
        lines.append(f"blown_up={traj.blown_up}")
    for r in results:
        lines.append(f"{r.name}: {'PASS' if r.passed else 'FAIL'} ({r.detail})")
    lines.append(f"exit_status={status}")
    (out / "summary.txt").write_text("\n".join(lines) + "\n")


def run(cfg: RunConfig, out: Optional[str] = None, checks: Optional[Sequence[str]] = None,
        trajectory: Optional[str] = None, save: bool = True) -> int:
    """Simulate (or load), run the requested checks, write artifacts; return the exit status."""
    checks = cfg.checks if checks is None else tuple(checks)
    bad = set(checks) - set(CHECKS)
    if bad:
        log.error("unknown checks %s", sorted(bad))
        return EXIT_PRECONDITION
    try:
        d = output_dir(cfg, out)
        d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        log.error("cannot create output directory: %s", exc)
        return EXIT_PRECONDITION
    results: List[CheckResult] = []
    traj = None
    try:
        if trajectory:
            src = Path(trajectory)
            if not (src / "meta").exists() and (src / "trajectory" / "meta").exists():
                src = src / "trajectory"  # a run directory written by `simulate`
            traj = dynamics.load_trajectory(src)
        else:
            traj = simulate(cfg)
            if save:
                dynamics.save_trajectory(traj, d / "trajectory", meta={"preset": cfg.preset})
        if traj.blown_up:
            log.error("blow-up at t=%s: %s", traj.blowup_time, traj.blowup_reason)
            status = EXIT_BLOWUP
        else:
            for name in checks:
                res = _RUNNERS[name](traj, cfg, d)
                log.info("%s: %s (%s)", name, "PASS" if res.passed else "FAIL", res.detail)
                results.append(res)
            status = EXIT_OK if all(r.passed for r in results) else EXIT_FAIL
    except (PreconditionError, DomainTooSmallError, ValueError, OSError) as exc:
        log.error("%s", exc)
        results.append(CheckResult("precondition", False, str(exc)))
        status = EXIT_PRECONDITION
    except BlowUpError as exc:
        log.error("%s", exc)
        status = EXIT_BLOWUP
    except Exception:  # noqa: BLE001 - every path must map to a documented code
        log.error("internal error\n%s", traceback.format_exc())
        status = EXIT_INTERNAL
    try:
        _write_summary(d, cfg, traj, results, status)
    except OSError as exc:
        log.error("cannot write summary: %s", exc)
        status = status or EXIT_PRECONDITION
    return status


def weights_check(path) -> Tuple[int, str]:
    try:
        spec = weights.WeightSpec.from_text(Path(path).read_text(), source=str(path))
    except OSError as exc:
        return EXIT_PRECONDITION, f"cannot read {path}: {exc}"
    except ConfigError as exc:
        return EXIT_PRECONDITION, str(exc)
    try:
        cert = weights.certify(spec)
    except PreconditionError as exc:
        return EXIT_PRECONDITION, f"refused: {exc}"
    text = f"weight={spec.describe()}\ncompanion={cert.companion.describe()}\n" + cert.to_text()
    for k, v in persistence.traced_constants(cert).items():
        text += f"{k}={v!r}\n"
    return EXIT_OK, text


def _sweep_one(args) -> Tuple[str, int]:
    path, out_root = args
    try:
        cfg = load_config(path)
    except ConfigError as exc:
        log.error("%s", exc)
        return str(path), EXIT_PRECONDITION
    out = str(Path(out_root) / cfg.name) if out_root else None
    return str(path), run(cfg, out=out)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chpersist", description="2CH simulator and weighted-persistence checks")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="evolve the configured datum and save the trajectory")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", help="output directory (default $%s/<name> or runs/<name>)" % OUTPUT_ENV)

    vp = sub.add_parser("verify", help="run verification checks")
    vp.add_argument("--config", required=True)
    vp.add_argument("--check", action="append", choices=CHECKS,
                    help="check to run; repeatable (default: checks= from the config)")
    vp.add_argument("--trajectory", help="reuse a saved trajectory (or a simulate output directory) instead of simulating")
    vp.add_argument("--out")

    wp = sub.add_parser("weights-check", help="print the certificate and traced constant of a weight")
    wp.add_argument("spec")

    sw = sub.add_parser("sweep", help="run several configs in parallel")
    sw.add_argument("configs", nargs="+")
    sw.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    sw.add_argument("--out-root", help="parent of the per-config output directories")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    if args.command == "weights-check":
        status, text = weights_check(args.spec)
        print(text, end="" if text.endswith("\n") else "\n", file=sys.stdout if status == 0 else sys.stderr)
        return status

    if args.command == "sweep":
        jobs = [(c, args.out_root) for c in args.configs]
        with ProcessPoolExecutor(max_workers=max(1, args.workers)) as ex:
            results = list(ex.map(_sweep_one, jobs))
        for path, status in results:
            print(f"{path}: exit {status}")
        return max(status for _, status in results)

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION

    if args.command == "simulate":
        status = run(cfg, out=args.out, checks=())
    else:
        checks = args.check or cfg.checks
        if not checks:
            print("error: no checks requested (use --check or checks= in the config)", file=sys.stderr)
            return EXIT_PRECONDITION
        status = run(cfg, out=args.out, checks=checks, trajectory=args.trajectory)
    d = output_dir(cfg, args.out)
    summary = d / "summary.txt"
    if summary.exists():
        print(summary.read_text(), end="")
    return status


if __name__ == "__main__":
    sys.exit(main())
