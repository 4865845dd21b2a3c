"""Command-line front end: run, verify, duality, oracle.

Exit codes: 0 success, 1 invariant-verdict failure, 2 convexity lost or
domain degeneration, 3 configuration error.  Run configuration can come from
a flat key=value config file; flags override file entries.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import bodies, curvfn, diagnostics, flow, oracle, svgout
from .errors import ConfigurationError, ConvexityLostError, IcfError, StateInvalidError
from .hypersurface import Ambient, SupportState, load_state, save_state
from .sphgrid import build_grid

FORMAT_VERSION = 1

_RUN_KEYS = ("space", "f", "alpha", "init", "grid", "t_end", "cfl", "snap_every",
             "out", "save_states", "unsafe_alpha")


@dataclass
class ExperimentConfig:
    space: str = "euclidean"
    f: str = "power-mean:1"
    alpha: float = 1.0
    init: str = "sphere:1"
    grid: str = "64x32"
    t_end: float = 1.0
    cfl: float = 0.2
    snap_every: float = 0.05
    out: str | None = None
    save_states: bool = False
    unsafe_alpha: bool = False

    def to_text(self) -> str:
        lines = [f"format_version={FORMAT_VERSION}"]
        for key in _RUN_KEYS:
            value = getattr(self, key)
            if value is None:
                continue
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{key}={value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        cfg = cls()
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigurationError(f"config line {lineno} is not key=value: {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key == "format_version":
                continue
            if key not in _RUN_KEYS:
                raise ConfigurationError(f"unknown config key {key!r}")
            if key in ("alpha", "t_end", "cfl", "snap_every"):
                setattr(cfg, key, float(value))
            elif key in ("save_states", "unsafe_alpha"):
                setattr(cfg, key, value.lower() in ("1", "true", "yes"))
            else:
                setattr(cfg, key, value)
        return cfg


def _parse_grid(text: str):
    try:
        I, J = (int(v) for v in text.lower().split("x"))
    except ValueError as exc:
        raise ConfigurationError(f"bad grid spec {text!r}, expected IxJ") from exc
    return build_grid(I, J)


def _build_run(cfg: ExperimentConfig):
    try:
        ambient = Ambient(cfg.space)
    except ValueError as exc:
        raise ConfigurationError(f"unknown space {cfg.space!r}") from exc
    grid = _parse_grid(cfg.grid)
    f = curvfn.construct(cfg.f, 2)
    field = bodies.initial_field(grid, cfg.init)
    state = SupportState(ambient, grid, field, 0.0)
    flow_cfg = flow.FlowConfig(ambient, f, cfg.alpha, cfg.t_end, cfl=cfg.cfl,
                               snap_every=cfg.snap_every, unsafe_alpha=cfg.unsafe_alpha)
    return flow_cfg, state


# ---------------------------------------------------------------------------
# subcommands


def cmd_run(args) -> int:
    cfg = ExperimentConfig.from_text(open(args.config).read()) if args.config \
        else ExperimentConfig()
    for key in _RUN_KEYS:
        flag = getattr(args, key, None)
        if flag is not None and flag is not False:
            setattr(cfg, key, flag)
    flow_cfg, state = _build_run(cfg)

    result = flow.run(flow_cfg, state, normalized=args.normalized)
    decay = None
    if flow_cfg.ambient in (Ambient.HYPERBOLIC, Ambient.EUCLIDEAN):
        decay = diagnostics.fit_decay(result.records, flow_cfg.ambient)

    out = cfg.out or "run"
    with open(out + ".csv", "w") as fh:
        fh.write(diagnostics.records_to_csv(result.records))
    summary = diagnostics.summary_dict(result, decay)
    summary["config"] = {k: getattr(cfg, k) for k in _RUN_KEYS if getattr(cfg, k) is not None}
    with open(out + ".json", "w") as fh:
        json.dump(summary, fh, indent=1)
        fh.write("\n")
    if args.svg:
        with open(out + ".svg", "w") as fh:
            fh.write(svgout.run_svg(result, decay))
    if cfg.save_states:
        state_dir = out + ".states"
        os.makedirs(state_dir, exist_ok=True)
        for k, (_, snap_state) in enumerate(result.snapshots):
            save_state(os.path.join(state_dir, f"snap_{k:04d}"), snap_state)

    print(f"termination: {result.termination}  steps: {result.steps}")
    if result.t_star_estimate is not None:
        print(f"T* estimate: {result.t_star_estimate:.6f}")
    if decay is not None and decay.rate is not None:
        print(f"decay rate: {decay.rate:.4f} (fit residual {decay.residual:.4f})")
    print(f"wrote {out}.csv, {out}.json" + (f", {out}.svg" if args.svg else ""))

    if result.termination == "convexity_lost":
        print(f"degeneration: {result.failure}", file=sys.stderr)
        return 2
    if not all(summary["verdicts"].values()):
        bad = [k for k, v in summary["verdicts"].items() if not v]
        print(f"verdict failure: {', '.join(bad)}", file=sys.stderr)
        return 1
    return 0


def cmd_verify(args) -> int:
    f = curvfn.construct(args.f, args.n)
    report = curvfn.verify_properties(f, args.samples, args.seed)
    print(report.table())
    # boundary decay and the pinching constant are informational: they
    # classify admissibility as a flow speed, not correctness of the function
    decay = curvfn.boundary_decay_scan(f, args.paths, args.seed)
    print(decay.table())
    if decay.decays:
        cprime, verdict = diagnostics.pinching_bound_constant(f, C=4.0)
        print(f"pinching constant C'(C=4) = {cprime:.6g} [{verdict}]")
    else:
        print("pinching constant: skipped (dual does not decay on the boundary)")
    fd = oracle.fd_check(f, np.linspace(1.0, 2.0, args.n))
    print(f"finite differences: grad dev {fd.grad_max_rel:.2e}  hess dev {fd.hess_max_rel:.2e}")
    ok = report.passed and fd.grad_max_rel < 1e-6 and fd.hess_max_rel < 1e-6
    return 0 if ok else 1


def cmd_duality(args) -> int:
    all_series = []
    for prefix in args.runs:
        with open(prefix + ".json") as fh:
            summary = json.load(fh)
        run_cfg = summary["config"]
        state_dir = prefix + ".states"
        if not os.path.isdir(state_dir):
            raise ConfigurationError(
                f"{state_dir} not found; re-run with --save-states to enable duality checks")
        names = sorted(n[:-5] for n in os.listdir(state_dir) if n.endswith(".json"))
        states = [load_state(os.path.join(state_dir, n)) for n in names]
        f = curvfn.construct(run_cfg["f"], 2)
        ambient = Ambient(run_cfg["space"])
        if ambient is not Ambient.SPHERICAL:
            raise ConfigurationError("duality checks require a spherical run")
        flow_cfg = flow.FlowConfig(ambient, f, float(run_cfg["alpha"]),
                                   float(run_cfg["t_end"]),
                                   snap_every=float(run_cfg["snap_every"]))
        snapshots = [(st.t, st) for st in states]
        fake = flow.FlowRun(flow_cfg, snapshots, [], "t_end", 0)
        series = flow.verify_polar_duality_residual(fake)
        all_series.append((prefix, run_cfg["grid"], series))
        print(f"{prefix} ({run_cfg['grid']}):")
        for t, r in series:
            print(f"  t={t:.4f}  max|residual| = {r:.6e}")

    if len(all_series) < 2:
        print("single resolution given; convergence order not computable", file=sys.stderr)
        return 0
    meds = [float(np.median([r for _, r in series])) for _, _, series in all_series]
    orders = [math.log2(a / b) for a, b in zip(meds, meds[1:])]
    print("median residuals:", " ".join(f"{m:.3e}" for m in meds))
    print("observed orders:", " ".join(f"{o:.2f}" for o in orders))
    return 0 if min(orders) >= 1.5 else 1


def cmd_oracle(args) -> int:
    r = oracle.sphere_radius(args.space, args.alpha, args.r0, args.t)
    print(f"{r!r}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _add_run_flags(p):
    p.add_argument("--config", help="flat key=value config file; flags override")
    p.add_argument("--space", choices=[a.value for a in Ambient])
    p.add_argument("--f", help="curvature function spec, e.g. power-mean:2")
    p.add_argument("--alpha", type=float)
    p.add_argument("--init", help="sphere:<r> | spheroid:<a>,<b>,<c> | "
                                  "perturbed-sphere:<r>,<eps>,<mode>")
    p.add_argument("--grid", help="IxJ, e.g. 128x64")
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--cfl", type=float)
    p.add_argument("--snap-every", dest="snap_every", type=float)
    p.add_argument("--out")
    p.add_argument("--save-states", dest="save_states", action="store_true", default=None)
    p.add_argument("--unsafe-alpha", dest="unsafe_alpha", action="store_true", default=None)
    p.add_argument("--normalized", action="store_true",
                   help="Euclidean rescaled flow (round spheres stationary)")
    p.add_argument("--svg", action="store_true", help="emit a profile/diagnostics figure")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="icf",
                                     description="inverse curvature flow laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="integrate a flow and emit CSV/JSON/SVG")
    _add_run_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_verify = sub.add_parser("verify", help="property suite for a curvature function")
    p_verify.add_argument("--f", required=True)
    p_verify.add_argument("--n", type=int, default=2)
    p_verify.add_argument("--samples", type=int, default=10000)
    p_verify.add_argument("--seed", type=int, default=0)
    p_verify.add_argument("--paths", type=int, default=16)
    p_verify.set_defaults(func=cmd_verify)

    p_dual = sub.add_parser("duality", help="polar-duality residual of saved spherical runs")
    p_dual.add_argument("runs", nargs="+", help="run output prefixes (with saved states)")
    p_dual.set_defaults(func=cmd_duality)

    p_oracle = sub.add_parser("oracle", help="geodesic-sphere reference radius")
    p_oracle.add_argument("--space", required=True, choices=[a.value for a in Ambient])
    p_oracle.add_argument("--alpha", type=float, default=1.0)
    p_oracle.add_argument("--r0", type=float, required=True)
    p_oracle.add_argument("--t", type=float, required=True)
    p_oracle.set_defaults(func=cmd_oracle)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 3
    except (ConvexityLostError, StateInvalidError) as exc:
        print(f"degeneration: {exc}", file=sys.stderr)
        return 2
    except IcfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
