"""Command-line front end: configuration, seeding, Monte Carlo orchestration,
and CSV/JSON emission with optional figures rendered alongside the data.

Every output file begins with the resolved run configuration, so a run is
reproducible from its own artifact.  Files are written atomically.  Exit
codes: 0 success, 2 validation, 3 truncation, 4 internal consistency.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import busemann, cgm, fractal, geodesics, plots, queues
from .env import ROLE_SEED, GridSpec, RngPolicy, SampledPath, sample_brownian, sample_field
from .errors import BlppError
from .lpp import LatticePoint
from .stats import parallel_map


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _config_dict(args: argparse.Namespace) -> dict:
    skip = {"func"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _write_csv(path: str, config: dict, header: str, rows: list[str]) -> None:
    lines = [f"# config = {json.dumps(config, sort_keys=True)}", header, *rows]
    _atomic_write(path, "\n".join(lines) + "\n")


def _write_json(path: str, config: dict, payload: dict) -> None:
    _atomic_write(path, json.dumps({"config": config, **payload}, sort_keys=True, indent=1) + "\n")


def _grid(args) -> GridSpec:
    return GridSpec(args.t_min, args.t_max, args.dt)


def _trunc(args) -> queues.TruncationPolicy:
    return queues.TruncationPolicy(
        horizon=args.horizon, safety_margin=args.safety_margin
    )


def _plot_path(out: str) -> str:
    stem, _ = os.path.splitext(out)
    return stem + ".png"


def _add_common(p: argparse.ArgumentParser, t_min=-20.0, t_max=200.0, dt=1e-3) -> None:
    p.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
    p.add_argument("--out", type=str, default=None, help="output file")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--t-min", type=float, default=t_min)
    p.add_argument("--t-max", type=float, default=t_max)
    p.add_argument("--dt", type=float, default=dt)
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--safety-margin", type=float, default=2.5)
    p.add_argument("--threads", type=int, default=None,
                   help="worker count (or set BLPP_LAB_THREADS)")
    p.add_argument("--no-plot", action="store_true", help="skip figure rendering")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate_busemann(args) -> int:
    grid, trunc = _grid(args), _trunc(args)
    policy = RngPolicy(args.seed)
    drifts = [float(x) for x in args.drifts.split(",")]
    sample = busemann.sample_busemann_level(drifts, grid, trunc, policy, trial=args.trial)
    cfg = _config_dict(args)
    out = args.out or "busemann_sample.csv"
    ts = sample.bundle.grid.times()
    labels = [f"h_{p.drift_label:g}" for p in sample.bundle.paths]
    if args.format == "csv":
        header = "t," + ",".join(labels)
        rows = [
            ",".join([_fmt(ts[i])] + [_fmt(p.values[i]) for p in sample.bundle.paths])
            for i in range(0, len(ts), max(1, args.stride))
        ]
        _write_csv(out, cfg, header, rows)
    else:
        _write_json(out, cfg, {
            "t": ts[:: max(1, args.stride)].tolist(),
            "components": {l: p.values[:: max(1, args.stride)].tolist()
                           for l, p in zip(labels, sample.bundle.paths)},
        })
    print(f"simulate-busemann: wrote {out} ({len(drifts)} drifts)")
    if not args.no_plot:
        stride = max(1, len(ts) // 4000)
        plots.plot_bundle(ts[::stride], [p.values[::stride] for p in sample.bundle.paths],
                          labels, _plot_path(out))
    return 0


def cmd_jump_stats(args) -> int:
    grid, trunc = _grid(args), _trunc(args)
    policy = RngPolicy(args.seed)

    def one(trial: int) -> np.ndarray:
        rec = busemann.jump_scan(args.t, args.a, args.b, args.n_drifts,
                                 grid, trunc, policy, trial=trial)
        cells = np.zeros(len(rec.drift_grid) - 1)
        cells[rec.jump_locations] = 1.0
        return cells

    per_cell = np.array(parallel_map(one, range(args.trials), args.threads))
    lams = np.linspace(args.a, args.b, args.n_drifts)
    if lams[0] > 0.0:
        lams = np.concatenate([[0.0], lams])
    est = per_cell.mean(axis=0)
    se = per_cell.std(axis=0, ddof=1) / math.sqrt(args.trials)
    total = float(per_cell.sum(axis=1).mean())
    cfg = _config_dict(args)
    out = args.out or "jump_stats.csv"
    if args.format == "csv":
        rows = [
            ",".join([_fmt(lams[i + 1]), _fmt(args.t), _fmt(est[i]), _fmt(se[i]), str(args.trials)])
            for i in range(len(est))
        ]
        _write_csv(out, cfg, "lambda,t,estimate,stderr,n", rows)
    else:
        _write_json(out, cfg, {"lambda": lams[1:].tolist(), "estimate": est.tolist(),
                               "stderr": se.tolist(), "n": args.trials, "total_mean": total})
    print(f"jump-stats: mean detected jumps {total:.4g} "
          f"(rate formula {busemann.expected_jump_count(args.a, args.b, args.t):.4g}, "
          f"grid-level mean {busemann.expected_detected_jumps(lams, args.t):.4g})")
    if not args.no_plot:
        plots.plot_jump_stats(lams[1:], est, se, _plot_path(out))
    return 0


def cmd_cdf_eval(args) -> int:
    F = float(busemann.increment_cdf(args.z, getattr(args, "lambda"), args.t))
    cfg = _config_dict(args)
    out = args.out or "cdf_eval.csv"
    zs = np.linspace(0.0, max(args.z, 4.0 * getattr(args, "lambda") * args.t + 4.0), 201)
    Fs = busemann.increment_cdf(zs, getattr(args, "lambda"), args.t)
    if args.format == "csv":
        rows = [",".join([_fmt(z), _fmt(getattr(args, "lambda")), _fmt(args.t), _fmt(fv)])
                for z, fv in zip(zs, Fs)]
        _write_csv(out, cfg, "z,lambda,t,F", rows)
    else:
        _write_json(out, cfg, {"z": zs.tolist(), "F": np.asarray(Fs).tolist(),
                               "point": {"z": args.z, "F": F}})
    print(f"cdf-eval: F({args.z:g}; {getattr(args, 'lambda'):g}, {args.t:g}) = {F:.10g} "
          f"(atom at 0: {busemann.increment_atom(getattr(args, 'lambda'), args.t):.10g})")
    if not args.no_plot:
        plots.plot_cdf(zs, Fs, _plot_path(out), getattr(args, "lambda"), args.t)
    return 0


def cmd_verify_identities(args) -> int:
    grid, trunc = _grid(args), _trunc(args)
    policy = RngPolicy(args.seed)
    reports: dict[str, float] = {}

    def track(rep) -> None:
        reports[rep.identity] = max(reports.get(rep.identity, 0.0), rep.max_rel_discrepancy)

    def seeds(trial: int, drifts):
        return [
            sample_brownian(grid, d, 1.0, policy, policy.stream_id(trial, ROLE_SEED, j))
            for j, d in enumerate(drifts)
        ]

    def one(trial: int) -> dict[str, float]:
        local: dict[str, float] = {}
        b1, z1, z2, z3 = seeds(trial, (0.0, 0.7, 1.4, 2.2))
        r = queues.exchange_identity_check(z1, z2, b1, trunc)
        local[r.identity] = r.max_rel_discrepancy
        r = queues.intertwining_check(b1, [z1, z2, z3], trunc)
        local[r.identity] = r.max_rel_discrepancy
        r = queues.closed_form_check(queues.PathBundle((b1, z1, z2, z3), "Y"), trunc)
        local[r.identity] = r.max_rel_discrepancy
        r = queues.algebraic_relations_check(z1, b1, trunc)
        local[r.identity] = r.max_rel_discrepancy
        local["reflection"] = cgm.reflection_identity_check(z1, b1, trunc)
        rep = cgm.sh_correspondence_check((0.6, 1.3, 2.1), grid, trunc, policy,
                                          trials=1, trial_offset=trial)
        local["coupling_correspondence"] = rep.max_rel_discrepancy
        return local

    results = parallel_map(one, range(args.trials), args.threads)
    for res in results:
        for k, v in res.items():
            reports[k] = max(reports.get(k, 0.0), v)
    cfg = _config_dict(args)
    out = args.out or "identities.json"
    payload = {"max_rel_discrepancy": reports, "tolerance": args.tolerance,
               "trials": args.trials,
               "pass": all(v <= args.tolerance for v in reports.values())}
    _write_json(out, cfg, payload)
    for name, v in sorted(reports.items()):
        status = "ok" if v <= args.tolerance else "FAIL"
        print(f"verify-identities: {name:26s} max rel discrepancy {v:.3e}  [{status}]")
    if not args.no_plot:
        plots.plot_identity_report(list(reports), list(reports.values()),
                                   _plot_path(out), tol=args.tolerance)
    if not payload["pass"]:
        print("verify-identities: FAILED", file=sys.stderr)
        return 4
    return 0


def cmd_geodesics(args) -> int:
    grid, trunc = _grid(args), _trunc(args)
    policy = RngPolicy(args.seed)
    thetas = [float(x) for x in args.thetas.split(",")]
    n_levels = args.depth + args.burn_in
    field = sample_field(range(0, n_levels), grid, policy, trial=args.trial)
    stack = geodesics.build_stack(field, thetas, args.depth, trunc, policy,
                                  trial=args.trial, burn_in=args.burn_in)
    traces = []
    rows = []
    for th in thetas:
        for side in ("L", "R"):
            g = geodesics.trace_geodesic(
                stack, LatticePoint(0, args.start_time), th, side)
            label = f"theta={th:g} {side}"
            levels = np.arange(0, args.depth + 1)
            traces.append((levels, g.jump_times, label))
            rows.extend(
                f"{th:g},{side},{lev},{_fmt(tau)}"
                for lev, tau in zip(levels, g.jump_times)
            )
    cfg = _config_dict(args)
    out = args.out or "geodesics.csv"
    if args.format == "csv":
        _write_csv(out, cfg, "theta,side,level,tau", rows)
    else:
        _write_json(out, cfg, {"traces": [
            {"label": lbl, "levels": lv.tolist(), "tau": tt.tolist()}
            for lv, tt, lbl in traces]})
    print(f"geodesics: traced {len(traces)} paths to depth {args.depth}")
    if not args.no_plot:
        plots.plot_geodesics(traces, _plot_path(out))
    return 0


def cmd_competition_interface(args) -> int:
    grid, trunc = _grid(args), _trunc(args)
    policy = RngPolicy(args.seed)
    n_levels = args.depth + args.burn_in
    field = sample_field(range(0, n_levels), grid, policy, trial=args.trial)
    theta_grid = geodesics.DEFAULT_THETA_GRID
    stack = geodesics.build_stack(field, theta_grid, args.depth, trunc, policy,
                                  trial=args.trial, burn_in=args.burn_in)
    ci = geodesics.competition_interface(
        field, LatticePoint(0, args.start_time), args.depth, trunc, policy,
        theta_grid=theta_grid, stack=stack)
    cfg = _config_dict(args)
    out = args.out or "competition_interface.csv"
    if args.format == "csv":
        rows = [
            f"{lev},{_fmt(sl)},{_fmt(sr)}"
            for lev, sl, sr in zip(ci.levels, ci.sigma_left, ci.sigma_right)
        ]
        _write_csv(out, cfg, "level,sigma_L,sigma_R", rows)
    else:
        _write_json(out, cfg, {
            "levels": ci.levels.tolist(),
            "sigma_L": ci.sigma_left.tolist(),
            "sigma_R": ci.sigma_right.tolist(),
            "theta_L": ci.theta_left, "theta_R": ci.theta_right,
        })
    print(f"competition-interface: theta_L={ci.theta_left:g} theta_R={ci.theta_right:g} "
          f"sigma range [{ci.sigma_right.min():.4g}, {ci.sigma_left.max():.4g}]")
    if not args.no_plot:
        plots.plot_competition_interface(ci.levels, ci.sigma_left, ci.sigma_right,
                                         _plot_path(out))
    return 0


def cmd_fractal_dim(args) -> int:
    grid, trunc = _grid(args), _trunc(args)
    policy = RngPolicy(args.seed)
    slopes, fits = [], []
    for s in range(args.seeds):
        if args.mode == "leftmax":
            p1 = sample_brownian(grid, 0.0, 1.0, policy, policy.stream_id(s, ROLE_SEED, 0))
            p2 = sample_brownian(grid, 0.0, 1.0, policy, policy.stream_id(s, ROLE_SEED, 1))
            path = SampledPath(p1.grid, p1.values - p2.values)  # variance-2 path
            pts = fractal.left_max_set(path, args.window)
            fit = fractal.box_dimension(pts)
        elif args.mode == "zeros":
            p = sample_brownian(grid, 0.0, 1.0, policy, policy.stream_id(s, ROLE_SEED, 0))
            pts = fractal.zero_set(p)
            scales = [4 * grid.step * 2 ** k for k in range(2, 10)]
            fit = fractal.box_dimension(pts, scales)
        else:  # interval control
            pts = fractal.PointSet1D(np.arange(grid.n_points), grid.n_points, grid.step)
            fit = fractal.box_dimension(pts)
        slopes.append(fit.slope)
        fits.append(fit)
    cfg = _config_dict(args)
    out = args.out or "fractal_dim.csv"
    fit0 = fits[0]
    rows = [f"{_fmt(d)},{int(c)}" for d, c in zip(fit0.scales, fit0.box_counts)]
    _write_csv(out, cfg, "delta,count", rows)
    jpath = os.path.splitext(out)[0] + "_fit.json"
    _write_json(jpath, cfg, {
        "slope_mean": float(np.mean(slopes)),
        "slope_per_seed": [float(x) for x in slopes],
        "r2_first": fit0.r2,
    })
    print(f"fractal-dim[{args.mode}]: slope {np.mean(slopes):.4f} over {args.seeds} seeds")
    if not args.no_plot:
        plots.plot_dimension_fit(fit0.scales, fit0.box_counts, fit0.slope, fit0.r2,
                                 _plot_path(out))
    return 0


def cmd_cgm_converge(args) -> int:
    policy = RngPolicy(args.seed)
    from scipy.special import ndtr

    ks_rows = []
    atom_rows = []
    t = args.t
    lam1, lam2 = args.lam1, args.lam2
    gap = lam2 - lam1
    for k in [int(x) for x in args.k_list.split(",")]:
        vals = np.empty(args.trials)
        stick = np.empty(args.trials, dtype=bool)

        def one(trial: int, k=k):
            pair = cgm.cgm_scaled_pair(lam1, lam2, k, policy, trial=trial,
                                       horizon_exponent=args.horizon_exponent)
            _, second = pair.increment(t)
            return second, pair.sticking_at(t)

        res = parallel_map(one, range(args.trials), args.threads)
        for i, (v, st) in enumerate(res):
            vals[i], stick[i] = v, st
        z = (np.sort(vals) - lam2 * t) / math.sqrt(t)
        ec = np.arange(1, args.trials + 1) / args.trials
        ks = float(np.abs(ec - ndtr(z)).max())
        ks_rows.append((k, ks))
        atom_rows.append((k, float(stick.mean())))
    cfg = _config_dict(args)
    out = args.out or "cgm_converge.csv"
    rows = [f"{k},{_fmt(ks)},{args.trials}" for k, ks in ks_rows]
    _write_csv(out, cfg, "k,ks,trials", rows)
    atom_target = busemann.increment_atom(gap, t) if gap > 0 else 1.0
    print("cgm-converge: " + "  ".join(f"k={k}: KS={ks:.4f}" for k, ks in ks_rows))
    print("cgm-converge: sticking freq " +
          "  ".join(f"k={k}: {a:.4f}" for k, a in atom_rows) +
          f"  (target {atom_target:.4f})")
    if not args.no_plot:
        plots.plot_ks_trend(ks_rows, _plot_path(out))
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="blpp-lab",
        description="Simulation and verification laboratory for Brownian last-passage percolation",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate-busemann", help="sample the coupled level family")
    _add_common(p)
    p.add_argument("--drifts", type=str, default="0.5,1,2")
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--stride", type=int, default=100, help="output row stride")
    p.set_defaults(func=cmd_simulate_busemann)

    p = sub.add_parser("jump-stats", help="jump counts of the fixed-time drift scan")
    _add_common(p)
    p.add_argument("--t", type=float, default=math.pi)
    p.add_argument("--a", type=float, default=0.0)
    p.add_argument("--b", type=float, default=1.0)
    p.add_argument("--n-drifts", type=int, default=9)
    p.add_argument("--trials", type=int, default=200)
    p.set_defaults(func=cmd_jump_stats)

    p = sub.add_parser("cdf-eval", help="closed-form increment distribution")
    _add_common(p)
    p.add_argument("--z", type=float, required=True)
    p.add_argument("--lambda", type=float, required=True, dest="lambda")
    p.add_argument("--t", type=float, required=True)
    p.set_defaults(func=cmd_cdf_eval)

    p = sub.add_parser("verify-identities", help="deterministic identity suite")
    _add_common(p)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--tolerance", type=float, default=1e-9)
    p.set_defaults(func=cmd_verify_identities)

    p = sub.add_parser("geodesics", help="trace semi-infinite geodesics")
    _add_common(p)
    p.add_argument("--thetas", type=str, default="0.5,1,2")
    p.add_argument("--depth", type=int, default=30)
    p.add_argument("--burn-in", type=int, default=8)
    p.add_argument("--start-time", type=float, default=0.0)
    p.add_argument("--trial", type=int, default=0)
    p.set_defaults(func=cmd_geodesics)

    p = sub.add_parser("competition-interface", help="interface crossings and directions")
    _add_common(p)
    p.add_argument("--depth", type=int, default=10)
    p.add_argument("--burn-in", type=int, default=8)
    p.add_argument("--start-time", type=float, default=0.0)
    p.add_argument("--trial", type=int, default=0)
    p.set_defaults(func=cmd_competition_interface)

    p = sub.add_parser("fractal-dim", help="box-counting dimension estimation")
    _add_common(p)
    p.add_argument("--mode", choices=("leftmax", "zeros", "interval"), default="leftmax")
    p.add_argument("--window", type=float, default=1.0)
    p.add_argument("--seeds", type=int, default=20)
    p.set_defaults(func=cmd_fractal_dim)

    p = sub.add_parser("cgm-converge", help="discrete-to-continuum scaling bridge")
    _add_common(p)
    p.add_argument("--lam1", type=float, default=0.0)
    p.add_argument("--lam2", type=float, default=1.0)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--k-list", type=str, default="100,1000,10000")
    p.add_argument("--trials", type=int, default=400)
    p.add_argument("--horizon-exponent", type=float, default=40.0)
    p.set_defaults(func=cmd_cgm_converge)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except BlppError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
