"""Command-line entry point: configuration parsing, orchestration, file I/O."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .acc import (
    AccParams,
    BrakeScenario,
    evaluate_acc_trace,
    make_acc_game,
    recommend_p_range,
)
from .control_synthesis import (
    CostSpec,
    riccati_fixed_point,
    rho_min_bounds,
    rho_min_empirical,
    stationary_policy,
)
from .error_counter import (
    ErrorCounterConfig,
    closed_form_hitting_time,
    drift,
    expected_hitting_steps,
    expected_hitting_time,
    transition_matrix,
)
from .policies import ClosedLoopAttackPolicy, OpenLoopAttackPolicy, TransmissionPolicy
from .simulator import GameConfig, monte_carlo, run_episode
from .system_model import ContinuousSystem, LinearSystem, discretize_zoh

FLOAT_FMT = "%.17g"


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if x is None:
        return ""
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return FLOAT_FMT % float(x)


def _write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _write_json(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    def conv(v):
        if v is None or isinstance(v, str):
            return v
        if isinstance(v, (bool, np.bool_)):
            return bool(v)
        if isinstance(v, (int, np.integer)):
            return int(v)
        return float(v)

    data = [dict(zip(header, [conv(v) for v in row])) for row in rows]
    path.write_text(json.dumps(data, indent=2) + "\n")


def _write_table(path: Path, header, rows, fmt: str) -> None:
    if fmt == "json":
        _write_json(path.with_suffix(".json"), header, rows)
    else:
        _write_csv(path, header, rows)


class ConfigError(ValueError):
    pass


def _check_keys(section: dict, allowed: set, where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")


def _matrix(cfg: dict, key: str, where: str):
    if key not in cfg:
        raise ConfigError(f"missing '{key}' in {where}")
    arr = np.asarray(cfg[key], dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"non-finite entries in {where}.{key}")
    return arr


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be an object")
    return cfg


def build_system(cfg: dict) -> LinearSystem:
    sec = cfg.get("system")
    if sec is None:
        raise ConfigError("missing 'system' section")
    if "continuous" in sec:
        _check_keys(sec, {"continuous", "sigma_v"}, "system")
        cs = sec["continuous"]
        _check_keys(cs, {"A", "B", "G", "dt"}, "system.continuous")
        sigma = np.asarray(sec["sigma_v"], dtype=float) if "sigma_v" in sec else None
        return discretize_zoh(ContinuousSystem(
            A_c=_matrix(cs, "A", "system.continuous"),
            B_c=_matrix(cs, "B", "system.continuous"),
            G_c=np.asarray(cs["G"], dtype=float) if "G" in cs else None,
            dt=float(cs.get("dt", 0.1)),
            sigma_v=sigma,
        ))
    _check_keys(sec, {"A", "B", "G", "sigma_v"}, "system")
    return LinearSystem(
        A=_matrix(sec, "A", "system"),
        B=_matrix(sec, "B", "system"),
        G=np.asarray(sec["G"], dtype=float) if "G" in sec else None,
        sigma_v=np.asarray(sec["sigma_v"], dtype=float) if "sigma_v" in sec else None,
    )


def build_cost(cfg: dict) -> CostSpec:
    sec = cfg.get("cost")
    if sec is None:
        raise ConfigError("missing 'cost' section")
    _check_keys(sec, {"Q", "R", "N"}, "cost")
    return CostSpec(
        Q=_matrix(sec, "Q", "cost"),
        R=_matrix(sec, "R", "cost"),
        N=int(sec["N"]) if sec.get("N") is not None else None,
    )


def build_attacker(cfg: dict):
    sec = cfg.get("attacker")
    if sec is None:
        return None
    _check_keys(sec, {"kind", "iota", "p_prime"}, "attacker")
    kind = sec.get("kind", "none")
    if kind in ("none", None):
        return None
    if kind in ("dominant-closed", "dominant-open"):
        return kind
    if kind == "closed":
        if "iota" not in sec:
            raise ConfigError("attacker kind 'closed' needs 'iota'")
        return ClosedLoopAttackPolicy(np.asarray(sec["iota"], dtype=float))
    if kind == "open":
        if "p_prime" not in sec:
            raise ConfigError("attacker kind 'open' needs 'p_prime'")
        return OpenLoopAttackPolicy(float(sec["p_prime"]))
    raise ConfigError(f"unknown attacker kind {kind!r}")


def build_counter(cfg: dict) -> ErrorCounterConfig | None:
    sec = cfg.get("counter")
    if sec is None:
        return None
    _check_keys(sec, {"e_plus", "e_minus", "e_bar"}, "counter")
    return ErrorCounterConfig(
        e_plus=int(sec["e_plus"]),
        e_bar=int(sec["e_bar"]),
        e_minus=int(sec.get("e_minus", -1)),
    )


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("BUSOFF_OUT_DIR") or "."
    path = Path(out)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"cannot create output directory {path}: {e}") from e
    return path


def _write_manifest(out: Path, subcommand: str, resolved: dict) -> None:
    def default(o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, (np.integer,)):
            return int(o)
        if isinstance(o, (np.floating,)):
            return float(o)
        raise TypeError(f"not JSON-serializable: {type(o)}")

    manifest = {"tool": "busoff", "version": __version__,
                "subcommand": subcommand, "resolved": resolved}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=default) + "\n")


def _trace_header(n: int, m: int, extra: list[str] | None = None) -> list[str]:
    cols = ["t"] + [f"x{i}" for i in range(n)] + [f"u{j}" for j in range(m)]
    cols += ["alpha", "beta", "applied", "S", "stage_cost"]
    return cols + (extra or [])


def _trace_rows(tr):
    for t in range(tr.steps):
        yield ([t] + list(tr.x[t]) + list(tr.u[t]) +
               [int(tr.alpha[t]), int(tr.beta[t]), int(tr.applied[t]),
                int(tr.S[t]), tr.stage_cost[t]])


# --------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    cfg = load_config(args.config)
    sys_ = build_system(cfg)
    cost = build_cost(cfg)
    p = args.p if args.p is not None else cfg.get("p")
    if p is None:
        raise ConfigError("transmission probability 'p' required")
    p = float(p)
    if not 0.0 < p <= 1.0:
        raise ConfigError(f"p must be in (0, 1], got {p}")
    kind = args.attacker or cfg.get("attacker_kind", "closed")
    tol = args.tol if args.tol is not None else float(cfg.get("tol", 1e-9))
    max_iter = args.max_iter if args.max_iter is not None else int(cfg.get("max_iter", 100_000))
    out = _out_dir(args)

    rho = p * (1.0 - p) if kind in ("closed", "open") else p
    _write_manifest(out, "synth", {
        "system": {"A": sys_.A, "B": sys_.B, "G": sys_.G, "sigma_v": sys_.sigma_v},
        "cost": {"Q": cost.Q, "R": cost.R, "N": cost.N},
        "p": p, "attacker_kind": kind, "rho": rho,
        "tol": tol, "max_iter": max_iter,
    })
    try:
        policy = stationary_policy(sys_, cost, p,
                                   attacker_kind={"closed": "closed", "open": "open",
                                                  "none": "none"}[kind],
                                   tol=tol, max_iter=max_iter)
    except ValueError:
        report = riccati_fixed_point(sys_, cost, rho, tol=tol, max_iter=max_iter)
        _write_csv(out / "residuals.csv", ["iter", "residual"],
                   [(i + 1, r) for i, r in enumerate(report.residuals)])
        print(f"synth: fixed point {report.status} at rho={rho:.6g} "
              f"after {report.iterations} iterations")
        return 2
    report = policy.report
    _write_csv(out / "residuals.csv", ["iter", "residual"],
               [(i + 1, r) for i, r in enumerate(report.residuals)])
    np.savetxt(out / "K.csv", policy.K, delimiter=",", fmt=FLOAT_FMT)
    np.savetxt(out / "P_inf.csv", policy.P_inf, delimiter=",", fmt=FLOAT_FMT)
    if policy.P1_inf is not None:
        np.savetxt(out / "P1_inf.csv", policy.P1_inf, delimiter=",", fmt=FLOAT_FMT)
        np.savetxt(out / "P2_inf.csv", policy.P2_inf, delimiter=",", fmt=FLOAT_FMT)
    print(f"synth: converged in {report.iterations} iterations "
          f"(rho={rho:.6g}, final residual {report.residuals[-1]:.3g}); "
          f"outputs in {out}")
    return 0


def cmd_hitting_time(args) -> int:
    cfg = load_config(args.config)
    counter = build_counter(cfg) if "counter" in cfg else None
    e_plus = args.e_plus if args.e_plus is not None else (counter.e_plus if counter else None)
    e_bar = args.e_bar if args.e_bar is not None else (counter.e_bar if counter else None)
    e_minus = args.e_minus if args.e_minus is not None else (counter.e_minus if counter else -1)
    if e_plus is None or e_bar is None:
        raise ConfigError("need e_plus and e_bar (flags or 'counter' config section)")
    counter = ErrorCounterConfig(e_plus=int(e_plus), e_bar=int(e_bar), e_minus=int(e_minus))
    s0 = args.s0

    if args.q is not None:
        qs = [args.q]
        p = args.p
    elif args.p is not None:
        qs = [args.p]  # dominant closed-loop attack: q = p
        p = args.p
    elif "q_grid" in cfg:
        qs = [float(q) for q in cfg["q_grid"]]
        p = None
    else:
        raise ConfigError("need --q, --p, or a 'q_grid' config entry")

    header = ["q", "drift", "expected_messages", "expected_steps"]
    if args.paper_closed_form:
        header.append("paper_closed_form")
    rows = []
    for q in qs:
        chain = transition_matrix(counter, q)
        v = expected_hitting_time(chain, s0)
        steps = expected_hitting_steps(chain, s0, p) if p else None
        row = [q, drift(counter, q), v, steps]
        if args.paper_closed_form:
            row.append(closed_form_hitting_time(q))
        rows.append(row)
    out = _out_dir(args)
    _write_csv(out / "hitting_time.csv", header, rows)
    _write_manifest(out, "hitting-time", {
        "counter": {"e_plus": counter.e_plus, "e_minus": counter.e_minus,
                    "e_bar": counter.e_bar},
        "s0": s0, "q_values": qs, "p": p,
        "paper_closed_form": bool(args.paper_closed_form),
    })
    w = csv.writer(sys.stdout)
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return 0


def cmd_rho_min(args) -> int:
    cfg = load_config(args.config)
    sys_ = build_system(cfg)
    cost = build_cost(cfg)
    lower, upper = rho_min_bounds(sys_.A)
    out = _out_dir(args)
    result = {"rho_min_lower": lower, "rho_min_upper": upper}
    if args.empirical:
        result["rho_min_empirical"] = rho_min_empirical(sys_, cost, tol_rho=args.tol_rho)
    _write_manifest(out, "rho-min", {
        "system": {"A": sys_.A, "B": sys_.B},
        "cost": {"Q": cost.Q, "R": cost.R},
        "empirical": bool(args.empirical), "tol_rho": args.tol_rho,
        "result": result,
    })
    print(f"rho_min bounds: [{lower:.6g}, {upper:.6g}]")
    if args.empirical:
        print(f"rho_min empirical (bisection): {result['rho_min_empirical']:.6g}")
    else:
        print("rho_min empirical: not computed (pass --empirical)")
    return 0


SUMMARY_HEADER = ["seed", "total_cost", "xi", "max_counter", "busoff"]


def _run_batch(game: GameConfig, seeds: list[int], out: Path, fmt: str,
               traces: bool, label: str = "") -> list[dict]:
    rows = []
    for seed in seeds:
        tr = run_episode(game, seed)
        rows.append({
            "seed": seed, "total_cost": tr.total_cost,
            "xi": tr.xi, "max_counter": int(tr.S.max()) if tr.S.size else 0,
            "busoff": tr.xi is not None,
        })
        if traces:
            name = f"trace{('_' + label) if label else ''}_seed{seed}.csv"
            _write_table(out / name, _trace_header(game.sys.n, game.sys.m),
                         list(_trace_rows(tr)), fmt)
    return rows


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    sys_ = build_system(cfg)
    cost = build_cost(cfg)
    run = cfg.get("run", {})
    _check_keys(run, {"p", "horizon", "x0", "post_busoff", "controller"}, "run")
    p = float(args.p if args.p is not None else run.get("p", 0.5))
    horizon = int(args.horizon if args.horizon is not None else run.get("horizon", 100))
    x0 = np.asarray(run.get("x0", np.zeros(sys_.n)), dtype=float)
    controller_kind = run.get("controller", "stationary")
    attacker = build_attacker(cfg)
    counter = build_counter(cfg)

    if controller_kind == "zero":
        controller = None
    elif controller_kind == "stationary":
        kind = ("none" if attacker is None else
                "open" if attacker == "dominant-open" or isinstance(attacker, OpenLoopAttackPolicy)
                else "closed")
        controller = stationary_policy(sys_, cost, p, attacker_kind=kind)
    else:
        raise ConfigError(f"unknown controller {controller_kind!r}")

    seeds = list(range(args.base_seed, args.base_seed + args.seeds))
    game = GameConfig(sys=sys_, cost=cost, tx=TransmissionPolicy(p), horizon=horizon,
                      x0=x0, attacker=attacker, counter=counter,
                      controller=controller,
                      post_busoff=run.get("post_busoff", "continue"))
    out = _out_dir(args)
    rows = _run_batch(game, seeds, out, args.format, args.traces)
    table = [[r[k] for k in SUMMARY_HEADER] for r in rows]
    costs = [r["total_cost"] for r in rows]
    busoff = sum(r["busoff"] for r in rows)
    table.append(["aggregate", float(np.mean(costs)), None, None, busoff / len(rows)])
    _write_table(out / "summary.csv", SUMMARY_HEADER, table, args.format)
    _write_manifest(out, "simulate", {
        "system": {"A": sys_.A, "B": sys_.B, "G": sys_.G, "sigma_v": sys_.sigma_v},
        "cost": {"Q": cost.Q, "R": cost.R, "N": cost.N},
        "p": p, "horizon": horizon, "x0": x0,
        "attacker": cfg.get("attacker"), "counter": cfg.get("counter"),
        "controller": controller_kind, "seeds": seeds, "format": args.format,
    })
    print(f"simulate: {len(rows)} episodes, mean cost {np.mean(costs):.6g}, "
          f"bus-off frequency {busoff / len(rows):.3f}; outputs in {out}")
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    sys_ = build_system(cfg)
    cost = build_cost(cfg)
    run = cfg.get("run", {})
    _check_keys(run, {"p_list", "horizon", "x0", "post_busoff", "controller"}, "run")
    p_list = args.p_list or [float(p) for p in run.get("p_list", [])]
    if not p_list:
        raise ConfigError("sweep needs --p-list or run.p_list")
    horizon = int(args.horizon if args.horizon is not None else run.get("horizon", 100))
    x0 = np.asarray(run.get("x0", np.zeros(sys_.n)), dtype=float)
    attacker = build_attacker(cfg)
    counter = build_counter(cfg)
    seeds = list(range(args.base_seed, args.base_seed + args.seeds))
    out = _out_dir(args)

    header = ["p", "n_episodes", "mean_cost", "busoff_frequency", "mean_xi"]
    rows = []
    for p in p_list:
        kind = ("none" if attacker is None else
                "open" if attacker == "dominant-open" or isinstance(attacker, OpenLoopAttackPolicy)
                else "closed")
        controller = stationary_policy(sys_, cost, p, attacker_kind=kind)
        game = GameConfig(sys=sys_, cost=cost, tx=TransmissionPolicy(p),
                          horizon=horizon, x0=x0, attacker=attacker,
                          counter=counter, controller=controller,
                          post_busoff=run.get("post_busoff", "continue"))
        summary = monte_carlo(game, len(seeds), base_seed=args.base_seed)
        rows.append([p, summary.n_episodes, summary.mean_cost,
                     summary.busoff_frequency, summary.mean_xi])
    _write_table(out / "sweep.csv", header, rows, args.format)
    _write_manifest(out, "sweep", {
        "system": {"A": sys_.A, "B": sys_.B, "G": sys_.G, "sigma_v": sys_.sigma_v},
        "cost": {"Q": cost.Q, "R": cost.R, "N": cost.N},
        "p_list": p_list, "horizon": horizon, "x0": x0,
        "attacker": cfg.get("attacker"), "counter": cfg.get("counter"),
        "seeds": seeds, "format": args.format,
    })
    for row in rows:
        print(f"sweep p={row[0]}: mean cost {row[2]:.6g}, "
              f"bus-off frequency {row[3]:.3f}")
    print(f"outputs in {out}")
    return 0


ACC_SUMMARY_HEADER = ["seed", "min_gap", "final_gap", "crash_time",
                      "busoff_time", "max_error_counter"]


def cmd_acc(args) -> int:
    attacker = None if args.attacker == "none" else args.attacker
    params = AccParams()
    scn = BrakeScenario()
    game = make_acc_game(args.p, attacker=attacker,
                         controller_mode=args.controller,
                         params=params, scn=scn,
                         canonical_lag=not args.printed_lag)
    out = _out_dir(args)
    seeds = list(range(args.base_seed, args.base_seed + args.seeds))
    rows = []
    for seed in seeds:
        tr = run_episode(game, seed)
        acc_run = evaluate_acc_trace(tr, params=params, scn=scn)
        m = acc_run.metrics
        rows.append([seed, m.min_gap, m.final_gap, m.crash_time,
                     m.busoff_time, m.max_error_counter])
        if args.traces:
            extra_rows = []
            for t, base in enumerate(_trace_rows(tr)):
                extra_rows.append(base + [acc_run.gap_actual[t], acc_run.v_ego[t],
                                          acc_run.v_lead[t]])
            _write_table(out / f"trace_seed{seed}.csv",
                         _trace_header(game.sys.n, game.sys.m,
                                       ["gap_actual", "v_ego", "v_lead"]),
                         extra_rows, args.format)
    _write_table(out / "acc_metrics.csv", ACC_SUMMARY_HEADER, rows, args.format)
    rec = recommend_p_range(game.sys.A)
    _write_manifest(out, "acc", {
        "p": args.p, "attacker": args.attacker, "controller": args.controller,
        "canonical_lag": not args.printed_lag, "seeds": seeds,
        "params": vars(params) | {"q_diag": list(params.q_diag)},
        "scenario": vars(scn),
        "recommended_p": {"stability": rec.stability_kind,
                          "drift_upper": rec.drift_upper},
    })
    crashes = sum(1 for r in rows if r[3] is not None)
    busoffs = sum(1 for r in rows if r[4] is not None)
    print(f"acc p={args.p} attacker={args.attacker}: {len(rows)} seeds, "
          f"crash frequency {crashes / len(rows):.3f}, "
          f"bus-off frequency {busoffs / len(rows):.3f}; outputs in {out}")
    return 0


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="busoff",
        description="Bus-off attacker/defender game toolkit",
    )
    ap.add_argument("--version", action="version", version=f"busoff {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", help="output directory (default $BUSOFF_OUT_DIR or .)")

    p = sub.add_parser("synth", help="stationary Nash gains via the modified Riccati fixed point")
    common(p)
    p.add_argument("--p", type=float, help="transmission probability")
    p.add_argument("--attacker", choices=["closed", "open", "none"])
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", type=int, dest="max_iter")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("hitting-time", help="expected bus-off times from the counter chain")
    common(p)
    p.add_argument("--q", type=float, help="collision probability")
    p.add_argument("--p", type=float, help="transmission probability (q = p under the dominant attack)")
    p.add_argument("--e-plus", type=int, dest="e_plus")
    p.add_argument("--e-minus", type=int, dest="e_minus")
    p.add_argument("--e-bar", type=int, dest="e_bar")
    p.add_argument("--s0", type=int, default=0)
    p.add_argument("--paper-closed-form", action="store_true",
                   help="add the 1 + 1/q comparison column")
    p.set_defaults(func=cmd_hitting_time)

    p = sub.add_parser("rho-min", help="critical arrival probability bounds")
    common(p)
    p.add_argument("--empirical", action="store_true",
                   help="bisection estimate on top of the spectral bounds")
    p.add_argument("--tol-rho", type=float, default=0.005, dest="tol_rho")
    p.set_defaults(func=cmd_rho_min)

    p = sub.add_parser("simulate", help="Monte Carlo episodes of the full game")
    common(p)
    p.add_argument("--p", type=float)
    p.add_argument("--horizon", type=int)
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--base-seed", type=int, default=0, dest="base_seed")
    p.add_argument("--traces", action="store_true", help="write per-seed trace files")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="simulate over a list of transmission probabilities")
    common(p)
    p.add_argument("--p-list", type=float, nargs="+", dest="p_list")
    p.add_argument("--horizon", type=int)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--base-seed", type=int, default=0, dest="base_seed")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("acc", help="adaptive-cruise-control emergency-brake scenario")
    common(p)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--base-seed", type=int, default=0, dest="base_seed")
    p.add_argument("--attacker", choices=["dominant-closed", "none"],
                   default="dominant-closed")
    p.add_argument("--controller", choices=["stationary", "ladder"],
                   default="stationary")
    p.add_argument("--printed-lag", action="store_true", dest="printed_lag",
                   help="use the input matrix as printed instead of the canonical lag")
    p.add_argument("--traces", action="store_true")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.set_defaults(func=cmd_acc)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
