"""Command-line front end.

Subcommands:

* ``limits``    - closed-form sweep tables (CSV, optional figures)
* ``simulate``  - Monte Carlo runs with analytic deltas (CSV + JSON)
* ``trace``     - round-by-round walkthrough of a small session
* ``calibrate`` - fit a diffusion curve to reference lengths

Exit codes: 0 success, 2 configuration error, 3 infeasible calibration,
4 simulated-vs-analytic delta above tolerance under ``--strict``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import crw, limits, sim, srw
from .diffusion import curve_from_spec
from .errors import BufmapError, ConfigError, NoFeasibleCurve
from .window import RelevantWindow

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_DELTA = 4

STRICT_REL_TOL = 0.02
TRACE_MAX_WIDTH = 32


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


def _reject_unknown(data: dict, allowed: set[str], what: str) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown {what} keys: {sorted(unknown)}")


# --- limits ------------------------------------------------------------------

def _cmd_limits(args: argparse.Namespace) -> int:
    data = _load_json(args.config)
    _reject_unknown(data, {"N", "chunk_rate", "curve", "gT_list", "gTau_rule",
                           "tau_sweep"}, "limits config")
    for key in ("N", "curve", "gT_list"):
        if key not in data:
            raise ConfigError(f"missing limits config key {key!r}")
    width = int(data["N"])
    curve = curve_from_spec(data["curve"], width)
    gt_list = [int(g) for g in data["gT_list"]]
    for gt in gt_list:
        if not 0 < gt <= width:
            raise ConfigError(f"gT {gt} outside (0, {width}]")
    gtau_rule = data.get("gTau_rule", "half")
    if not (gtau_rule == "half" or isinstance(gtau_rule, int)):
        raise ConfigError("gTau_rule must be 'half' or an integer")
    chunk_rate = float(data["chunk_rate"]) if "chunk_rate" in data else None

    table = limits.sweep(curve, gt_list, gtau_rule, chunk_rate)
    sweep_rows = list(table.rows)
    tau_rows = None
    if "tau_sweep" in data:
        spec = data["tau_sweep"]
        _reject_unknown(spec, {"gT", "gTau_list"}, "tau_sweep")
        tau_rows = limits.tau_sweep(curve, int(spec["gT"]),
                                    [int(g) for g in spec["gTau_list"]], chunk_rate)
        table.rows.extend(tau_rows.rows)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(table.to_csv())
    print(f"wrote {len(table.rows)} rows to {out}")

    if args.figures:
        from . import plotting
        fig_dir = Path(args.figures)
        paths = [
            plotting.save_length_vs_period(sweep_rows, chunk_rate,
                                           fig_dir / "length_vs_period.png"),
            plotting.save_rate_vs_period(sweep_rows, chunk_rate,
                                         fig_dir / "rate_vs_period.png"),
        ]
        if tau_rows is not None:
            paths.append(plotting.save_length_vs_reply_gap(
                tau_rows.rows, fig_dir / "length_vs_reply_gap.png"))
        for p in paths:
            print(f"wrote figure {p}")
    return EXIT_OK


# --- simulate ----------------------------------------------------------------

def _cmd_simulate(args: argparse.Namespace) -> int:
    config = sim.ScenarioConfig.from_dict(_load_json(args.config))
    metrics = sim.run(config, replicas=args.replicas)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(metrics.to_csv())
    json_path = out.with_suffix(".json")
    json_path.write_text(json.dumps(metrics.to_dict(), indent=2) + "\n")
    print(f"wrote {out} and {json_path}")

    exceeded = False
    for name, d in (("ab", metrics.ab), ("ba", metrics.ba)):
        pairs = [("raw", d.mean_raw_bits, d.se_raw_bits, d.analytic_raw_bits)]
        if d.mean_ideal_bits is not None:
            pairs.append(("coded", d.mean_ideal_bits, d.se_ideal_bits,
                          d.analytic_ideal_bits))
        for kind, mean, se, ref in pairs:
            delta = mean - ref
            rel = delta / ref if ref else 0.0
            flagged = se > 0 and abs(delta) > 2 * se
            if abs(rel) > STRICT_REL_TOL:
                exceeded = True
            flag = "  [>2 se]" if flagged else ""
            print(f"{name} {kind}: simulated {mean:.3f} vs analytic {ref:.3f} "
                  f"({rel:+.2%}){flag}")
    if metrics.channel == "lossy":
        print(f"audit: soundness={metrics.soundness_violations} "
              f"completeness={metrics.completeness_violations} "
              f"undecodable={metrics.undecodable_messages} "
              f"stuck={metrics.stuck_sessions} "
              f"mean_staleness={metrics.staleness_mean:.2f}")

    if args.figures:
        from . import plotting
        p = plotting.save_simulation_summary(
            metrics, Path(args.figures) / "empirical_vs_analytic.png")
        print(f"wrote figure {p}")

    if args.strict and exceeded:
        print(f"delta above {STRICT_REL_TOL:.0%} tolerance", file=sys.stderr)
        return EXIT_DELTA
    return EXIT_OK


# --- trace -------------------------------------------------------------------

def _bits_str(bits) -> str:
    return "".join(str(b) for b in bits)


def _window_str(w: RelevantWindow) -> str:
    return f"floor={w.floor} excluded={list(w.excluded)}"


def _cmd_trace(args: argparse.Namespace) -> int:
    config = sim.ScenarioConfig.from_dict(_load_json(args.config))
    if config.width > TRACE_MAX_WIDTH:
        raise ConfigError(f"trace needs N <= {TRACE_MAX_WIDTH} to stay readable")
    trace_a = sim.generate_trace(config, "a")
    trace_b = sim.generate_trace(config, "b")
    if config.codec == "crw":
        _trace_crw(config, trace_a, trace_b)
    else:
        _trace_srw(config, trace_a)
    return EXIT_OK


def _trace_srw(config: sim.ScenarioConfig, trace: sim.PeerTrace) -> None:
    mode = "with_offset" if config.codec == "srw-offset" else "optimized"
    window = RelevantWindow.starting_at(trace.offset(0))
    sender, receiver = srw.SrwSender(window), srw.SrwReceiver(window)
    for r in range(config.rounds + 1):
        bm = trace.bitmap(r)
        print(f"round {r}: offset={bm.offset} map={_bits_str(bm.bits)}")
        print(f"  window   {_window_str(sender.window)}")
        if mode == "optimized":
            bm = sim.smooth_extend(bm, sender.window)
        msg, sender = srw.encode(sender, bm, mode)
        wanted, rebuilt, receiver = srw.decode(receiver, msg)
        print(f"  message  {msg} ({len(msg.bits)} bits)")
        print(f"  decoded  {' '.join(f'{w.chunk}:{w.filled}' for w in wanted) or '-'}")
        if rebuilt is not None:
            print(f"  rebuilt  offset={rebuilt.offset} map={_bits_str(rebuilt.bits)}")
        print(f"  windows equal after step: {sender.window == receiver.window}")


def _trace_crw(config: sim.ScenarioConfig, trace_a: sim.PeerTrace,
               trace_b: sim.PeerTrace) -> None:
    window = RelevantWindow.starting_at(trace_a.offset(0))
    a, b = crw.CrwEndpoint(window), crw.CrwEndpoint(window)
    for r in range(config.rounds + 1):
        bm_a, bm_b = trace_a.bitmap(r), trace_b.bitmap(r)
        print(f"round {r}:")
        print(f"  A map offset={bm_a.offset} {_bits_str(bm_a.bits)}")
        print(f"  B map offset={bm_b.offset} {_bits_str(bm_b.bits)}")
        print(f"  shared window {_window_str(a.window)}")
        step = crw.session_step(a, b, bm_a, bm_b)
        a, b = step.endpoint_a, step.endpoint_b
        print(f"  A->B ({len(step.message_ab.bits)} bits) "
              f"wanted {' '.join(f'{w.chunk}:{w.filled}' for w in step.wanted_at_b) or '-'}")
        print(f"  B->A ({len(step.message_ba.bits)} bits) "
              f"wanted {' '.join(f'{w.chunk}:{w.filled}' for w in step.wanted_at_a) or '-'}")
        print(f"  windows equal after round: {a.window == b.window}")


# --- calibrate ---------------------------------------------------------------

def _cmd_calibrate(args: argparse.Namespace) -> int:
    data = _load_json(args.targets)
    _reject_unknown(data, {"N", "gTau_rule", "targets"}, "calibration")
    for key in ("N", "targets"):
        if key not in data:
            raise ConfigError(f"missing calibration key {key!r}")
    width = int(data["N"])
    targets = []
    for entry in data["targets"]:
        _reject_unknown(entry, {"scheme", "gT", "bits"}, "target")
        targets.append((entry["scheme"], int(entry["gT"]), float(entry["bits"])))
    result = limits.calibrate(targets, args.family, width,
                              gtau_rule=data.get("gTau_rule", "half"),
                              residual_bound=args.residual_bound)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps({
        "N": width,
        "curve": result.curve.spec,
        "residuals": result.residuals,
    }, indent=2) + "\n")
    print(f"wrote {out} (worst residual {result.worst_residual:.2%})")
    return EXIT_OK


# --- entry point ---------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bufmap",
        description="Relevant-window buffer-map compression toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("limits", help="closed-form length table for a parameter sweep")
    p.add_argument("--config", required=True, help="sweep config JSON")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--figures", help="directory for rendered figures")
    p.set_defaults(func=_cmd_limits)

    p = sub.add_parser("simulate", help="Monte Carlo exchange simulation")
    p.add_argument("--config", required=True, help="scenario config JSON")
    p.add_argument("--out", required=True, help="output CSV path (JSON written next to it)")
    p.add_argument("--replicas", type=int, default=1, help="independent replicas to merge")
    p.add_argument("--strict", action="store_true",
                   help=f"exit {EXIT_DELTA} when any delta exceeds {STRICT_REL_TOL:.0%}")
    p.add_argument("--figures", help="directory for rendered figures")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("trace", help="round-by-round walkthrough (small N)")
    p.add_argument("--config", required=True, help="scenario config JSON")
    p.set_defaults(func=_cmd_trace)

    p = sub.add_parser("calibrate", help="fit a diffusion curve to reference lengths")
    p.add_argument("--targets", required=True, help="targets JSON")
    p.add_argument("--family", required=True, choices=("two_segment", "logistic"))
    p.add_argument("--out", required=True, help="output curve spec JSON")
    p.add_argument("--residual-bound", type=float, default=0.02,
                   help="max relative residual before the fit counts as infeasible")
    p.set_defaults(func=_cmd_calibrate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NoFeasibleCurve as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, BufmapError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
