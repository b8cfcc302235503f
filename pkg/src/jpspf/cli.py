"""Command-line entry point: ``jpspf {thresholds,simulate,theory,sweep}``.

Exit codes: 0 success, 2 usage or config error, 3 I/O error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import config as C
from .analysis import gain_curves, gain_curves_csv, probe_count_distribution, theory_report
from .sim import run_experiment, sweep, sweep_csv, sweep_rows, analytic_kappa
from .stopping import ThresholdError, build_threshold_table

log = logging.getLogger("jpspf")

EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 2, 3, 4


class Outputs:
    """Writes files under ``out`` (or stdout when ``out`` is None) and remembers them."""

    def __init__(self, out: Path | None):
        self.out = out
        self.files: list[str] = []

    def write(self, rel: str, text: str) -> None:
        if self.out is None:
            sys.stdout.write(f"# {rel}\n{text}")
            return
        path = self.out / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        self.files.append(rel)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def cmd_thresholds(cfg: dict, outs: Outputs, threads: int) -> None:
    model = C.rate_model(cfg)
    K, beta = int(cfg["K"]), float(cfg["beta"])
    if not 0 < beta < 1:
        raise C.ConfigError(f"beta must lie in (0, 1), got {beta}")
    table = build_threshold_table(model, beta, K)
    kappa = analytic_kappa(model, beta, K, int(cfg["static"]["mc_samples"]), int(cfg["seed"]))
    outs.write("thresholds.csv", table.with_kappa(kappa).to_csv())
    outs.write("thresholds.json", _json({
        "K": K, "beta": beta, "j_max": table.j_max, "rate_model": model.to_config(),
        "thresholds": list(table.thresholds), "kappa": kappa,
    }))


def cmd_simulate(cfg: dict, outs: Outputs, threads: int) -> None:
    summary = {}
    for policy in cfg["policies"]:
        exp = C.experiment(cfg, policy)
        log.info("simulating %s: K=%d beta=%g N=%d reps=%d", policy, exp.K, exp.beta,
                 exp.n_slots, exp.n_replications)
        agg, series = run_experiment(exp, threads)
        if policy in ("jps_dynamic", "jps_static", "jlps"):
            agg["theory_probe_probs"] = probe_count_distribution(exp.rate_model, exp.beta, exp.K)
        summary[policy] = agg
        traj_rows, sel_rows = [], []
        hist = np.zeros_like(series[0].steady_probe_histogram)
        for rep, s in enumerate(series):
            for i, n in enumerate(s.record_slots.tolist()):
                for k, t in enumerate(s.throughput_traj[i].tolist()):
                    traj_rows.append((rep, n, k + 1, t))
            for k in range(exp.K):
                sel_rows.append((rep, k + 1, int(s.selection_counts[k]),
                                 int(s.steady_selection_counts[k])))
            hist += s.steady_probe_histogram
        base = policy + "/" if len(cfg["policies"]) > 1 else ""
        outs.write(base + "throughput_traj.csv", _csv(["replication", "slot", "user", "T"], traj_rows))
        outs.write(base + "probe_hist.csv", _csv(["J", "count"], enumerate(hist.tolist())))
        outs.write(base + "selection_counts.csv",
                   _csv(["replication", "user", "count", "steady_count"], sel_rows))
    outs.write("summary.json", _json(summary))


def cmd_theory(cfg: dict, outs: Outputs, threads: int) -> None:
    model = C.rate_model(cfg)
    K, beta = int(cfg["K"]), float(cfg["beta"])
    th = cfg.get("theory", {})
    mc = int(th.get("mc_samples", 200_000))
    seed = int(cfg["seed"])
    rep = theory_report(model, beta, K, mc, seed)
    outs.write("theory.json", rep.to_json() + "\n")
    outs.write("probe_probs.csv", rep.probe_probs_csv())
    rows = gain_curves(model, beta, [int(k) for k in th.get("K_values", [K])], mc, seed)
    outs.write("gain_curves.csv", gain_curves_csv(rows))


def cmd_sweep(cfg: dict, outs: Outputs, threads: int) -> None:
    sw = cfg.get("sweep")
    if not sw or "variable" not in sw or not sw.get("values"):
        raise C.ConfigError("sweep needs a 'sweep' block with variable and values")
    rows, reports = [], {}
    for policy in cfg["policies"]:
        exp = C.experiment(cfg, policy)
        log.info("sweeping %s over %s", policy, sw["variable"])
        try:
            reps = sweep(exp, sw["variable"], sw["values"], threads)
        except ValueError as exc:
            raise C.ConfigError(str(exc)) from exc
        reports[policy] = reps
        rows.extend(sweep_rows(sw["variable"], reps))
    outs.write("sweep.csv", sweep_csv(rows))
    outs.write("summary.json", _json(reports))


COMMANDS = {
    "thresholds": cmd_thresholds,
    "simulate": cmd_simulate,
    "theory": cmd_theory,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="jpspf", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="JSON config or a previous manifest.json")
        sp.add_argument("--preset", help="named config shipped with the package")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", type=Path, help="output directory (stdout if omitted)")
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key, e.g. --set beta=0.2")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def load_config(args) -> dict:
    raw: dict = {}
    if args.preset:
        raw = C.load_preset(args.preset)
    if args.config:
        raw = C._merge(raw, C.load_file(args.config))
    for item in args.set:
        raw = C.apply_override(raw, item)
    if args.seed is not None:
        raw["seed"] = args.seed
    return C.resolve(raw)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        parser.error("--threads must be at least 1")
    started = time.perf_counter()
    try:
        cfg = load_config(args)
        if not 0 < float(cfg["beta"]) < 1:
            raise C.ConfigError(f"beta must lie in (0, 1), got {cfg['beta']}")
        outs = Outputs(args.out)
        COMMANDS[args.command](cfg, outs, args.threads)
        if args.out is not None:
            manifest = {
                "tool": "jpspf",
                "version": __version__,
                "command": args.command,
                "config": cfg,
                "config_hash": C.config_hash(cfg),
                "seed": cfg["seed"],
                "outputs": outs.files,
                "duration_s": round(time.perf_counter() - started, 3),
            }
            outs.write("manifest.json", _json(manifest))
    except ValueError as exc:
        print(f"jpspf: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"jpspf: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ThresholdError, ArithmeticError, RuntimeError) as exc:
        print(f"jpspf: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
