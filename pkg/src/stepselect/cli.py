"""Command-line driver.

Subcommands:

- ``simulate``   draw a series from a signal and write it as CSV.
- ``segment``    run candidate generators on a data CSV, write a
                 candidate file.
- ``select``     run the selection on a data CSV plus a candidate file,
                 write a selection report.
- ``experiment`` full Monte-Carlo experiment from a JSON config; writes
                 risk/frequency/contribution CSVs and a run manifest.
- ``calibrate``  sweep the penalty multiplier kappa over a grid of
                 settings; writes the risk-vs-kappa table and the
                 per-setting minimisers.

Every stochastic command requires an explicit ``--seed``; there is no
wall-clock seeding, so identical invocations produce byte-identical
outputs.  CLI flags override the corresponding config-file fields.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

import stepselect
from stepselect._rng import stream
from stepselect.evalkit import (
    write_contribution_csv,
    write_freq_csv,
    write_risk_csv,
)
from stepselect.expfam import ExpFamily, GaussianKnownSigma, family_from_string
from stepselect.experiment import (
    CalibrationConfig,
    ExperimentConfig,
    calibration_grid,
    run_calibration,
    run_experiment,
)
from stepselect.segmenters import (
    CandidateFileError,
    default_ensemble,
    export_candidates,
    generate_candidates,
    import_candidates,
    mad_sigma,
    spec_from_dict,
    spec_to_dict,
)
from stepselect.selector import PenaltyConfig, select
from stepselect.simkit import (
    OutlierSpec,
    SignalSpec,
    builtin_signal,
    builtin_signal_names,
    inject_outliers,
    load_signal,
    sample_series,
    signal_to_dict,
)

CONFIG_SCHEMA_VERSION = 1


class CliError(ValueError):
    """Configuration or input problem surfaced with a clean message."""


# ---------------------------------------------------------------------------
# Data CSV I/O
# ---------------------------------------------------------------------------


def read_data_csv(path: str | Path) -> np.ndarray:
    """Read observations from a CSV with header ``y`` or ``w,y``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip().lower() for h in next(reader)]
        except StopIteration:
            raise CliError(f"{path}: empty data file") from None
        if header == ["y"]:
            col = 0
        elif header == ["w", "y"]:
            col = 1
        else:
            raise CliError(f"{path}: expected header 'y' or 'w,y', got {header}")
        values = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                values.append(float(row[col]))
            except (IndexError, ValueError):
                raise CliError(f"{path}:{lineno}: bad observation row {row!r}") from None
    if not values:
        raise CliError(f"{path}: no observations")
    return np.asarray(values)


def write_data_csv(path: str | Path, y: np.ndarray) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["y"])
        for v in y:
            writer.writerow([f"{float(v):.12g}"])


# ---------------------------------------------------------------------------
# Config plumbing
# ---------------------------------------------------------------------------


def _load_json(path: str | Path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise CliError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise CliError(f"{path}: top level must be an object")
    return doc


def _resolve_signal(entry) -> SignalSpec:
    if isinstance(entry, str):
        return builtin_signal(entry)
    if isinstance(entry, dict) and "file" in entry:
        return load_signal(entry["file"])
    raise CliError(
        "signal must be a built-in name or {'file': path}; "
        f"built-ins: {', '.join(builtin_signal_names())}"
    )


def _resolve_specs(entry) -> tuple:
    if entry in (None, "default"):
        return tuple(default_ensemble())
    if isinstance(entry, list):
        return tuple(spec_from_dict(d) for d in entry)
    raise CliError("segmenters must be 'default' or a list of spec objects")


def _resolve_outliers(entry) -> OutlierSpec | None:
    if entry is None:
        return None
    if isinstance(entry, dict):
        return OutlierSpec(count=int(entry["count"]), value=float(entry["value"]))
    raise CliError("outliers must be an object with 'count' and 'value'")


def _parse_outlier_flag(text: str) -> OutlierSpec:
    try:
        count, value = text.split(":")
        return OutlierSpec(count=int(count), value=float(value))
    except ValueError:
        raise CliError(f"--outliers expects COUNT:VALUE, got {text!r}") from None


def experiment_config_from_file(path: str, overrides) -> ExperimentConfig:
    doc = _load_json(path)
    seed = overrides.seed if overrides.seed is not None else doc.get("seed")
    if seed is None:
        raise CliError("a seed is required (config 'seed' or --seed)")
    return ExperimentConfig(
        signal=_resolve_signal(doc.get("signal")),
        segmenters=_resolve_specs(doc.get("segmenters")),
        kappa=float(
            overrides.kappa if overrides.kappa is not None else doc.get("kappa", 0.08)
        ),
        replications=int(
            overrides.replications
            if overrides.replications is not None
            else doc.get("replications", 100)
        ),
        seed=int(seed),
        outliers=_resolve_outliers(doc.get("outliers")),
        nhat_tail=int(doc.get("nhat_tail", 2)),
        workers=int(
            overrides.workers if overrides.workers is not None else doc.get("workers", 1)
        ),
    )


def _manifest(command: str, payload: dict) -> dict:
    return {
        "schema_version": CONFIG_SCHEMA_VERSION,
        "command": command,
        "package": {"name": "stepselect", "version": stepselect.__version__},
        "numpy_version": np.__version__,
        **payload,
    }


def _write_manifest(path: Path, doc: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _outdir(arg: str) -> Path:
    out = Path(arg)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_simulate(args) -> int:
    signal = (
        load_signal(args.signal_file) if args.signal_file else builtin_signal(args.signal)
    )
    y = sample_series(signal, stream(args.seed, 0, 0))
    if args.outliers:
        spec = _parse_outlier_flag(args.outliers)
        y, positions = inject_outliers(y, spec, stream(args.seed, 0, 1))
        print(f"outliers at positions: {', '.join(map(str, positions))}")
    write_data_csv(args.output, y)
    print(f"wrote {y.size} observations to {args.output}")
    return 0


def _family_for_data(args, y: np.ndarray) -> ExpFamily:
    if args.family.strip().lower() in ("gaussian:mad", "gaussian:auto"):
        return GaussianKnownSigma(mad_sigma(y))
    return family_from_string(args.family)


def _cmd_segment(args) -> int:
    y = read_data_csv(args.data)
    fam = _family_for_data(args, y)
    specs = (
        _resolve_specs(_load_json(args.specs).get("segmenters"))
        if args.specs
        else tuple(default_ensemble())
    )
    cset = generate_candidates(fam, y, specs, args.seed)
    for label, msg in cset.diagnostics:
        print(f"warning: generator {label} failed: {msg}", file=sys.stderr)
    export_candidates(fam, y.size, cset.candidates, args.output)
    print(f"wrote {len(cset.candidates)} candidates to {args.output}")
    return 0


def _cmd_select(args) -> int:
    y = read_data_csv(args.data)
    cfile = import_candidates(args.candidates)
    if cfile.n != y.size:
        raise CliError(
            f"candidate file is for n={cfile.n}, data has {y.size} observations"
        )
    result = select(cfile.family, y, cfile.candidates, PenaltyConfig(kappa=args.kappa))
    chosen = cfile.candidates[result.chosen]
    report = {
        "chosen_index": result.chosen,
        "chosen_label": chosen.label,
        "segments": chosen.segment_count,
        "changepoints": list(chosen.partition.cps),
        "values": list(chosen.values),
        "ties": list(result.ties),
        "upsilon": [float(u) for u in result.upsilon],
        "penalties": [float(p) for p in result.penalties],
        "kappa": args.kappa,
    }
    with open(args.output, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    print(
        f"selected candidate #{result.chosen} ({chosen.label!r}) "
        f"with {chosen.segment_count} segments"
    )
    return 0


def _cmd_experiment(args) -> int:
    cfg = experiment_config_from_file(args.config, args)
    result = run_experiment(cfg)
    out = _outdir(args.output)
    write_risk_csv(out / "risk.csv", result.risk)
    write_freq_csv(out / "freq.csv", result.freq)
    write_contribution_csv(out / "contribution.csv", result.contribution)
    manifest = _manifest(
        "experiment",
        {
            "signal": signal_to_dict(cfg.signal),
            "segmenters": [spec_to_dict(s) for s in cfg.segmenters],
            "kappa": cfg.kappa,
            "replications": cfg.replications,
            "seed": cfg.seed,
            "outliers": (
                None
                if cfg.outliers is None
                else {"count": cfg.outliers.count, "value": cfg.outliers.value}
            ),
            "nhat_tail": cfg.nhat_tail,
            "oracle_xi": cfg.oracle_xi,
            "oracle_all_ok": result.oracle_all_ok,
            "dropped_methods": list(result.dropped_methods),
            "generator_failures": [
                {"replication": rep, "generator": label, "error": msg}
                for rep, label, msg in result.diagnostics
            ],
        },
    )
    _write_manifest(out / "manifest.json", manifest)
    es = result.risk["ES"]
    print(f"ES risk {es.risk:.4g} +/- {es.uncertainty:.2g} over {es.replications} replications")
    print(f"reports written to {out}")
    return 0


def _cmd_calibrate(args) -> int:
    doc = _load_json(args.config) if args.config else {}
    seed = args.seed if args.seed is not None else doc.get("seed")
    if seed is None:
        raise CliError("a seed is required (config 'seed' or --seed)")
    names = doc.get(
        "signals",
        [f"calib-{kind}-N{n}" for kind in ("gauss", "pois", "exp") for n in (5, 10, 20)],
    )
    grid_doc = doc.get("kappas")
    if grid_doc is None:
        kappas = calibration_grid()
    elif isinstance(grid_doc, list):
        kappas = tuple(float(k) for k in grid_doc)
    else:
        kappas = calibration_grid(
            float(grid_doc.get("start", 0.01)),
            float(grid_doc.get("stop", 0.30)),
            float(grid_doc.get("step", 0.01)),
        )
    cfg = CalibrationConfig(
        signals=tuple(_resolve_signal(name) for name in names),
        kappas=kappas,
        k_max=int(doc.get("k_max", 30)),
        replications=int(
            args.replications if args.replications is not None else doc.get("replications", 100)
        ),
        seed=int(seed),
        workers=int(args.workers if args.workers is not None else doc.get("workers", 1)),
    )
    result = run_calibration(cfg)
    out = _outdir(args.output)
    with open(out / "calibration.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["setting", "kappa", "risk"])
        for name, risks in result.risk.items():
            for kappa, risk in zip(result.kappas, risks):
                writer.writerow([name, f"{kappa:.12g}", f"{risk:.12g}"])
    with open(out / "calibration_summary.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["setting", "argmin_kappa", "min_risk", "risk_at_last_kappa"])
        for name, risks in result.risk.items():
            writer.writerow(
                [
                    name,
                    f"{result.argmin_kappa[name]:.12g}",
                    f"{min(risks):.12g}",
                    f"{risks[-1]:.12g}",
                ]
            )
    manifest = _manifest(
        "calibrate",
        {
            "signals": [signal_to_dict(s) for s in cfg.signals],
            "kappas": list(result.kappas),
            "k_max": cfg.k_max,
            "replications": cfg.replications,
            "seed": cfg.seed,
            "recommended_kappa": result.recommended_kappa,
            "oracle_all_ok": result.oracle_all_ok,
        },
    )
    _write_manifest(out / "manifest.json", manifest)
    print(f"recommended kappa: {result.recommended_kappa:.3g}")
    print(f"reports written to {out}")
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stepselect",
        description="Estimator selection for changepoint detection in exponential families.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="sample a series from a signal")
    group = sim.add_mutually_exclusive_group(required=True)
    group.add_argument("--signal", help=f"built-in name ({', '.join(builtin_signal_names())})")
    group.add_argument("--signal-file", help="JSON signal specification")
    sim.add_argument("--seed", type=int, required=True)
    sim.add_argument("--outliers", help="COUNT:VALUE outlier injection")
    sim.add_argument("-o", "--output", required=True, help="output data CSV")
    sim.set_defaults(func=_cmd_simulate)

    seg = sub.add_parser("segment", help="generate candidates for a data CSV")
    seg.add_argument("--data", required=True, help="data CSV (header 'y' or 'w,y')")
    seg.add_argument(
        "--family",
        required=True,
        help="poisson | exponential | bernoulli | gaussian:<sigma> | gaussian:mad",
    )
    seg.add_argument("--specs", help="JSON file with a 'segmenters' list (default ensemble otherwise)")
    seg.add_argument("--seed", type=int, required=True)
    seg.add_argument("-o", "--output", required=True, help="output candidate file")
    seg.set_defaults(func=_cmd_segment)

    sel = sub.add_parser("select", help="select among candidates from a file")
    sel.add_argument("--data", required=True)
    sel.add_argument("--candidates", required=True, help="candidate file (JSON)")
    sel.add_argument("--kappa", type=float, default=0.08)
    sel.add_argument("-o", "--output", required=True, help="selection report (JSON)")
    sel.set_defaults(func=_cmd_select)

    exp = sub.add_parser("experiment", help="run a Monte-Carlo experiment")
    exp.add_argument("--config", required=True, help="experiment config (JSON)")
    exp.add_argument("--seed", type=int, help="overrides the config seed")
    exp.add_argument("--kappa", type=float)
    exp.add_argument("--replications", type=int)
    exp.add_argument("--workers", type=int)
    exp.add_argument("-o", "--output", required=True, help="output directory")
    exp.set_defaults(func=_cmd_experiment)

    cal = sub.add_parser("calibrate", help="sweep kappa over calibration settings")
    cal.add_argument("--config", help="calibration config (JSON); defaults cover all nine settings")
    cal.add_argument("--seed", type=int, help="overrides the config seed")
    cal.add_argument("--replications", type=int)
    cal.add_argument("--workers", type=int)
    cal.add_argument("-o", "--output", required=True, help="output directory")
    cal.set_defaults(func=_cmd_calibrate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, CandidateFileError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
