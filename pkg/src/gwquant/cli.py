"""Command-line pipeline: simulate -> di -> train -> predict/evaluate/report.

Configuration file grammar (no external parser): one ``section.key = value``
per line, ``#`` starts a comment, blank lines ignored. Grids are
space-separated numbers. Example::

    simulation.center_frequency = 250e3
    simulation.sample_rate = 6e6
    simulation.damage_grid = 0 1 2 3 4
    simulation.load_grid = 0 5 10 15
    di.kind = rmsd
    train.model_kind = sgpr
    train.train_fraction = 0.5
    paths.workdir = out

The environment variable ``GWQUANT_SEED`` overrides any configured or
flag-provided seed. Every subcommand is deterministic given identical
inputs and seed; output files are written atomically (temp file + rename).

Exit codes: 0 success, 1 domain error (single-line ``error: ...`` message on
stderr), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .damage_index import (
    DEFAULT_N_USE,
    DiDataset,
    build_di_dataset,
    di_to_csv_text,
    read_di_csv,
)
from .errors import GwquantError, InvalidArgumentError
from .persist import atomic_write_text, load_model, save_model
from .quantify import (
    DEFAULT_LOW_CONFIDENCE_THRESHOLD,
    StateGrid,
    StateProbabilityTable,
    predict_single_state,
    predict_two_states,
    summarize_predictions,
)
from .sgpr import OptimizerConfig, evaluate_fit, train_sgpr
from .signals import (
    SimulationConfig,
    read_signals_csv,
    signals_to_csv_text,
    simulate_dataset,
)
from .vhgpr import train_vhgpr

SEED_ENV_VAR = "GWQUANT_SEED"


@dataclass
class DiConfig:
    kind: str = "rmsd"
    mode: str = "projection"
    policy: str = "class1"
    n_use: int = DEFAULT_N_USE
    fixed_damage: float = 0.0
    fixed_load: float = 0.0


@dataclass
class TrainConfig:
    model_kind: str = "sgpr"
    restarts: int = 5
    seed: int = 0
    center_targets: bool = False
    train_fraction: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise InvalidArgumentError("train_fraction must be in (0, 1)")


@dataclass
class QuantifyConfig:
    grid_refine: int = 0
    low_confidence_threshold: float = DEFAULT_LOW_CONFIDENCE_THRESHOLD


@dataclass
class PathsConfig:
    workdir: str = "gwquant-out"
    model_file: str = "model.json"
    report_dir: str = "reports"


@dataclass
class PipelineConfig:
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    damage_grid: list[float] = field(default_factory=lambda: [0.0, 1.0, 2.0, 3.0, 4.0])
    load_grid: list[float] = field(default_factory=lambda: [0.0, 5.0, 10.0, 15.0])
    di: DiConfig = field(default_factory=DiConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    quantify: QuantifyConfig = field(default_factory=QuantifyConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)


_POLICY_NAMES = {
    "class1": "healthy_per_load",
    "class2": "unloaded_per_damage",
    "both": "both_classes",
    "fixed": "fixed",
}


def _parse_scalar(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    return text


def parse_config(text: str) -> PipelineConfig:
    """Parse the flat key/value grammar into a validated PipelineConfig."""
    sections: dict[str, dict] = {}
    grids: dict[str, list[float]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidArgumentError(f"config line {lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        if "." not in key:
            raise InvalidArgumentError(f"config line {lineno}: key must be section.name")
        section, name = key.split(".", 1)
        if key in ("simulation.damage_grid", "simulation.load_grid"):
            grids[name] = [float(v) for v in value.split()]
            continue
        sections.setdefault(section, {})[name] = _parse_scalar(value)

    def build(cls, section):
        payload = sections.pop(section, {})
        valid = {f.name for f in fields(cls)}
        unknown = set(payload) - valid
        if unknown:
            raise InvalidArgumentError(
                f"config section {section!r}: unknown keys {sorted(unknown)}"
            )
        try:
            return cls(**payload)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, InvalidArgumentError):
                raise
            raise InvalidArgumentError(f"config section {section!r}: {exc}") from exc

    config = PipelineConfig(
        simulation=build(SimulationConfig, "simulation"),
        di=build(DiConfig, "di"),
        train=build(TrainConfig, "train"),
        quantify=build(QuantifyConfig, "quantify"),
        paths=build(PathsConfig, "paths"),
    )
    if sections:
        raise InvalidArgumentError(f"config: unknown sections {sorted(sections)}")
    if "damage_grid" in grids:
        config.damage_grid = grids["damage_grid"]
    if "load_grid" in grids:
        config.load_grid = grids["load_grid"]
    return config


def load_config(path) -> PipelineConfig:
    with open(path, "r", encoding="ascii") as fh:
        return parse_config(fh.read())


def _resolve_seed(flag_seed, config_seed: int) -> int:
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        return int(env)
    if flag_seed is not None:
        return int(flag_seed)
    return int(config_seed)


def split_dataset(dataset: DiDataset, train_fraction: float, seed: int):
    """Stratified per-state split with a seeded shuffle.

    Each state keeps ceil(train_fraction * k) rows for training, capped at
    k - 1 so that every state with >= 2 rows retains a held-out replicate.
    """
    if not 0.0 < train_fraction < 1.0:
        raise InvalidArgumentError("train_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    groups: dict[tuple, list[int]] = {}
    for i, row in enumerate(dataset.inputs):
        groups.setdefault(tuple(row), []).append(i)
    train_idx, test_idx = [], []
    for state in sorted(groups):
        idx = np.array(groups[state])
        rng.shuffle(idx)
        k = idx.size
        n_train = max(1, math.ceil(train_fraction * k))
        if k >= 2:
            n_train = min(n_train, k - 1)
        train_idx.extend(idx[:n_train])
        test_idx.extend(idx[n_train:])
    train_idx = sorted(train_idx)
    test_idx = sorted(test_idx)

    def subset(indices):
        return DiDataset(
            dataset.inputs[indices], dataset.targets[indices], list(dataset.column_names)
        )

    return subset(train_idx), subset(test_idx)


def _signal_file_name(damage: float, load: float) -> str:
    return f"signals_d{damage:g}_L{load:g}.csv"


def cmd_simulate(args) -> int:
    config = load_config(args.config) if args.config else PipelineConfig()
    seed = _resolve_seed(args.seed, config.simulation.rng_seed)
    sim = replace(config.simulation, rng_seed=seed)
    workdir = args.workdir or config.paths.workdir
    os.makedirs(workdir, exist_ok=True)

    signals = simulate_dataset(sim, config.damage_grid, config.load_grid)
    manifest = ["damage,load,n_signals,file"]
    for damage in config.damage_grid:
        for load in config.load_grid:
            cell = [
                s
                for s in signals
                if s.state.damage_size == damage and s.state.load == load
            ]
            name = _signal_file_name(damage, load)
            text = signals_to_csv_text(cell, comment=f"seed={seed}")
            atomic_write_text(os.path.join(workdir, name), text)
            manifest.append(f"{damage:.17g},{load:.17g},{len(cell)},{name}")
    atomic_write_text(
        os.path.join(workdir, "manifest.csv"),
        f"# seed={seed}\n" + "\n".join(manifest) + "\n",
    )
    print(f"wrote {len(signals)} signals to {workdir}")
    return 0


def _read_workdir_signals(workdir: str):
    manifest = os.path.join(workdir, "manifest.csv")
    if not os.path.exists(manifest):
        raise InvalidArgumentError(f"no manifest.csv in {workdir}")
    signals = []
    with open(manifest, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("damage,"):
                continue
            name = line.split(",")[-1]
            signals.extend(read_signals_csv(os.path.join(workdir, name)))
    return signals


def cmd_di(args) -> int:
    config = load_config(args.config) if args.config else PipelineConfig()
    di = config.di
    kind = args.kind or di.kind
    mode = (args.mode or di.mode).replace("-", "_")
    policy = _POLICY_NAMES[args.policy or di.policy]
    n_use = args.n_use or di.n_use
    workdir = args.workdir or config.paths.workdir
    signals = _read_workdir_signals(workdir)
    n_use = min(n_use, min(len(s) for s in signals))
    fixed = None
    if policy == "fixed":
        fixed = (
            args.fixed_damage if args.fixed_damage is not None else di.fixed_damage,
            args.fixed_load if args.fixed_load is not None else di.fixed_load,
        )
    dataset = build_di_dataset(signals, kind, policy, n_use, mode, fixed)
    text = di_to_csv_text(dataset, comment=f"kind={kind} policy={policy} n_use={n_use}")
    atomic_write_text(args.out, text)
    print(f"wrote {dataset.n} DI rows ({dataset.ndim} input columns) to {args.out}")
    return 0


def _format_metric(value: float) -> str:
    return f"{value:.4g}"


def cmd_train(args) -> int:
    config = load_config(args.config) if args.config else PipelineConfig()
    train = config.train
    kind = args.model or train.model_kind
    seed = _resolve_seed(args.seed, train.seed)
    fraction = args.train_fraction or train.train_fraction
    restarts = args.restarts or train.restarts
    center = args.center_targets or train.center_targets

    dataset = read_di_csv(args.di_file)
    train_set, test_set = split_dataset(dataset, fraction, seed)
    optimizer = OptimizerConfig(n_restarts=restarts, seed=seed)
    if kind == "sgpr":
        model = train_sgpr(train_set.inputs, train_set.targets, optimizer, center)
    elif kind == "vhgpr":
        model = train_vhgpr(train_set.inputs, train_set.targets, optimizer, center)
    else:
        raise InvalidArgumentError(f"unknown model kind {kind!r}")

    save_model(args.model_file, model, seed=seed)
    heldout = args.heldout_file or args.model_file + ".heldout.csv"
    source = os.path.basename(args.di_file)
    atomic_write_text(
        heldout, di_to_csv_text(test_set, comment=f"seed={seed} heldout_of={source}")
    )

    metrics = evaluate_fit(
        model.predict(test_set.inputs), test_set.targets, train_set.targets
    )
    print(
        f"{kind} trained on {train_set.n}/{dataset.n} rows: "
        f"nmse={_format_metric(metrics.nmse)} "
        f"rss_sss_percent={_format_metric(metrics.rss_sss_percent)}"
    )
    return 0


def cmd_evaluate(args) -> int:
    model = load_model(args.model_file)
    dataset = read_di_csv(args.di_file)
    metrics = evaluate_fit(
        model.predict(dataset.inputs), dataset.targets, model.train_targets
    )
    print(
        f"nmse={_format_metric(metrics.nmse)} "
        f"rss_sss_percent={_format_metric(metrics.rss_sss_percent)}"
    )
    return 0


def _table_to_json(table, two_state_argmax=None) -> dict:
    argmax = table.argmax_state if two_state_argmax is None else two_state_argmax
    return {
        "test_di": table.test_di,
        "argmax": {
            "damage": argmax[0],
            "load": argmax[1] if len(argmax) > 1 else None,
        },
        "low_confidence": table.low_confidence,
        "probabilities": [
            {
                "damage": state[0],
                "load": state[1] if len(state) > 1 else None,
                "p": p,
            }
            for state, p in table.entries
        ],
    }


def _single_state_grid(model, refine: int) -> StateGrid:
    damages = sorted({float(v) for v in model.train_inputs[:, 0]})
    return StateGrid([(d,) for d in damages]).refine(refine)


def cmd_predict(args) -> int:
    config = load_config(args.config) if args.config else PipelineConfig()
    refine = args.grid_refine if args.grid_refine is not None else config.quantify.grid_refine
    threshold = config.quantify.low_confidence_threshold
    model = load_model(args.model_file)

    results = []
    if args.two_state:
        class1, class2 = _read_two_state_dis(args.test_di_file)
        damages = sorted({float(v) for v in model.train_inputs[:, 0]})
        loads = sorted({float(v) for v in model.train_inputs[:, 1]})
        prediction = predict_two_states(
            model, class1, lambda d: class2[d], damages, loads, threshold
        )
        payload = _table_to_json(
            prediction.step2_table,
            (prediction.predicted_damage, prediction.predicted_load),
        )
        payload["low_confidence"] = (
            prediction.step1_table.low_confidence or prediction.step2_table.low_confidence
        )
        payload["step1_reference_load"] = prediction.step1_reference_load
        payload["test_di"] = prediction.step1_table.test_di
        results.append(payload)
    else:
        test_dis = (
            [args.test_di] if args.test_di is not None else _read_di_column(args.test_di_file)
        )
        grid = _single_state_grid(model, refine)
        for test_di in test_dis:
            table = predict_single_state(
                model, grid, test_di, known_load=args.known_load,
                low_confidence_threshold=threshold,
            )
            results.append(_table_to_json(table))

    text = json.dumps(results[0] if len(results) == 1 else results, indent=1, sort_keys=True)
    if args.out:
        atomic_write_text(args.out, text + "\n")
    else:
        print(text)
    return 0


def _read_di_column(path) -> list[float]:
    if path is None:
        raise InvalidArgumentError("provide --test-di or --test-di-file")
    dataset = read_di_csv(path)
    return [float(v) for v in dataset.targets]


def _read_two_state_dis(path):
    """CSV with header class,ref_load,ref_damage,di.

    class=1 rows carry one test DI per class-1 reference load; class=2 rows
    carry the pre-computed class-2 test DI per candidate damage size.
    """
    if path is None:
        raise InvalidArgumentError("--two-state requires --test-di-file")
    class1 = []
    class2 = {}
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    if not lines or lines[0] != "class,ref_load,ref_damage,di":
        raise InvalidArgumentError(
            f"{path}: expected header 'class,ref_load,ref_damage,di'"
        )
    for ln in lines[1:]:
        try:
            cls, ref_load, ref_damage, di = ln.split(",")
            if int(cls) == 1:
                class1.append((float(ref_load), float(di)))
            else:
                class2[float(ref_damage)] = float(di)
        except ValueError as exc:
            raise InvalidArgumentError(f"{path}: bad row {ln!r}") from exc
    if not class1:
        raise InvalidArgumentError(f"{path}: no class-1 test DI rows")
    return class1, class2


def cmd_report(args) -> int:
    with open(args.pred_file, "r", encoding="ascii") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidArgumentError(f"{args.pred_file}: not a predictions file ({exc})")
    predictions = payload if isinstance(payload, list) else [payload]

    true_states = []
    with open(args.true_file, "r", encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    header = lines[0].split(",")
    if header not in (["damage"], ["damage", "load"]):
        raise InvalidArgumentError(
            f"{args.true_file}: expected header 'damage' or 'damage,load'"
        )
    for ln in lines[1:]:
        try:
            true_states.append(tuple(float(v) for v in ln.split(",")))
        except ValueError as exc:
            raise InvalidArgumentError(f"{args.true_file}: bad row {ln!r}") from exc
    if len(true_states) != len(predictions):
        raise InvalidArgumentError(
            f"{len(true_states)} true states vs {len(predictions)} predictions"
        )

    # Rebuild minimal tables from the JSON payloads for the summary fold.
    tables = []
    for pred in predictions:
        argmax = pred["argmax"]
        state = (
            (argmax["damage"],)
            if argmax.get("load") is None
            else (argmax["damage"], argmax["load"])
        )
        tables.append(
            StateProbabilityTable(
                entries=[(state, 1.0)],
                test_di=pred.get("test_di", float("nan")),
                closest_training_di=float("nan"),
                closest_variance=float("nan"),
                argmax_state=state,
                low_confidence=pred.get("low_confidence", False),
            )
        )
    report = summarize_predictions(true_states, tables)

    box_lines = ["state,median,q25,q75,lo_whisk,hi_whisk,outliers"]
    for box in report.boxes:
        state = "damage=" + ":".join(f"{v:g}" for v in box.state)
        outliers = ";".join(f"{v:.17g}" for v in box.outliers)
        box_lines.append(
            f"{state},{box.median:.17g},{box.q25:.17g},{box.q75:.17g},"
            f"{box.lo_whisker:.17g},{box.hi_whisker:.17g},{outliers}"
        )
    atomic_write_text(args.box_out, "\n".join(box_lines) + "\n")

    err_lines = ["true_damage,true_load,pred_damage,pred_load,err_damage,err_load"]
    for rec in report.errors:
        cells = [
            f"{rec.true_damage:.17g}",
            "" if rec.true_load is None else f"{rec.true_load:.17g}",
            f"{rec.pred_damage:.17g}",
            "" if rec.pred_load is None else f"{rec.pred_load:.17g}",
            f"{rec.err_damage:.17g}",
            "" if rec.err_load is None else f"{rec.err_load:.17g}",
        ]
        err_lines.append(",".join(cells))
    atomic_write_text(args.errors_out, "\n".join(err_lines) + "\n")
    print(f"wrote {args.box_out} and {args.errors_out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gwquant",
        description="Guided-wave damage quantification with DI-trained GP models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesize signal files for a state grid")
    p.add_argument("--config", help="pipeline config file")
    p.add_argument("--workdir", help="output directory (default from config)")
    p.add_argument("--seed", type=int, help="simulation RNG seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("di", help="compute a DI dataset from simulated signals")
    p.add_argument("--config", help="pipeline config file")
    p.add_argument("--workdir", help="directory holding manifest.csv")
    p.add_argument("--kind", choices=["rmsd", "normalized"])
    p.add_argument("--mode", choices=["projection", "as-written"])
    p.add_argument("--policy", choices=["class1", "class2", "both", "fixed"])
    p.add_argument("--n-use", type=int, dest="n_use")
    p.add_argument("--fixed-damage", type=float, dest="fixed_damage")
    p.add_argument("--fixed-load", type=float, dest="fixed_load")
    p.add_argument("--out", required=True, help="output DI CSV path")
    p.set_defaults(func=cmd_di)

    p = sub.add_parser("train", help="train a model on a DI dataset")
    p.add_argument("--config", help="pipeline config file")
    p.add_argument("--di-file", required=True, dest="di_file")
    p.add_argument("--model", choices=["sgpr", "vhgpr"])
    p.add_argument("--restarts", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--center-targets", action="store_true", dest="center_targets")
    p.add_argument("--train-fraction", type=float, dest="train_fraction")
    p.add_argument("--model-file", required=True, dest="model_file")
    p.add_argument("--heldout-file", dest="heldout_file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="state probabilities for test DI values")
    p.add_argument("--config", help="pipeline config file")
    p.add_argument("--model-file", required=True, dest="model_file")
    p.add_argument("--test-di", type=float, dest="test_di")
    p.add_argument("--test-di-file", dest="test_di_file")
    p.add_argument("--known-load", type=float, dest="known_load")
    p.add_argument("--two-state", action="store_true", dest="two_state")
    p.add_argument("--grid-refine", type=int, dest="grid_refine")
    p.add_argument("--out", help="output JSON path (default stdout)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="recompute fit metrics for a model file")
    p.add_argument("--model-file", required=True, dest="model_file")
    p.add_argument("--di-file", required=True, dest="di_file")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="box-plot and prediction-error CSVs")
    p.add_argument("--pred-file", required=True, dest="pred_file")
    p.add_argument("--true-file", required=True, dest="true_file")
    p.add_argument("--box-out", required=True, dest="box_out")
    p.add_argument("--errors-out", required=True, dest="errors_out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GwquantError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: OSError: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
