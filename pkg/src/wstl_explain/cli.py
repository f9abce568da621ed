"""Command-line entry point.

    wstl-explain generate --out runs/data
    wstl-explain explain --data runs/data/data.jsonl --schema runs/data/schema.json --out runs/exp --seeds 0..9
    wstl-explain evaluate --runs runs/exp
    wstl-explain filter-report --data runs/data/data.jsonl --schema runs/data/schema.json

Exit codes: 0 ok, 2 configuration error, 3 no discriminating predicates,
4 non-finite loss.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .data import (
    ReachAvoidConfig,
    Trajectory,
    generate_reach_avoid,
    load_dataset,
    load_schema,
    reach_avoid_schema,
    save_dataset,
    save_schema,
    schema_from_json,
)
from .errors import ConfigError, InputError, NoDiscriminatingPredicates, NonFiniteLoss
from .metrics import MetricsReport, evaluate_runs
from .simplify import SimplifyConfig, filter_predicates, run_pipeline
from .tlnet import TlnetParams, TrainConfig
from .wstl import AggregationConfig, formula_from_json

log = logging.getLogger("wstl_explain")

EXIT_OK, EXIT_CONFIG, EXIT_DEGENERATE, EXIT_NUMERIC = 0, 2, 3, 4


@dataclass
class RunConfig:
    sigma: float = 0.5
    zeta: float = 1.0
    s_th: float = 0.99
    lambda_rt: float = 0.01
    lambda_rd: float = 0.1
    n_pr: int = 20
    n_w: int = 1
    epochs: int = TrainConfig.epochs
    step_size: float = TrainConfig.step_size
    batch_size: int = TrainConfig.batch_size
    split_fraction: float = 0.8
    split_seed: int = 0
    seeds: list[int] = field(default_factory=lambda: list(range(10)))
    jobs: int = 1
    data: str | None = None
    schema: str | None = None
    out: str | None = None

    def train(self, seed: int) -> TrainConfig:
        return TrainConfig(
            sigma=self.sigma, zeta=self.zeta, lambda_rt=self.lambda_rt, lambda_rd=self.lambda_rd,
            epochs=self.epochs, step_size=self.step_size, batch_size=self.batch_size, seed=seed,
        )

    def simplify(self) -> SimplifyConfig:
        return SimplifyConfig(s_threshold=self.s_th, n_prune_iters=self.n_pr, n_weights_per_prune=self.n_w)


def parse_seeds(text: str) -> list[int]:
    """``"0..9"`` (inclusive), ``"1,4,7"`` or a single integer."""
    text = str(text).strip()
    try:
        if ".." in text:
            lo, hi = text.split("..")
            return list(range(int(lo), int(hi) + 1))
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse seed list {text!r}") from None


def _setup_logging() -> None:
    level = os.environ.get("WSTL_EXPLAIN_LOG", "warn").lower()
    levels = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------

def cmd_generate(args) -> int:
    cfg = ReachAvoidConfig(
        half_width=args.half_width,
        goal=tuple(args.goal),
        goal_radius=args.goal_radius,
        hazard=tuple(args.hazard),
        hazard_radius=args.hazard_radius,
        step=args.step,
        horizon=args.horizon,
        n_positive=args.n_pos,
        n_negative=args.n_neg,
        seed=args.seed,
    )
    data, manifest = generate_reach_avoid(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_dataset(out / "data.jsonl", data)
    save_schema(out / "schema.json", reach_avoid_schema(cfg, irrelevant=not args.no_irrelevant))
    _write_json(out / "manifest.json", manifest)
    print(f"wrote {len(data)} trajectories to {out / 'data.jsonl'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# explain
# ---------------------------------------------------------------------------

_OVERRIDES = {
    "sigma": float, "zeta": float, "s_th": float, "lambda_rt": float, "lambda_rd": float,
    "n_pr": int, "n_w": int, "epochs": int, "step_size": float, "batch_size": int,
    "split_fraction": float, "split_seed": int, "jobs": int,
}


def resolve_config(args) -> RunConfig:
    """Defaults, then the config file, then command-line flags."""
    cfg = RunConfig()
    if getattr(args, "config", None):
        try:
            obj = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {args.config}: {e}") from None
        known = {f.name for f in fields(RunConfig)}
        for key, value in obj.items():
            key = key.replace("-", "_")
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            if key == "seeds":
                value = parse_seeds(value) if isinstance(value, str) else [int(v) for v in value]
            setattr(cfg, key, value)
    for key in _OVERRIDES:
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    for key in ("data", "schema", "out"):
        if getattr(args, key, None):
            setattr(cfg, key, getattr(args, key))
    if getattr(args, "seeds", None):
        cfg.seeds = parse_seeds(args.seeds)
    return cfg


def _explain_one(cfg: RunConfig, seed: int, data: list[Trajectory], schema_json: dict) -> dict:
    schema = schema_from_json(schema_json, data)
    ex = run_pipeline(data, schema.predicates, cfg.train(seed), cfg.simplify(), cfg.split_fraction, cfg.split_seed)
    from .metrics import accuracy

    manifest = ex.manifest()
    manifest["seed"] = seed
    manifest["data"] = str(Path(cfg.data).resolve())
    manifest["schema"] = schema_json
    manifest["run_config"] = asdict(cfg) | {"seeds": cfg.seeds}
    manifest["test_accuracy"] = accuracy(ex.params, ex.split.test, AggregationConfig(cfg.sigma))
    out = Path(cfg.out) / f"seed-{seed}"
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "manifest.json", manifest)
    _write_json(out / "formula.json", manifest["formula"])
    (out / "explanation.txt").write_text(ex.text + "\n", encoding="utf-8")
    return {"seed": seed, "explanation": ex.text, "test_accuracy": manifest["test_accuracy"]}


def cmd_explain(args) -> int:
    cfg = resolve_config(args)
    if not cfg.data or not cfg.schema or not cfg.out:
        raise ConfigError("explain needs --data, --schema and --out")
    if not Path(cfg.schema).exists():
        raise ConfigError(f"schema file not found: {cfg.schema}")
    if not Path(cfg.data).exists():
        raise ConfigError(f"data file not found: {cfg.data}")
    schema_json = json.loads(Path(cfg.schema).read_text())
    schema = load_schema(cfg.schema)
    data = load_dataset(cfg.data, schema)
    Path(cfg.out).mkdir(parents=True, exist_ok=True)
    if cfg.jobs > 1 and len(cfg.seeds) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            futures = [pool.submit(_explain_one, cfg, s, data, schema_json) for s in cfg.seeds]
            results = [f.result() for f in futures]
    else:
        results = [_explain_one(cfg, s, data, schema_json) for s in cfg.seeds]
    _write_json(Path(cfg.out) / "aggregate.json", {"runs": results, "config": asdict(cfg)})
    for r in results:
        print(f"seed {r['seed']}: acc={r['test_accuracy']:.3f}  {r['explanation']}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def evaluate_directory(runs_dir, data_path: str | None = None) -> MetricsReport:
    runs_dir = Path(runs_dir)
    manifests = [json.loads(p.read_text()) for p in sorted(runs_dir.glob("seed-*/manifest.json"), key=lambda p: int(p.parent.name[5:]))]
    if not manifests:
        raise ConfigError(f"no run manifests under {runs_dir}")
    schemas = {json.dumps(m["schema"], sort_keys=True) for m in manifests}
    if len(schemas) != 1:
        raise ConfigError("runs were produced with different predicate schemas")
    cache: dict[str, list[Trajectory]] = {}
    formulas, params, tests = [], [], []
    for m in manifests:
        path = data_path or m["data"]
        if path not in cache:
            cache[path] = load_dataset(path)
        by_id = {t.id: t for t in cache[path]}
        try:
            tests.append([by_id[i] for i in m["split"]["test_ids"]])
        except KeyError as e:
            raise ConfigError(f"test trajectory {e.args[0]!r} missing from {path}") from None
        p = TlnetParams.from_json(m["params"])
        preds = {lit.predicate.id: lit.predicate for lit in p.predicate_order}
        params.append(p)
        formulas.append(formula_from_json(m["formula"], preds))
    n_ap = {p.n_ap for p in params}
    if len(n_ap) != 1:
        raise ConfigError("runs retained different numbers of predicates")
    sigma = manifests[0]["config"]["train"]["sigma"]
    return evaluate_runs(formulas, tests, 2 * n_ap.pop(), AggregationConfig(sigma), params)


def cmd_evaluate(args) -> int:
    report = evaluate_directory(args.runs, args.data)
    out = Path(args.out or args.runs)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(report.dumps(), encoding="utf-8")
    (out / "metrics.txt").write_text(report.table(), encoding="utf-8")
    print(report.table(), end="")
    print(f"modal explanation ({report.modal_frequency:.0%}): {report.modal_structure}")
    return EXIT_OK


def cmd_filter_report(args) -> int:
    schema = load_schema(args.schema)
    data = load_dataset(args.data, schema)
    _, report = filter_predicates(data, schema.predicates, SimplifyConfig(s_threshold=args.s_th))
    print(json.dumps([asdict(e) for e in report], indent=2))
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wstl-explain", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="synthesize a reach-avoid dataset and schema")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n-pos", type=int, default=500)
    g.add_argument("--n-neg", type=int, default=500)
    g.add_argument("--horizon", type=int, default=50)
    g.add_argument("--half-width", type=float, default=1.0)
    g.add_argument("--goal", type=float, nargs=2, default=list(ReachAvoidConfig.goal))
    g.add_argument("--goal-radius", type=float, default=ReachAvoidConfig.goal_radius)
    g.add_argument("--hazard", type=float, nargs=2, default=list(ReachAvoidConfig.hazard))
    g.add_argument("--hazard-radius", type=float, default=ReachAvoidConfig.hazard_radius)
    g.add_argument("--step", type=float, default=ReachAvoidConfig.step)
    g.add_argument("--no-irrelevant", action="store_true", help="omit the constant goal-hazard predicate")
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("explain", help="infer explanations for one or more seeds")
    e.add_argument("--config")
    e.add_argument("--data")
    e.add_argument("--schema")
    e.add_argument("--out")
    e.add_argument("--seeds")
    e.add_argument("--jobs", type=int)
    for flag, typ in (("sigma", float), ("zeta", float), ("s-th", float), ("lambda-rt", float),
                      ("lambda-rd", float), ("n-pr", int), ("n-w", int), ("epochs", int),
                      ("step-size", float), ("batch-size", int), ("split-fraction", float), ("split-seed", int)):
        e.add_argument(f"--{flag}", type=typ, dest=flag.replace("-", "_"))
    e.set_defaults(func=cmd_explain)

    v = sub.add_parser("evaluate", help="score a directory of explanation runs")
    v.add_argument("--runs", required=True)
    v.add_argument("--data")
    v.add_argument("--out")
    v.set_defaults(func=cmd_evaluate)

    f = sub.add_parser("filter-report", help="print per-predicate filter similarities")
    f.add_argument("--data", required=True)
    f.add_argument("--schema", required=True)
    f.add_argument("--s-th", type=float, default=0.99)
    f.set_defaults(func=cmd_filter_report)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NoDiscriminatingPredicates as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DEGENERATE
    except NonFiniteLoss as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, InputError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
