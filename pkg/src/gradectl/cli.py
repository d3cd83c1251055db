"""Command-line interface.

Exit status: 0 on success, 1 on configuration/validation errors, 2 on runtime
failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import control, metrics, search, strategies, synthetic, textstats
from .config import ConfigError, RunConfig, load_config
from .corpus import CorpusError, load_conllu, load_dataset, load_lexicon
from .predictor import ControlPredictor, FeatureError, extract_features, regression_scores
from .simplify import SimplifierError, make_simplifier

log = logging.getLogger("gradectl")

STRATEGY_CHOICES = strategies.VARIANTS


def _dump_json(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _resources(cfg: RunConfig, need_aoa: bool = False) -> strategies.Resources:
    cfg.require("freq_lexicon")
    if need_aoa:
        cfg.require("aoa_lexicon")
    freq = load_lexicon(cfg.freq_lexicon, "frequency_rank")
    aoa = load_lexicon(cfg.aoa_lexicon, "age_of_acquisition") if cfg.aoa_lexicon else None
    parses = load_conllu(cfg.conllu) if cfg.conllu else {}
    return strategies.Resources(freq, aoa, parses)


def _oracle_rows(records, res):
    """``(record, vector)`` for records with references, plus skip counts."""
    rows, skipped = [], {"no_reference": 0, "missing_parse": 0, "invalid": 0}
    for r in records:
        if r.reference is None:
            skipped["no_reference"] += 1
            continue
        if res.parse(r.id, "source") is None or res.parse(r.id, "reference") is None:
            skipped["missing_parse"] += 1
        try:
            rows.append((r, strategies.oracle_controls(r, res, include_optional=True)))
        except control.ControlError as exc:
            log.warning("record %s: %s", r.id, exc)
            skipped["invalid"] += 1
    return rows, skipped


# ---------------------------------------------------------------------------
# commands


def cmd_extract_controls(cfg: RunConfig) -> dict:
    cfg.require("dataset")
    res = _resources(cfg)
    records = load_dataset(cfg.dataset)
    rows, skipped = _oracle_rows(records, res)
    if skipped["no_reference"]:
        log.warning("%d records without a reference were skipped", skipped["no_reference"])
    cfg.out.mkdir(parents=True, exist_ok=True)
    n = control.write_controls(((r.id, v) for r, v in rows), cfg.out / "controls.jsonl")
    summary = {"records": len(records), "written": n, "skipped_no_reference": skipped["no_reference"],
               "skipped_invalid": skipped["invalid"], "dtd_defaulted_missing_parse": skipped["missing_parse"]}
    _dump_json(summary, cfg.out / "extract_summary.json")
    return summary


def _training_matrix(records, res):
    X, Y, used = [], [], []
    for r, v in _oracle_rows(records, res)[0]:
        try:
            feats = extract_features(r, res.parse(r.id, "source"), res.freq, res.aoa)
        except (FeatureError, ValueError) as exc:
            log.warning("record %s skipped: %s", r.id, exc)
            continue
        X.append(feats.as_array())
        Y.append(v.primary())
        used.append((r, v))
    return np.array(X), np.array(Y), used


def cmd_train_predictor(cfg: RunConfig) -> dict:
    cfg.require("dataset", "conllu")
    res = _resources(cfg, need_aoa=True)
    records = load_dataset(cfg.dataset)
    X, Y, used = _training_matrix(records, res)
    if len(X) < 2:
        raise ConfigError("need at least 2 usable training records")
    p = cfg.predictor
    model = ControlPredictor(
        mode=p.mode, n_estimators=p.n_estimators, learning_rate=p.learning_rate, max_depth=p.max_depth,
        min_samples_leaf=p.min_samples_leaf, validation_fraction=p.validation_fraction or None,
        n_iter_no_change=p.n_iter_no_change, random_state=cfg.seed,
    ).fit(X, Y)
    model_dir = cfg.model_dir or cfg.out / "model"
    files = model.save(model_dir)
    table = control.build_avg_grade_table(
        (strategies.resolve_source_grade(r), r.target_grade, v) for r, v in used)
    table.save(cfg.out / "avg_grade_table.json")
    if cfg.dev_dataset is not None:
        Xe, Ye, _ = _training_matrix(load_dataset(cfg.dev_dataset), res)
        split = "dev"
    else:
        Xe, Ye, split = X, Y, "train"
    ev = regression_scores(Ye, model.predict(Xe))
    result = {"mode": p.mode, "n_train": len(X), "eval_split": split, "n_eval": len(Xe),
              "model_files": [f.name for f in files],
              "n_trees": [est.n_trees_ for est in model.estimators_], **ev.to_json()}
    _dump_json(result, cfg.out / "predictor_eval.json")
    return result


def cmd_predict(cfg: RunConfig) -> dict:
    cfg.require("dataset", "model_dir", "conllu")
    res = _resources(cfg, need_aoa=True)
    model = ControlPredictor.load(cfg.model_dir)
    records = load_dataset(cfg.dataset)
    strategy = strategies.Strategy.cp(model)
    inputs, controls, failures = strategies.resolve_batch(strategy, records, res)
    cfg.out.mkdir(parents=True, exist_ok=True)
    control.write_controls(controls.items(), cfg.out / "predicted_controls.jsonl")
    with (cfg.out / "inputs.jsonl").open("w", encoding="utf-8", newline="\n") as fh:
        for rid, text in inputs.items():
            fh.write(json.dumps({"id": rid, "input": text}, ensure_ascii=False) + "\n")
    summary = {"predicted": len(controls), "failed": len(failures)}
    _dump_json(summary, cfg.out / "predict_summary.json")
    return summary


def _simplifier(cfg: RunConfig, res, table=None):
    return make_simplifier(cfg.simplifier, freq=res.freq, grade_table=table, jobs=max(cfg.jobs, 1))


def _search_config(cfg: RunConfig) -> search.SearchConfig:
    s = cfg.search
    try:
        return search.SearchConfig(budget=s.budget, sigma0=s.sigma0, seed=cfg.seed, strategy=s.strategy)
    except search.SearchError as exc:
        raise ConfigError(str(exc)) from None


def run_corpus_search(cfg: RunConfig, records, res) -> search.SearchResult:
    sc = _search_config(cfg)
    with _simplifier(cfg, res) as simp:
        objective = strategies.corpus_objective(records, simp, cfg.max_n)
        return search.run_search(objective, sc)


def cmd_search(cfg: RunConfig) -> dict:
    cfg.require("dataset")
    _search_config(cfg)
    res = _resources(cfg)
    records = load_dataset(cfg.dataset)
    result = run_corpus_search(cfg, records, res)
    cfg.out.mkdir(parents=True, exist_ok=True)
    search.write_trace(result, cfg.out / "trace.csv")
    best = {**result.best.to_json(), "score": result.best_score, "evaluations": len(result.trace),
            "budget": cfg.search.budget, "strategy": cfg.search.strategy}
    _dump_json(best, cfg.out / "best_vector.json")
    return best


def _strategy(cfg: RunConfig, res) -> tuple[strategies.Strategy, control.AvgGradeTable | None]:
    name = cfg.strategy
    if name is None:
        raise ConfigError("missing required option --strategy")
    if name not in STRATEGY_CHOICES:
        raise ConfigError(f"unknown strategy {name!r}")
    table = None
    if cfg.avg_table is not None:
        table = control.AvgGradeTable.load(cfg.avg_table)
    elif cfg.train_dataset is not None and name in ("avg-grade", "grade-tokens"):
        rows, _ = _oracle_rows(load_dataset(cfg.train_dataset), res)
        table = control.build_avg_grade_table(
            (strategies.resolve_source_grade(r), r.target_grade, v) for r, v in rows)
    if name == "oracle":
        return strategies.Strategy.oracle(), table
    if name == "grade-tokens":
        return strategies.Strategy.grade_tokens(), table
    if name == "avg-grade":
        if table is None:
            raise ConfigError("avg-grade needs --avg-table or --train-dataset")
        return strategies.Strategy.avg_grade(table), table
    if name == "corpus-level":
        if cfg.corpus_vector is not None:
            obj = json.loads(Path(cfg.corpus_vector).read_text())
            return strategies.Strategy.corpus_level(control.ControlVector.from_json(obj)), table
        if cfg.dev_dataset is None:
            raise ConfigError("corpus-level needs --corpus-vector or --dev-dataset to search on")
        result = run_corpus_search(cfg, load_dataset(cfg.dev_dataset), res)
        return strategies.Strategy.corpus_level(result.best), table
    cfg.require("model_dir")
    model = ControlPredictor.load(cfg.model_dir)
    if f"cp-{model.mode}" != name:
        raise ConfigError(f"{name} needs a {name[3:]!r} predictor, {cfg.model_dir} holds {model.mode!r}")
    return strategies.Strategy.cp(model), table


def cmd_evaluate(cfg: RunConfig) -> dict:
    cfg.require("dataset")
    res = _resources(cfg, need_aoa=cfg.strategy in ("cp-single", "cp-multi"))
    records = load_dataset(cfg.dataset)
    strategy, table = _strategy(cfg, res)
    adequacy = metrics.load_adequacy_scores(cfg.adequacy) if cfg.adequacy else None
    with _simplifier(cfg, res, table) as simp:
        result = strategies.run_pipeline(records, strategy, simp, res, max_n=cfg.max_n,
                                         timeout=cfg.timeout, adequacy=adequacy)
    metrics.write_report(result.report, cfg.out)
    with (cfg.out / "outputs.jsonl").open("w", encoding="utf-8", newline="\n") as fh:
        for rid, text in result.outputs.items():
            fh.write(json.dumps({"id": rid, "output": text}, ensure_ascii=False) + "\n")
    if result.controls:
        control.write_controls(result.controls.items(), cfg.out / "controls.jsonl")
    return result.report.summary()


def cmd_report(cfg: RunConfig, controls_files: list[str] | None = None) -> dict:
    """Control/metric correlation over random corpus-level vectors, plus distributions."""
    cfg.out.mkdir(parents=True, exist_ok=True)
    out = {}
    if cfg.dataset is not None:
        cfg.require("dataset")
        res = _resources(cfg)
        records = [r for r in load_dataset(cfg.dataset) if r.reference is not None]
        if not records:
            raise ConfigError("report needs records with references")
        if cfg.samples < 3:
            raise ConfigError("--samples must be >= 3")
        rng = np.random.default_rng(cfg.seed)
        grid = control.grid_values()
        vectors = [control.ControlVector.from_primary(rng.choice(grid, size=5)) for _ in range(cfg.samples)]
        cols = {"sari": [], "flesch_reading_ease": [], "ari_accuracy": []}
        with _simplifier(cfg, res) as simp:
            for vec in vectors:
                result = strategies.run_pipeline(records, strategies.Strategy.corpus_level(vec), simp, res,
                                                 max_n=cfg.max_n, timeout=cfg.timeout)
                outs = [result.outputs[r.id] for r in records if r.id in result.outputs]
                cols["sari"].append(result.report.sari.sari)
                cols["flesch_reading_ease"].append(
                    float(np.mean([textstats.flesch_reading_ease(o) for o in outs if textstats.words(o)])))
                cols["ari_accuracy"].append(result.report.ari_accuracy or 0.0)
        table = metrics.control_metric_correlation(vectors, cols)
        metrics.write_correlation(table, cfg.out / "report_correlation.csv")
        with (cfg.out / "report_samples.csv").open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sample", *control.PRIMARY, *cols])
            for i, vec in enumerate(vectors):
                writer.writerow([i, *(f"{x:.2f}" for x in vec.primary()), *(f"{cols[k][i]:.6f}" for k in cols)])
        out["correlation"] = {f"{d}/{m}": r for (d, m), r in table.items()}
    if controls_files:
        buckets = {}
        for spec in controls_files:
            name, sep, path = spec.partition("=")
            if not sep or not Path(path).exists():
                raise ConfigError(f"--controls expects NAME=PATH to an existing file, got {spec!r}")
            buckets[name] = list(control.read_controls(path).values())
        dist = metrics.control_distribution_report(buckets)
        metrics.write_distribution(dist, cfg.out / "report_distribution.csv")
        out["distribution_iqr"] = {s: {d: metrics.iqr(q) for d, q in dims.items()} for s, dims in dist.items()}
    if not out:
        raise ConfigError("report needs --dataset and/or --controls")
    _dump_json(out, cfg.out / "report_summary.json")
    return out


def cmd_make_fixtures(cfg: RunConfig, sizes: dict) -> dict:
    paths = synthetic.write_fixture(cfg.out, seed=cfg.seed, sizes=sizes)
    return {k: str(v) for k, v in paths.items()}


# ---------------------------------------------------------------------------
# argument parsing

_COMMON = [
    ("--config", dict(help="TOML run configuration")),
    ("--out", dict(help="output directory (default: out)")),
    ("--seed", dict(type=int, help="seed for every stochastic component")),
    ("--jobs", dict(type=int, help="worker cap (in-flight simplifier requests)")),
    ("--freq-lexicon", dict(help="word<TAB>rank frequency lexicon")),
    ("--aoa-lexicon", dict(help="word<TAB>age age-of-acquisition lexicon")),
    ("--conllu", dict(help="CoNLL-U sidecar with source/reference parses")),
    ("--dataset", dict(help="JSONL or TSV dataset")),
]


def _add(p, *names):
    opts = dict(_COMMON)
    for name in names:
        p.add_argument(name, **opts[name])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gradectl", description="Grade-specific control-token tooling.")
    parser.add_argument("--log-level", default="WARNING")
    sub = parser.add_subparsers(dest="command", required=True)
    base = ("--config", "--out", "--seed", "--jobs", "--freq-lexicon", "--aoa-lexicon", "--conllu", "--dataset")

    p = sub.add_parser("extract-controls", help="oracle control vectors for every paired record")
    _add(p, *base)

    p = sub.add_parser("train-predictor", help="train CP-Single or CP-Multi")
    _add(p, *base)
    p.add_argument("--mode", choices=("single", "multi"))
    p.add_argument("--dev-dataset", help="evaluate on this dataset instead of the training data")
    p.add_argument("--model-dir")
    p.add_argument("--n-estimators", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--max-depth", type=int)
    p.add_argument("--min-samples-leaf", type=int)
    p.add_argument("--validation-fraction", type=float, help="0 disables early stopping")
    p.add_argument("--patience", type=int, dest="n_iter_no_change")

    p = sub.add_parser("predict", help="predict control vectors and prefixed inputs")
    _add(p, *base)
    p.add_argument("--model-dir")

    for name, helptext in (("search", "corpus-level control search"),
                           ("evaluate", "run a strategy end to end and emit reports")):
        p = sub.add_parser(name, help=helptext)
        _add(p, *base)
        p.add_argument("--simplifier", help="replay:<file> | exec:<cmd> | http:<url> | rule")
        p.add_argument("--budget", type=int)
        p.add_argument("--sigma0", type=float)
        p.add_argument("--search-strategy", choices=search.STRATEGIES)
        p.add_argument("--max-n", type=int)
        p.add_argument("--timeout", type=float)
        if name == "evaluate":
            p.add_argument("--strategy", choices=STRATEGY_CHOICES)
            p.add_argument("--model-dir")
            p.add_argument("--avg-table")
            p.add_argument("--corpus-vector")
            p.add_argument("--train-dataset")
            p.add_argument("--dev-dataset")
            p.add_argument("--adequacy", help="JSONL of externally computed adequacy scores")

    p = sub.add_parser("report", help="control/metric correlation and control distributions")
    _add(p, *base)
    p.add_argument("--simplifier")
    p.add_argument("--samples", type=int)
    p.add_argument("--max-n", type=int)
    p.add_argument("--timeout", type=float)
    p.add_argument("--controls", action="append", metavar="NAME=PATH",
                   help="controls JSONL per strategy for the distribution report")

    p = sub.add_parser("make-fixtures", help="write the synthetic fixture corpus")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--sizes", default="train=2000,dev=200,test=500")
    return parser


_SECTION_KEYS = {
    "mode": "predictor.mode", "n_estimators": "predictor.n_estimators",
    "learning_rate": "predictor.learning_rate", "max_depth": "predictor.max_depth",
    "min_samples_leaf": "predictor.min_samples_leaf", "validation_fraction": "predictor.validation_fraction",
    "n_iter_no_change": "predictor.n_iter_no_change", "budget": "search.budget", "sigma0": "search.sigma0",
    "search_strategy": "search.strategy",
}
_NOT_CONFIG = {"command", "log_level", "config", "controls", "sizes"}


def _overrides(args) -> dict:
    out = {}
    for key, value in vars(args).items():
        if key in _NOT_CONFIG:
            continue
        out[_SECTION_KEYS.get(key, key)] = value
    return out


def _parse_sizes(text: str) -> dict:
    try:
        sizes = {k: int(v) for k, v in (item.split("=") for item in text.split(","))}
    except ValueError:
        raise ConfigError(f"--sizes expects name=N,... got {text!r}") from None
    if any(n < 1 for n in sizes.values()):
        raise ConfigError("--sizes must be positive")
    return sizes


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(getattr(args, "config", None), _overrides(args))
        cfg.check_optional_paths()
        if args.command == "extract-controls":
            result = cmd_extract_controls(cfg)
        elif args.command == "train-predictor":
            result = cmd_train_predictor(cfg)
        elif args.command == "predict":
            result = cmd_predict(cfg)
        elif args.command == "search":
            result = cmd_search(cfg)
        elif args.command == "evaluate":
            result = cmd_evaluate(cfg)
        elif args.command == "report":
            result = cmd_report(cfg, args.controls)
        else:
            result = cmd_make_fixtures(cfg, _parse_sizes(args.sizes))
    except (ConfigError, CorpusError) as exc:
        print(f"gradectl: error: {exc}", file=sys.stderr)
        return 1
    except (SimplifierError, strategies.StrategyError, control.ControlError, metrics.MetricError,
            search.SearchError, FeatureError, ValueError, OSError) as exc:
        print(f"gradectl: runtime failure: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(result, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
