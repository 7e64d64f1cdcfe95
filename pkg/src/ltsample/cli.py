"""Command-line driver: cluster, run, eval.

The config file is JSON with sections mirroring the run configuration. Every
run writes ``config.resolved`` (the fully-defaulted config actually used) into
the output directory so a report can be reproduced from its own artifacts.

Exit codes: 0 success, 1 validation error, 2 runtime error or budget
truncation.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .bandit import BanditConfig
from .classifier import ModelWeights, SearchGrid, TrainConfig, evaluate
from .clustering import cluster
from .dataset import Corpus, GoldSet, load_corpus, load_gold_ids, split_pool_gold
from .features import FeaturizerConfig
from .labelers import (
    Budget,
    HttpEndpoint,
    KeywordLabeler,
    Labeler,
    LlmLabeler,
    OracleLabeler,
    PromptTemplate,
    RetryPolicy,
    Shot,
)
from .lts import (
    LabeledSet,
    LtsConfig,
    PhaseTimings,
    featurize_gold,
    run_baseline,
    run_lts,
    write_iteration_log,
)
from .samplers import KeywordRules, load_rules


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


_LABELER_KINDS = ("llm", "oracle", "keyword")


def _from_dict(cls, data: dict, section: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown keys in {section}: {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {section} section: {exc}") from exc


def _tupled(value):
    return tuple(value) if isinstance(value, list) else value


@dataclasses.dataclass
class RunConfig:
    corpus_path: Path
    gold_ids_path: Path
    output_dir: Path
    featurizer: FeaturizerConfig
    lts: LtsConfig
    labeler: dict

    def resolved(self) -> dict:
        return {
            "corpus_path": str(self.corpus_path),
            "gold_ids_path": str(self.gold_ids_path),
            "output_dir": str(self.output_dir),
            "featurizer": dataclasses.asdict(self.featurizer),
            "lts": dataclasses.asdict(self.lts),
            "labeler": dict(self.labeler),
        }


def load_run_config(path: str | Path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")

    known = {"corpus_path", "gold_ids_path", "output_dir", "featurizer", "lts", "labeler"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    for key in ("corpus_path", "gold_ids_path", "output_dir", "labeler"):
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}")

    corpus_path = Path(raw["corpus_path"])
    gold_ids_path = Path(raw["gold_ids_path"])
    if not corpus_path.is_file():
        raise ConfigError(f"corpus_path does not exist: {corpus_path}")
    if not gold_ids_path.is_file():
        raise ConfigError(f"gold_ids_path does not exist: {gold_ids_path}")

    featurizer = _from_dict(FeaturizerConfig, dict(raw.get("featurizer", {})), "featurizer")

    lts_raw = dict(raw.get("lts", {}))
    bandit = _from_dict(BanditConfig, dict(lts_raw.pop("bandit", {})), "lts.bandit")
    train = _from_dict(TrainConfig, dict(lts_raw.pop("train", {})), "lts.train")
    grid_raw = {k: _tupled(v) for k, v in dict(lts_raw.pop("grid", {})).items()}
    grid = _from_dict(SearchGrid, grid_raw, "lts.grid")
    lts_raw.update(bandit=bandit, train=train, grid=grid)
    lts = _from_dict(LtsConfig, lts_raw, "lts")

    labeler = dict(raw["labeler"])
    kind = labeler.get("kind")
    if kind not in _LABELER_KINDS:
        raise ConfigError(f"labeler.kind must be one of {_LABELER_KINDS}, got {kind!r}")
    if "max_calls" not in labeler:
        raise ConfigError("labeler.max_calls is required")
    if int(labeler["max_calls"]) < 0:
        raise ConfigError("labeler.max_calls must be >= 0")
    if kind == "llm":
        for key in ("endpoint", "model_name", "prompt_template"):
            if key not in labeler:
                raise ConfigError(f"labeler.{key} is required for kind=llm")
    if kind == "keyword" or labeler.get("rules_path"):
        rules_path = labeler.get("rules_path")
        if not rules_path:
            raise ConfigError("labeler.rules_path is required for kind=keyword")
        if not Path(rules_path).is_file():
            raise ConfigError(f"labeler.rules_path does not exist: {rules_path}")

    return RunConfig(
        corpus_path=corpus_path,
        gold_ids_path=gold_ids_path,
        output_dir=Path(raw["output_dir"]),
        featurizer=featurizer,
        lts=lts,
        labeler=labeler,
    )


def _build_prompt_template(data: dict) -> PromptTemplate:
    shots = tuple(
        Shot(title=s["title"], label=int(s["label"]), rationale=s.get("rationale", ""))
        for s in data.get("shots", [])
    )
    kwargs = {}
    if "answer_instruction" in data:
        kwargs["answer_instruction"] = data["answer_instruction"]
    return PromptTemplate(
        task_description=data.get("task_description", ""),
        shots=shots,
        **kwargs,
    )


def build_labeler(cfg: RunConfig, corpus: Corpus) -> Labeler:
    spec = cfg.labeler
    budget = Budget(
        max_calls=int(spec["max_calls"]),
        per_call_cost=float(spec.get("per_call_cost", 0.0)),
    )
    kind = spec["kind"]
    if kind == "oracle":
        unlabeled = [item.id for item in corpus if item.gold_label is None]
        if unlabeled:
            raise ConfigError(
                f"oracle labeler needs gold labels on every item; "
                f"{len(unlabeled)} missing (first: {unlabeled[0]!r})"
            )
        lookup = {item.id: item.gold_label for item in corpus}
        return OracleLabeler(lookup=lookup, budget=budget)
    if kind == "keyword":
        rules = load_rules(spec["rules_path"])
        return KeywordLabeler(rules=rules, budget=budget)
    try:
        endpoint = HttpEndpoint(
            url=spec["endpoint"],
            model_name=spec["model_name"],
            timeout=float(spec.get("timeout", 30.0)),
        )
    except RuntimeError as exc:  # missing API key: fail before any work
        raise ConfigError(str(exc)) from exc
    retry = _from_dict(RetryPolicy, dict(spec.get("retry", {})), "labeler.retry")
    template = _build_prompt_template(spec["prompt_template"])
    return LlmLabeler(endpoint=endpoint, template=template, budget=budget, retry=retry)


def _load_split(cfg: RunConfig) -> tuple[Corpus, Corpus, GoldSet]:
    corpus = load_corpus(cfg.corpus_path)
    gold_ids = load_gold_ids(cfg.gold_ids_path)
    pool, gold = split_pool_gold(corpus, gold_ids)
    return corpus, pool, gold


def _write_resolved(cfg: RunConfig) -> None:
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    with open(cfg.output_dir / "config.resolved", "w", encoding="utf-8") as fh:
        json.dump(cfg.resolved(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_cluster(cfg: RunConfig) -> int:
    _, pool, _ = _load_split(cfg)
    _write_resolved(cfg)
    assignment = cluster(pool, cfg.featurizer, cfg.lts.k, cfg.lts.seed)
    out = cfg.output_dir / "assignment.csv"
    assignment.export(out)
    print(f"wrote {out} ({assignment.k} clusters, {pool.n} items)")
    return 0


def _report_dict(strategy, cfg, labeler, metrics, labeled, pool, timings,
                 truncated, no_data, error=None) -> dict:
    stats = pool.stats
    report = {
        "strategy": strategy,
        "seed": cfg.lts.seed,
        "metrics": metrics.as_dict() if metrics is not None else None,
        "sample_stats": {
            "s_pos": labeled.s_pos,
            "s_neg": labeled.s_neg,
            "ratio": labeled.ratio if labeled.s_neg else None,
            "pool_k": stats.k if stats is not None else None,
        },
        "cost": {
            "calls": labeler.budget.spent_calls,
            "total_cost": labeler.budget.total_cost,
        },
        "timing": timings.as_dict(),
        "truncated": truncated,
        "no_data": no_data,
    }
    if error is not None:
        report["error"] = error
    return report


def cmd_run(cfg: RunConfig, strategy: str) -> int:
    corpus, pool, gold = _load_split(cfg)
    labeler = build_labeler(cfg, corpus)
    if strategy == "kbs" and not cfg.labeler.get("rules_path"):
        raise ConfigError("strategy=kbs needs labeler.rules_path for the keyword rules")
    rules = load_rules(cfg.labeler["rules_path"]) if cfg.labeler.get("rules_path") else None

    _write_resolved(cfg)
    out = cfg.output_dir
    gold_pairs = featurize_gold(gold, cfg.featurizer)

    try:
        if strategy == "lts":
            res = run_lts(pool, gold, labeler, cfg.lts, cfg.featurizer)
            records = res.records
        else:
            res = run_baseline(pool, gold, labeler, strategy,
                               int(cfg.labeler["max_calls"]), cfg.lts,
                               cfg.featurizer, rules=rules)
            records = []
    except Exception as exc:  # flush a truncation report before propagating
        report = _report_dict(strategy, cfg, labeler, None, LabeledSet(),
                              pool, PhaseTimings(), truncated=True,
                              no_data=True, error=f"{type(exc).__name__}: {exc}")
        with open(out / "report.json", "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"error: {exc}", file=sys.stderr)
        return 2

    res.labeled.export(out / "labeled.jsonl")
    res.target_weights.save(out / "weights.txt")
    write_iteration_log(records, out / "iterations.csv")
    metrics = evaluate(res.target_weights, gold_pairs)
    report = _report_dict(strategy, cfg, labeler, metrics, res.labeled, pool,
                          res.timings, res.truncated, res.no_data)
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")

    flags = []
    if res.truncated:
        flags.append("TRUNCATED")
    if res.no_data:
        flags.append("NO DATA")
    suffix = f" [{', '.join(flags)}]" if flags else ""
    print(f"{strategy}: F1={metrics.f1_pos:.4f} "
          f"S_pos={res.labeled.s_pos} S_neg={res.labeled.s_neg} "
          f"calls={labeler.budget.spent_calls} cost={labeler.budget.total_cost:.4f}"
          f"{suffix}")
    return 2 if res.truncated else 0


def cmd_eval(cfg: RunConfig, weights_path: str | Path) -> int:
    weights_path = Path(weights_path)
    if not weights_path.is_file():
        raise ConfigError(f"weights file does not exist: {weights_path}")
    weights = ModelWeights.load(weights_path)
    _, _, gold = _load_split(cfg)
    gold_pairs = featurize_gold(gold, cfg.featurizer)
    metrics = evaluate(weights, gold_pairs)
    print(json.dumps(metrics.as_dict(), indent=2, sort_keys=True))
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="ltsample",
        description="Budgeted minority-class sampling with bandit-guided clustering",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_cluster = sub.add_parser("cluster", help="cluster the pool and write the assignment")
    p_run = sub.add_parser("run", help="execute a sampling run and train the target classifier")
    p_eval = sub.add_parser("eval", help="evaluate a saved weights file on the gold set")
    for p in (p_cluster, p_run, p_eval):
        p.add_argument("--config", required=True, help="path to the JSON run config")
        p.add_argument("--seed", type=int, default=None, help="override the configured seed")
        p.add_argument("--out", default=None, help="override the configured output directory")
    p_run.add_argument("--strategy", required=True, choices=("lts", "random", "kbs"))
    p_eval.add_argument("--weights", required=True, help="path to a saved weights file")

    args = parser.parse_args(argv)
    try:
        cfg = load_run_config(args.config)
        if args.seed is not None:
            cfg.lts = dataclasses.replace(cfg.lts, seed=args.seed)
            cfg.lts = dataclasses.replace(
                cfg.lts, train=dataclasses.replace(cfg.lts.train, seed=args.seed))
        if args.out is not None:
            cfg.output_dir = Path(args.out)
        if args.command == "cluster":
            return cmd_cluster(cfg)
        if args.command == "run":
            return cmd_run(cfg, args.strategy)
        return cmd_eval(cfg, args.weights)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
