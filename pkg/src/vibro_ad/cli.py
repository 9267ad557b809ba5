"""Command-line front end: ``vibro-ad <command> ...``.

Errors print one ``CODE: message`` line on stderr. Exit status is 0 on
success, 1 on runtime failures and 2 on configuration or validation errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import synth
from ._parallel import pmap
from .detectors import (
    DetectorConfig,
    FittedDetector,
    ScoredSample,
    ThresholdRule,
    decide_score,
    fit,
    sliding_window_run,
    threshold,
)
from .detectors.serialize import load as load_model
from .detectors.serialize import save as save_model
from .diagnosis import AUTO, MODES, DiagnosisReport, diagnose, to_json_lines
from .errors import FormatError, InvalidConfig, NoInputs, ValidationError, VibroError
from .evaluation import confusion_matrix, f1_score, pr_auc, run_dynamic_experiment, run_static_experiment
from .explain import LOCAL_DIFFI, METHODS, ShapleyConfig, explain
from .features import FeatureSpec, FeatureTable, extract
from .signal import SIGNAL_SUFFIXES, read_signal


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        sys.stderr.write(f"USAGE: {message}\n")
        raise SystemExit(2)


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise InvalidConfig(f"{path}: file not found") from None
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"{path}: {exc}") from None


def _json_arg(text: str | None) -> dict:
    """Inline JSON object or a path to one."""
    if not text:
        return {}
    if text.lstrip().startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidConfig(f"params: {exc}") from None
    return _read_json(text)


def _load_config(path, seed=None) -> DetectorConfig:
    cfg = DetectorConfig.from_dict(_read_json(path)) if path else DetectorConfig("IF")
    return cfg.with_seed(seed) if seed is not None else cfg


def _load_table(path) -> FeatureTable:
    p = Path(path)
    if not p.is_file():
        raise NoInputs(f"{path}: feature table not found")
    return FeatureTable.from_csv(p)


def _rule(kind: str, contamination=None, margin=0.0) -> ThresholdRule:
    return ThresholdRule.from_dict({"kind": kind, "contamination": contamination, "margin": margin})


def _signal_files(directory) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise NoInputs(f"{directory}: not a directory")
    files = sorted(p for p in d.iterdir() if p.suffix.lower() in SIGNAL_SUFFIXES)
    if not files:
        raise NoInputs(f"{directory}: no signal files ({', '.join(SIGNAL_SUFFIXES)})")
    return files


def extract_dir(directory, spec: FeatureSpec) -> FeatureTable:
    files = _signal_files(directory)
    values = pmap(lambda p: extract(read_signal(p), spec).values, files)
    return FeatureTable(spec.names, np.vstack(values))


def _out(args, default: str) -> Path:
    p = Path(args.out or default)
    if p.parent != Path(""):
        p.parent.mkdir(parents=True, exist_ok=True)
    return p


# ---------------------------------------------------------------------------
# plot-data writers


SCORE_COLUMNS = ("index", "score", "normalized_score", "threshold", "is_anomaly")


def write_scores(path, indices, samples: list[ScoredSample], labels=None, warmup=None) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        cols = list(SCORE_COLUMNS)
        if warmup is not None:
            cols.append("warmup")
        if labels is not None:
            cols.append("label")
        w.writerow(cols)
        for k, (i, s) in enumerate(zip(indices, samples)):
            row = [int(i), repr(s.score), repr(s.normalized_score), repr(s.threshold_used), int(s.is_anomaly)]
            if warmup is not None:
                row.append(int(warmup[k]))
            if labels is not None:
                row.append("anomaly" if labels[k] else "normal")
            w.writerow(row)


def read_scores(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def write_importance(path, reports) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample", "rank", "feature", "weight"])
        for r in reports:
            ranking = r.filtered_ranking if isinstance(r, DiagnosisReport) else r
            if ranking is None:
                continue
            for k, (name, weight) in enumerate(ranking.entries):
                w.writerow([ranking.sample_ref, k + 1, name, repr(weight)])


def read_importance(path) -> dict[str, list[tuple[str, float]]]:
    """Sample reference -> ranked (feature, weight) pairs."""
    out: dict[str, list[tuple[str, float]]] = {}
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(row["sample"], []).append((row["feature"], float(row["weight"])))
    return out


def read_reports(path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line]


def _metrics(samples, labels) -> dict:
    flags = np.array([s.is_anomaly for s in samples], dtype=bool)
    out = {"n_samples": int(flags.size), "n_flagged": int(flags.sum())}
    if labels is not None and flags.size:
        cm = confusion_matrix(flags, labels)
        scores = np.array([s.score for s in samples])
        out.update(cm.to_dict(), degenerate=cm.tp == 0 or not np.any(labels))
        if cm.tp:
            out["f1"] = f1_score(cm)
        if np.any(labels):
            out["pr_auc"] = pr_auc(scores, labels)
    return out


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# commands


def cmd_extract(args) -> int:
    spec = FeatureSpec.load(args.spec)
    table = extract_dir(args.signals_dir, spec)
    out = _out(args, "features.csv")
    table.to_csv(out)
    print(f"wrote {len(table)} rows to {out}")
    return 0


def cmd_fit(args) -> int:
    table = _load_table(args.table)
    if args.normal_only and table.labels is not None:
        table = table.take(np.flatnonzero(~table.labels))
    f = fit(_load_config(args.config, args.seed), table)
    out = _out(args, "model.vadm")
    save_model(f, out)
    print(f"fitted {f.algorithm} on {len(table)} rows -> {out}")
    return 0


def _threshold(f, args) -> float:
    return threshold(f, _rule(args.rule, args.contamination, args.margin))


def cmd_score(args) -> int:
    f = load_model(args.model)
    table = _load_table(args.table)
    thr = _threshold(f, args)
    samples = [decide_score(f, s, thr) for s in f.score_samples(table.values)]
    out = _out(args, "anomaly_scores.csv")
    write_scores(out, range(len(table)), samples, table.labels)
    print(f"{sum(s.is_anomaly for s in samples)} of {len(samples)} samples flagged -> {out}")
    return 0


def _shapley_cfg(args) -> ShapleyConfig:
    return ShapleyConfig(n_permutations=args.n_permutations, seed=args.seed or 0)


def cmd_diagnose(args) -> int:
    f = load_model(args.model)
    table = _load_table(args.table)
    spec = FeatureSpec.load(args.spec)
    thr = _threshold(f, args)
    reports = [diagnose(f, table.values[i], spec, args.mode, args.explainer, thr=thr,
                        shapley=_shapley_cfg(args), sample_ref=i) for i in range(len(table))]
    out = _out(args, "reports.jsonl")
    out.write_text(to_json_lines(reports, args.timings))
    print(f"{sum(r.detected for r in reports)} anomalies diagnosed -> {out}")
    return 0


def cmd_explain(args) -> int:
    f = load_model(args.model)
    table = _load_table(args.table)
    rows = args.row if args.row else range(len(table))
    rankings = []
    for i in rows:
        if not 0 <= i < len(table):
            raise ValidationError(f"row: index {i} outside 0..{len(table) - 1}")
        rankings.append(explain(f, table.values[i], args.method, _shapley_cfg(args), sample_ref=i))
    out = _out(args, "importance.csv")
    write_importance(out, rankings)
    print(f"{len(rankings)} rankings -> {out}")
    return 0


def cmd_eval(args) -> int:
    table = _load_table(args.table)
    cfg = _load_config(args.config, None)
    seed = args.seed or 0
    if args.protocol == "static":
        run = run_static_experiment(table, cfg, args.iters, seed=seed)
    else:
        run = run_dynamic_experiment(table, cfg, args.iters, init_n=args.init_n, dropout=args.dropout,
                                     seed=seed, rule=_rule(args.rule, args.contamination, args.margin),
                                     refit_every=args.refit_every)
    out = _out(args, "metrics.json")
    run.save(out, out.with_suffix(".csv"))
    f1 = run.aggregate.get("f1", {})
    print(f"{args.protocol} x{args.iters}: F1 {f1.get('mean', float('nan')):.4f} "
          f"(std {f1.get('std', float('nan')):.4f}) -> {out}")
    return 0


def cmd_synth(args) -> int:
    params = _json_arg(args.params)
    seed = args.seed if args.seed is not None else params.pop("seed", 0)
    table, truth = synth.generate_dataset(args.case_style, params, seed=seed)
    features, truth_path = synth.write_dataset(table, truth, args.out or ".")
    print(f"wrote {len(table)} rows to {features} and ground truth to {truth_path}")
    return 0


@dataclass(frozen=True)
class RunManifest:
    """Inputs and options for a full detect-and-diagnose run.

    ``split`` is ``{"kind": "sliding", "init_n": 100}`` (default; rows after
    the warm-up are the test samples), ``{"kind": "prefix", "n_train": n}``
    or ``{"kind": "static", "normal_frac": .8, "anomaly_frac": .2}``.
    """

    inputs: tuple[Path, ...]
    feature_spec: Path
    detector: Path | None
    out_dir: Path
    mode: str = AUTO
    explainer: str = LOCAL_DIFFI
    rule: dict = field(default_factory=lambda: {"kind": "max_train"})
    split: dict = field(default_factory=lambda: {"kind": "sliding", "init_n": 100})
    seed: int = 0
    n_permutations: int = 128

    @classmethod
    def load(cls, path) -> "RunManifest":
        d = _read_json(path)
        base = Path(path).resolve().parent
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise InvalidConfig(f"{sorted(extra)[0]}: unknown manifest field")
        for key in ("inputs", "feature_spec", "out_dir"):
            if key not in d:
                raise InvalidConfig(f"{key}: missing from manifest")
        inputs = d["inputs"] if isinstance(d["inputs"], list) else [d["inputs"]]

        def rel(p):
            return (base / p) if p is not None else None

        m = cls(tuple(rel(p) for p in inputs), rel(d["feature_spec"]), rel(d.get("detector")),
                rel(d["out_dir"]), d.get("mode", AUTO), d.get("explainer", LOCAL_DIFFI),
                d.get("rule", {"kind": "max_train"}), d.get("split", {"kind": "sliding", "init_n": 100}),
                d.get("seed", 0), d.get("n_permutations", 128))
        m.validate()
        return m

    def validate(self) -> None:
        for p in (*self.inputs, self.feature_spec, *([self.detector] if self.detector else [])):
            if not p.exists():
                raise InvalidConfig(f"{p}: referenced path does not exist")
        if self.mode not in MODES:
            raise InvalidConfig(f"mode: unknown diagnosis mode {self.mode!r}")
        if self.explainer not in METHODS:
            raise InvalidConfig(f"explainer: unknown method {self.explainer!r}")
        if self.split.get("kind") not in ("sliding", "prefix", "static"):
            raise InvalidConfig(f"split.kind: unknown split {self.split.get('kind')!r}")
        ThresholdRule.from_dict(self.rule)


def _manifest_table(m: RunManifest, spec: FeatureSpec) -> FeatureTable:
    tables = [extract_dir(p, spec) if p.is_dir() else _load_table(p) for p in m.inputs]
    names = tables[0].names
    if any(t.names != names for t in tables) or names != spec.names:
        raise InvalidConfig("inputs: feature columns do not match the feature spec")
    labels = None
    if all(t.labels is not None for t in tables):
        labels = np.concatenate([t.labels for t in tables])
    return FeatureTable(names, np.vstack([t.values for t in tables]), labels)


def execute_manifest(m: RunManifest) -> dict:
    """Run the full pipeline and write every output file; returns the metrics."""
    spec = FeatureSpec.load(m.feature_spec)
    cfg = _load_config(m.detector, m.seed)
    table = _manifest_table(m, spec)
    rule = ThresholdRule.from_dict(m.rule)
    shap = ShapleyConfig(n_permutations=m.n_permutations, seed=m.seed)
    out = Path(m.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    kind = m.split["kind"]
    x, labels = table.values, table.labels
    reports: list[DiagnosisReport] = []

    def report(i, f: FittedDetector, thr: float):
        reports.append(diagnose(f, x[i], spec, m.mode, m.explainer, thr=thr, shapley=shap, sample_ref=int(i)))

    if kind == "sliding":
        init_n = int(m.split.get("init_n", 100))
        run = sliding_window_run(table, cfg, init_n, rule, refit_every=int(m.split.get("refit_every", 1)),
                                 on_sample=lambda i, f, thr, s: report(i, f, thr))
        test = np.arange(init_n, len(table))
        samples = list(run.samples[init_n:])
        write_scores(out / "anomaly_scores_all.csv", range(len(table)), list(run.samples), labels,
                     warmup=run.warmup)
    else:
        if kind == "prefix":
            n_train = int(m.split.get("n_train", 100))
            if not 0 < n_train < len(table):
                raise InvalidConfig("split.n_train: must leave rows for both training and test")
            train, test = np.arange(n_train), np.arange(n_train, len(table))
        else:
            if labels is None:
                raise InvalidConfig("split: static split needs labelled inputs")
            from .evaluation import static_split

            train, test = static_split(labels, np.random.default_rng(m.seed),
                                       m.split.get("normal_frac", 0.8), m.split.get("anomaly_frac", 0.2))
        f = fit(cfg, x[train], table.names)
        save_model(f, out / "model.vadm")
        thr = threshold(f, rule)
        samples = [decide_score(f, s, thr) for s in f.score_samples(x[test])]
        for i in test:
            report(i, f, thr)
    test_labels = None if labels is None else labels[test]
    write_scores(out / "anomaly_scores.csv", test, samples, test_labels)
    (out / "reports.jsonl").write_text(to_json_lines(reports))
    write_importance(out / "importance.csv", reports)
    metrics = {"config": cfg.to_dict(), "split": m.split, "rule": rule.to_dict(), "seed": m.seed,
               **_metrics(samples, test_labels)}
    labels_found = [r.fault_label for r in reports if r.fault_label is not None]
    if labels_found:
        metrics["fault_labels"] = {k: labels_found.count(k) for k in sorted(set(labels_found))}
    _write_json(out / "metrics.json", metrics)
    return metrics


def cmd_run(args) -> int:
    m = RunManifest.load(args.manifest)
    if args.out:
        m = RunManifest(m.inputs, m.feature_spec, m.detector, Path(args.out), m.mode, m.explainer,
                        m.rule, m.split, m.seed if args.seed is None else args.seed, m.n_permutations)
    elif args.seed is not None:
        m = RunManifest(m.inputs, m.feature_spec, m.detector, m.out_dir, m.mode, m.explainer,
                        m.rule, m.split, args.seed, m.n_permutations)
    metrics = execute_manifest(m)
    print(f"{metrics['n_flagged']} of {metrics['n_samples']} test samples flagged -> {m.out_dir}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="seed for stochastic steps")
    common.add_argument("--config", default=None, help="detector config JSON")
    common.add_argument("--out", default=None, help="output file or directory")

    rule = argparse.ArgumentParser(add_help=False)
    rule.add_argument("--rule", choices=("max_train", "contamination"), default="max_train")
    rule.add_argument("--contamination", type=float, default=None)
    rule.add_argument("--margin", type=float, default=0.0)

    shap = argparse.ArgumentParser(add_help=False)
    shap.add_argument("--n-permutations", type=int, default=128)

    parser = _Parser(prog="vibro-ad", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("extract", parents=[common], help="signal files -> feature CSV")
    p.add_argument("signals_dir")
    p.add_argument("--spec", required=True, help="feature spec JSON")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("fit", parents=[common], help="train a detector")
    p.add_argument("--table", required=True)
    p.add_argument("--normal-only", action="store_true", help="drop rows labelled anomaly")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("score", parents=[common, rule], help="score a feature table")
    p.add_argument("--model", required=True)
    p.add_argument("--table", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("diagnose", parents=[common, rule, shap], help="detect and diagnose each row")
    p.add_argument("--model", required=True)
    p.add_argument("--table", required=True)
    p.add_argument("--spec", required=True)
    p.add_argument("--mode", choices=MODES, default=AUTO)
    p.add_argument("--explainer", choices=METHODS, default=LOCAL_DIFFI)
    p.add_argument("--timings", action="store_true", help="include wall-clock timings")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("explain", parents=[common, shap], help="feature-importance rankings")
    p.add_argument("--model", required=True)
    p.add_argument("--table", required=True)
    p.add_argument("--row", type=int, action="append", help="row index (repeatable; default all)")
    p.add_argument("--method", choices=METHODS, default=LOCAL_DIFFI)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("eval", parents=[common, rule], help="repeated static or sliding-window experiment")
    p.add_argument("--table", required=True)
    p.add_argument("--protocol", choices=("static", "dynamic"), default="static")
    p.add_argument("--iters", type=int, default=10)
    p.add_argument("--init-n", type=int, default=100)
    p.add_argument("--dropout", type=float, default=0.05)
    p.add_argument("--refit-every", type=int, default=1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic labelled dataset")
    p.add_argument("case_style", choices=synth.CASE_STYLES)
    p.add_argument("--params", default=None, help="inline JSON or JSON file of dataset parameters")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", parents=[common], help="full pipeline from a run manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except VibroError as exc:
        sys.stderr.write(f"{exc.code}: {exc}\n")
        return exc.exit_status
    except (FileNotFoundError, IsADirectoryError) as exc:
        sys.stderr.write(f"NO_INPUTS: {exc}\n")
        return 2
    except (ValueError, FormatError) as exc:
        sys.stderr.write(f"INVALID: {exc}\n")
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
