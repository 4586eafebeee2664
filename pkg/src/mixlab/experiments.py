"""Experiment configs and suites: the orchestration behind ``mixlab run``.

A config is one JSON document.  Every experiment trains per seed, writes
per-epoch metrics files, checkpoints and figure data into ``output_dir``,
and returns summary rows (also written to ``summary.csv``).
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import data as _data
from . import evaluate as _eval
from . import gan as _gan
from . import nn as _nn
from . import train as _train
from . import vicinal as _vic
from .rng import Streams

__all__ = [
    "EXPERIMENTS",
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "run_experiment",
    "write_metrics",
    "read_summary",
    "compare",
    "format_table",
    "ablation_policies",
    "SUMMARY_COLUMNS",
]

EXPERIMENTS = ("train", "corrupt_labels", "adversarial", "inbetween", "uci_suite", "ablation_suite", "gan")

_TRAINING_COLUMNS = (
    "best_test_error",
    "last_test_error",
    "median_last_k",
    "train_error_real",
    "train_error_corrupted",
)
SUMMARY_COLUMNS = {
    "train": _TRAINING_COLUMNS,
    "corrupt_labels": _TRAINING_COLUMNS,
    "uci_suite": _TRAINING_COLUMNS,
    "ablation_suite": _TRAINING_COLUMNS,
    "adversarial": ("clean_error", "fgsm_white", "ifgsm_white", "fgsm_black", "ifgsm_black"),
    "inbetween": ("test_error", "miss_rate", "grad_norm_median", "grad_norm_q25", "grad_norm_q75"),
    "gan": ("iteration", "modes_covered", "modes_total", "high_quality_fraction"),
}
_KEY_COLUMNS = ("experiment", "dataset", "policy", "seed")


class ConfigError(ValueError):
    """Invalid experiment config; ``line`` points into the JSON text when known."""

    def __init__(self, msg, line=None, path=None):
        self.line = line
        self.path = path
        where = f"{path or '<config>'}:{line}: " if line else (f"{path}: " if path else "")
        super().__init__(where + msg)


# --------------------------------------------------------------------------
# config
# --------------------------------------------------------------------------

_DATASET_DEFAULTS = {
    "kind": None,
    "path": None,
    "manifest": None,
    "names": None,
    "n": 1000,
    "noise_sigma": 0.1,
    "num_classes": 10,
    "dim": 2,
    "spread": 3.0,
    "label_column": -1,
    "has_header": False,
    "delimiter": ",",
    "test_fraction": 0.2,
}
_MODEL_DEFAULTS = {"hidden": [64, 64], "dropout_p": 0.0}
_OPTION_DEFAULTS = {
    "corruption": 0.0,
    "median_k": 10,
    "attack_epsilon_fraction": 0.1,
    "ifgsm_iterations": 10,
    "num_pairs": 1000,
    "lambda_grid": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
    "alpha": 0.2,
    "gan": {},
    "knn_k": 200,
    "save_checkpoints": True,
}


@dataclass
class ExperimentConfig:
    experiment: str
    dataset: dict
    model: dict = field(default_factory=dict)
    policy: dict = None
    policies: list = None
    train: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    output_dir: str = "runs/out"
    seeds: list = field(default_factory=lambda: [0])
    base_dir: str = field(default=".", compare=False, repr=False)

    def to_dict(self):
        return {
            "experiment": self.experiment,
            "dataset": dict(self.dataset),
            "model": dict(self.model),
            "policy": None if self.policy is None else dict(self.policy),
            "policies": None if self.policies is None else [dict(p) for p in self.policies],
            "train": dict(self.train),
            "options": dict(self.options),
            "output_dir": self.output_dir,
            "seeds": list(self.seeds),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def resolve(self, p):
        return p if p is None or os.path.isabs(p) else os.path.join(self.base_dir, p)

    def train_config(self, seed):
        return _train.TrainConfig.from_dict({**self.train, "seed": seed})

    def main_policy(self):
        return _vic.policy_from_dict(self.policy) if self.policy else _vic.ERM()


def _line_of(text, key):
    if text is None:
        return None
    needle = f'"{key}"'
    for i, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return i
    return None


def parse_config(doc, text=None, path=None, base_dir=".", check_files=True):
    """Validate a decoded config document and fill in defaults."""

    def fail(msg, key=None):
        raise ConfigError(msg, _line_of(text, key) if key else None, path)

    if not isinstance(doc, dict):
        fail("config must be a JSON object")
    known = {"experiment", "dataset", "model", "policy", "policies", "train", "options", "output_dir", "seeds"}
    for k in doc:
        if k not in known:
            fail(f"unknown top-level key {k!r}", k)
    exp = doc.get("experiment")
    if exp not in EXPERIMENTS:
        fail(f"experiment must be one of {EXPERIMENTS}, got {exp!r}", "experiment")

    dataset = dict(_DATASET_DEFAULTS)
    for k, v in (doc.get("dataset") or {}).items():
        if k not in dataset:
            fail(f"unknown dataset key {k!r}", k)
        dataset[k] = v
    sources = [k for k in ("kind", "path", "manifest") if dataset[k] is not None]
    if len(sources) != 1:
        fail("dataset needs exactly one of 'kind', 'path' or 'manifest'", "dataset")
    if dataset["kind"] is not None and dataset["kind"] not in _data.SYNTHETIC_KINDS:
        fail(f"unknown synthetic kind {dataset['kind']!r}", "kind")
    if exp == "uci_suite" and dataset["manifest"] is None:
        fail("uci_suite needs dataset.manifest", "dataset")
    if exp == "gan" and dataset["kind"] not in ("gauss_ring", "gauss_grid"):
        fail("gan needs dataset.kind gauss_ring or gauss_grid", "kind")
    if not 0.0 <= float(dataset["test_fraction"]) < 1.0:
        fail("test_fraction must be in [0, 1)", "test_fraction")

    model = dict(_MODEL_DEFAULTS)
    for k, v in (doc.get("model") or {}).items():
        if k not in model:
            fail(f"unknown model key {k!r}", k)
        model[k] = v
    model["hidden"] = [int(h) for h in model["hidden"]]

    policy = doc.get("policy")
    policies = doc.get("policies")
    try:
        if policy is not None:
            _vic.policy_from_dict(policy)
        if policies is not None:
            for p in policies:
                _vic.policy_from_dict(p)
    except (ValueError, TypeError) as e:
        fail(f"invalid policy: {e}", "policy" if policy is not None else "policies")

    train = dict(doc.get("train") or {})
    train.pop("seed", None)
    try:
        _train.TrainConfig.from_dict({**train, "seed": 0})
    except (ValueError, TypeError) as e:
        fail(f"invalid train config: {e}", "train")

    options = dict(_OPTION_DEFAULTS)
    for k, v in (doc.get("options") or {}).items():
        if k not in options:
            fail(f"unknown option {k!r}", k)
        options[k] = v
    if not 0.0 <= float(options["corruption"]) <= 1.0:
        fail("corruption must be in [0, 1]", "corruption")

    seeds = doc.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
        fail("seeds must be a non-empty list of integers", "seeds")

    cfg = ExperimentConfig(
        experiment=exp,
        dataset=dataset,
        model=model,
        policy=None if policy is None else dict(policy),
        policies=None if policies is None else [dict(p) for p in policies],
        train=train,
        options=options,
        output_dir=doc.get("output_dir", "runs/out"),
        seeds=list(seeds),
        base_dir=base_dir,
    )
    if check_files:
        for key in ("path", "manifest"):
            p = cfg.resolve(dataset[key])
            if p is not None and not os.path.exists(p):
                fail(f"file not found: {dataset[key]}", key)
        if dataset["manifest"] is not None:
            for name, entry in _data.load_manifest(cfg.resolve(dataset["manifest"])).items():
                if not os.path.exists(entry["path"]):
                    fail(f"manifest entry {name!r}: file not found: {entry['path']}", "manifest")
    return cfg


def load_config(path, check_files=True):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON: {e.msg}", e.lineno, path) from None
    return parse_config(doc, text=text, path=path, base_dir=os.path.dirname(os.path.abspath(path)), check_files=check_files)


# --------------------------------------------------------------------------
# output helpers
# --------------------------------------------------------------------------


def _fmt_float(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return repr(float(v))


def _fmt_pct(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return f"{v:.2f}"


def write_metrics(path, logs):
    """Per-epoch CSV; empty cells for undefined errors, floats in round-trip form."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(_train.EpochLog.FIELDS) + "\n")
        for r in logs:
            fh.write(
                ",".join(
                    [str(r.epoch)] + [_fmt_float(getattr(r, f)) for f in _train.EpochLog.FIELDS[1:]]
                )
                + "\n"
            )


class _Sink:
    """Collects artifact paths; writes nothing when ``root`` is None."""

    def __init__(self, root):
        self.root = root
        self.files = []
        if root is not None:
            os.makedirs(root, exist_ok=True)

    def path(self, name):
        self.files.append(name)
        return None if self.root is None else os.path.join(self.root, name)

    def metrics(self, name, logs):
        p = self.path(name)
        if p:
            write_metrics(p, logs)

    def checkpoint(self, name, model):
        p = self.path(name)
        if p:
            _nn.save_checkpoint(model, p)

    def table(self, name, header, rows):
        p = self.path(name)
        if p:
            with open(p, "w", encoding="utf-8", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(header)
                w.writerows(rows)


def _slug(label):
    out = "".join(c if c.isalnum() else "_" for c in label.lower())
    while "__" in out:
        out = out.replace("__", "_")
    return out.strip("_")


# --------------------------------------------------------------------------
# building blocks
# --------------------------------------------------------------------------


def _load_source(cfg, seed, name=None):
    d = cfg.dataset
    streams = Streams(seed)
    if name is not None:
        entry = _data.load_manifest(cfg.resolve(d["manifest"]))[name]
        return _data.load_csv(entry["path"], entry["label_column"], entry["has_header"], entry["delimiter"])
    if d["path"] is not None:
        return _data.load_csv(cfg.resolve(d["path"]), d["label_column"], d["has_header"], d["delimiter"])
    return _data.make_synthetic(
        d["kind"], int(d["n"]), float(d["noise_sigma"]), streams["data"],
        num_classes=int(d["num_classes"]), dim=int(d["dim"]), spread=float(d["spread"]),
    )


def load_split(cfg, seed, name=None):
    """Seeded stratified train/test split of the configured dataset."""
    ds = _load_source(cfg, seed, name)
    train_ds, test_ds = _data.stratified_split(ds, float(cfg.dataset["test_fraction"]), Streams(seed)["split"])
    frac = float(cfg.options["corruption"])
    if frac > 0:
        train_ds = _data.corrupt_labels(train_ds, frac, Streams(seed)["corrupt"])
    return train_ds, test_ds


def train_model(cfg, train_ds, test_ds, policy, seed, init_stream="init", evaluate=True):
    spec = _nn.MlpSpec(train_ds.input_dim, tuple(cfg.model["hidden"]), train_ds.num_classes, float(cfg.model["dropout_p"]))
    model = _nn.init_mlp(spec, Streams(seed)[init_stream])
    return _train.fit(model, train_ds, test_ds, policy, cfg.train_config(seed), evaluate=evaluate)


def _training_row(cfg, dataset_name, policy, seed, logs):
    k = int(cfg.options["median_k"])
    best, last = _eval.best_and_last(logs) if logs else (float("nan"), float("nan"))
    med = _eval.median_last_k(logs, k) if len(logs) >= k else float("nan")
    return {
        "experiment": cfg.experiment,
        "dataset": dataset_name,
        "policy": _vic.policy_label(policy),
        "seed": seed,
        "best_test_error": best,
        "last_test_error": last,
        "median_last_k": med,
        "train_error_real": logs[-1].train_error_real if logs else float("nan"),
        "train_error_corrupted": logs[-1].train_error_corrupted if logs else float("nan"),
    }


def _dataset_name(cfg):
    d = cfg.dataset
    if d["kind"]:
        return d["kind"]
    if d["path"]:
        return os.path.splitext(os.path.basename(d["path"]))[0]
    return "uci"


def ablation_policies(num_hidden, alpha=1.0, knn_k=200):
    """Every row of the ablation grid, mapped onto an MLP with ``num_hidden`` hidden layers."""
    rows = [_vic.ERM(), _vic.Mixup(alpha), _vic.Mixup(alpha, partner="knn", knn_k=knn_k)]
    rows += [_vic.Mixup(alpha, mix_layer=k) for k in range(1, num_hidden + 1)]
    for pairing, partner in (("same_class", "knn"), ("all_class", "knn"), ("same_class", "random_perm"), ("all_class", "random_perm")):
        rows.append(_vic.Mixup(alpha, pairing=pairing, partner=partner, target="hard_nearest", knn_k=knn_k))
    rows += [_vic.LabelSmoothing(e) for e in (0.05, 0.1, 0.2)]
    rows += [_vic.MixupPlusSmoothing(alpha, e) for e in (0.05, 0.1, 0.2, 0.4)]
    rows += [_vic.GaussianNoise(s) for s in (0.05, 0.1, 0.2)]
    return rows


# --------------------------------------------------------------------------
# experiments
# --------------------------------------------------------------------------


def _exp_train(cfg, seed, sink):
    train_ds, test_ds = load_split(cfg, seed)
    policy = cfg.main_policy()
    model, logs = train_model(cfg, train_ds, test_ds, policy, seed)
    tag = _slug(_vic.policy_label(policy))
    sink.metrics(f"metrics_{tag}_seed{seed}.csv", logs)
    if cfg.options["save_checkpoints"]:
        sink.checkpoint(f"checkpoint_{tag}_seed{seed}.json", model)
    return [_training_row(cfg, _dataset_name(cfg), policy, seed, logs)]


def _exp_policy_list(cfg, seed, sink, policies, dataset_name=None, name=None):
    train_ds, test_ds = load_split(cfg, seed, name)
    rows = []
    for i, policy in enumerate(policies):
        model, logs = train_model(cfg, train_ds, test_ds, policy, seed)
        tag = f"{_slug(dataset_name)}_" if dataset_name else ""
        tag += f"{i:02d}_{_slug(_vic.policy_label(policy))}"
        sink.metrics(f"metrics_{tag}_seed{seed}.csv", logs)
        if cfg.options["save_checkpoints"]:
            sink.checkpoint(f"checkpoint_{tag}_seed{seed}.json", model)
        rows.append(_training_row(cfg, dataset_name or _dataset_name(cfg), policy, seed, logs))
    return rows


def _exp_corrupt(cfg, seed, sink):
    policies = [_vic.ERM(), cfg.main_policy()] if cfg.policies is None else [_vic.policy_from_dict(p) for p in cfg.policies]
    return _exp_policy_list(cfg, seed, sink, policies)


def _exp_ablation(cfg, seed, sink):
    if cfg.policies is not None:
        policies = [_vic.policy_from_dict(p) for p in cfg.policies]
    else:
        alpha = cfg.main_policy().alpha if cfg.policy else 1.0
        policies = ablation_policies(len(cfg.model["hidden"]), alpha, int(cfg.options["knn_k"]))
    return _exp_policy_list(cfg, seed, sink, policies)


def _exp_uci(cfg, seed, sink):
    names = cfg.dataset["names"] or list(_data.load_manifest(cfg.resolve(cfg.dataset["manifest"])))
    rows = []
    for name in names:
        rows += _exp_policy_list(cfg, seed, sink, [_vic.ERM(), cfg.main_policy()], dataset_name=name, name=name)
    return rows


def adversarial_seed(cfg, seed):
    """White- and black-box FGSM / I-FGSM errors for ERM and the configured policy.

    Two ERM models are trained (different init/shuffle seeds); the first is
    the black-box source.  The budget is a fraction of each feature's range
    on the training set, and attacks are clamped to that range.
    """
    train_ds, test_ds = load_split(cfg, seed)
    policy = cfg.main_policy()
    erm_a, _ = train_model(cfg, train_ds, test_ds, _vic.ERM(), seed, evaluate=False)
    erm_b, _ = train_model(cfg, train_ds, test_ds, _vic.ERM(), seed + 7919, init_stream="init_second", evaluate=False)
    mixed, _ = train_model(cfg, train_ds, test_ds, policy, seed, evaluate=False)
    lo, hi = train_ds.bounds()
    eps = float(cfg.options["attack_epsilon_fraction"]) * (hi - lo)
    fg = _eval.AttackSpec("fgsm", eps)
    it = _eval.AttackSpec("ifgsm", eps, int(cfg.options["ifgsm_iterations"]))
    bounds = (lo, hi)
    out = {}
    for label, model, victim in (("ERM", erm_a, erm_b), (_vic.policy_label(policy), mixed, mixed)):
        out[label] = {
            "model": model,
            "clean_error": _eval.test_error(model, test_ds),
            "fgsm_white": _eval.attack_eval(model, model, test_ds, fg, bounds),
            "ifgsm_white": _eval.attack_eval(model, model, test_ds, it, bounds),
            "fgsm_black": _eval.attack_eval(erm_a, victim, test_ds, fg, bounds),
            "ifgsm_black": _eval.attack_eval(erm_a, victim, test_ds, it, bounds),
        }
    return out


def _exp_adversarial(cfg, seed, sink):
    rows = []
    for label, res in adversarial_seed(cfg, seed).items():
        if cfg.options["save_checkpoints"]:
            sink.checkpoint(f"checkpoint_{_slug(label)}_seed{seed}.json", res["model"])
        row = {"experiment": cfg.experiment, "dataset": _dataset_name(cfg), "policy": label, "seed": seed}
        row.update({k: res[k] for k in SUMMARY_COLUMNS["adversarial"]})
        rows.append(row)
    return rows


def _exp_inbetween(cfg, seed, sink):
    train_ds, test_ds = load_split(cfg, seed)
    rows = []
    grid = cfg.options["lambda_grid"]
    for policy in (_vic.ERM(), cfg.main_policy()):
        model, logs = train_model(cfg, train_ds, test_ds, policy, seed)
        label = _vic.policy_label(policy)
        tag = _slug(label)
        sink.metrics(f"metrics_{tag}_seed{seed}.csv", logs)
        rep = _eval.inbetween_analysis(model, train_ds, int(cfg.options["num_pairs"]), grid, Streams(seed)["pairs"])
        sink.table(
            f"inbetween_{tag}_seed{seed}.csv",
            ("lambda", "miss_rate", "grad_norm_median"),
            [(_fmt_float(l), _fmt_float(m), _fmt_float(g))
             for l, m, g in zip(rep.lambda_grid, rep.miss_rate_per_lambda, rep.gradient_norm_median_per_lambda)],
        )
        if cfg.options["save_checkpoints"]:
            sink.checkpoint(f"checkpoint_{tag}_seed{seed}.json", model)
        rows.append({
            "experiment": cfg.experiment, "dataset": _dataset_name(cfg), "policy": label, "seed": seed,
            "test_error": logs[-1].test_error if logs else _eval.test_error(model, test_ds),
            "miss_rate": rep.miss_rate,
            "grad_norm_median": rep.gradient_norm_median,
            "grad_norm_q25": rep.gradient_norm_quartiles[0],
            "grad_norm_q75": rep.gradient_norm_quartiles[1],
        })
    return rows


def gan_config(cfg, seed, alpha):
    opts = dict(cfg.options["gan"])
    return _gan.GanConfig(**{**opts, "alpha": alpha, "seed": seed})


def _exp_gan(cfg, seed, sink):
    d = cfg.dataset
    ds = _data.make_synthetic(d["kind"], int(d["n"]), float(d["noise_sigma"]), Streams(seed)["data"])
    means = _data.mode_means(d["kind"])
    rows = []
    for alpha in (0.0, float(cfg.options["alpha"])):
        res = _gan.train_gan(gan_config(cfg, seed, alpha), ds, mode_means=means, component_std=float(d["noise_sigma"]))
        label = "ERM-GAN" if alpha == 0 else f"mixup-GAN(a={alpha:g})"
        tag = _slug(label)
        for snap in res.snapshots:
            p = sink.path(f"gan_{tag}_seed{seed}_iter{snap.iteration:06d}.csv")
            if p:
                _gan.write_snapshot(p, snap.samples)
        sink.table(
            f"gan_coverage_{tag}_seed{seed}.csv",
            ("iteration", "modes_covered", "modes_total", "high_quality_fraction"),
            [(str(s.iteration), str(s.coverage.modes_covered), str(s.coverage.modes_total), _fmt_float(s.coverage.high_quality_fraction))
             for s in res.snapshots],
        )
        if res.snapshots:
            last = res.snapshots[-1]
            rows.append({
                "experiment": cfg.experiment, "dataset": d["kind"], "policy": label, "seed": seed,
                "iteration": last.iteration,
                "modes_covered": last.coverage.modes_covered,
                "modes_total": last.coverage.modes_total,
                "high_quality_fraction": last.coverage.high_quality_fraction,
            })
    return rows


_RUNNERS = {
    "train": _exp_train,
    "corrupt_labels": _exp_corrupt,
    "adversarial": _exp_adversarial,
    "inbetween": _exp_inbetween,
    "uci_suite": _exp_uci,
    "ablation_suite": _exp_ablation,
    "gan": _exp_gan,
}


def _format_cell(col, v):
    if col in ("experiment", "dataset", "policy", "seed", "iteration", "modes_covered", "modes_total"):
        return str(v)
    if col in ("grad_norm_median", "grad_norm_q25", "grad_norm_q75", "high_quality_fraction"):
        return _fmt_float(v)
    return _fmt_pct(v)


def summary_text(experiment, rows):
    cols = _KEY_COLUMNS + SUMMARY_COLUMNS[experiment]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_format_cell(c, r[c]) for c in cols])
    return buf.getvalue()


def run_experiment(cfg, output_dir=None):
    """Run every seed; write artifacts under ``output_dir`` (default: the config's).

    Returns the summary rows.  A manifest (resolved config, seeds, status and
    artifact list) is always written; on failure it is marked partial and the
    exception propagates.
    """
    out = output_dir if output_dir is not None else cfg.resolve(cfg.output_dir)
    sink = _Sink(out)
    rows, status, error = [], "complete", None
    try:
        for seed in cfg.seeds:
            rows += _RUNNERS[cfg.experiment](cfg, seed, sink)
        p = sink.path("summary.csv")
        if p:
            with open(p, "w", encoding="utf-8", newline="") as fh:
                fh.write(summary_text(cfg.experiment, rows))
    except Exception as e:  # recorded in the manifest, then re-raised
        status, error = "failed", f"{type(e).__name__}: {e}"
        raise
    finally:
        if out is not None:
            manifest = {
                "config": cfg.to_dict(),
                "seeds": list(cfg.seeds),
                "status": status,
                "partial": status != "complete",
                "error": error,
                "artifacts": sorted(sink.files),
            }
            with open(os.path.join(out, "manifest.json"), "w", encoding="utf-8", newline="\n") as fh:
                fh.write(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return rows


# --------------------------------------------------------------------------
# comparison of summary reports
# --------------------------------------------------------------------------


def read_summary(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return list(reader.fieldnames or []), list(reader)


def _method_order(policies):
    # ERM rows first, then methods in order of first appearance
    seen = []
    for p in policies:
        if p not in seen:
            seen.append(p)
    return sorted(seen, key=lambda p: (0 if p.split("(")[0].upper() in ("ERM", "ERM-GAN") else 1, seen.index(p)))


def compare(report_paths):
    """Merge summary reports that share a schema.

    Returns ``(header, rows, aggregate_header, aggregates)``: the merged rows
    keyed by (experiment, dataset, policy, seed) with ERM first, and per
    (experiment, dataset, policy) mean and median of every metric column.
    """
    if not report_paths:
        raise ValueError("no reports given")
    header, rows = None, []
    for p in report_paths:
        h, r = read_summary(p)
        if header is None:
            header = h
        elif h != header:
            raise ValueError(f"schema mismatch: {p} has columns {h}, expected {header}")
        rows += r
    if header[: len(_KEY_COLUMNS)] != list(_KEY_COLUMNS):
        raise ValueError(f"not a summary report: columns {header}")
    metrics = header[len(_KEY_COLUMNS):]
    order = _method_order([r["policy"] for r in rows])
    groups = []
    for r in rows:
        g = (r["experiment"], r["dataset"])
        if g not in groups:
            groups.append(g)

    def seed_key(s):
        try:
            return (0, int(s), s)
        except ValueError:
            return (1, 0, s)

    rows = sorted(rows, key=lambda r: (groups.index((r["experiment"], r["dataset"])), order.index(r["policy"]), seed_key(r["seed"])))

    agg_header = ["experiment", "dataset", "policy", "n_seeds"]
    for m in metrics:
        agg_header += [f"{m}_mean", f"{m}_median"]
    aggregates = []
    for g in groups:
        for pol in order:
            sel = [r for r in rows if (r["experiment"], r["dataset"]) == g and r["policy"] == pol]
            if not sel:
                continue
            out = {"experiment": g[0], "dataset": g[1], "policy": pol, "n_seeds": str(len(sel))}
            for m in metrics:
                vals = np.array([float(r[m]) for r in sel if r[m] != ""], dtype=np.float64)
                out[f"{m}_mean"] = "" if len(vals) == 0 else repr(round(float(vals.mean()), 6))
                out[f"{m}_median"] = "" if len(vals) == 0 else repr(round(float(np.median(vals)), 6))
            aggregates.append(out)
    return header, rows, agg_header, aggregates


def format_table(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([str(r[c]) for c in header])
    return buf.getvalue()
