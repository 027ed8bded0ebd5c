"""Experiment orchestration: configuration, runs, comparisons and report files.

Everything written by :func:`emit_report` except ``timings.csv`` and
``timing_summary.json`` is a deterministic function of the configuration, so
two runs with the same seed produce byte-identical files. Wall-clock timings
are kept in those two files only.
"""

from __future__ import annotations

import copy
import csv
import dataclasses
import io
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

from .data import Dataset, load_dataset, load_schema, split_subsets
from .errors import DomainError, RFSissoError
from .forest import ForestConfig, ImportanceReport, parse_selection, repeated_importance
from .sisso import DescriptorModel, SisConfig, SpaceConfig, run_rf_sisso, run_sisso
from .space import OperatorSet

__all__ = [
    "ExperimentConfig",
    "load_config",
    "ExperimentReport",
    "RunRecord",
    "cmd_importance",
    "cmd_run",
    "cmd_compare",
    "emit_report",
]

DEFAULTS: dict[str, Any] = {
    "data": None,
    "schema": None,
    "task": None,
    "seed": 0,
    "workers": None,
    "sizes": [224, 150, 75, 45],
    "repeats": 5,
    "train_size": None,
    "method": "rf-sisso",
    "selection": ["topk:8"],
    "out": "results",
    "rf": {
        "n_trees": 100,
        "repeats": 50,
        "max_depth": None,
        "min_samples_leaf": 1,
        "features_per_split": "sqrt",
        "bootstrap": True,
        "holdout": 0.2,
    },
    "space": {
        "rung": 2,
        "ops": OperatorSet.full().names,
        "units": True,
        "dedup_tol": 1e-9,
        "max_columns": 10_000_000,
        "max_bytes": 2 * 1024**3,
    },
    "sis": {"subspace_size": 30, "dim": 2, "svc_C": 1.0},
}


def _merge(base: dict, over: Mapping) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in out:
            raise ValueError(f"unknown config key {k!r}")
        if isinstance(out[k], dict) and isinstance(v, Mapping):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class ExperimentConfig:
    """Effective configuration after merging defaults, file and CLI overrides."""

    values: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))
    base_dir: Path = field(default_factory=Path.cwd)

    def __getitem__(self, key):
        return self.values[key]

    def override(self, **kw) -> "ExperimentConfig":
        """Return a copy with dotted keys (``"rf.n_trees"``) replaced; None values are ignored."""
        vals = copy.deepcopy(self.values)
        for dotted, v in kw.items():
            if v is None:
                continue
            node = vals
            *parents, leaf = dotted.replace("__", ".").split(".")
            for p in parents:
                node = node[p]
            if leaf not in node:
                raise ValueError(f"unknown config key {dotted!r}")
            node[leaf] = v
        cfg = ExperimentConfig(vals, self.base_dir)
        cfg.validate()
        return cfg

    def validate(self):
        v = self.values
        if v["task"] not in (None, "regression", "classification"):
            raise ValueError(f"task must be regression or classification, got {v['task']!r}")
        if isinstance(v["sizes"], (int, str)):
            v["sizes"] = _int_list(v["sizes"])
        if isinstance(v["selection"], str):
            v["selection"] = [s for s in v["selection"].split(",") if s]
        for s in v["selection"]:
            parse_selection(s)
        if not v["selection"]:
            raise ValueError("at least one selection mode is needed")
        if any(int(s) < 1 for s in v["sizes"]) or v["repeats"] < 1:
            raise ValueError("sizes and repeats must be positive")
        if v["method"] not in ("sisso", "rf-sisso"):
            raise ValueError("method must be sisso or rf-sisso")
        self.rf_config()
        self.space_config()
        if v["rf"]["repeats"] < 1:
            raise ValueError("rf.repeats must be >= 1")
        return self

    # -- typed views ----------------------------------------------------

    def path(self, key: str) -> Path | None:
        p = self.values[key]
        if p is None:
            return None
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def rf_config(self) -> ForestConfig:
        rf = dict(self.values["rf"])
        rf.pop("repeats")
        return ForestConfig(**rf)

    def space_config(self) -> SpaceConfig:
        s = self.values["space"]
        return SpaceConfig(
            rung=int(s["rung"]),
            ops=OperatorSet.from_names(s["ops"]),
            units=bool(s["units"]),
            dedup_tol=float(s["dedup_tol"]),
            max_columns=int(s["max_columns"]),
            max_bytes=int(s["max_bytes"]),
        )

    def sis_config(self, task: str) -> SisConfig:
        s = self.values["sis"]
        return SisConfig(
            subspace_size=int(s["subspace_size"]),
            max_dim=int(s["dim"]),
            task=task,
            workers=self.values["workers"],
            svc_C=float(s["svc_C"]),
        )

    def load_data(self) -> Dataset:
        data, schema = self.path("data"), self.path("schema")
        if data is None or schema is None:
            raise FileNotFoundError("both a dataset (--data) and a schema (--schema) are required")
        sch = load_schema(schema)
        if self.values["task"] is not None:
            sch = dataclasses.replace(sch, task=self.values["task"])
        return load_dataset(data, sch)

    def to_dict(self) -> dict:
        """Result-relevant settings; ``workers`` and ``out`` do not change results and are left out."""
        d = copy.deepcopy(self.values)
        d.pop("workers")
        d.pop("out")
        return d


def _int_list(text) -> list[int]:
    if isinstance(text, int):
        return [text]
    return [int(t) for t in str(text).replace(" ", "").split(",") if t]


def load_config(path=None) -> ExperimentConfig:
    """Defaults overlaid with a YAML file; relative paths resolve against the file's directory."""
    if path is None:
        return ExperimentConfig().validate()
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, Mapping):
        raise ValueError(f"{path}: config must be a mapping")
    return ExperimentConfig(_merge(DEFAULTS, raw), path.resolve().parent).validate()


# ---------------------------------------------------------------------------
# records


@dataclass
class RunRecord:
    """One (size, repeat, method, selection) cell of an experiment."""

    size: int
    repeat: int
    method: str
    selection: str
    status: str = "ok"
    n_primaries: int = 0
    selected: list[str] = field(default_factory=list)
    space_size: int = 0
    models: list[DescriptorModel] = field(default_factory=list)
    train_metric: float | None = None
    test_metric: float | None = None
    warnings: list[str] = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    importance: ImportanceReport | None = None
    plot_points: list[tuple] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == "ok"


ROW_FIELDS = [
    "size",
    "repeat",
    "method",
    "selection",
    "status",
    "metric",
    "train",
    "test",
    "n_primaries",
    "selected",
    "space_size",
    "dim",
    "descriptors",
    "coefficients",
    "intercept",
    "score",
    "warnings",
]
TIMING_FIELDS = ["size", "repeat", "method", "selection", "rf", "space", "sis", "so", "regression", "total"]


@dataclass
class ExperimentReport:
    task: str
    config: dict
    records: list[RunRecord] = field(default_factory=list)

    @property
    def metric(self) -> str:
        return "accuracy" if self.task == "classification" else "rmse"

    @property
    def failed(self) -> int:
        return sum(not r.ok for r in self.records)

    def summary(self) -> dict:
        """Deterministic aggregate (no timings) keyed by size and method."""
        groups: dict[tuple, list[RunRecord]] = {}
        for r in self.records:
            groups.setdefault((r.size, r.method, r.selection), []).append(r)
        per = []
        for (size, method, sel), rs in sorted(groups.items(), key=lambda kv: (-kv[0][0], kv[0][1], kv[0][2])):
            ok = [r for r in rs if r.ok]
            per.append(
                {
                    "size": size,
                    "method": method,
                    "selection": sel,
                    "runs": len(rs),
                    "failed": len(rs) - len(ok),
                    f"mean_train_{self.metric}": _mean([r.train_metric for r in ok]),
                    f"mean_test_{self.metric}": _mean([r.test_metric for r in ok]),
                    "mean_space_size": _mean([r.space_size for r in ok]),
                }
            )
        return {
            "task": self.task,
            "metric": self.metric,
            "rows": len(self.records),
            "failed": self.failed,
            "groups": per,
            "config": self.config,
        }

    def timing_summary(self) -> dict:
        """Mean phase timings and the SISSO / RF-SISSO time ratio per size."""
        out = []
        sizes = sorted({r.size for r in self.records}, reverse=True)
        for size in sizes:
            base = [r for r in self.records if r.size == size and r.method == "sisso" and r.ok]
            for sel in sorted({r.selection for r in self.records if r.method == "rf-sisso"}):
                rf = [r for r in self.records if r.size == size and r.method == "rf-sisso" and r.selection == sel and r.ok]
                entry = {"size": size, "selection": sel}
                for phase in ("regression", "so", "sis", "space", "rf", "total"):
                    a = _mean([r.timings.get(phase) for r in base])
                    b = _mean([r.timings.get(phase) for r in rf])
                    entry[f"sisso_{phase}"] = a
                    entry[f"rfsisso_{phase}"] = b
                entry["time_ratio"] = _ratio(entry["sisso_regression"], entry["rfsisso_regression"])
                entry["so_time_ratio"] = _ratio(entry["sisso_so"], entry["rfsisso_so"])
                out.append(entry)
        return {"sizes": out}


def _mean(xs):
    xs = [float(x) for x in xs if x is not None and not (isinstance(x, float) and math.isnan(x))]
    return float(np.mean(xs)) if xs else None


def _ratio(a, b):
    if a is None or b is None or b == 0:
        return None
    return a / b


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _row(rec: RunRecord, metric: str) -> list[str]:
    best = rec.models[-1] if rec.models else None
    return [
        str(rec.size),
        str(rec.repeat),
        rec.method,
        rec.selection,
        rec.status,
        metric,
        _fmt(rec.train_metric),
        _fmt(rec.test_metric),
        str(rec.n_primaries),
        ";".join(rec.selected),
        str(rec.space_size),
        str(best.dim) if best else "",
        " ; ".join(best.labels) if best else "",
        ";".join(repr(float(c)) for c in best.coefficients) if best else "",
        _fmt(float(best.intercept)) if best else "",
        _fmt(float(best.score)) if best else "",
        " | ".join(rec.warnings),
    ]


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def descriptor_lines(report: ExperimentReport) -> list[str]:
    """Table-style listing of every descriptor, one block per run."""
    lines = []
    for r in report.records:
        head = f"[size={r.size} repeat={r.repeat} method={r.method} selection={r.selection}]"
        lines.append(head)
        if not r.ok:
            lines.append(f"  {r.status}")
        for m in r.models:
            for i, lab in enumerate(m.labels):
                lines.append(f"  {m.dim}D  d{i + 1} = {lab}")
            if m.task == "regression":
                lines.append(f"      coefficients = {[float(c) for c in m.coefficients]}, intercept = {float(m.intercept)!r}, rmse = {float(m.score)!r}")
            else:
                lines.append(
                    f"      overlap = {int(m.score)}, margin = {float(m.margin)!r}, boundary w = {[float(c) for c in m.coefficients]}, b = {float(m.intercept)!r}"
                )
        lines.append("")
    return lines


def emit_report(report: ExperimentReport, out_dir) -> list[Path]:
    """Write the report files into ``out_dir`` and return their paths.

    ``rows.csv``, ``summary.json``, ``descriptors.txt`` and ``plotdata/*.csv``
    are deterministic; timings go to ``timings.csv`` and ``timing_summary.json``.
    """
    out = Path(out_dir)
    (out / "plotdata").mkdir(parents=True, exist_ok=True)
    files: dict[str, str] = {}
    files["rows.csv"] = _csv(ROW_FIELDS, [_row(r, report.metric) for r in report.records])
    files["summary.json"] = json.dumps(report.summary(), indent=2, sort_keys=True) + "\n"
    files["descriptors.txt"] = "\n".join(descriptor_lines(report)) + ("\n" if report.records else "")

    acc = [
        [g["size"], g["method"], g["selection"], _fmt(g[f"mean_train_{report.metric}"]), _fmt(g[f"mean_test_{report.metric}"])]
        for g in report.summary()["groups"]
    ]
    files["plotdata/metric_by_size.csv"] = _csv(["size", "method", "selection", "mean_train", "mean_test"], acc)
    imp_rows = []
    for r in report.records:
        if r.importance is not None:
            for name, score, rank in r.importance.to_rows():
                imp_rows.append([r.size, r.repeat, r.selection, name, repr(score), rank])
    files["plotdata/importance.csv"] = _csv(["size", "repeat", "selection", "feature", "score", "rank"], imp_rows)
    pts = [[r.size, r.repeat, r.method, r.selection, *p] for r in report.records for p in r.plot_points]
    files["plotdata/descriptor_points.csv"] = _csv(
        ["size", "repeat", "method", "selection", "set", "d1", "d2", "label"], pts
    )
    bnd = []
    for r in report.records:
        if r.models and r.models[-1].task == "classification":
            m = r.models[-1]
            w = [repr(float(c)) for c in m.coefficients] + [""] * (2 - m.dim)
            bnd.append([r.size, r.repeat, r.method, r.selection, *w, repr(float(m.intercept))])
    files["plotdata/boundaries.csv"] = _csv(["size", "repeat", "method", "selection", "w1", "w2", "b"], bnd)

    trows = [
        [r.size, r.repeat, r.method, r.selection] + [_fmt(r.timings.get(k)) for k in TIMING_FIELDS[4:]]
        for r in report.records
    ]
    files["timings.csv"] = _csv(TIMING_FIELDS, trows)
    files["timing_summary.json"] = json.dumps(report.timing_summary(), indent=2, sort_keys=True) + "\n"

    written = []
    for name, text in files.items():
        p = out / name
        with open(p, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        written.append(p)
    return written


# ---------------------------------------------------------------------------
# commands


def cmd_importance(cfg: ExperimentConfig, ds: Dataset | None = None) -> ImportanceReport:
    """Repeated forest importance on the whole dataset; writes importance.csv/.json."""
    ds = ds if ds is not None else cfg.load_data()
    rep = repeated_importance(ds, int(cfg["rf"]["repeats"]), cfg.rf_config(), int(cfg["seed"]), cfg["workers"])
    out = cfg.path("out")
    out.mkdir(parents=True, exist_ok=True)
    (out / "importance.csv").write_text(rep.to_csv(), encoding="utf-8")
    (out / "importance.json").write_text(rep.to_json(), encoding="utf-8")
    return rep


def _evaluate(rec: RunRecord, models: list[DescriptorModel], train: Dataset, test: Dataset):
    rec.models = models
    if not models:
        rec.status = "error:NoModel"
        return
    best = models[-1]
    key = "accuracy" if best.task == "classification" else "rmse"
    try:
        rec.train_metric = best.evaluate(train)[key]
    except DomainError as exc:
        rec.status = "error:DomainError"
        rec.warnings.append(f"train evaluation: {exc}")
        return
    try:
        rec.test_metric = best.evaluate(test)[key]
    except DomainError as exc:
        rec.status = "error:DomainError"
        rec.warnings.append(f"test evaluation: {exc}")
        return
    if best.task == "classification":
        for name, part in (("train", train), ("test", test)):
            D = best.descriptor_values(part)
            for i in range(part.n_samples):
                d2 = repr(float(D[i, 1])) if D.shape[1] > 1 else ""
                rec.plot_points.append((name, repr(float(D[i, 0])), d2, part.target.classes[part.y[i]]))


def _run_one(
    cfg: ExperimentConfig,
    train: Dataset,
    test: Dataset,
    method: str,
    selection: str,
    size: int,
    repeat: int,
    seed_key,
    importance: ImportanceReport | None = None,
) -> RunRecord:
    rec = RunRecord(size, repeat, method, selection if method == "rf-sisso" else "all")
    sis_cfg = cfg.sis_config(train.task)
    try:
        if method == "sisso":
            res = run_sisso(train, cfg.space_config(), sis_cfg)
            rec.selected = list(train.names)
            sres = res
            rec.timings = dict(res.timings, rf=0.0)
        else:
            r = run_rf_sisso(
                train,
                cfg.rf_config(),
                selection,
                cfg.space_config(),
                sis_cfg,
                R=int(cfg["rf"]["repeats"]),
                seed=seed_key,
                workers=cfg["workers"],
                importance=importance,
            )
            rec.selected = r.selected_names
            rec.importance = r.importance
            sres = r.sisso
            rec.timings = r.timings
        rec.n_primaries = len(rec.selected)
        rec.space_size = sres.space_size
        rec.warnings.extend(d.message for d in sres.diagnostics if d.warn)
        _evaluate(rec, sres.models, train, test)
    except RFSissoError as exc:
        rec.status = f"error:{type(exc).__name__}"
        rec.warnings.append(str(exc))
    return rec


def cmd_run(cfg: ExperimentConfig, ds: Dataset | None = None, method: str | None = None) -> ExperimentReport:
    """One train/test split, one method; the split uses ``train_size`` (default 75% of rows)."""
    ds = ds if ds is not None else cfg.load_data()
    method = method or cfg["method"]
    size = cfg["train_size"] or max(1, int(round(0.75 * ds.n_samples)))
    seed = int(cfg["seed"])
    train, test = split_subsets(ds, int(size), 1, seed)[0]
    report = ExperimentReport(ds.task, cfg.to_dict())
    sel = cfg["selection"][0]
    report.records.append(_run_one(cfg, train, test, method, sel, int(size), 0, [seed, int(size), 0]))
    return report


def cmd_compare(cfg: ExperimentConfig, ds: Dataset | None = None) -> ExperimentReport:
    """SISSO vs RF-SISSO on paired splits for every size and repeat.

    Each split is prescreened once; every configured selection mode (a
    single one, or a sweep such as ``topk:6,topk:8,topk:10``) reuses that
    importance report. Failures are recorded per row and the grid continues.
    """
    ds = ds if ds is not None else cfg.load_data()
    seed = int(cfg["seed"])
    report = ExperimentReport(ds.task, cfg.to_dict())
    for size in cfg["sizes"]:
        size = int(size)
        splits = split_subsets(ds, size, int(cfg["repeats"]), seed)
        for rep_i, (train, test) in enumerate(splits):
            key = [seed, size, rep_i]
            report.records.append(_run_one(cfg, train, test, "sisso", "all", size, rep_i, key))
            t0 = time.perf_counter()
            try:
                imp = repeated_importance(train, int(cfg["rf"]["repeats"]), cfg.rf_config(), key, cfg["workers"])
            except (RFSissoError, ValueError) as exc:
                for sel in cfg["selection"]:
                    rec = RunRecord(size, rep_i, "rf-sisso", sel, status=f"error:{type(exc).__name__}")
                    rec.warnings.append(str(exc))
                    report.records.append(rec)
                continue
            t_rf = time.perf_counter() - t0
            for sel in cfg["selection"]:
                rec = _run_one(cfg, train, test, "rf-sisso", sel, size, rep_i, key, importance=imp)
                if rec.timings:
                    rec.timings["rf"] += t_rf
                    rec.timings["total"] += t_rf
                report.records.append(rec)
    return report
