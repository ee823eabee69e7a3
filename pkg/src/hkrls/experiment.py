"""Experiment configuration and the benchmark runner.

An experiment is a YAML mapping::

    name: synth2d-full
    dataset:
      kind: synth2d            # synth2d | synth3d | grid-csv
      counts: [145, 150]
      ranges: standard         # standard | compact | [[lo, hi], ...]
      full_counts: [...]       # optional, selected by --full
      path: data/grid.csv      # grid-csv only, relative to the YAML file
      filter: {variance: 5, size: 6}   # optional 2-D pre-filter
      coefficients: synth2d    # coefficient column for baseline defaults
    split: {fraction: 0.8, seed: 0, axes: [true, true], train_counts: null}
    methods:
      - hkrls: {sigmas: [1.0, 0.3]}
      - sparse_krls            # defaults from the coefficient column
      - fb_krls: {window: 400} # overrides on top of the defaults
    jitter: null
    repeat: 1
    warmup: true
    output: {dir: null, residuals: false}
"""

from __future__ import annotations

import copy
import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .baselines import (COEFFICIENTS, HKRLS_SIGMAS, BaselineConfig, Method, fit_baseline,
                        presentation_order)
from .datasets import (SYNTH2D_RANGES, SYNTH3D_RANGES, COMPACT_RANGES, gaussian_filter_2d,
                       load_grid_csv, make_grid, restrict, split_axes, synth_2d, synth_3d)
from .hierarchic import GridDataset, default_kernels, fit_general, predict_grid
from .metrics import BenchReport, error_metrics, reports_to_csv, reports_to_markdown, timed
from .solver import krls_predict_many

log = logging.getLogger(__name__)

__all__ = [
    "ConfigError",
    "DatasetSpec",
    "SplitConfig",
    "MethodSpec",
    "ExperimentConfig",
    "PRESET_DIR",
    "list_presets",
    "load_config",
    "load_preset",
    "build_dataset",
    "run_experiment",
    "write_outputs",
]

PRESET_DIR = Path(__file__).with_name("presets")
HKRLS = "hkrls"
HKRLS_LABEL = "H-KRLS"
_KINDS = ("synth2d", "synth3d", "grid-csv")
_NAMED_RANGES = {"standard": {2: SYNTH2D_RANGES, 3: SYNTH3D_RANGES}, "compact": {2: COMPACT_RANGES}}


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def _keys(d: dict, allowed: set, where: str):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(d).__name__}")
    extra = set(d) - allowed
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(sorted(map(str, extra)))}")


@dataclass
class DatasetSpec:
    kind: str
    counts: Optional[list] = None
    ranges: object = "standard"
    full_counts: Optional[list] = None
    path: Optional[str] = None
    filter: Optional[dict] = None
    coefficients: Optional[str] = None

    @classmethod
    def from_dict(cls, d: dict, base: Optional[Path] = None) -> "DatasetSpec":
        _keys(d, {"kind", "counts", "ranges", "full_counts", "path", "filter", "coefficients"},
              "dataset")
        spec = cls(**d)
        if spec.path is not None and base is not None and not Path(spec.path).is_absolute():
            spec.path = str((base / spec.path).resolve())
        return spec

    def resolved_ranges(self, ndim: int):
        if isinstance(self.ranges, str):
            try:
                return _NAMED_RANGES[self.ranges][ndim]
            except KeyError:
                raise ConfigError(
                    f"dataset.ranges: no named range {self.ranges!r} for {ndim} axes") from None
        return [tuple(map(float, r)) for r in self.ranges]

    def validate(self):
        if self.kind not in _KINDS:
            raise ConfigError(f"dataset.kind must be one of {', '.join(_KINDS)}, got {self.kind!r}")
        if self.kind == "grid-csv":
            if not self.path:
                raise ConfigError("dataset.path is required for grid-csv")
            if not Path(self.path).is_file():
                raise ConfigError(f"dataset.path: file not found: {self.path}")
        else:
            ndim = 2 if self.kind == "synth2d" else 3
            for key in ("counts", "full_counts"):
                c = getattr(self, key)
                if c is None and key == "full_counts":
                    continue
                if c is None or len(c) != ndim or any(int(v) != v or v < 2 for v in c):
                    raise ConfigError(f"dataset.{key}: need {ndim} integer counts >= 2, got {c!r}")
            self.resolved_ranges(ndim)
        if self.filter is not None:
            _keys(self.filter, {"variance", "size"}, "dataset.filter")
        if self.coefficients is not None and self.coefficients not in COEFFICIENTS:
            raise ConfigError(
                f"dataset.coefficients must be one of {', '.join(COEFFICIENTS)}, "
                f"got {self.coefficients!r}")


@dataclass
class SplitConfig:
    fraction: float = 0.8
    seed: int = 0
    axes: Optional[list] = None
    train_counts: Optional[list] = None

    @classmethod
    def from_dict(cls, d: dict) -> "SplitConfig":
        _keys(d, {"fraction", "seed", "axes", "train_counts"}, "split")
        return cls(**d)

    def validate(self):
        if not isinstance(self.fraction, (int, float)) or not 0 < self.fraction < 1:
            raise ConfigError(f"split.fraction must lie in (0, 1), got {self.fraction!r}")
        if int(self.seed) != self.seed:
            raise ConfigError(f"split.seed must be an integer, got {self.seed!r}")


@dataclass
class MethodSpec:
    """One entry of the method list: ``hkrls`` or a baseline name plus overrides."""

    name: str
    params: dict = field(default_factory=dict)

    @classmethod
    def parse(cls, item) -> "MethodSpec":
        if isinstance(item, str):
            return cls(item, {})
        if isinstance(item, dict) and len(item) == 1:
            (name, params), = item.items()
            return cls(str(name), dict(params or {}))
        raise ConfigError(f"methods: entry must be a name or a one-key mapping, got {item!r}")

    def to_item(self):
        return {self.name: dict(self.params)} if self.params else self.name


@dataclass
class ExperimentConfig:
    name: str
    dataset: DatasetSpec
    split: SplitConfig = field(default_factory=SplitConfig)
    methods: list = field(default_factory=list)
    jitter: Optional[float] = None
    repeat: int = 1
    warmup: bool = True
    output: dict = field(default_factory=dict)
    source: Optional[str] = None

    @classmethod
    def from_dict(cls, d: dict, base: Optional[Path] = None, source=None) -> "ExperimentConfig":
        _keys(d, {"name", "dataset", "split", "methods", "jitter", "repeat", "warmup", "output"},
              "config")
        if "dataset" not in d:
            raise ConfigError("config: missing 'dataset'")
        output = dict(d.get("output") or {})
        _keys(output, {"dir", "residuals"}, "output")
        if output.get("dir") and base is not None and not Path(output["dir"]).is_absolute():
            output["dir"] = str(base / output["dir"])
        return cls(
            name=str(d.get("name", "experiment")),
            dataset=DatasetSpec.from_dict(d["dataset"], base),
            split=SplitConfig.from_dict(d.get("split") or {}),
            methods=[MethodSpec.parse(m) for m in (d.get("methods") or [])],
            jitter=d.get("jitter"),
            repeat=int(d.get("repeat", 1)),
            warmup=bool(d.get("warmup", True)),
            output=output,
            source=source,
        )

    def to_dict(self) -> dict:
        ds = {k: v for k, v in vars(self.dataset).items() if v is not None}
        return {
            "name": self.name,
            "dataset": ds,
            "split": {k: v for k, v in vars(self.split).items() if v is not None},
            "methods": [m.to_item() for m in self.methods],
            "jitter": self.jitter,
            "repeat": self.repeat,
            "warmup": self.warmup,
            "output": dict(self.output),
        }

    @property
    def ndim(self) -> Optional[int]:
        return {"synth2d": 2, "synth3d": 3}.get(self.dataset.kind)

    def validate(self) -> "ExperimentConfig":
        self.dataset.validate()
        self.split.validate()
        if not self.methods:
            raise ConfigError("at least one method is required")
        if self.repeat < 1:
            raise ConfigError(f"repeat must be >= 1, got {self.repeat}")
        if self.jitter is not None and not (isinstance(self.jitter, (int, float)) and self.jitter >= 0):
            raise ConfigError(f"jitter must be a nonnegative number, got {self.jitter!r}")
        for m in self.methods:
            self.resolve_method(m, self.ndim or 2)
        return self

    def full(self) -> "ExperimentConfig":
        """Copy with ``dataset.counts`` replaced by ``dataset.full_counts``."""
        if not self.dataset.full_counts:
            raise ConfigError(f"preset {self.name!r} has no full-size grid")
        cfg = copy.deepcopy(self)
        cfg.dataset.counts = list(self.dataset.full_counts)
        return cfg

    def resolve_method(self, spec: MethodSpec, ndim: int):
        """Resolved ``(label, kind, settings)`` for one method entry."""
        if spec.name == HKRLS:
            _keys(spec.params, {"sigmas", "jitter"}, "methods.hkrls")
            sigmas = spec.params.get("sigmas")
            if sigmas is None:
                col = HKRLS_SIGMAS.get(self.dataset.coefficients or "")
                sigmas = col if col and len(col) == ndim else None
            try:
                kernels = default_kernels(ndim, sigmas)
            except ValueError as exc:
                raise ConfigError(f"methods.hkrls: {exc}") from None
            jitter = spec.params.get("jitter", self.jitter)
            return HKRLS_LABEL, HKRLS, {"kernels": kernels, "jitter": jitter,
                                        "sigmas": [k.sigma for k in kernels]}
        try:
            method = Method(spec.name)
        except ValueError:
            names = ", ".join([HKRLS] + [m.value for m in Method])
            raise ConfigError(f"methods: unknown method {spec.name!r} (known: {names})") from None
        params = {}
        col = self.dataset.coefficients
        if col is not None and method in COEFFICIENTS[col]:
            params.update(COEFFICIENTS[col][method])
        params.update(spec.params)
        if method in (Method.FULL_KRLS, Method.NONSTILL_KRLS) and "jitter" not in spec.params:
            params.setdefault("jitter", self.jitter)
        try:
            cfg = BaselineConfig.from_dict({"method": method, **params})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"methods.{spec.name}: {exc}") from None
        # fields neither tabulated nor configured fall back to library defaults
        assumed = sorted(k for k in cfg.to_dict() if k not in ("method", "jitter") and k not in params)
        return cfg.label, "baseline", {"config": cfg, "assumed": assumed}


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            d = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return ExperimentConfig.from_dict(d, base=path.resolve().parent, source=str(path))


def list_presets() -> list:
    return sorted(p.stem for p in PRESET_DIR.glob("*.yaml"))


def load_preset(name: str) -> ExperimentConfig:
    path = PRESET_DIR / f"{name}.yaml"
    if not path.is_file():
        raise ConfigError(f"unknown preset {name!r} (available: {', '.join(list_presets())})")
    return load_config(path)


def build_dataset(spec: DatasetSpec) -> GridDataset:
    if spec.kind == "grid-csv":
        data = load_grid_csv(spec.path)
    else:
        fn, ndim = (synth_2d, 2) if spec.kind == "synth2d" else (synth_3d, 3)
        axes = make_grid(spec.resolved_ranges(ndim), spec.counts)
        mesh = np.meshgrid(*axes, indexing="ij")
        data = GridDataset(tuple(axes), fn(*mesh))
    if spec.filter:
        if data.ndim != 2:
            raise ConfigError("dataset.filter applies to 2-D grids only")
        data = GridDataset(data.axes, gaussian_filter_2d(data.values, **spec.filter))
    return data


def _fit_predict(kind: str, settings: dict, train: GridDataset, val: GridDataset, seed: int):
    """Returns ``(fit_closure, predict_fn)``; predictions come back C-ordered."""
    if kind == HKRLS:
        def fit():
            return fit_general(train, settings["kernels"], settings["jitter"])

        def predict(model):
            return predict_grid(model, val.axes).ravel()
        return fit, predict
    cfg = settings["config"]
    P, y = train.points("C"), train.flat_values("C")
    order = presentation_order(y.size, seed)
    P, y = P[order], y[order]
    Q = val.points("C")

    def fit():
        return fit_baseline(P, y, cfg)

    def predict(model):
        return krls_predict_many(model, Q)[:, 0]
    return fit, predict


def _warm(kind, settings, train: GridDataset, seed):
    # one discarded run on a small corner of the training grid
    idx = [np.arange(min(a.size, 6)) for a in train.axes]
    small = GridDataset(tuple(a[i] for a, i in zip(train.axes, idx)), train.values[np.ix_(*idx)])
    try:
        fit, _ = _fit_predict(kind, settings, small, small, seed)
        fit()
    except Exception:  # the timed run reports the failure
        pass


def _config_echo(kind, settings, seed: int) -> dict:
    if kind == HKRLS:
        return {"method": HKRLS, "sigmas": settings["sigmas"], "jitter": settings["jitter"]}
    echo = {**settings["config"].to_dict(), "order": f"row-major, shuffled with seed {seed}"}
    if settings.get("assumed"):
        echo["assumed"] = settings["assumed"]
    return echo


def run_experiment(cfg: ExperimentConfig, residuals: Optional[list] = None) -> list:
    """Fit and score every configured method; methods run one after another.

    A method that raises gets a report with ``status = "error: ..."`` and NaN
    errors, and the remaining methods still run.  With ``repeat > 1`` the
    reported time is the fastest run.  When ``residuals`` is a list, one row
    per validation point and method is appended to it.
    """
    cfg.validate()
    if residuals is None and cfg.output.get("residuals"):
        residuals = []
    data = build_dataset(cfg.dataset)
    sp = split_axes(data.axes, cfg.split.fraction, cfg.split.seed, cfg.split.axes,
                    cfg.split.train_counts)
    train, val = restrict(data, sp, "train"), restrict(data, sp, "validation")
    actual = val.values.ravel()
    train_max = float(np.max(np.abs(train.values)))
    seed = int(cfg.split.seed)
    reports = []
    for spec in cfg.methods:
        label, kind, settings = cfg.resolve_method(spec, data.ndim)
        echo = _config_echo(kind, settings, seed)
        try:
            fit, predict = _fit_predict(kind, settings, train, val, seed)
            if cfg.warmup:
                _warm(kind, settings, train, seed)
            best = math.inf
            for _ in range(cfg.repeat):
                model, secs = timed(fit)
                best = min(best, secs)
            pred = predict(model)
            mx, avg, norm = error_metrics(pred, actual, train_max)
            rep = BenchReport(label, best, mx, avg, norm, train.shape, val.shape, seed, echo)
        except Exception as exc:
            log.error("%s failed: %s", label, exc)
            pred = None
            rep = BenchReport(label, math.nan, math.nan, math.nan, None, train.shape, val.shape,
                              seed, echo, status=f"error: {type(exc).__name__}: {exc}")
        reports.append(rep)
        if residuals is not None and pred is not None:
            pts = val.points("C")
            for p, a, yhat in zip(pts, actual, pred):
                residuals.append((label, *map(float, p), float(a), float(yhat), float(yhat - a)))
    if cfg.output.get("dir"):
        write_outputs(cfg.output["dir"], reports,
                      residuals if cfg.output.get("residuals") else None, data.ndim)
    return reports


def residuals_to_csv(rows, ndim: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method"] + [f"axis{k}" for k in range(ndim)] + ["actual", "predicted", "residual"])
    for r in rows:
        w.writerow([r[0]] + [repr(v) for v in r[1:]])
    return buf.getvalue()


def write_outputs(out_dir, reports, residuals=None, ndim: int = 2) -> list:
    """Write ``report.csv``, ``report.md`` and optionally ``residuals.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "report.csv", out / "report.md"]
    written[0].write_text(reports_to_csv(reports), encoding="utf-8")
    written[1].write_text(reports_to_markdown(reports), encoding="utf-8")
    if residuals is not None:
        p = out / "residuals.csv"
        p.write_text(residuals_to_csv(residuals, ndim), encoding="utf-8")
        written.append(p)
    return written
