"""Flat key-value experiment configuration files.

One `key = value` pair per line, `#` comments, dotted section keys, e.g.::

    preset = mlr-sweep
    trials = 100
    failure.fraction = 0.5
    checkpoint.ratio = 0.125
    checkpoint.selection = priority

Unknown keys are rejected rather than ignored so that typos fail loudly.
"""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

from .errors import ConfigError
from .harness import ExperimentConfig, make_dataset_spec
from .presets import DEFAULT_PRESET_BY_MODEL, load_preset


def _parse_bool(raw: str) -> bool:
    lowered = raw.lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_float_list(raw: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in raw.replace(",", " ").split())


def _parse_str_list(raw: str) -> tuple[str, ...]:
    return tuple(raw.replace(",", " ").split())


# key -> (parser, ExperimentConfig field).  None fields are handled specially.
_KEYS = {
    "preset": (str, None),
    "name": (str, "name"),
    "model": (str, None),
    "trials": (int, "trials"),
    "base_seed": (int, "base_seed"),
    "shards": (int, "shards"),
    "metric": (str, "metric_kind"),
    "criterion.metric": (str, "criterion_metric"),
    "criterion.threshold": (float, "criterion_threshold"),
    "solver.max_iters": (int, None),
    "solver.step_size": (float, None),
    "solver.batch_size": (int, None),
    "solver.factors": (int, None),
    "solver.topics": (int, None),
    "solver.dirichlet_alpha": (float, None),
    "solver.dirichlet_beta": (float, None),
    "checkpoint.interval": (int, "ckpt_interval"),
    "checkpoint.ratio": (float, "ckpt_ratio"),
    "checkpoint.selection": (str, "ckpt_selection"),
    "recovery": (str, "recovery"),
    "failure.geom_p": (float, "geom_p"),
    "failure.fraction": (float, "fraction"),
    "failure.fractions": (_parse_float_list, "fractions"),
    "sweep.ratios": (_parse_float_list, "ratios"),
    "sweep.strategies": (_parse_str_list, "strategies"),
    "bounds.enabled": (_parse_bool, "bounds_enabled"),
    "bound_study.mode": (str, "study_mode"),
    "bound_study.scale": (float, "study_scale"),
    "bound_study.iteration": (int, "study_iteration"),
    "bound_study.warmup": (int, "warmup_iters"),
    "bound_study.bernoulli_p": (float, "bernoulli_p"),
    # dataset overrides, merged into the preset's generator arguments
    "dataset.kind": (str, None),
    "dataset.dim": (int, None),
    "dataset.condition_number": (float, None),
    "dataset.samples": (int, None),
    "dataset.classes": (int, None),
    "dataset.separation": (float, None),
    "dataset.feature_decay": (float, None),
    "dataset.rows": (int, None),
    "dataset.cols": (int, None),
    "dataset.rank": (int, None),
    "dataset.density": (float, None),
    "dataset.noise": (float, None),
    "dataset.docs": (int, None),
    "dataset.vocab": (int, None),
    "dataset.topics": (int, None),
    "dataset.doc_len": (int, None),
    "dataset.seed": (int, None),
}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse config text into typed {key: value} pairs."""
    values: dict[str, object] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        parser, _ = _KEYS[key]
        try:
            values[key] = parser(raw)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    return values


def config_from_values(values: dict) -> ExperimentConfig:
    """Materialize an ExperimentConfig from parsed key-value pairs."""
    preset_name = values.get("preset")
    if preset_name is None:
        model = values.get("model")
        if model is None:
            raise ConfigError("config needs either 'preset' or 'model'")
        if model not in DEFAULT_PRESET_BY_MODEL:
            raise ConfigError(f"unknown model {model!r}")
        preset_name = DEFAULT_PRESET_BY_MODEL[model]
    cfg = load_preset(str(preset_name))

    solver_fields = {}
    dataset_fields = {}
    direct_fields = {}
    for key, value in values.items():
        if key in ("preset", "model"):
            continue
        if key.startswith("solver."):
            solver_fields[key.split(".", 1)[1]] = value
            continue
        if key.startswith("dataset."):
            dataset_fields[key.split(".", 1)[1]] = value
            continue
        _, fieldname = _KEYS[key]
        direct_fields[fieldname] = value

    try:
        solver = replace(cfg.solver, **solver_fields) if solver_fields else cfg.solver
        dataset = cfg.dataset
        if dataset_fields:
            kind = dataset_fields.pop("kind", dataset.kind)
            params = dataset.kwargs()
            params.update(dataset_fields)
            dataset = make_dataset_spec(kind, **params)
        return replace(cfg, solver=solver, dataset=dataset, **direct_fields)
    except (TypeError, ConfigError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from None


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="ascii")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return config_from_values(parse_config_text(text, source=str(path)))
