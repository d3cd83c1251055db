"""Run configuration: a TOML file merged under command-line overrides."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    """Invalid or incomplete configuration (exit status 1)."""


@dataclass
class PredictorParams:
    mode: str = "multi"
    n_estimators: int = 500
    learning_rate: float = 0.1
    max_depth: int = 6
    min_samples_leaf: int = 5
    validation_fraction: float = 0.1
    n_iter_no_change: int = 25


@dataclass
class SearchParams:
    budget: int = 64
    sigma0: float = 0.2
    strategy: str = "one_plus_one"


@dataclass
class RunConfig:
    dataset: Path | None = None
    train_dataset: Path | None = None
    dev_dataset: Path | None = None
    conllu: Path | None = None
    freq_lexicon: Path | None = None
    aoa_lexicon: Path | None = None
    model_dir: Path | None = None
    avg_table: Path | None = None
    corpus_vector: Path | None = None
    adequacy: Path | None = None
    out: Path = Path("out")
    strategy: str | None = None
    simplifier: str = "rule"
    seed: int = 0
    jobs: int = 1
    timeout: float = 30.0
    max_n: int = 4
    samples: int = 100
    predictor: PredictorParams = field(default_factory=PredictorParams)
    search: SearchParams = field(default_factory=SearchParams)

    def require(self, *names: str) -> None:
        """Fail unless every named path option is set and exists."""
        for name in names:
            value = getattr(self, name)
            if value is None:
                raise ConfigError(f"missing required option --{name.replace('_', '-')}")
            if not Path(value).exists():
                raise ConfigError(f"--{name.replace('_', '-')}: file not found: {value}")

    def check_optional_paths(self) -> None:
        for name in _PATH_FIELDS:
            value = getattr(self, name)
            if value is not None and name != "out" and not Path(value).exists():
                raise ConfigError(f"--{name.replace('_', '-')}: file not found: {value}")


_PATH_FIELDS = {f.name for f in fields(RunConfig) if "Path" in str(f.type)}
_SECTIONS = {"predictor": PredictorParams, "search": SearchParams}


def _coerce(name: str, value, target):
    default = getattr(target, name)
    try:
        if name in _PATH_FIELDS:
            return None if value is None else Path(value)
        if isinstance(default, bool):
            return bool(value)
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if isinstance(default, float):
            return float(value)
        return value if value is None else str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"invalid value for {name!r}: {value!r}") from None


def _apply(target, values: dict, where: str) -> None:
    known = {f.name for f in fields(target)}
    for key, value in values.items():
        key = key.replace("-", "_")
        if key in _SECTIONS and target.__class__ is RunConfig:
            if not isinstance(value, dict):
                raise ConfigError(f"{where}: [{key}] must be a table")
            _apply(getattr(target, key), value, f"{where} [{key}]")
            continue
        if key not in known:
            raise ConfigError(f"{where}: unknown option {key!r}")
        setattr(target, key, _coerce(key, value, target))


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the TOML file at ``path``, then non-``None`` ``overrides``.

    Override keys may be dotted (``predictor.max_depth``) to reach a section.
    """
    cfg = RunConfig()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = tomllib.loads(path.read_text(encoding="utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        _apply(cfg, data, str(path))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        section, _, name = key.rpartition(".")
        target = getattr(cfg, section) if section else cfg
        _apply(target, {name: value}, "command line")
    if cfg.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    if cfg.search.budget < 1:
        raise ConfigError(f"search budget must be >= 1, got {cfg.search.budget}")
    if cfg.predictor.mode not in ("single", "multi"):
        raise ConfigError(f"predictor mode must be 'single' or 'multi', got {cfg.predictor.mode!r}")
    return cfg
