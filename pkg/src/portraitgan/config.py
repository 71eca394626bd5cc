"""Experiment configuration: INI sections mapped onto the stage configs."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .adversarial import AdvConfig, Flavor
from .classifier import ClassifierConfig
from .dataset import DEFAULT_STRIDE
from .errors import ConfigError
from .portrait import PortraitKind

WORKERS_ENV = "PORTRAITGAN_WORKERS"
_ENUMS = (PortraitKind, Flavor)


@dataclass(frozen=True)
class ExperimentConfig:
    manifest: Path | None = None
    output_dir: Path = Path("run")
    seed: int = 0
    portrait_kind: PortraitKind = PortraitKind.CwtMorse
    stride: int = DEFAULT_STRIDE
    max_windows_per_record: int = 0  # 0 keeps every complete window
    flavor: Flavor = Flavor.DCGAN
    target_per_class: int = 1000
    adversarial: AdvConfig = field(default_factory=AdvConfig)
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)

    def __post_init__(self):
        if self.stride < 1:
            raise ConfigError("experiment.stride must be positive")
        if self.max_windows_per_record < 0:
            raise ConfigError("experiment.max_windows_per_record must be nonnegative")
        if self.target_per_class < 1:
            raise ConfigError("experiment.target_per_class must be positive")
        # the global seed drives every stochastic component
        if self.adversarial.seed != self.seed:
            object.__setattr__(self, "adversarial", replace(self.adversarial, seed=self.seed))
        if self.classifier.seed != self.seed:
            object.__setattr__(self, "classifier", replace(self.classifier, seed=self.seed))

    def to_dict(self) -> dict[str, Any]:
        return {
            "experiment": {
                "manifest": None if self.manifest is None else str(self.manifest),
                "output_dir": str(self.output_dir),
                "seed": self.seed,
                "portrait_kind": self.portrait_kind.value,
                "stride": self.stride,
                "max_windows_per_record": self.max_windows_per_record,
                "flavor": self.flavor.value,
                "target_per_class": self.target_per_class,
            },
            "adversarial": {k: v for k, v in self.adversarial.to_dict().items() if k != "seed"},
            "classifier": {k: v for k, v in self.classifier.to_dict().items() if k != "seed"},
        }


def _parse_value(raw: str, default: Any, where: str) -> Any:
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            return {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}[raw.lower()]
        if isinstance(default, tuple):
            return tuple(int(v) for v in raw.split(","))
        if isinstance(default, _ENUMS):
            return type(default)(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float) or default is None:
            return None if raw.lower() in ("", "none") else float(raw)
        if isinstance(default, Path):
            return Path(raw)
        return raw
    except (ValueError, KeyError):
        raise ConfigError(f"{where}: cannot parse {raw!r}") from None


_EXPERIMENT_DEFAULTS = {
    "manifest": Path(), "output_dir": Path("run"), "seed": 0, "portrait_kind": PortraitKind.CwtMorse,
    "stride": DEFAULT_STRIDE, "max_windows_per_record": 0, "flavor": Flavor.DCGAN, "target_per_class": 1000,
}


def _section(parser: configparser.ConfigParser, name: str, defaults: dict[str, Any]) -> dict[str, Any]:
    if not parser.has_section(name):
        return {}
    out = {}
    for key, raw in parser.items(name):
        if key not in defaults:
            raise ConfigError(f"unknown key '{name}.{key}' (known: {', '.join(sorted(defaults))})")
        out[key] = _parse_value(raw, defaults[key], f"{name}.{key}")
    return out


def _dataclass_defaults(cls) -> dict[str, Any]:
    inst = cls()
    return {f.name: getattr(inst, f.name) for f in fields(cls) if f.name != "seed"}


def parse_config(text: str, base_dir: str | Path = ".") -> ExperimentConfig:
    """Parse INI text; relative paths resolve against ``base_dir``."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    unknown = set(parser.sections()) - {"experiment", "adversarial", "classifier"}
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
    exp = _section(parser, "experiment", _EXPERIMENT_DEFAULTS)
    adv_defaults = _dataclass_defaults(AdvConfig)
    adv_defaults["lr_decay"] = None
    try:
        adv = AdvConfig(**_section(parser, "adversarial", adv_defaults))
        cls = ClassifierConfig(**_section(parser, "classifier", _dataclass_defaults(ClassifierConfig)))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    base = Path(base_dir)
    for key in ("manifest", "output_dir"):
        if key in exp and not exp[key].is_absolute():
            exp[key] = base / exp[key]
    return ExperimentConfig(adversarial=adv, classifier=cls, **exp)


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(encoding="utf-8"), path.parent)


def config_help() -> str:
    """Every recognised key with its default, in INI layout."""
    lines = ["[experiment]"]
    for k, v in _EXPERIMENT_DEFAULTS.items():
        lines.append(f"  {k} = {_show(v) if k != 'manifest' else '(required)'}")
    for name, cls in (("adversarial", AdvConfig), ("classifier", ClassifierConfig)):
        lines.append(f"[{name}]")
        lines += [f"  {k} = {_show(v)}" for k, v in _dataclass_defaults(cls).items()]
    return "\n".join(lines)


def _show(v: Any) -> str:
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, _ENUMS):
        return v.value
    return "none" if v is None else str(v)
