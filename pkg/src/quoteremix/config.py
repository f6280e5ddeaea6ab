"""Run configuration and brand/persona roster loading.

Config files are YAML (or JSON, which YAML reads too). Unknown keys are
rejected so that a typo never silently falls back to a default.

Roster schema::

    personas:
      - {label: Pride, guideline: "..."}
    brands:
      - {name: DKNY, domain: clothing, keywords: [fashion]}
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence, Union

import yaml

from .model import Brand, Persona

STRICT = "strict"
WARN = "warn"
RULES = ("max_edits", "brand", "first_person", "punctuation", "max_words", "replacement_length")
PAIRINGS = ("index_aligned", "all_pairs")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Roster:
    brands: tuple[Brand, ...]
    personas: tuple[Persona, ...]

    def persona(self, label: str) -> Persona:
        for p in self.personas:
            if p.label == label:
                return p
        raise ConfigError(f"persona {label!r} is not in the roster")

    def brand(self, name: str) -> Brand:
        for b in self.brands:
            if b.name.lower() == name.lower():
                return b
        raise ConfigError(f"brand {name!r} is not in the roster")

    def cells(self) -> list[tuple[Brand, Persona]]:
        return [(b, p) for b in self.brands for p in self.personas]

    def to_dict(self) -> dict:
        return {
            "brands": [{"name": b.name, "domain": b.domain, "keywords": list(b.keywords)}
                       for b in self.brands],
            "personas": [{"label": p.label, "guideline": p.guideline} for p in self.personas],
        }

    def digest(self) -> str:
        return digest_of(self.to_dict())


def roster_from_dict(data: Mapping[str, Any]) -> Roster:
    try:
        brands = tuple(Brand(b["name"], b["domain"], tuple(b.get("keywords", ())))
                       for b in data["brands"])
        personas = tuple(Persona(p["label"], p["guideline"]) for p in data["personas"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid roster: {exc}") from exc
    if not brands or not personas:
        raise ConfigError("roster needs at least one brand and one persona")
    return Roster(brands, personas)


def load_roster(path: Optional[Union[str, Path]] = None) -> Roster:
    """Load a roster file; without a path, the packaged stand-in roster."""
    if path is None:
        text = resources.files("quoteremix.data").joinpath("roster.yaml").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    return roster_from_dict(yaml.safe_load(text))


def digest_of(obj: Any) -> str:
    blob = json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass
class MethodSpec:
    name: str
    kind: str = "remix"
    model: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("remix", "baseline"):
            raise ConfigError(f"method {self.name!r}: kind must be 'remix' or 'baseline'")


@dataclass
class ModelsConfig:
    generator: str = "qwq-32b-remix"
    judge: str = "gpt-4o"


@dataclass
class TemperatureConfig:
    generation: float = 0.9
    judging: float = 0.0


@dataclass
class RemixConfig:
    max_edits: int = 2
    max_words: int = 20
    min_quotes: int = 3
    retry_cap: int = 3
    attempts_per_slogan: int = 4
    refine: bool = True
    edit_unit: str = "span"
    replacement_length_slack: int = 2
    banned_words: list = field(default_factory=lambda: ["i", "we", "me", "my", "our"])
    rules: dict = field(default_factory=lambda: {
        "max_edits": STRICT, "brand": STRICT, "first_person": STRICT,
        "punctuation": STRICT, "max_words": STRICT, "replacement_length": WARN,
    })
    safety_rubric: str = (
        "Reject slogans that are offensive, discriminatory, sexual, violent, "
        "medically or legally misleading, or that mock the source quote's author."
    )
    max_output_tokens: int = 1024

    def __post_init__(self):
        for rule, mode in self.rules.items():
            if rule not in RULES:
                raise ConfigError(f"unknown constraint rule {rule!r}")
            if mode not in (STRICT, WARN):
                raise ConfigError(f"rule {rule!r}: mode must be 'strict' or 'warn'")
        if self.edit_unit not in ("span", "word"):
            raise ConfigError("edit_unit must be 'span' or 'word'")

    def mode(self, rule: str) -> str:
        return self.rules.get(rule, STRICT)


@dataclass
class GatewayConfig:
    max_attempts: int = 5
    base_delay: float = 1.0
    max_delay: float = 30.0
    jitter: float = 0.25
    rate_limit: Optional[int] = None
    cache_dir: Optional[str] = "cache"
    timeout: float = 60.0


@dataclass
class EvaluationConfig:
    reference_method: str = "ours"
    pairing: str = "index_aligned"
    novelty_per_cell: bool = False
    pooled_distinct: bool = False

    def __post_init__(self):
        if self.pairing not in PAIRINGS:
            raise ConfigError(f"pairing must be one of {PAIRINGS}")


@dataclass
class Config:
    n: int = 10
    methods: list = field(default_factory=lambda: [MethodSpec("ours", "remix")])
    models: ModelsConfig = field(default_factory=ModelsConfig)
    temperature: TemperatureConfig = field(default_factory=TemperatureConfig)
    remix: RemixConfig = field(default_factory=RemixConfig)
    gateway: GatewayConfig = field(default_factory=GatewayConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    parallelism: int = 1
    seed_nonce_base: int = 1
    roster: Optional[str] = None

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        names = [m.name for m in self.methods]
        if len(set(names)) != len(names):
            raise ConfigError("method names must be unique")

    def method(self, name: str) -> MethodSpec:
        for m in self.methods:
            if m.name == name:
                return m
        raise ConfigError(f"no method named {name!r}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        return digest_of(self.to_dict())


_SECTIONS = {
    "models": ModelsConfig,
    "temperature": TemperatureConfig,
    "remix": RemixConfig,
    "gateway": GatewayConfig,
    "evaluation": EvaluationConfig,
}


def _build(cls, data: Mapping[str, Any], where: str):
    if not isinstance(data, Mapping):
        raise ConfigError(f"{where}: expected a mapping")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(data: Mapping[str, Any]) -> Config:
    data = dict(data or {})
    known = {f.name for f in dataclasses.fields(Config)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        if key in _SECTIONS:
            if key == "remix" and "rules" in value:
                value = dict(value)
                value["rules"] = {**RemixConfig().rules, **value["rules"]}
            kwargs[key] = _build(_SECTIONS[key], value, key)
        elif key == "methods":
            kwargs[key] = [_build(MethodSpec, m, "methods[]") for m in value]
        else:
            kwargs[key] = value
    return Config(**kwargs)


def load_config(path: Optional[Union[str, Path]] = None,
                overrides: Sequence[str] = ()) -> Config:
    data = {}
    if path is not None:
        data = yaml.safe_load(Path(path).read_text("utf-8")) or {}
    return config_from_dict(apply_overrides(data, overrides))


def apply_overrides(data: Mapping[str, Any], overrides: Sequence[str]) -> dict:
    """Apply ``dotted.key=value`` overrides; values are parsed as YAML scalars.

    Every key must already exist in the config schema.
    """
    out = copy.deepcopy(dict(data))
    defaults = Config().to_dict()
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        parts = key.strip().split(".")
        probe: Any = defaults
        for part in parts:
            if not isinstance(probe, dict) or part not in probe:
                raise ConfigError(f"override key {key!r} is not a config key")
            probe = probe[part]
        node = out
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = yaml.safe_load(raw)
    return out
