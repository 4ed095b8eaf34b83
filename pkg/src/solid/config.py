"""JSON run configuration shared by the CLI commands."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

from .backtest.engine import BacktestConfig, StrategySpec
from .coordinator import ORDERINGS, CoordinatorConfig
from .core import ConsistencySet
from .llm.client import LlmEndpointConfig


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


_TOP_KEYS = {
    "paths",
    "coordinator",
    "model",
    "strategies",
    "llm",
    "consensus",
    "synthetic",
    "seed",
    "initial_capital",
    "transaction_cost",
    "warm_start",
}

_COORD_DEFAULTS = {
    "rho": 1.0,
    "max_iterations": 100,
    "eps_abs": 1e-6,
    "eps_rel": 1e-4,
    "set": "unconstrained",
    "ordering": "solid",
    "agent_timeout": None,
}
_MODEL_DEFAULTS = {"target_return": None, "ridge": None, "lookback": None}
_CONSENSUS_DEFAULTS = {"agents": "mock", "n": 5, "period": None, "sparse": False}


@dataclass
class RunConfig:
    """Parsed configuration. ``raw`` keeps the document as written."""

    raw: dict
    base_dir: Path = field(default_factory=Path.cwd)
    seed: int = 0

    @classmethod
    def from_dict(cls, doc, base_dir=None):
        if not isinstance(doc, dict):
            raise ConfigError("configuration must be a JSON object")
        unknown = set(doc) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        cfg = cls(raw=copy.deepcopy(doc), base_dir=Path(base_dir or Path.cwd()))
        cfg.seed = int(doc.get("seed", 0))
        cfg.check()
        return cfg

    @classmethod
    def load(cls, path):
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        return cls.from_dict(doc, base_dir=path.parent)

    def to_dict(self):
        doc = copy.deepcopy(self.raw)
        if self.seed != doc.get("seed", 0):
            doc["seed"] = self.seed
        return doc

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    # sections with defaults filled in

    def section(self, key, defaults):
        sec = self.raw.get(key) or {}
        if not isinstance(sec, dict):
            raise ConfigError(f"{key!r} must be an object")
        unknown = set(sec) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown keys in {key!r}: {sorted(unknown)}")
        return {**defaults, **sec}

    def path(self, name):
        value = (self.raw.get("paths") or {}).get(name)
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def output_dir(self):
        return self.path("output") or self.base_dir / "solid-output"

    def coordinator_config(self, n=None):
        sec = self.section("coordinator", _COORD_DEFAULTS)
        try:
            cset = ConsistencySet.from_dict(sec["set"], n=n)
            return CoordinatorConfig(
                rho=float(sec["rho"]),
                max_iterations=int(sec["max_iterations"]),
                eps_abs=float(sec["eps_abs"]),
                eps_rel=float(sec["eps_rel"]),
                consistency_set=cset,
                ordering=sec["ordering"],
                agent_timeout=sec["agent_timeout"],
            )
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(f"coordinator: {exc}") from None

    def model_params(self):
        return self.section("model", _MODEL_DEFAULTS)

    def backtest_config(self, n=None):
        m = self.model_params()
        try:
            return BacktestConfig(
                initial_capital=float(self.raw.get("initial_capital", 10_000.0)),
                coordinator=self.coordinator_config(n),
                target_return=m["target_return"],
                ridge=m["ridge"],
                lookback=m["lookback"],
                transaction_cost=float(self.raw.get("transaction_cost", 0.0)),
                warm_start=bool(self.raw.get("warm_start", True)),
            )
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from None

    def strategies(self):
        names = self.raw.get("strategies", ["OPT"])
        try:
            return [StrategySpec.parse(s) for s in names]
        except (ValueError, AttributeError) as exc:
            raise ConfigError(f"strategies: {exc}") from None

    def llm(self):
        return self.raw.get("llm")

    def endpoint_config(self):
        sec = dict(self.llm() or {})
        sec.pop("kind", None)
        try:
            return LlmEndpointConfig(**sec)
        except TypeError as exc:
            raise ConfigError(f"llm endpoint: {exc}") from None

    def consensus_params(self):
        return self.section("consensus", _CONSENSUS_DEFAULTS)

    def synthetic_params(self):
        return self.raw.get("synthetic")

    def check(self):
        """Structural checks plus existence of every referenced input path."""
        self.coordinator_config()
        self.model_params()
        specs = self.strategies()
        if self.section("coordinator", _COORD_DEFAULTS)["ordering"] not in ORDERINGS:
            raise ConfigError("coordinator.ordering invalid")
        m = self.model_params()
        if m["ridge"] is not None and m["ridge"] < 0:
            raise ConfigError("model.ridge must be >= 0")
        if m["lookback"] is not None and int(m["lookback"]) < 2:
            raise ConfigError("model.lookback must be >= 2")
        llm = self.llm()
        if llm is not None:
            kind = llm.get("kind")
            if kind not in ("scripted", "endpoint"):
                raise ConfigError(f"llm.kind must be 'scripted' or 'endpoint', got {kind!r}")
            if kind == "scripted" and not (llm.get("schedule") or llm.get("period_schedules")):
                raise ConfigError("scripted llm needs 'schedule' or 'period_schedules'")
            if kind == "endpoint":
                self.endpoint_config()
        needs_llm = any(s.kind != "OPT" for s in specs)
        consensus = self.consensus_params()
        if consensus["agents"] not in ("mock", "portfolio"):
            raise ConfigError("consensus.agents must be 'mock' or 'portfolio'")
        if needs_llm and llm is None:
            raise ConfigError("strategies other than OPT require an 'llm' section")
        for name in ("prices", "news"):
            p = self.path(name)
            if p is not None and not p.exists():
                raise ConfigError(f"paths.{name} does not exist: {p}")
        if self.path("prices") is None and self.synthetic_params() is None:
            if consensus["agents"] == "portfolio" or "strategies" in self.raw:
                raise ConfigError("either paths.prices or a 'synthetic' section is required")
