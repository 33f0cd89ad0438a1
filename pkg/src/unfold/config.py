"""Experiment configuration: versioned JSON, strict validation."""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .estimator import EstimatorConfig
from .operators import KERNEL_KINDS, KernelSpec
from .simulate import INTENSITY_KINDS, IntensitySpec
from .wavelets import get_filter

__all__ = ["SCHEMA_VERSION", "ExperimentConfig", "load_config", "cache_directory"]

SCHEMA_VERSION = 1

_TOP_FIELDS = {
    "schema_version",
    "name",
    "kernel",
    "intensity",
    "J",
    "quad_resolution",
    "quad_rule",
    "filter",
    "estimator",
    "t",
    "replicates",
    "seed",
    "output_dir",
    "cache_dir",
}
_SPEC_FIELDS = {"kind", "params"}
_ESTIMATOR_FIELDS = {f.name for f in fields(EstimatorConfig)}


def _reject_unknown(d: dict, allowed: set, where: str):
    if not isinstance(d, dict):
        raise ConfigError(where, f"expected an object, got {type(d).__name__}")
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"{where}.{unknown[0]}" if where else unknown[0], f"unknown field (allowed: {', '.join(sorted(allowed))})")


def _int(d, key, default, where, minimum=None):
    v = d.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{where}{key}", f"expected an integer, got {v!r}")
    if minimum is not None and v < minimum:
        raise ConfigError(f"{where}{key}", f"must be >= {minimum}, got {v}")
    return v


@dataclass(frozen=True)
class ExperimentConfig:
    kernel: KernelSpec = field(default_factory=lambda: KernelSpec("log-potential-periodized"))
    intensity: IntensitySpec = field(default_factory=lambda: IntensitySpec("peak"))
    J: int = 8
    quad_resolution: int = 16
    quad_rule: str = "corrected"
    filter: str = "sym6"
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    t: tuple = (1e6,)
    replicates: int = 1
    seed: int = 0
    output_dir: str = "runs"
    cache_dir: str | None = None
    name: str = "experiment"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        _reject_unknown(d, _TOP_FIELDS, "")
        version = d.get("schema_version")
        if version != SCHEMA_VERSION:
            raise ConfigError("schema_version", f"expected {SCHEMA_VERSION}, got {version!r}")

        def spec(key, kinds, factory, default_kind):
            raw = d.get(key, {"kind": default_kind})
            _reject_unknown(raw, _SPEC_FIELDS, key)
            kind = raw.get("kind", default_kind)
            if kind not in kinds:
                raise ConfigError(f"{key}.kind", f"unknown kind {kind!r}; choose from {', '.join(kinds)}")
            params = raw.get("params", {})
            if not isinstance(params, dict):
                raise ConfigError(f"{key}.params", "expected an object")
            try:
                return factory(kind, params)
            except ValueError as exc:
                raise ConfigError(f"{key}.params", str(exc)) from None

        kernel = spec("kernel", KERNEL_KINDS, KernelSpec, "log-potential-periodized")
        intensity = spec("intensity", INTENSITY_KINDS, IntensitySpec, "peak")

        J = _int(d, "J", 8, "", minimum=3)
        if J > 16:
            raise ConfigError("J", f"must be <= 16, got {J}")
        quad = _int(d, "quad_resolution", max(16, J + 2), "", minimum=J + 2)
        rule = d.get("quad_rule", "corrected")
        if rule not in ("corrected", "midpoint"):
            raise ConfigError("quad_rule", f"expected 'corrected' or 'midpoint', got {rule!r}")
        filt = d.get("filter", "sym6")
        try:
            filt = get_filter(filt).name
        except ValueError as exc:
            raise ConfigError("filter", str(exc)) from None

        est = d.get("estimator", {})
        _reject_unknown(est, _ESTIMATOR_FIELDS, "estimator")
        try:
            estimator = EstimatorConfig(**est)
        except (TypeError, ValueError) as exc:
            raise ConfigError("estimator", str(exc)) from None

        t = d.get("t", [1e6])
        if isinstance(t, (int, float)) and not isinstance(t, bool):
            t = [t]
        if not isinstance(t, (list, tuple)) or not t:
            raise ConfigError("t", "expected a nonempty list of observation times")
        for i, v in enumerate(t):
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v) or v <= 1:
                raise ConfigError(f"t[{i}]", f"observation times must be finite and > 1, got {v!r}")
        if any(b <= a for a, b in zip(t, t[1:])):
            raise ConfigError("t", "observation times must be strictly increasing")

        replicates = _int(d, "replicates", 1, "", minimum=1)
        seed = _int(d, "seed", 0, "", minimum=0)
        if seed >= 2**64:
            raise ConfigError("seed", "must fit in an unsigned 64-bit integer")
        out = d.get("output_dir", "runs")
        if not isinstance(out, str) or not out:
            raise ConfigError("output_dir", "expected a nonempty string")
        cache = d.get("cache_dir")
        if cache is not None and not isinstance(cache, str):
            raise ConfigError("cache_dir", "expected a string or null")
        name = d.get("name", "experiment")
        if not isinstance(name, str):
            raise ConfigError("name", "expected a string")
        return cls(kernel, intensity, J, quad, rule, filt, estimator, tuple(float(v) for v in t), replicates, seed, out, cache, name)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "kernel": {"kind": self.kernel.kind, "params": dict(self.kernel.params)},
            "intensity": {"kind": self.intensity.kind, "params": dict(self.intensity.params)},
            "J": self.J,
            "quad_resolution": self.quad_resolution,
            "quad_rule": self.quad_rule,
            "filter": self.filter,
            "estimator": asdict(self.estimator),
            "t": list(self.t),
            "replicates": self.replicates,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "cache_dir": self.cache_dir,
        }

    def with_overrides(self, **changes) -> "ExperimentConfig":
        d = self.to_dict()
        d.update({k: v for k, v in changes.items() if v is not None})
        return ExperimentConfig.from_dict(d)


def load_config(path) -> ExperimentConfig:
    """Read and validate a JSON config file."""
    path = Path(path)
    text = path.read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON ({exc})") from None
    return ExperimentConfig.from_dict(raw)


def cache_directory(cfg: ExperimentConfig) -> Path:
    """Stiffness cache location: config, then ``$UNFOLD_CACHE_DIR``, then ``~/.cache/unfold``."""
    if cfg.cache_dir:
        return Path(cfg.cache_dir).expanduser()
    env = os.environ.get("UNFOLD_CACHE_DIR")
    if env:
        return Path(env).expanduser()
    return Path.home() / ".cache" / "unfold"
