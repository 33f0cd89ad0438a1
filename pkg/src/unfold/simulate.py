"""Test intensities, folding, and seeded binned Poisson data."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidIntensity
from .operators import StiffnessMatrix, apply_operator
from .wavelets import DyadicGrid, SampledFunction

__all__ = [
    "INTENSITY_KINDS",
    "FRED_DEFAULTS",
    "IntensitySpec",
    "CountData",
    "peak_intensity",
    "fred_intensity",
    "fold_intensity",
    "simulate_counts",
]

INTENSITY_KINDS = ("peak", "fred", "constant", "exp-sine", "tabulated")

# Background and three bursts; peak shapes are not published, these are our choice.
FRED_DEFAULTS = {
    "background": 20.0,
    "amplitude": [300.0, 180.0, 120.0],
    "location": [0.2, 0.45, 0.7],
    "rise": [0.005, 0.008, 0.01],
    "decay": [0.03, 0.04, 0.05],
    "peakedness": [1.0, 1.0, 1.0],
}


def peak_intensity(x):
    """``max(1 - |30 (x - 1/2)|, 0.1)``."""
    x = np.asarray(x, dtype=float)
    return np.maximum(1.0 - np.abs(30.0 * (x - 0.5)), 0.1)


def fred_intensity(x, spec: "IntensitySpec"):
    """Background plus two-sided exponential bursts.

    Each burst is ``a exp(-|x - m| / sigma**nu)`` with ``sigma`` the rise scale
    left of ``m`` and the decay scale right of it.
    """
    if spec.kind != "fred":
        raise ValueError(f"fred_intensity needs a fred spec, got {spec.kind!r}")
    p = spec.resolved()
    x = np.asarray(x, dtype=float)
    out = np.full_like(x, p["background"], dtype=float)
    for a, m, sr, sd, nu in zip(p["amplitude"], p["location"], p["rise"], p["decay"], p["peakedness"]):
        scale = np.where(x <= m, sr**nu, sd**nu)
        out = out + a * np.exp(-np.abs(x - m) / scale)
    return out


@dataclass(frozen=True)
class IntensitySpec:
    kind: str = "peak"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in INTENSITY_KINDS:
            raise ValueError(f"unknown intensity kind {self.kind!r}; choose from {INTENSITY_KINDS}")
        if self.kind == "fred":
            p = self.resolved()
            lengths = {len(p[k]) for k in ("amplitude", "location", "rise", "decay", "peakedness")}
            if len(lengths) != 1:
                raise ValueError("fred peak parameter lists must have equal lengths")
            if p["background"] <= 0:
                raise ValueError("fred background must be positive")
            for name in ("rise", "decay"):
                if any(v <= 0 for v in p[name]):
                    raise ValueError(f"fred {name} scales must be positive")
            # a zero amplitude switches a burst off
            if any(v < 0 for v in p["amplitude"]):
                raise ValueError("fred amplitudes must be nonnegative")
        if self.kind == "tabulated":
            values = np.asarray(self.params.get("values", ()), dtype=float)
            n = values.size
            if n < 2 or n & (n - 1):
                raise ValueError("tabulated intensity needs a power-of-two number of values")

    def resolved(self) -> dict:
        if self.kind == "fred":
            return {**FRED_DEFAULTS, **self.params}
        if self.kind == "exp-sine":
            return {"offset": 1.0, "amplitude": 1.0, "frequency": 1, **self.params}
        if self.kind == "constant":
            return {"value": 1.0, **self.params}
        return dict(self.params)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        p = self.resolved()
        if self.kind == "peak":
            return peak_intensity(x)
        if self.kind == "fred":
            return fred_intensity(x, self)
        if self.kind == "constant":
            return np.full_like(x, float(p["value"]))
        if self.kind == "exp-sine":
            return np.exp(p["offset"] + p["amplitude"] * np.sin(2 * np.pi * p["frequency"] * x))
        values = np.asarray(p["values"], dtype=float)
        return values[np.minimum((x * values.size).astype(int), values.size - 1)]

    def sample(self, J: int) -> SampledFunction:
        f = SampledFunction.from_callable(self, J)
        if np.any(f.values < 0):
            raise InvalidIntensity(f"{self.kind} intensity is negative on the grid")
        return f

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.resolved()}


def fold_intensity(spec: IntensitySpec, K: StiffnessMatrix) -> SampledFunction:
    """Folded intensity ``h = K f`` on the grid of ``K``."""
    return apply_operator(K, spec.sample(K.J))


@dataclass(frozen=True, eq=False)
class CountData:
    J: int
    counts: np.ndarray
    t: float
    seed: int | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        counts = np.array(self.counts)
        if counts.shape != (1 << self.J,):
            raise ValueError(f"expected {1 << self.J} counts, got shape {counts.shape}")
        if not np.issubdtype(counts.dtype, np.integer):
            if not np.all(np.equal(np.mod(counts, 1), 0)):
                raise ValueError("counts must be integers")
            counts = counts.astype(np.int64)
        if np.any(counts < 0):
            raise ValueError("counts must be nonnegative")
        counts = counts.astype(np.int64)
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        if not self.t >= 0:
            raise ValueError("observation time t must be nonnegative")

    @property
    def grid(self) -> DyadicGrid:
        return DyadicGrid(self.J)

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["bin_index", "count"])
            writer.writerows((k, int(c)) for k, c in enumerate(self.counts))
        return path

    def manifest(self) -> dict:
        return {"J": self.J, "t": self.t, "seed": self.seed, **self.provenance}

    def write(self, csv_path) -> tuple[Path, Path]:
        """Write the count CSV and its JSON sidecar (``<name>.json``)."""
        csv_path = self.write_csv(csv_path)
        side = csv_path.with_suffix(".json")
        side.write_text(json.dumps(self.manifest(), indent=2, sort_keys=True) + "\n")
        return csv_path, side

    @classmethod
    def read(cls, csv_path, t: float | None = None) -> "CountData":
        """Load counts; ``t``/``J``/``seed`` come from the sidecar when present."""
        csv_path = Path(csv_path)
        with csv_path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["bin_index", "count"]:
                raise ValueError(f"{csv_path}: expected header 'bin_index,count', got {header}")
            rows = [(int(k), int(c)) for k, c in reader]
        index = [k for k, _ in rows]
        if index != list(range(len(rows))):
            raise ValueError(f"{csv_path}: bin_index must run 0..n-1 in order")
        counts = np.array([c for _, c in rows], dtype=np.int64)
        n = counts.size
        J = n.bit_length() - 1
        if n < 2 or (1 << J) != n:
            raise ValueError(f"{csv_path}: bin count {n} is not a power of two")
        meta = {}
        side = csv_path.with_suffix(".json")
        if side.exists():
            meta = json.loads(side.read_text())
            if meta.get("J", J) != J:
                raise ValueError(f"{side}: J={meta['J']} disagrees with {n} bins")
        if t is None:
            t = meta.get("t")
        if t is None:
            raise ValueError(f"{csv_path}: observation time t not given and no sidecar manifest found")
        provenance = {k: v for k, v in meta.items() if k not in ("J", "t", "seed")}
        return cls(J, counts, float(t), meta.get("seed"), provenance)


def _bin_generator(seed: int, k: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(k,))))


def simulate_counts(h: SampledFunction, t: float, seed: int, provenance: dict | None = None) -> CountData:
    """Independent ``N_k ~ Poisson(t 2**-J h(k 2**-J))``.

    Bin ``k`` draws from its own stream keyed by ``(seed, k)``, so the result
    does not depend on evaluation order.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if np.any(h.values < 0):
        raise InvalidIntensity("folded intensity h is negative on the grid")
    means = t * h.grid.width * h.values
    counts = np.zeros(h.grid.n, dtype=np.int64)
    for k, mu in enumerate(means):
        if mu > 0:
            counts[k] = _bin_generator(int(seed), k).poisson(mu)
    return CountData(h.J, counts, float(t), int(seed), dict(provenance or {}))
