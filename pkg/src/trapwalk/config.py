"""Experiment configuration (INI round-trip) and run manifests.

The configuration is flat key = value text grouped in sections, chosen for
diff-friendliness; every run writes a manifest with the config hash,
per-replica stream labels and a content hash of every emitted file, so
identical (config, seed) runs are byte-identical regardless of worker
count.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import json
import time
from dataclasses import dataclass, field, asdict

__all__ = ["ExperimentConfig", "RunManifest", "DEFAULT_SCAN_CELLS"]


# vetted interior phase-scan cells (alpha, beta, eps): margin >= 0.1 from
# every boundary; comb FIN cells sit deep in the phase where the
# displacement exponent separates cleanly at desk scale
DEFAULT_SCAN_CELLS = {
    "transparent": [
        (0.10, 0.36, 0.05), (0.24, 0.64, 0.05), (0.15, 0.50, 0.05),
        (0.30, 0.55, 0.05),
        (0.36, 0.10, 0.05), (0.64, 0.24, 0.05), (0.50, 0.15, 0.05),
        (0.55, 0.30, 0.05),
        (1.50, 0.30, 0.05), (1.20, 0.80, 0.05), (2.00, 1.00, 0.05),
        (0.80, 0.50, 0.05), (0.60, 0.70, 0.05), (1.80, 1.70, 0.05),
        (1.10, 0.20, 0.05), (2.20, 0.10, 0.05),
    ],
    "comb": [
        (0.30, 0.00, 0.05), (0.50, 0.50, 0.05), (0.70, 1.00, 0.05),
        (0.45, 0.25, 0.05), (0.60, 0.00, 0.05), (0.35, 0.75, 0.05),
        (1.15, 1.00, 0.02), (1.30, 1.50, 0.033), (1.20, 2.00, 0.05),
        (1.40, 1.60, 0.033), (1.25, 1.20, 0.033),
        (1.60, 0.20, 0.02), (2.40, 0.50, 0.02), (1.30, 0.05, 0.02),
        (3.00, 0.80, 0.02), (2.00, 0.35, 0.02),
    ],
}

_RANGES = {
    "alpha": (0.0, 64.0),
    "beta": (0.0, 64.0),
    "gamma": (0.0, 1.0),
    "c": (1.0, 1e6),
    "v_min": (0.0, 1e6),
    "replicas": (1, 1 << 30),
    "n_steps": (0, 1 << 60),
    "t_horizon": (0.0, 1e18),
    "delta": (0.0, 1e6),
    "h": (0.0, 1e6),
    "master_seed": (0, 1 << 63),
    "workers": (1, 4096),
    "scan_margin": (0.0, 1.0),
    "scan_replicas": (100, 1 << 30),
    "n_ks": (100, 1 << 24),
    "n_env_corr": (0, 1 << 24),
    "step_cap": (1, 1 << 62),
}


@dataclass
class ExperimentConfig:
    # [experiment]
    model: str = "transparent"
    alpha: float = 0.5
    beta: float = 0.25
    gamma: float = 0.5
    c: float = 1.0
    v_min: float = 1e-3
    # [schedule]
    epsilons: tuple = (1e-1, 1e-2, 1e-3)
    t_grid: tuple = (0.25, 0.5, 1.0)
    # [simulation]
    replicas: int = 100
    n_steps: int = 0  # 0: simulate by t_horizon instead
    t_horizon: float = 0.0
    delta: float = 0.0  # 0: auto 1e-4 * T
    h: float = 0.0  # 0: auto sqrt(delta)
    step_cap: int = 1 << 62
    master_seed: int = 12345
    workers: int = 1
    # [output]
    out_dir: str = "out"
    strict: bool = False
    # [phase-scan]
    cells: tuple = ()  # empty: model default grid
    scan_margin: float = 0.1
    scan_replicas: int = 1200
    n_ks: int = 600
    n_env_corr: int = 150

    _SECTIONS = {
        "experiment": ("model", "alpha", "beta", "gamma", "c", "v_min"),
        "schedule": ("epsilons", "t_grid"),
        "simulation": ("replicas", "n_steps", "t_horizon", "delta", "h",
                       "step_cap", "master_seed", "workers"),
        "output": ("out_dir", "strict"),
        "phase-scan": ("cells", "scan_margin", "scan_replicas", "n_ks",
                       "n_env_corr"),
    }

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.model not in ("srw", "bouchaud", "transparent", "comb",
                              "bm", "fk", "fin", "ssbm"):
            raise ValueError(f"unknown model {self.model!r}")
        for name, (lo, hi) in _RANGES.items():
            v = getattr(self, name)
            if not lo <= v <= hi:
                raise ValueError(f"{name} = {v} outside [{lo}, {hi}]")
        if self.n_steps == 0 and self.t_horizon == 0.0 and self.model in (
                "srw", "bouchaud", "transparent", "comb"):
            raise ValueError("set n_steps or t_horizon for walk models")
        for e in self.epsilons:
            if not 0.0 < e < 1.0:
                raise ValueError("epsilons must lie in (0,1)")
        for t in self.t_grid:
            if t <= 0.0:
                raise ValueError("t_grid entries must be positive")
        for cell in self.cells:
            if len(cell) != 3:
                raise ValueError("cells are (alpha, beta, eps) triples")

    # -- serialization ------------------------------------------------------

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        for section, keys in self._SECTIONS.items():
            cp[section] = {}
            for k in keys:
                v = getattr(self, k)
                if k in ("epsilons", "t_grid"):
                    v = ", ".join(repr(float(x)) for x in v)
                elif k == "cells":
                    v = "; ".join(f"{a}:{b}:{e}" for a, b, e in v)
                cp[section][k] = str(v)
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser()
        cp.read_string(text)
        kwargs = {}
        for section, keys in cls._SECTIONS.items():
            if section not in cp:
                continue
            for k in keys:
                if k not in cp[section]:
                    continue
                raw = cp[section][k].strip()
                if k in ("epsilons", "t_grid"):
                    kwargs[k] = tuple(float(x) for x in raw.split(",") if x.strip())
                elif k == "cells":
                    cells = []
                    for item in raw.split(";"):
                        item = item.strip()
                        if item:
                            a, b, e = item.split(":")
                            cells.append((float(a), float(b), float(e)))
                    kwargs[k] = tuple(cells)
                elif k in ("model", "out_dir"):
                    kwargs[k] = raw
                elif k == "strict":
                    kwargs[k] = raw.lower() in ("1", "true", "yes", "on")
                elif k in ("replicas", "n_steps", "step_cap", "master_seed",
                           "workers", "scan_replicas", "n_ks", "n_env_corr"):
                    kwargs[k] = int(raw)
                else:
                    kwargs[k] = float(raw)
        return cls(**kwargs)

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_ini().encode()).hexdigest()

    def scan_cells(self):
        if self.cells:
            return list(self.cells)
        return list(DEFAULT_SCAN_CELLS[self.model])


@dataclass
class RunManifest:
    config_hash: str
    tool_version: str
    master_seed: int
    command: str
    replica_streams: list = field(default_factory=list)
    files: list = field(default_factory=list)  # {name, sha256, bytes}
    timings: dict = field(default_factory=dict)
    started: float = field(default_factory=time.time)

    def add_file(self, path) -> None:
        data = path.read_bytes()
        self.files.append({
            "name": path.name,
            "sha256": hashlib.sha256(data).hexdigest(),
            "bytes": len(data),
        })

    def finish(self) -> None:
        self.timings["wall_seconds"] = time.time() - self.started

    def to_json(self) -> str:
        d = asdict(self)
        return json.dumps(d, indent=2, sort_keys=True, default=float)
