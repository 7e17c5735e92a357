"""Run configuration shared by the search engine and the CLI.

Precedence when assembling a config: explicit CLI flags > config file values >
the defaults below.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, fields, replace

METHODS = ("wsae", "exhaustive", "simonly")
SCORE_MODES = ("prob", "logit")
EMPTY_MASK_POLICIES = ("skip", "full")


@dataclass(frozen=True)
class RunConfig:
    method: str = "wsae"
    score_mass: float = 0.5  # cumulative weight-score threshold on query cells
    keep_fraction: float = 0.2  # fraction of candidate pairs kept by similarity
    sim_weight: float = 0.1  # weight of the similarity term in candidate scores
    temperature: float = 0.1  # similarity softmax temperature
    mask_threshold: float = 0.5  # binarization threshold after mask resize
    budget: int | None = None  # max edits; None means one per grid cell
    score_mode: str = "prob"
    on_empty_mask: str = "skip"
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not 0.0 < self.score_mass <= 1.0:
            raise ValueError(f"score mass must lie in (0, 1], got {self.score_mass}")
        if not 0.0 < self.keep_fraction <= 1.0:
            raise ValueError(f"keep fraction must lie in (0, 1], got {self.keep_fraction}")
        if self.sim_weight < 0.0:
            raise ValueError(f"similarity weight must be >= 0, got {self.sim_weight}")
        if self.temperature <= 0.0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")
        if not 0.0 <= self.mask_threshold < 1.0:
            raise ValueError(f"mask threshold must lie in [0, 1), got {self.mask_threshold}")
        if self.budget is not None and self.budget < 0:
            raise ValueError(f"budget must be >= 0, got {self.budget}")
        if self.score_mode not in SCORE_MODES:
            raise ValueError(f"score mode must be one of {SCORE_MODES}, got {self.score_mode!r}")
        if self.on_empty_mask not in EMPTY_MASK_POLICIES:
            raise ValueError(
                f"empty-mask policy must be one of {EMPTY_MASK_POLICIES}, "
                f"got {self.on_empty_mask!r}")

    def with_overrides(self, **kwargs) -> RunConfig:
        """New config with non-None overrides applied."""
        updates = {k: v for k, v in kwargs.items() if v is not None}
        return replace(self, **updates) if updates else self


def load_config_file(path) -> dict:
    """Read a JSON config file, keeping only known RunConfig fields."""
    with open(path) as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: config file must hold a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"{path}: unknown config keys {sorted(unknown)}")
    return raw
