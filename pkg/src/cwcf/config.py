"""Run configuration: defaults, dataset presets and resolution.

Every hyperparameter has a default; `ep_len` acts as the difficulty knob
from which the step budget, exploration length and learning-rate decay
period are derived unless overridden explicitly.  Resolution is pure:
the same inputs always produce the same frozen snapshot.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

# (hidden width, ep_len) presets keyed by dataset name
DATASET_DEFAULTS = {
    "miniboone": (128, 1000),
    "diabetes": (128, 100),
    "forest": (256, 10000),
}
FALLBACK_DEFAULTS = (128, 1000)


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


@dataclass
class RunConfig:
    # run identity
    seed: int | None = None
    out_dir: str | None = None
    dataset: dict = field(default_factory=dict)   # {"kind": "csv"|"synthetic", ...}
    budget_mode: str = "lambda"                   # lambda | average | hard
    budget_value: float = 0.0

    # per-dataset knobs
    ep_len: int | None = None
    hidden: int | None = None

    # global hyperparameters
    n_envs: int = 1000
    max_steps: int | None = None                  # derived: 100 * ep_len
    gamma: float = 1.0
    retrace_lambda: float = 1.0
    rho: float = 0.1
    batch_size: int = 128                         # transitions per update batch
    replay_episodes: int = 40_000
    eps_start: float = 1.0
    eps_end: float = 0.1
    eps_steps: int | None = None                  # derived: 2 * ep_len
    eta_start: float = 0.5
    eta_end: float = 0.0
    eta_steps: int | None = None                  # derived: eps_steps
    lr_pretrain: float = 1e-3
    lr_start: float = 5e-4
    lr_min: float = 5e-7
    lr_scale: float = 0.5
    lr_decay_period: int | None = None            # derived: ep_len
    max_grad_norm: float = 1.0
    pretrain_steps: int | None = None             # derived: ep_len // 2
    pretrain_batch: int = 128
    warmup_fraction: float = 0.01
    eval_every: int | None = None                 # derived: max(1, ep_len // 10)
    q_clip: bool = True
    respect_presence: bool = True

    # average-target controller
    lambda_lr: float = 1e-3
    lambda_momentum: float = 0.9
    lambda_window: int = 1000
    osc_window: int = 50

    # presets
    desk_scale: bool = False

    def dataset_name(self) -> str:
        kind = self.dataset.get("kind", "synthetic")
        if kind == "csv":
            return Path(self.dataset.get("path", "")).stem.lower()
        return self.dataset.get("generator", "synthetic")

    def resolve(self) -> "RunConfig":
        """Merge presets and derive dependent values into a new config."""
        cfg = dataclasses.replace(self)
        if cfg.seed is None:
            raise ConfigError("seed is required; runs must be reproducible")
        if cfg.budget_mode not in ("lambda", "average", "hard"):
            raise ConfigError(f"unknown budget mode {cfg.budget_mode!r}")
        if cfg.budget_value < 0:
            raise ConfigError("budget value must be nonnegative")
        name = cfg.dataset_name()
        preset_hidden, preset_ep_len = None, None
        for key, (h, e) in DATASET_DEFAULTS.items():
            if key in name:
                preset_hidden, preset_ep_len = h, e
                break
        if cfg.hidden is None:
            cfg.hidden = preset_hidden or FALLBACK_DEFAULTS[0]
        if cfg.ep_len is None:
            cfg.ep_len = preset_ep_len or FALLBACK_DEFAULTS[1]
        if cfg.desk_scale:
            cfg.n_envs = 32
            cfg.batch_size = 128
        if cfg.max_steps is None:
            cfg.max_steps = 100 * cfg.ep_len
        if cfg.eps_steps is None:
            cfg.eps_steps = 2 * cfg.ep_len
        if cfg.eta_steps is None:
            cfg.eta_steps = cfg.eps_steps
        if cfg.lr_decay_period is None:
            cfg.lr_decay_period = cfg.ep_len
        if cfg.pretrain_steps is None:
            cfg.pretrain_steps = cfg.ep_len // 2
        if cfg.eval_every is None:
            cfg.eval_every = max(1, cfg.ep_len // 10)
        for key in ("ep_len", "hidden", "n_envs", "max_steps", "batch_size",
                    "replay_episodes", "eval_every"):
            if getattr(cfg, key) <= 0:
                raise ConfigError(f"{key} must be positive, got {getattr(cfg, key)}")
        return cfg

    # -- persistence ---------------------------------------------------------

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(raw)
