"""Run configuration: one flat YAML mapping drives every command.

Every field has a default, so an empty file (or none) is a valid config;
unknown keys fail loudly rather than being ignored.  CLI flags mirror the
keys one-to-one and override file values.
"""

import dataclasses
import os

import yaml

from .exceptions import ConfigError
from .model import Hyperparams

OUTPUT_ROOT_ENV = "RNNE_OUTPUT_ROOT"


def _default_fractions():
    return [round(0.1 * i, 1) for i in range(1, 10)]


@dataclasses.dataclass
class RunConfig:
    """Flat key-value run configuration; see field comments for semantics."""

    # paths
    snapshot_dir: str = "snapshots"
    labels_path: str = ""
    output_dir: str = ""          # empty -> <output root>/run
    # data shape
    capacity_n: int = 0           # 0 -> inferred from the series
    window_size: int = 5
    # model: encoder widths between the derived input width and embedding_dim
    layer_sizes: list = dataclasses.field(default_factory=list)
    embedding_dim: int = 32
    # training
    loss_alpha: float = 0.1
    beta: float = 5.0
    gamma: float = 1.0
    eta: float = 0.5
    batch_size: int = 32
    max_iters: int = 2000
    tol: float = 1e-5
    patience: int = 20
    lr_decay: float = 1.0
    warm_start: bool = True
    grubbs_alpha: float = 0.05
    seed: int = 0
    # evaluation
    task: str = "reconstruct"
    hide_fraction: float = 0.15
    precision_ks: list = dataclasses.field(default_factory=list)  # empty -> auto
    fractions: list = dataclasses.field(default_factory=_default_fractions)
    repeats: int = 5
    l2_strength: float = 1.0
    # hyperparameter sweep
    alpha_grid: list = dataclasses.field(default_factory=lambda: [0.1])
    beta_grid: list = dataclasses.field(default_factory=lambda: [5.0])
    gamma_grid: list = dataclasses.field(default_factory=lambda: [1.0])
    sweep_max_iters: int = 300
    # generator
    communities: int = 4
    nodes_per_community: int = 25
    p_in: float = 0.3
    p_out: float = 0.02
    series_length: int = 14
    node_add_rate: float = 0.0
    node_remove_rate: float = 0.0
    edge_add_rate: float = 0.0
    edge_remove_rate: float = 0.0

    def __post_init__(self):
        if self.window_size < 2:
            raise ConfigError("window_size must be >= 2")
        if self.task not in ("reconstruct", "linkpred", "classify"):
            raise ConfigError(f"unknown task {self.task!r}")
        if not self.output_dir:
            root = os.environ.get(OUTPUT_ROOT_ENV, ".")
            self.output_dir = os.path.join(root, "run")

    def hyperparams(self):
        return Hyperparams(
            loss_alpha=self.loss_alpha,
            beta=self.beta,
            gamma=self.gamma,
            eta=self.eta,
            batch_size=self.batch_size,
            embedding_dim=self.embedding_dim,
            max_iters=self.max_iters,
            tol=self.tol,
            patience=self.patience,
            lr_decay=self.lr_decay,
        )

    def as_dict(self):
        return dataclasses.asdict(self)


def config_fields():
    return {f.name: f for f in dataclasses.fields(RunConfig)}


def from_dict(mapping):
    """Build a RunConfig, rejecting unknown keys."""
    known = config_fields()
    unknown = sorted(set(mapping) - set(known))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    try:
        return RunConfig(**mapping)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path=None, overrides=None):
    """Read YAML config (optional) and apply overrides on top."""
    mapping = {}
    if path:
        with open(path, encoding="utf-8") as fh:
            loaded = yaml.safe_load(fh)
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config root must be a mapping, got {type(loaded).__name__}")
        mapping.update(loaded)
    if overrides:
        mapping.update(overrides)
    return from_dict(mapping)


def save_config(config, path):
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(config.as_dict(), fh, sort_keys=True)
