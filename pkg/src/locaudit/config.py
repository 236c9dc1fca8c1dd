"""JSON experiment configuration: parsing, validation, and object binding.

One JSON file captures a full run: mechanism, game parameters, data
source, and sweep grids.  Validation is strict — unknown keys are
rejected with the offending field named — and happens before any
computation or output.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import TraceDataset, generate_synthetic_traces, ingest_traces_csv
from .evaluation import ATTACKS, AUXILIARY, GameConfig, INFORMED
from .mechanisms import MechanismSpec
from .mlp import TrainConfig


def _check_keys(obj: dict, allowed, where: str) -> None:
    unknown = set(obj) - set(allowed)
    if unknown:
        raise ValueError(f"{where}: unknown keys {sorted(unknown)}")


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise ValueError(f"{where}: missing required key {key!r}")
    return obj[key]


@dataclass(frozen=True)
class DataConfig:
    """Where traces come from: a synthetic Bernoulli grid or a CSV file."""

    kind: str
    sites: int
    epochs: int
    n_traces: int = 0
    rates: np.ndarray | None = None
    path: str | None = None

    def __post_init__(self):
        if self.kind not in ("synthetic", "csv"):
            raise ValueError(f"data.kind must be 'synthetic' or 'csv', got {self.kind!r}")
        if self.sites < 1 or self.epochs < 1:
            raise ValueError("data.sites and data.epochs must be >= 1")
        if self.kind == "synthetic" and self.n_traces < 1:
            raise ValueError("data.n_traces must be >= 1 for synthetic data")
        if self.kind == "csv" and not self.path:
            raise ValueError("data.path is required for csv data")

    @classmethod
    def from_json(cls, obj: dict) -> "DataConfig":
        _check_keys(
            obj, {"kind", "sites", "epochs", "n_traces", "rate", "rates", "path"}, "data"
        )
        kind = _require(obj, "kind", "data")
        sites = int(_require(obj, "sites", "data"))
        epochs = int(_require(obj, "epochs", "data"))
        rates = None
        if kind == "synthetic":
            if "rates" in obj and "rate" in obj:
                raise ValueError("data: give either 'rate' or 'rates', not both")
            if "rates" in obj:
                rates = np.asarray(obj["rates"], dtype=float)
                if rates.shape != (sites, epochs):
                    raise ValueError(
                        f"data.rates: expected shape ({sites}, {epochs}), "
                        f"got {rates.shape}"
                    )
            else:
                rates = np.full((sites, epochs), float(obj.get("rate", 0.1)))
        return cls(
            kind,
            sites,
            epochs,
            int(obj.get("n_traces", 0)),
            rates,
            obj.get("path"),
        )

    def load(self, seed=None) -> TraceDataset:
        if self.kind == "csv":
            return ingest_traces_csv(self.path, self.sites, self.epochs)
        return generate_synthetic_traces(self.rates, self.n_traces, seed)


_GAME_KEYS = {
    "attacker",
    "attack",
    "n_traces",
    "trials",
    "shadow_count",
    "n_obs_target",
    "n_references",
    "train",
}
_TRAIN_KEYS = {"learning_rate", "epochs", "batch_size", "optimizer", "seed"}


@dataclass(frozen=True)
class ExperimentConfig:
    """A complete experiment: mechanism + game + data source + sweep grids."""

    mechanism: MechanismSpec
    game: dict
    data: DataConfig
    k_grid: tuple[int, ...] = ()
    m_grid: tuple[int, ...] = ()

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentConfig":
        _check_keys(obj, {"mechanism", "game", "data", "sweep"}, "config")
        mech = MechanismSpec.from_json(_require(obj, "mechanism", "config"))
        game = dict(_require(obj, "game", "config"))
        _check_keys(game, _GAME_KEYS, "game")
        if game.get("attacker") not in (INFORMED, AUXILIARY):
            raise ValueError(
                f"game.attacker must be 'informed' or 'auxiliary', "
                f"got {game.get('attacker')!r}"
            )
        if game.get("attack") not in ATTACKS:
            raise ValueError(f"game.attack must be one of {ATTACKS}")
        if "train" in game:
            _check_keys(game["train"], _TRAIN_KEYS, "game.train")
        data = DataConfig.from_json(_require(obj, "data", "config"))
        sweep = dict(obj.get("sweep", {}))
        _check_keys(sweep, {"k_grid", "m_grid"}, "sweep")
        k_grid = tuple(int(k) for k in sweep.get("k_grid", ()))
        m_grid = tuple(int(m) for m in sweep.get("m_grid", ()))
        if any(k < 0 for k in k_grid):
            raise ValueError("sweep.k_grid entries must be >= 0")
        if any(m < 2 for m in m_grid):
            raise ValueError("sweep.m_grid entries must be >= 2")
        return cls(mech, game, data, k_grid, m_grid)

    def game_config(self, seed: int, threads: int = 1) -> GameConfig:
        """Bind the game section to a GameConfig; all seeds derive from ``seed``."""
        target_seed, master_seed, train_seed = (
            int(s) for s in np.random.SeedSequence(seed).generate_state(3)
        )
        train_obj = dict(self.game.get("train", {}))
        train_obj.setdefault("seed", train_seed)
        game = {k: v for k, v in self.game.items() if k != "train"}
        n_obs = game.get("n_obs_target", "natural")
        if n_obs != "natural":
            n_obs = int(n_obs)
        return GameConfig(
            attacker=game["attacker"],
            mech=self.mechanism,
            n_traces=int(game.get("n_traces", 100)),
            trials=int(game.get("trials", 10_000)),
            attack=game["attack"],
            shadow_count=int(game.get("shadow_count", 2_000)),
            n_obs_target=n_obs,
            target_seed=target_seed,
            master_seed=master_seed,
            n_references=int(game.get("n_references", 16)),
            train=TrainConfig(**train_obj),
            threads=threads,
        )


def load_config(path) -> ExperimentConfig:
    """Parse and validate an experiment JSON file."""
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(obj, dict):
        raise ValueError(f"{path}: top-level config must be a JSON object")
    return ExperimentConfig.from_json(obj)
