"""Command-line entry point.

Wires JSON experiment configs to the library: data generation and
ingestion, attack runs, sweeps, composition-bound tables, meta-classifier
training, and weight inspection.  Commands validate everything before
writing any output, so a failed run leaves no partial files.
"""

from __future__ import annotations

import json
import os
import secrets
import sys
from pathlib import Path

import click
import numpy as np

from .attacks import (
    analytic_two_threshold_model,
    informed_one_threshold_model,
    model_accuracy,
    per_cell_error_rates,
    shadow_features,
)
from .config import ExperimentConfig, load_config
from .data import write_traces_csv
from .evaluation import (
    INFORMED,
    GameConfig,
    gap_report,
    prepare_game,
    roc_from_scores,
    rows_to_csv,
    rows_to_json,
    roc_to_csv,
    run_game,
    success_rate,
    summarize,
    sweep_positive_observations,
    sweep_shadow_count,
)
from .mechanisms import expected_attack_accuracy_from_budget
from .mlp import init_model, load_model, mlp_train, save_model, weight_report
from . import figures


def _resolve_seed(seed: int | None) -> int:
    """Honor --seed; otherwise pick one and tell the user how to reproduce."""
    if seed is None:
        seed = secrets.randbelow(2**31)
        click.echo(f"seed: {seed} (generated; pass --seed {seed} to reproduce)")
    return seed


def _load(config_path) -> ExperimentConfig:
    try:
        return load_config(config_path)
    except (ValueError, OSError) as exc:
        raise click.ClickException(str(exc))


def _analytic_accuracy(cfg: GameConfig) -> float | None:
    """Closed-form accuracy for informed metric attacks with known k."""
    if cfg.attacker != INFORMED or cfg.n_obs_target == "natural":
        return None
    k = int(cfg.n_obs_target)
    if k == 0:
        return 0.5
    if cfg.attack == "one_threshold":
        model = informed_one_threshold_model(k, cfg.mech)
    elif cfg.attack == "two_threshold":
        alpha, beta = per_cell_error_rates(cfg.mech)
        model = analytic_two_threshold_model(k, alpha, beta)
    else:
        return None
    return model_accuracy(model)[1]


_config_opt = click.option(
    "--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False)
)
_seed_opt = click.option("--seed", type=int, default=None, help="Master RNG seed.")
_threads_opt = click.option(
    "--threads", type=int, default=os.cpu_count() or 1, show_default="cores"
)
_out_dir_opt = click.option(
    "--out-dir", type=click.Path(file_okay=False), default=".", show_default=True
)


@click.group()
def main():
    """Membership-inference auditing of DP location aggregates."""


@main.command()
@_config_opt
@_seed_opt
@_out_dir_opt
def generate(config_path, seed, out_dir):
    """Generate a synthetic trace dataset and write it as CSV."""
    cfg = _load(config_path)
    seed = _resolve_seed(seed)
    dataset = cfg.data.load(seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        write_traces_csv(dataset, out / "traces.csv")
    except OSError as exc:
        raise click.ClickException(str(exc))
    sites, epochs = dataset.shape
    density = float(dataset.stacked().mean())
    click.echo(
        f"wrote {out / 'traces.csv'}: n={len(dataset)} sites={sites} "
        f"epochs={epochs} mean_density={density:.4f}"
    )


@main.command()
@_config_opt
@_seed_opt
@_threads_opt
@_out_dir_opt
def attack(config_path, seed, threads, out_dir):
    """Run the membership game and write result tables, ROC, and figures."""
    cfg = _load(config_path)
    seed = _resolve_seed(seed)
    game = cfg.game_config(seed, threads)
    dataset = cfg.data.load(seed)
    try:
        records = run_game(game, dataset)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    row = summarize(game, records)
    member = [r.score for r in records if r.true_bit == 1]
    nonmember = [r.score for r in records if r.true_bit == 0]
    roc = roc_from_scores(member, nonmember)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows_to_csv([row], out / "results.csv")
    rows_to_json([row], out / "results.json")
    roc_to_csv(roc, out / "roc.csv")
    figures.render_roc(roc, out / "roc.png", title=f"{game.attack} ({game.attacker})")
    line = f"accuracy={row['accuracy']:.4f} auc={row['auc']:.4f}"
    analytic = _analytic_accuracy(game)
    if analytic is not None:
        line += f" analytic={analytic:.4f}"
    click.echo(line)


@main.command()
@_config_opt
@_seed_opt
@_threads_opt
@_out_dir_opt
def sweep(config_path, seed, threads, out_dir):
    """Sweep positive observations and/or shadow count; write tables + figures."""
    cfg = _load(config_path)
    if not cfg.k_grid and not cfg.m_grid:
        raise click.ClickException("config has no sweep.k_grid or sweep.m_grid")
    seed = _resolve_seed(seed)
    game = cfg.game_config(seed, threads)
    dataset = cfg.data.load(seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.k_grid:
        rows = sweep_positive_observations(game, cfg.k_grid, dataset)
        rows_to_csv(rows, out / "sweep_k.csv")
        figures.render_sweep(rows, out / "sweep_k.png")
        click.echo(f"wrote {out / 'sweep_k.csv'} ({len(rows)} rows)")
        if game.attacker == INFORMED:
            gap_rows = gap_report(game, cfg.k_grid, dataset)
            rows_to_csv(gap_rows, out / "gap.csv")
            figures.render_bound(gap_rows, out / "gap.png")
            click.echo(f"wrote {out / 'gap.csv'}")
    if cfg.m_grid:
        rows = sweep_shadow_count(game, cfg.m_grid, dataset)
        rows_to_csv(rows, out / "sweep_m.csv")
        figures.render_sweep(rows, out / "sweep_m.png", x_label="shadow aggregates")
        click.echo(f"wrote {out / 'sweep_m.csv'} ({len(rows)} rows)")


@main.command()
@click.option("--epsilon", type=float, required=True)
@click.option("--delta", type=float, default=0.0, show_default=True)
@click.option("--k-max", type=int, default=120, show_default=True)
@_out_dir_opt
def bound(epsilon, delta, k_max, out_dir):
    """Tabulate the expected-attack-accuracy bound for k = 1..k_max."""
    if epsilon < 0:
        raise click.BadParameter("epsilon must be >= 0", param_hint="--epsilon")
    if not 0 <= delta < 1:
        raise click.BadParameter("delta must lie in [0, 1)", param_hint="--delta")
    if k_max < 1:
        raise click.BadParameter("k-max must be >= 1", param_hint="--k-max")
    rows = [
        {"k": k, "expected_bound": expected_attack_accuracy_from_budget(epsilon, delta, k)}
        for k in range(1, k_max + 1)
    ]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows_to_csv(rows, out / "bound.csv")
    figures.render_bound(rows, out / "bound.png")
    for row in rows:
        click.echo(f"{row['k']:4d}  {row['expected_bound']:.6f}")


@main.command("train-meta")
@_config_opt
@_seed_opt
@_out_dir_opt
def train_meta(config_path, seed, out_dir):
    """Train the meta-classifier on shadow features and save the model."""
    from .evaluation import _calibrate  # shares the calibration path with run_game

    cfg = _load(config_path)
    seed = _resolve_seed(seed)
    game = cfg.game_config(seed)
    if game.attack != "meta_classifier":
        raise click.ClickException("game.attack must be 'meta_classifier'")
    dataset = cfg.data.load(seed)
    z, _, aux_pool = prepare_game(game, dataset)
    shadow_seed, _ = np.random.SeedSequence(game.master_seed).spawn(2)
    aux = None if game.attacker == INFORMED else aux_pool
    try:
        cal = _calibrate(game, z, aux, np.random.default_rng(shadow_seed))
    except ValueError as exc:
        raise click.ClickException(str(exc))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_model(cal.model, out / "model.json")
    report = weight_report(cal.model)
    with open(out / "weight_report.json", "w") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)
    click.echo(
        f"wrote {out / 'model.json'} (inputs={cal.model.n_in}, "
        f"hidden={cal.model.n_hidden})"
    )


@main.command("inspect-weights")
@click.argument("model_path", type=click.Path(exists=True, dir_okay=False))
@_out_dir_opt
def inspect_weights(model_path, out_dir):
    """Print and save weight diagnostics (CV, diagonal dominance, biases)."""
    try:
        model = load_model(model_path)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise click.ClickException(f"{model_path}: {exc}")
    report = weight_report(model)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "weight_report.json", "w") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)
    figures.render_weights(model, out / "weights.png")
    click.echo(json.dumps(report.to_json(), indent=2, sort_keys=True))


if __name__ == "__main__":
    sys.exit(main())
