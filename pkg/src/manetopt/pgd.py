"""Projected gradient ascent on the min-rate objective.

``run_pgd`` applies K ascent steps with a per-iteration step size and records
the full iterate trajectory; the training loss weights every iteration and the
ensemble scans all of them, so nothing is discarded.  ``run_pgd_batch`` runs
many (channel, start) pairs in lockstep for throughput; the per-channel
results are identical to ``run_pgd``.
"""

from __future__ import annotations

import csv
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from . import engine
from .channels import ChannelRealization, NoiseProfile, topology_of
from .power import is_feasible

__all__ = [
    "PgdTrajectory",
    "pgd_step",
    "run_pgd",
    "run_pgd_batch",
    "calibrate_fixed_step",
    "write_trajectory_csv",
    "STEP_CANDIDATES",
]

STEP_CANDIDATES = (1.0, 0.5, 0.2, 0.1, 0.05, 0.02, 0.01)


@dataclass
class PgdTrajectory:
    """Every iterate P^(0)..P^(K) and its min rate on the driving channel."""

    iterates: list[np.ndarray]
    min_rates: np.ndarray

    @property
    def steps(self) -> int:
        return len(self.iterates) - 1


def _operands(channel, noise):
    return engine.prepare_operands(
        channel.first_hop, channel.later_hops, np.asarray(noise.hop_noise_vars)
    )


def pgd_step(
    p: np.ndarray, channel: ChannelRealization, noise: NoiseProfile, mu: float
) -> np.ndarray:
    """One ascent step: project(p + mu * gradient)."""
    p = np.asarray(p, dtype=np.float64)
    if not is_feasible(p):
        raise ValueError("pgd_step requires a feasible matrix")
    net = engine.net_index(topology_of(channel))
    return engine.pgd_step_batch(net, _operands(channel, noise), p[None], float(mu))[0]


def run_pgd(
    channel: ChannelRealization,
    noise: NoiseProfile,
    p0: np.ndarray,
    mu: Sequence[float] | np.ndarray,
) -> PgdTrajectory:
    """Apply the step schedule ``mu`` from ``p0``, keeping all iterates."""
    p0 = np.asarray(p0, dtype=np.float64)
    if not is_feasible(p0):
        raise ValueError("run_pgd requires a feasible starting point")
    mu = np.asarray(mu, dtype=np.float64)
    net = engine.net_index(topology_of(channel))
    rates, iterates = engine.run_schedule_batch(
        net, _operands(channel, noise), p0[None], mu, record_iterates=True
    )
    return PgdTrajectory(
        iterates=[iterates[k, 0] for k in range(len(mu) + 1)],
        min_rates=rates[:, 0],
    )


def run_pgd_batch(
    channels: ChannelRealization | Sequence[ChannelRealization],
    noise: NoiseProfile,
    p0: np.ndarray,
    mu: Sequence[float] | np.ndarray,
    record_iterates: bool = False,
    eval_channels: ChannelRealization | Sequence[ChannelRealization] | None = None,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Run the schedule over a batch of starts and/or channels.

    ``p0`` is (batch, rows, N).  A single channel broadcasts over the batch
    (multi-start on one realization); a sequence supplies one channel per
    batch element.  ``eval_channels`` measures the recorded rates on a
    different channel than the one driving the steps.  Returns the min rates
    per iterate of shape (K+1, batch) and, optionally, all iterates.
    """
    mu = np.asarray(mu, dtype=np.float64)
    p0 = np.asarray(p0, dtype=np.float64)
    first_ch = channels if isinstance(channels, ChannelRealization) else channels[0]
    net = engine.net_index(topology_of(first_ch))
    ops = _stacked_operands(channels, noise)
    eval_ops = None if eval_channels is None else _stacked_operands(eval_channels, noise)
    return engine.run_schedule_batch(
        net, ops, p0, mu, record_iterates=record_iterates, eval_ops=eval_ops
    )


def _stacked_operands(channels, noise):
    if isinstance(channels, ChannelRealization):
        return _operands(channels, noise)
    first, later = engine.stack_channels(list(channels))
    return engine.prepare_operands(first, later, np.asarray(noise.hop_noise_vars))


def calibrate_fixed_step(
    channels: Sequence[ChannelRealization],
    noise: NoiseProfile,
    candidates: Sequence[float] = STEP_CANDIDATES,
    iterations: int = 5000,
    tail_fraction: float = 0.1,
    tol: float = 1e-12,
) -> float:
    """Constant step size for the classic fixed-step baseline.

    Picks the largest candidate whose channel-averaged min-rate sequence is
    non-decreasing (within ``tol``) over the final ``tail_fraction`` of the
    run, i.e. the largest step that has settled rather than oscillating.
    """
    from .power import uniform_init

    topology = topology_of(channels[0])
    p0 = np.broadcast_to(
        uniform_init(topology), (len(channels), topology.stacked_rows, topology.end_users)
    )
    ordered = sorted(float(c) for c in candidates)[::-1]
    for step in ordered:
        rates, _ = run_pgd_batch(channels, noise, p0, np.full(iterations, step))
        mean = rates.mean(axis=1)
        tail = mean[-max(2, int(round(tail_fraction * iterations))):]
        if np.all(np.diff(tail) >= -tol):
            return step
    return ordered[-1]


def write_trajectory_csv(trajectory: PgdTrajectory, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "min_rate"])
        for k, rate in enumerate(trajectory.min_rates):
            writer.writerow([k, format(float(rate), ".17g")])
