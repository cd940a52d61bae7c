"""Unsupervised learning of the per-iteration step sizes.

The K step sizes of the unrolled optimizer are the only trainable parameters.
They are initialized to a constant step with which fixed-step ascent converges
and tuned by mini-batch Adam on the iteration-weighted negative min-rate loss
(the weight of iterate k is log2(1+k), so later iterates matter more).  No
labels are involved: the objective itself scores every candidate allocation.

In noisy-CSI mode the optimizer consumes LMMSE channel estimates, re-simulated
from fresh pilot noise every epoch, while the loss is always measured on the
true channels.  Gradients with respect to the step sizes are exact forward-
mode derivatives through the unrolled pipeline (K tangent directions); the
test suite checks them against finite differences.
"""

from __future__ import annotations

import hashlib
import json
from collections.abc import Callable, Sequence
from dataclasses import asdict, dataclass

import numpy as np

from . import engine
from .channels import ChannelDataset, ChannelRealization, NoiseProfile, Topology
from .pgd import PgdTrajectory, calibrate_fixed_step
from .pilots import lmmse_estimate, make_pilots, simulate_pilot_rx
from .power import random_init
from .rates import min_rate

__all__ = [
    "MIN_STEP",
    "TrainConfig",
    "AdamState",
    "adam_update",
    "weighted_loss",
    "loss_grad_mu",
    "train",
    "save_schedule",
    "load_schedule",
    "iteration_weights",
]

MIN_STEP = 1e-6

FULL_CSI = "full-csi"
NOISY_CSI = "noisy-csi"


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 40
    epochs: int = 100
    batch_count: int = 10
    learning_rate: float = 1e-2
    mode: str = FULL_CSI
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    init_step: float | None = None  # None: calibrate on the training channels

    def __post_init__(self) -> None:
        if self.iterations < 1 or self.epochs < 1 or self.batch_count < 1:
            raise ValueError("iterations, epochs and batch_count must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be positive")
        if self.mode not in (FULL_CSI, NOISY_CSI):
            raise ValueError(f"mode must be '{FULL_CSI}' or '{NOISY_CSI}'")


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    count: int

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(m=np.zeros(size), v=np.zeros(size), count=0)


def adam_update(
    state: AdamState,
    grad: np.ndarray,
    mu: np.ndarray,
    learning_rate: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[AdamState, np.ndarray]:
    """Bias-corrected Adam descent step on the step sizes, then positivity clamp."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != state.m.shape or grad.shape != np.shape(mu):
        raise ValueError("gradient, state and step vector sizes must agree")
    count = state.count + 1
    m = beta1 * state.m + (1.0 - beta1) * grad
    v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**count)
    v_hat = v / (1.0 - beta2**count)
    updated = mu - learning_rate * m_hat / (np.sqrt(v_hat) + eps)
    return AdamState(m=m, v=v, count=count), np.maximum(updated, MIN_STEP)


def iteration_weights(steps: int) -> np.ndarray:
    """Strictly increasing loss weights log2(1+k) for k = 1..steps."""
    return np.log2(1.0 + np.arange(1, steps + 1))


def weighted_loss(
    trajectory: PgdTrajectory, h_true: ChannelRealization, noise: NoiseProfile
) -> float:
    """Iteration-weighted negative min rate, measured on the true channel."""
    steps = trajectory.steps
    if steps < 1:
        raise ValueError("the trajectory must contain at least one update")
    weights = iteration_weights(steps)
    rates = np.array(
        [min_rate(h_true, trajectory.iterates[k], noise)[0] for k in range(1, steps + 1)]
    )
    return float(-(weights * rates).sum())


def _stack_entries(
    entries: Sequence[tuple[ChannelRealization, NoiseProfile]]
) -> tuple[np.ndarray, tuple[np.ndarray, ...], np.ndarray]:
    first, later = engine.stack_channels([ch for ch, _ in entries])
    sig2 = np.array([n.hop_noise_vars for _, n in entries], dtype=np.float64)
    return first, later, sig2


def _estimate_entries(
    entries: Sequence[tuple[ChannelRealization, NoiseProfile]],
    topology: Topology,
    channel_var: float,
    rngs: Sequence[np.random.Generator],
) -> list[ChannelRealization]:
    pilots = make_pilots(topology)
    estimates = []
    for (ch, noise), rng in zip(entries, rngs):
        block = simulate_pilot_rx(ch, noise, pilots, rng)
        estimates.append(lmmse_estimate(block, noise, channel_var))
    return estimates


def _batch_loss_grad(
    net: engine.NetIndex,
    entries: Sequence[tuple[ChannelRealization, NoiseProfile]],
    opt_channels: Sequence[ChannelRealization] | None,
    mu: np.ndarray,
    p0: np.ndarray,
    want_grad: bool = True,
    track_margins: bool = False,
) -> engine.UnrolledResult:
    """Unrolled loss over one batch; ``opt_channels`` override the driving CSI."""
    first, later, sig2 = _stack_entries(entries)
    loss_ops = engine.prepare_operands(first, later, sig2)
    if opt_channels is None:
        opt_ops = loss_ops
    else:
        ofirst, olater = engine.stack_channels(list(opt_channels))
        opt_ops = engine.prepare_operands(ofirst, olater, sig2)
    q = len(entries)
    p0q = np.broadcast_to(p0, (q,) + p0.shape)
    weights = iteration_weights(len(mu))
    return engine.unrolled_loss(
        net,
        opt_ops,
        loss_ops,
        p0q,
        np.asarray(mu, dtype=np.float64),
        weights,
        want_grad=want_grad,
        track_margins=track_margins,
    )


def loss_grad_mu(
    batch: Sequence[tuple[ChannelRealization, NoiseProfile]],
    mu: np.ndarray,
    p0: np.ndarray,
    mode: str = FULL_CSI,
    rng: np.random.Generator | int | None = None,
) -> np.ndarray:
    """Gradient of the batch-averaged loss with respect to the step sizes."""
    if not batch:
        raise ValueError("batch must be non-empty")
    from .channels import topology_of

    topology = topology_of(batch[0][0])
    net = engine.net_index(topology)
    opt = None
    if mode == NOISY_CSI:
        gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        opt = _estimate_entries(
            batch, topology, batch[0][1].channel_var, [gen] * len(batch)
        )
    elif mode != FULL_CSI:
        raise ValueError(f"unknown mode {mode!r}")
    result = _batch_loss_grad(net, batch, opt, np.asarray(mu, float), p0)
    return result.grad


def train(
    dataset: ChannelDataset,
    config: TrainConfig,
    progress: Callable[[int, float], None] | None = None,
) -> np.ndarray:
    """Learn the step schedule by mini-batch Adam over the channel dataset.

    Deterministic for a given (dataset, config): shuffling, per-batch random
    starting points and per-epoch pilot noise all derive from ``config.seed``.
    """
    size = len(dataset)
    if size < 1:
        raise ValueError("training needs a non-empty dataset")
    if config.batch_count > size:
        raise ValueError("batch_count cannot exceed the dataset size")
    topology = dataset.topology
    net = engine.net_index(topology)

    init_step = config.init_step
    if init_step is None:
        calib = dataset.channels()[: min(50, size)]
        init_step = calibrate_fixed_step(list(calib), dataset.entries[0][1])
    mu = np.full(config.iterations, float(init_step))
    state = AdamState.zeros(config.iterations)

    shuffle_rng = np.random.default_rng([config.seed, 0])
    start_rng = np.random.default_rng([config.seed, 1])
    noisy = config.mode == NOISY_CSI

    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(size)
        epoch_loss = 0.0
        for batch_ids in np.array_split(order, config.batch_count):
            entries = [dataset.entries[i] for i in batch_ids]
            p0 = random_init(topology, start_rng)
            opt = None
            if noisy:
                rngs = [
                    np.random.default_rng([config.seed, 2, epoch, int(i)])
                    for i in batch_ids
                ]
                opt = _estimate_entries(
                    entries, topology, entries[0][1].channel_var, rngs
                )
            result = _batch_loss_grad(net, entries, opt, mu, p0)
            state, mu = adam_update(
                state,
                result.grad,
                mu,
                config.learning_rate,
                config.beta1,
                config.beta2,
                config.eps,
            )
            epoch_loss += result.loss * len(batch_ids)
        if progress is not None:
            progress(epoch, epoch_loss / size)
    return mu


def config_hash(config: TrainConfig) -> str:
    return hashlib.sha256(
        json.dumps(asdict(config), sort_keys=True).encode()
    ).hexdigest()[:16]


def save_schedule(
    path: str,
    mu: np.ndarray,
    topology: Topology,
    mode: str,
    seed: int,
    config: TrainConfig | None = None,
) -> None:
    """Persist a trained schedule with the metadata needed to reuse it."""
    doc = {
        "steps": [float(v) for v in np.asarray(mu)],
        "iterations": int(len(mu)),
        "topology": list(topology.hop_sizes),
        "mode": mode,
        "seed": seed,
        "config_hash": config_hash(config) if config is not None else None,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_schedule(path: str) -> tuple[np.ndarray, dict]:
    with open(path) as fh:
        doc = json.load(fh)
    mu = np.array(doc["steps"], dtype=np.float64)
    if len(mu) != doc["iterations"]:
        raise ValueError("schedule length disagrees with its metadata")
    return mu, doc
