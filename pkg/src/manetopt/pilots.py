"""Pilot transmission and LMMSE channel estimation.

Each coherence block opens with T pilot symbols, T being the largest
transmitter count over all hops.  Transmitter i of a hop sends the i-th
standard basis vector of length T, so pilots are exactly orthonormal and
simultaneous transmitters do not interfere in the estimates.  The LMMSE
estimate of a link shrinks the matched-filter output by
``channel_var / (channel_var + sigma_b^2)``; with noiseless pilots it
reproduces the channel exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channels import ChannelRealization, NoiseProfile, Topology, topology_of

__all__ = [
    "PilotBlock",
    "make_pilots",
    "simulate_pilot_rx",
    "lmmse_estimate",
    "block_topology",
]


@dataclass(frozen=True)
class PilotBlock:
    """Pilot vectors and the noisy observations they produced, per hop."""

    pilot_length: int
    pilots: tuple[np.ndarray, ...]     # per hop: (transmitters, T)
    received: tuple[np.ndarray, ...]   # per hop: (receivers, T)


def make_pilots(topology: Topology) -> tuple[np.ndarray, ...]:
    """Orthonormal pilot sets: transmitter i sends basis vector e_i."""
    counts = [topology.transmitters(hop) for hop in range(1, topology.num_hops + 1)]
    t = max(counts)
    basis = np.eye(t, dtype=np.complex128)
    return tuple(basis[:c] for c in counts)


def simulate_pilot_rx(
    channel: ChannelRealization,
    noise: NoiseProfile,
    pilots: tuple[np.ndarray, ...],
    rng: np.random.Generator | int | None = None,
) -> PilotBlock:
    """Received pilot vectors at every node, with per-hop AWGN.

    Noise is circularly symmetric with per-component variance sigma_b^2 (the
    same sigma as data reception); a zero variance yields exact observations.
    """
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    topology = topology_of(channel)
    if len(pilots) != topology.num_hops:
        raise ValueError("one pilot set per hop is required")
    t = pilots[0].shape[-1]
    received = []
    for hop in range(1, topology.num_hops + 1):
        if hop == 1:
            clean = channel.first_hop[:, None] * pilots[0][0][None, :]
        else:
            clean = channel.later_hops[hop - 2].T @ pilots[hop - 1]
        var = noise.hop_noise_vars[hop - 1]
        scale = np.sqrt(var / 2.0)
        w = gen.standard_normal(clean.shape) * scale + 1j * gen.standard_normal(clean.shape) * scale
        received.append(clean + w)
    return PilotBlock(pilot_length=t, pilots=tuple(pilots), received=tuple(received))


def lmmse_estimate(
    block: PilotBlock, noise: NoiseProfile, channel_var: float = 1.0
) -> ChannelRealization:
    """Linear MMSE estimate of every link from the received pilots."""
    if not channel_var > 0:
        raise ValueError("channel_var must be positive")
    hops = len(block.received)
    if len(noise.hop_noise_vars) != hops:
        raise ValueError("noise profile length does not match the pilot block")
    shrink = [channel_var / (channel_var + noise.hop_noise_vars[b]) for b in range(hops)]
    first = shrink[0] * (block.received[0] @ block.pilots[0][0].conj())
    later = []
    for hop in range(2, hops + 1):
        later.append(
            shrink[hop - 1] * (block.pilots[hop - 1].conj() @ block.received[hop - 1].T)
        )
    return ChannelRealization(first_hop=first, later_hops=tuple(later))


def block_topology(block: PilotBlock) -> Topology:
    """Hop structure implied by the receiver counts of a pilot block."""
    return Topology(tuple(y.shape[0] for y in block.received))
