"""Network topology, noise profiles and Rayleigh block-fading channel generation.

A network has one source, B hops and ``hop_sizes = (M_1, ..., M_B)`` nodes per
hop; the nodes of the last hop are the end users.  Hop 1 is the broadcast from
the source to the M_1 first-hop relays; hop b (b >= 2) is the multiple-access
stage from the M_{b-1} relays of the previous layer to the M_b nodes of hop b.

All channel coefficients are i.i.d. circularly-symmetric complex Gaussian
(Rayleigh envelope) with total variance ``channel_var``, constant within a
coherence block and independent across blocks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Topology",
    "NoiseProfile",
    "ChannelRealization",
    "ChannelDataset",
    "sample_channel",
    "build_dataset",
    "topology_of",
    "save_dataset",
    "load_dataset",
]


@dataclass(frozen=True)
class Topology:
    """Hop structure of the relay network.

    ``hop_sizes[b-1]`` is the number of nodes at hop b; the last entry is the
    number of end users.  ``stacked_rows`` is the row count of the stacked
    power-coefficient matrix: one row per transmitting device (the source plus
    every relay of layers 1..B-1).
    """

    hop_sizes: tuple[int, ...]

    def __post_init__(self) -> None:
        sizes = tuple(int(m) for m in self.hop_sizes)
        object.__setattr__(self, "hop_sizes", sizes)
        if len(sizes) < 2:
            raise ValueError("a network needs at least two hops")
        if any(m < 1 for m in sizes):
            raise ValueError("every hop must contain at least one node")

    @property
    def num_hops(self) -> int:
        return len(self.hop_sizes)

    @property
    def end_users(self) -> int:
        return self.hop_sizes[-1]

    @property
    def stacked_rows(self) -> int:
        return 1 + sum(self.hop_sizes[:-1])

    def transmitters(self, hop: int) -> int:
        """Number of devices transmitting into ``hop`` (1-based hop number)."""
        if not 1 <= hop <= self.num_hops:
            raise ValueError(f"hop must be in 1..{self.num_hops}, got {hop}")
        return 1 if hop == 1 else self.hop_sizes[hop - 2]

    def block_rows(self, layer: int) -> slice:
        """Rows of the stacked matrix holding relay layer ``layer`` (1..B-1).

        The source's coefficient row is the final row of the stacked matrix.
        """
        if not 1 <= layer <= self.num_hops - 1:
            raise ValueError(f"relay layer must be in 1..{self.num_hops - 1}")
        start = sum(self.hop_sizes[: layer - 1])
        return slice(start, start + self.hop_sizes[layer - 1])

    def link_count(self) -> int:
        sizes = self.hop_sizes
        return sizes[0] + sum(sizes[b - 1] * sizes[b] for b in range(1, len(sizes)))


@dataclass(frozen=True)
class NoiseProfile:
    """Per-hop AWGN variances (linear power) and the channel variance."""

    hop_noise_vars: tuple[float, ...]
    channel_var: float = 1.0

    def __post_init__(self) -> None:
        variances = tuple(float(v) for v in self.hop_noise_vars)
        object.__setattr__(self, "hop_noise_vars", variances)
        # sigma_b = 0 is tolerated so the noiseless estimation limit is testable.
        if any(v < 0 for v in variances):
            raise ValueError("noise variances must be nonnegative")
        if not self.channel_var > 0:
            raise ValueError("channel variance must be positive")


@dataclass(frozen=True)
class ChannelRealization:
    """Complex channel coefficients of one coherence block.

    ``first_hop[m]`` is the source-to-relay-m coefficient.  For hop b >= 2,
    ``later_hops[b - 2][m, i]`` is the coefficient from transmitter m (a relay
    of layer b-1) to receiving node i of hop b.  Leading batch axes are
    permitted on both fields as long as they agree.
    """

    first_hop: np.ndarray
    later_hops: tuple[np.ndarray, ...]
    block_index: int = 0

    def validate(self, topology: Topology) -> None:
        sizes = topology.hop_sizes
        if self.first_hop.shape[-1] != sizes[0]:
            raise ValueError("first-hop length does not match the topology")
        if len(self.later_hops) != topology.num_hops - 1:
            raise ValueError("wrong number of multiple-access hops")
        for j, mat in enumerate(self.later_hops):
            expected = (sizes[j], sizes[j + 1])
            if mat.shape[-2:] != expected:
                raise ValueError(
                    f"hop {j + 2} matrix has shape {mat.shape[-2:]}, expected {expected}"
                )
        for arr in (self.first_hop, *self.later_hops):
            if not np.all(np.isfinite(arr)):
                raise ValueError("channel coefficients must be finite")


def topology_of(channel: ChannelRealization) -> Topology:
    """Recover the hop structure from a realization's array shapes."""
    sizes = [channel.first_hop.shape[-1]]
    for mat in channel.later_hops:
        sizes.append(mat.shape[-1])
    return Topology(tuple(sizes))


@dataclass(frozen=True)
class ChannelDataset:
    """Ordered channel realizations sharing one topology, plus the seed used."""

    topology: Topology
    entries: tuple[tuple[ChannelRealization, NoiseProfile], ...]
    seed: int

    def __len__(self) -> int:
        return len(self.entries)

    def channels(self) -> tuple[ChannelRealization, ...]:
        return tuple(ch for ch, _ in self.entries)


def _complex_gaussian(rng: np.random.Generator, shape: tuple[int, ...], var: float) -> np.ndarray:
    scale = np.sqrt(var / 2.0)
    return rng.standard_normal(shape) * scale + 1j * rng.standard_normal(shape) * scale


def sample_channel(
    topology: Topology,
    channel_var: float = 1.0,
    rng: np.random.Generator | int | None = None,
) -> ChannelRealization:
    """Draw one block-fading realization.

    Every coefficient is i.i.d. CN(0, channel_var); real and imaginary parts
    each carry half the variance.  Deterministic for a given seeded generator.
    """
    if not channel_var > 0:
        raise ValueError("channel_var must be positive")
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    sizes = topology.hop_sizes
    first = _complex_gaussian(gen, (sizes[0],), channel_var)
    later = tuple(
        _complex_gaussian(gen, (sizes[j], sizes[j + 1]), channel_var)
        for j in range(len(sizes) - 1)
    )
    return ChannelRealization(first_hop=first, later_hops=later)


def build_dataset(
    topology: Topology,
    noise: NoiseProfile,
    count: int,
    seed: int,
) -> ChannelDataset:
    """Generate ``count`` independent realizations, all paired with ``noise``.

    Each entry draws from its own stream keyed by (seed, entry index), so
    entries are reproducible independently of generation order.
    """
    if count < 1:
        raise ValueError("a dataset needs at least one realization")
    if len(noise.hop_noise_vars) != topology.num_hops:
        raise ValueError("noise profile length does not match the hop count")
    entries = []
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        ch = sample_channel(topology, noise.channel_var, rng)
        ch = ChannelRealization(ch.first_hop, ch.later_hops, block_index=i)
        entries.append((ch, noise))
    return ChannelDataset(topology=topology, entries=tuple(entries), seed=seed)


def _links_flat(ch: ChannelRealization) -> list[list[float]]:
    # Hop-major, then transmitter-major, then receiver-major link ordering.
    values: list[complex] = list(ch.first_hop)
    for mat in ch.later_hops:
        values.extend(mat.reshape(-1))
    return [[float(v.real), float(v.imag)] for v in values]


def _links_unflat(topology: Topology, pairs: list[list[float]]) -> ChannelRealization:
    flat = np.array([complex(re, im) for re, im in pairs], dtype=np.complex128)
    sizes = topology.hop_sizes
    first = flat[: sizes[0]]
    later = []
    pos = sizes[0]
    for j in range(len(sizes) - 1):
        n = sizes[j] * sizes[j + 1]
        later.append(flat[pos : pos + n].reshape(sizes[j], sizes[j + 1]))
        pos += n
    return ChannelRealization(first_hop=first, later_hops=tuple(later))


def save_dataset(path: str, dataset: ChannelDataset) -> None:
    """Write a dataset as JSON; floats round-trip exactly."""
    doc = {
        "topology": {"hop_sizes": list(dataset.topology.hop_sizes)},
        "seed": dataset.seed,
        "entries": [
            {
                "block_index": ch.block_index,
                "noise": {
                    "hop_noise_vars": list(noise.hop_noise_vars),
                    "channel_var": noise.channel_var,
                },
                "links": _links_flat(ch),
            }
            for ch, noise in dataset.entries
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_dataset(path: str) -> ChannelDataset:
    with open(path) as fh:
        doc = json.load(fh)
    topology = Topology(tuple(doc["topology"]["hop_sizes"]))
    entries = []
    for item in doc["entries"]:
        ch = _links_unflat(topology, item["links"])
        ch = ChannelRealization(ch.first_hop, ch.later_hops, block_index=item["block_index"])
        noise = NoiseProfile(
            hop_noise_vars=tuple(item["noise"]["hop_noise_vars"]),
            channel_var=item["noise"]["channel_var"],
        )
        entries.append((ch, noise))
    return ChannelDataset(topology=topology, entries=tuple(entries), seed=doc["seed"])
