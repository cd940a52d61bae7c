"""Scenario runners wiring the library into reproducible experiments.

Each scenario consumes an ``ExperimentConfig``, derives every random stream
from the master seed (disjoint roles for train data, test data, calibration,
training, ensemble starts and pilot noise), and writes CSV tables plus a JSON
run manifest into the output directory.  Outputs are byte-identical across
re-runs with the same configuration and seed, independent of the worker
count.

Noise levels are given in dB relative to the unit channel variance:
``sigma_b^2 = 10^(dB/10)`` on every hop.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import os
import platform
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__ as _version
from .channels import ChannelDataset, NoiseProfile, Topology, build_dataset
from .ensemble import infer
from .errors import CapabilityError, ConfigurationError
from .gridsearch import grid_capacity
from .pgd import calibrate_fixed_step, run_pgd_batch
from .pilots import make_pilots, simulate_pilot_rx
from .power import uniform_init
from .rates import min_rate
from .training import FULL_CSI, NOISY_CSI, TrainConfig, load_schedule, save_schedule, train

__all__ = [
    "ExperimentConfig",
    "SCENARIOS",
    "run_scenario",
    "run_iter_curve",
    "run_noise_sweep",
    "run_noisy_robustness",
    "run_transfer",
    "run_oracle_compare",
    "noise_profile",
    "dataset_fingerprint",
]

# Seed-derivation roles; every random stream is keyed (master, role, ...).
TRAIN_DATA = 0
TEST_DATA = 1
CALIB_DATA = 2
ENSEMBLE = 4
PILOTS = 5


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    hop_sizes: tuple[int, ...]
    noise_db: tuple[float, ...]
    out_dir: str
    seed: int = 0
    train_size: int = 1000
    test_size: int = 200
    calib_size: int = 50
    train: TrainConfig = field(default_factory=TrainConfig)
    ensemble_size: int = 6
    threads: int = 1
    oracle_resolution: float = 1e-2
    include_oracle: bool = True
    fixed_long_iterations: int = 2000
    train_per_level: bool = True
    reference_db: float = 0.0
    source_hop_sizes: tuple[int, ...] | None = None
    mu_artifact: str | None = None
    mu_artifact_noisy: str | None = None
    mu_artifact_native: str | None = None
    allow_training: bool = True
    cache_dir: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "hop_sizes", tuple(int(m) for m in self.hop_sizes))
        object.__setattr__(self, "noise_db", tuple(float(x) for x in self.noise_db))
        if self.source_hop_sizes is not None:
            object.__setattr__(
                self, "source_hop_sizes", tuple(int(m) for m in self.source_hop_sizes)
            )
        if not self.noise_db:
            raise ConfigurationError("at least one noise level is required")
        if self.ensemble_size < 1:
            raise ConfigurationError("ensemble_size must be >= 1")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        train_doc = doc.pop("train", {})
        try:
            train_cfg = TrainConfig(**train_doc)
            return cls(train=train_cfg, **doc)
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(str(exc)) from exc

    @classmethod
    def from_json(cls, path: str) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["train"] = dataclasses.asdict(self.train)
        return doc

    def config_hash(self) -> str:
        doc = self.to_dict()
        # The hash identifies the experiment, not where or how fast it ran.
        doc.pop("out_dir", None)
        doc.pop("threads", None)
        doc.pop("cache_dir", None)
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def noise_profile(db: float, hops: int, channel_var: float = 1.0) -> NoiseProfile:
    """All hops share one variance: sigma^2 = 10^(dB/10) times the channel var."""
    sigma2 = channel_var * 10.0 ** (db / 10.0)
    return NoiseProfile(hop_noise_vars=(sigma2,) * hops, channel_var=channel_var)


def derive_seed(master: int, *path: int) -> int:
    return int(np.random.SeedSequence((master,) + tuple(path)).generate_state(1)[0])


def dataset_fingerprint(dataset: ChannelDataset) -> str:
    digest = hashlib.sha256()
    for ch, _ in dataset.entries:
        digest.update(np.ascontiguousarray(ch.first_hop).tobytes())
        for mat in ch.later_hops:
            digest.update(np.ascontiguousarray(mat).tobytes())
    return digest.hexdigest()


def parallel_map(fn: Callable, items: Sequence, threads: int) -> list:
    """Order-preserving map; results do not depend on the worker count."""
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _write_manifest(config: ExperimentConfig, outputs: list[str], seeds: dict) -> None:
    doc = config.to_dict()
    doc.pop("out_dir", None)
    doc.pop("threads", None)
    doc.pop("cache_dir", None)
    manifest = {
        "scenario": config.scenario,
        "config": doc,
        "config_hash": config.config_hash(),
        "seeds": seeds,
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "manetopt": _version,
        },
        "outputs": sorted(outputs),
    }
    path = os.path.join(config.out_dir, "run_manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)


def _cache_path(config: ExperimentConfig, kind: str, descriptor: dict) -> str | None:
    if config.cache_dir is None:
        return None
    os.makedirs(config.cache_dir, exist_ok=True)
    key = hashlib.sha256(json.dumps(descriptor, sort_keys=True).encode()).hexdigest()[:24]
    return os.path.join(config.cache_dir, f"{kind}_{key}.json")


def _read_cache(path: str | None) -> dict | None:
    if path is None or not os.path.exists(path):
        return None
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError:
        return None  # partial write from an interrupted run; recompute


def _datasets(
    config: ExperimentConfig, topology: Topology, db: float
) -> tuple[ChannelDataset, ChannelDataset]:
    noise = noise_profile(db, topology.num_hops)
    train_ds = build_dataset(
        topology, noise, config.train_size, derive_seed(config.seed, TRAIN_DATA)
    )
    test_ds = build_dataset(
        topology, noise, config.test_size, derive_seed(config.seed, TEST_DATA)
    )
    return train_ds, test_ds


def _calibrated_step(
    config: ExperimentConfig, topology: Topology, db: float
) -> float:
    descriptor = {
        "kind": "calibration",
        "hop_sizes": list(topology.hop_sizes),
        "db": db,
        "size": config.calib_size,
        "seed": derive_seed(config.seed, CALIB_DATA),
    }
    path = _cache_path(config, "calib", descriptor)
    cached = _read_cache(path)
    if cached is not None:
        return cached["step"]
    noise = noise_profile(db, topology.num_hops)
    calib = build_dataset(topology, noise, config.calib_size, descriptor["seed"])
    step = calibrate_fixed_step(list(calib.channels()), noise)
    if path is not None:
        with open(path, "w") as fh:
            json.dump({"step": step, "descriptor": descriptor}, fh)
    return step


def _trained_schedule(
    config: ExperimentConfig,
    topology: Topology,
    db: float,
    mode: str,
    artifact: str | None,
    tag: str,
) -> np.ndarray:
    """Load or train the step schedule for one (topology, level, mode)."""
    iterations = config.train.iterations
    if artifact is not None:
        mu, _ = load_schedule(artifact)
        if len(mu) != iterations:
            raise ConfigurationError(
                f"schedule {artifact} has {len(mu)} steps, config expects {iterations}"
            )
        return mu
    if not config.allow_training:
        raise ConfigurationError(
            f"no schedule artifact for {tag} and training is disabled"
        )
    train_cfg = dataclasses.replace(config.train, mode=mode)
    if train_cfg.init_step is None:
        train_cfg = dataclasses.replace(
            train_cfg, init_step=_calibrated_step(config, topology, db)
        )
    descriptor = {
        "kind": "schedule",
        "hop_sizes": list(topology.hop_sizes),
        "db": db,
        "mode": mode,
        "train_size": config.train_size,
        "data_seed": derive_seed(config.seed, TRAIN_DATA),
        "train": dataclasses.asdict(train_cfg),
    }
    path = _cache_path(config, "mu", descriptor)
    cached = _read_cache(path)
    if cached is not None:
        mu = np.array(cached["steps"], dtype=np.float64)
    else:
        noise = noise_profile(db, topology.num_hops)
        dataset = build_dataset(
            topology, noise, config.train_size, descriptor["data_seed"]
        )
        mu = train(dataset, train_cfg)
        if path is not None:
            save_schedule(path, mu, topology, mode, train_cfg.seed, train_cfg)
    os.makedirs(config.out_dir, exist_ok=True)
    out_path = os.path.join(config.out_dir, f"mu_{tag}.json")
    save_schedule(out_path, mu, topology, mode, train_cfg.seed, train_cfg)
    return mu


def _uniform_starts(topology: Topology, count: int) -> np.ndarray:
    return np.broadcast_to(
        uniform_init(topology), (count, topology.stacked_rows, topology.end_users)
    )


def _ensemble_rates(
    config: ExperimentConfig,
    channels,
    noise: NoiseProfile,
    mu: np.ndarray,
    level_index: int,
) -> np.ndarray:
    """Full-CSI ensemble min rates per test channel."""

    def one(item):
        index, ch = item
        result = infer(
            ch,
            noise,
            mu,
            config.ensemble_size,
            seed=derive_seed(config.seed, ENSEMBLE, level_index, index),
        )
        return result.selected_min_rate_eval

    return np.array(parallel_map(one, list(enumerate(channels)), config.threads))


def _ensemble_rates_noisy(
    config: ExperimentConfig,
    channels,
    noise: NoiseProfile,
    mu: np.ndarray,
    level_index: int,
) -> np.ndarray:
    """Realized (true-channel) min rates when inferring from noisy pilots."""
    topology = Topology(config.hop_sizes)
    pilots = make_pilots(topology)

    def one(item):
        index, ch = item
        rng = np.random.default_rng(
            [derive_seed(config.seed, PILOTS, level_index), index]
        )
        block = simulate_pilot_rx(ch, noise, pilots, rng)
        result = infer(
            block,
            noise,
            mu,
            config.ensemble_size,
            seed=derive_seed(config.seed, ENSEMBLE, level_index, index),
            channel_var=noise.channel_var,
        )
        realized, _ = min_rate(ch, result.selected, noise)
        return float(realized)

    return np.array(parallel_map(one, list(enumerate(channels)), config.threads))


def _fixed_final_rates(
    channels, noise: NoiseProfile, step: float, iterations: int, topology: Topology
) -> np.ndarray:
    starts = _uniform_starts(topology, len(channels))
    rates, _ = run_pgd_batch(list(channels), noise, starts, np.full(iterations, step))
    return rates[-1]


def _oracle_rates(
    config: ExperimentConfig, channels, noise: NoiseProfile
) -> np.ndarray:
    def one(ch):
        return grid_capacity(
            ch, noise, config.oracle_resolution, cache_dir=config.cache_dir
        ).best_min_rate

    return np.array(parallel_map(one, list(channels), config.threads))


def run_iter_curve(config: ExperimentConfig) -> dict:
    """Mean min rate per iteration: learned schedule vs fixed step (vs oracle)."""
    os.makedirs(config.out_dir, exist_ok=True)
    topology = Topology(config.hop_sizes)
    db = config.noise_db[0]
    noise = noise_profile(db, topology.num_hops)
    _, test_ds = _datasets(config, topology, db)
    channels = list(test_ds.channels())

    mu = _trained_schedule(
        config, topology, db, FULL_CSI, config.mu_artifact, f"full_{db:g}db"
    )
    step = _calibrated_step(config, topology, db)
    starts = _uniform_starts(topology, len(channels))
    unfolded, _ = run_pgd_batch(channels, noise, starts, mu)
    fixed, _ = run_pgd_batch(
        channels, noise, starts, np.full(config.train.iterations, step)
    )
    header = ["iteration", "unfolded_mean", "fixed_mean"]
    oracle_mean = None
    if config.include_oracle and topology.end_users <= 2:
        oracle_mean = float(_oracle_rates(config, channels, noise).mean())
        header.append("oracle_mean")
    rows = []
    for k in range(config.train.iterations + 1):
        row = [k, unfolded[k].mean(), fixed[k].mean()]
        if oracle_mean is not None:
            row.append(oracle_mean)
        rows.append(row)
    path = os.path.join(config.out_dir, "iter_curve.csv")
    write_csv(path, header, rows)
    _write_manifest(config, ["iter_curve.csv"], {"noise_db": db})
    return {"iter_curve": (header, rows)}


def run_noise_sweep(config: ExperimentConfig) -> dict:
    """Final min rate vs noise level for the learned and fixed-step optimizers."""
    os.makedirs(config.out_dir, exist_ok=True)
    topology = Topology(config.hop_sizes)
    iterations = config.train.iterations
    with_oracle = config.include_oracle and topology.end_users <= 2

    header = ["noise_db", "unfolded_mean", "fixed40_mean", "fixed_long_mean"]
    if with_oracle:
        header.append("oracle_mean")
    chan_header = ["noise_db", "channel", "unfolded", "fixed40"]
    rows = []
    chan_rows = []
    for index, db in enumerate(config.noise_db):
        noise = noise_profile(db, topology.num_hops)
        _, test_ds = _datasets(config, topology, db)
        channels = list(test_ds.channels())
        train_db = db if config.train_per_level else config.reference_db
        mu = _trained_schedule(
            config, topology, train_db, FULL_CSI, config.mu_artifact,
            f"full_{train_db:g}db",
        )
        step = _calibrated_step(config, topology, db)
        unfolded = _ensemble_rates(config, channels, noise, mu, index)
        fixed40 = _fixed_final_rates(channels, noise, step, iterations, topology)
        fixed_long = _fixed_final_rates(
            channels, noise, step, config.fixed_long_iterations, topology
        )
        row = [db, unfolded.mean(), fixed40.mean(), fixed_long.mean()]
        if with_oracle:
            row.append(_oracle_rates(config, channels, noise).mean())
        rows.append(row)
        for i in range(len(channels)):
            chan_rows.append([db, i, unfolded[i], fixed40[i]])
    write_csv(os.path.join(config.out_dir, "noise_sweep.csv"), header, rows)
    write_csv(
        os.path.join(config.out_dir, "noise_sweep_channels.csv"), chan_header, chan_rows
    )
    _write_manifest(
        config, ["noise_sweep.csv", "noise_sweep_channels.csv"], {"levels": len(rows)}
    )
    return {"noise_sweep": (header, rows), "noise_sweep_channels": (chan_header, chan_rows)}


def run_noisy_robustness(config: ExperimentConfig) -> dict:
    """Clean- vs noisy-trained schedules under full and estimated CSI.

    Realized rates are always measured on the true channels; the pilot draws
    are shared between the two schedules so comparisons are paired.
    """
    os.makedirs(config.out_dir, exist_ok=True)
    topology = Topology(config.hop_sizes)
    header = [
        "noise_db",
        "clean_full_mean",
        "clean_noisy_mean",
        "noisy_full_mean",
        "noisy_noisy_mean",
    ]
    chan_header = ["noise_db", "channel", "clean_full", "clean_noisy", "noisy_full", "noisy_noisy"]
    rows = []
    chan_rows = []
    for index, db in enumerate(config.noise_db):
        noise = noise_profile(db, topology.num_hops)
        _, test_ds = _datasets(config, topology, db)
        channels = list(test_ds.channels())
        mu_clean = _trained_schedule(
            config, topology, db, FULL_CSI, config.mu_artifact, f"full_{db:g}db"
        )
        mu_noisy = _trained_schedule(
            config, topology, db, NOISY_CSI, config.mu_artifact_noisy,
            f"noisy_{db:g}db",
        )
        clean_full = _ensemble_rates(config, channels, noise, mu_clean, index)
        noisy_full = _ensemble_rates(config, channels, noise, mu_noisy, index)
        clean_noisy = _ensemble_rates_noisy(config, channels, noise, mu_clean, index)
        noisy_noisy = _ensemble_rates_noisy(config, channels, noise, mu_noisy, index)
        rows.append(
            [db, clean_full.mean(), clean_noisy.mean(), noisy_full.mean(), noisy_noisy.mean()]
        )
        for i in range(len(channels)):
            chan_rows.append(
                [db, i, clean_full[i], clean_noisy[i], noisy_full[i], noisy_noisy[i]]
            )
    write_csv(os.path.join(config.out_dir, "noisy_robustness.csv"), header, rows)
    write_csv(
        os.path.join(config.out_dir, "noisy_robustness_channels.csv"),
        chan_header,
        chan_rows,
    )
    _write_manifest(
        config,
        ["noisy_robustness.csv", "noisy_robustness_channels.csv"],
        {"levels": len(rows)},
    )
    return {
        "noisy_robustness": (header, rows),
        "noisy_robustness_channels": (chan_header, chan_rows),
    }


def run_transfer(config: ExperimentConfig) -> dict:
    """Evaluate a schedule trained on one topology on a different one.

    The step schedule is topology-invariant, so the source schedule applies
    unchanged; natively trained and fixed-step baselines run on the same test
    channels for comparison.
    """
    os.makedirs(config.out_dir, exist_ok=True)
    target = Topology(config.hop_sizes)
    if config.mu_artifact is None:
        if config.source_hop_sizes is None:
            raise ConfigurationError(
                "transfer needs a source schedule artifact or source_hop_sizes"
            )
        source = Topology(config.source_hop_sizes)
        mu_source = _trained_schedule(
            config, source, config.reference_db, FULL_CSI, None,
            f"source_{'x'.join(map(str, source.hop_sizes))}_{config.reference_db:g}db",
        )
    else:
        mu_source = _trained_schedule(
            config, target, config.reference_db, FULL_CSI, config.mu_artifact, "source"
        )
    mu_native = _trained_schedule(
        config, target, config.reference_db, FULL_CSI, config.mu_artifact_native,
        f"native_{config.reference_db:g}db",
    )
    header = ["noise_db", "transferred_mean", "native_mean", "fixed40_mean"]
    chan_header = ["noise_db", "channel", "transferred", "native", "fixed40"]
    rows = []
    chan_rows = []
    for index, db in enumerate(config.noise_db):
        noise = noise_profile(db, target.num_hops)
        _, test_ds = _datasets(config, target, db)
        channels = list(test_ds.channels())
        step = _calibrated_step(config, target, db)
        transferred = _ensemble_rates(config, channels, noise, mu_source, index)
        native = _ensemble_rates(config, channels, noise, mu_native, index)
        fixed40 = _fixed_final_rates(
            channels, noise, step, config.train.iterations, target
        )
        rows.append([db, transferred.mean(), native.mean(), fixed40.mean()])
        for i in range(len(channels)):
            chan_rows.append([db, i, transferred[i], native[i], fixed40[i]])
    write_csv(os.path.join(config.out_dir, "transfer.csv"), header, rows)
    write_csv(os.path.join(config.out_dir, "transfer_channels.csv"), chan_header, chan_rows)
    _write_manifest(
        config, ["transfer.csv", "transfer_channels.csv"], {"levels": len(rows)}
    )
    return {"transfer": (header, rows), "transfer_channels": (chan_header, chan_rows)}


def run_oracle_compare(config: ExperimentConfig) -> dict:
    """Per-channel ensemble min rate against the exhaustive grid reference."""
    os.makedirs(config.out_dir, exist_ok=True)
    topology = Topology(config.hop_sizes)
    if topology.end_users > 2:
        raise CapabilityError("the grid reference supports at most two end users")
    db = config.noise_db[0]
    noise = noise_profile(db, topology.num_hops)
    _, test_ds = _datasets(config, topology, db)
    channels = list(test_ds.channels())
    mu = _trained_schedule(
        config, topology, db, FULL_CSI, config.mu_artifact, f"full_{db:g}db"
    )
    ensemble = _ensemble_rates(config, channels, noise, mu, 0)
    oracle = _oracle_rates(config, channels, noise)
    header = ["channel", "ensemble_rate", "oracle_rate"]
    rows = [[i, ensemble[i], oracle[i]] for i in range(len(channels))]
    summary_header = ["noise_db", "ensemble_mean", "oracle_mean", "ratio"]
    summary = [[db, ensemble.mean(), oracle.mean(), ensemble.mean() / oracle.mean()]]
    write_csv(os.path.join(config.out_dir, "oracle_compare.csv"), header, rows)
    write_csv(os.path.join(config.out_dir, "oracle_summary.csv"), summary_header, summary)
    _write_manifest(
        config, ["oracle_compare.csv", "oracle_summary.csv"], {"noise_db": db}
    )
    return {
        "oracle_compare": (header, rows),
        "oracle_summary": (summary_header, summary),
    }


SCENARIOS: dict[str, Callable[[ExperimentConfig], dict]] = {
    "iter-curve": run_iter_curve,
    "noise-sweep": run_noise_sweep,
    "noisy-robustness": run_noisy_robustness,
    "transfer": run_transfer,
    "oracle-compare": run_oracle_compare,
}


def run_scenario(config: ExperimentConfig) -> dict:
    if config.scenario not in SCENARIOS:
        raise ConfigurationError(f"unknown scenario {config.scenario!r}")
    return SCENARIOS[config.scenario](config)
