"""The superposition-coding coefficient matrix and its feasible set.

A power matrix is a plain float array of shape ``(stacked_rows, N)``: relay
layers 1..B-1 occupy the leading row blocks and the source's coefficient row
comes last.  Feasibility means nonnegative entries, each at most one, with
every row on the unit sphere (within ``NORM_TOL``).

``project`` is the cheap feasibility map used after each gradient step: clamp
negatives, then scale each row to unit norm.  Rows whose positive part
vanishes fall back deterministically to the uniform row so ascent steps can
never leave the feasible set.  Exact Euclidean projection is deliberately not
implemented.
"""

from __future__ import annotations

import json

import numpy as np

from .channels import Topology

__all__ = [
    "NORM_TOL",
    "project",
    "uniform_init",
    "random_init",
    "is_feasible",
    "save_power_matrix",
    "load_power_matrix",
]

NORM_TOL = 1e-9


def project(raw: np.ndarray) -> np.ndarray:
    """Map an arbitrary matrix onto the feasible set, row by row.

    Rows already feasible are returned bit-identically (the operator is the
    exact identity on the feasible set and exactly idempotent).  Leading batch
    axes are allowed; rows run along the last axis.
    """
    x = np.asarray(raw, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("power matrix entries must be finite")
    return project_with_tangent(x)[0]


def project_with_tangent(
    x: np.ndarray, dx: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray | None]:
    """Row projection plus, optionally, its directional derivatives.

    ``dx`` holds tangent directions with a leading axis; the returned tangent
    differentiates the selected branch of the projection (clamped entries pass
    nothing, near-unit rows pass through unchanged, degenerate rows are
    constant).
    """
    n = x.shape[-1]
    positive = x > 0.0
    u = np.where(positive, x, 0.0)
    norms = np.sqrt(np.sum(u * u, axis=-1, keepdims=True))
    degenerate = norms == 0.0
    passthrough = np.abs(norms - 1.0) <= NORM_TOL
    safe = np.where(degenerate, 1.0, norms)
    scaled = np.minimum(u / safe, 1.0)
    out = np.where(passthrough, u, scaled)
    out = np.where(degenerate, 1.0 / np.sqrt(n), out)
    if dx is None:
        return out, None
    du = np.where(positive, dx, 0.0)
    radial = np.sum(u * du, axis=-1, keepdims=True)
    dscaled = du / safe - u * radial / safe**3
    dout = np.where(passthrough, du, dscaled)
    dout = np.where(degenerate, 0.0, dout)
    return out, dout


def uniform_init(topology: Topology) -> np.ndarray:
    """Equal power split: every entry 1/sqrt(N)."""
    n = topology.end_users
    return np.full((topology.stacked_rows, n), 1.0 / np.sqrt(n))


def random_init(topology: Topology, rng: np.random.Generator | int | None = None) -> np.ndarray:
    """Feasible matrix with rows drawn uniformly then normalized."""
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    raw = gen.uniform(0.0, 1.0, size=(topology.stacked_rows, topology.end_users))
    return project_with_tangent(raw)[0]


def is_feasible(p: np.ndarray, norm_tol: float = NORM_TOL) -> bool:
    """True iff every entry lies in [0, 1] and every row norm is 1 within tolerance."""
    x = np.asarray(p, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        return False
    if np.any(x < 0.0) or np.any(x > 1.0):
        return False
    norms = np.sqrt(np.sum(x * x, axis=-1))
    return bool(np.all(np.abs(norms - 1.0) <= norm_tol))


def save_power_matrix(path: str, p: np.ndarray, topology: Topology) -> None:
    doc = {
        "topology": {"hop_sizes": list(topology.hop_sizes)},
        "values": np.asarray(p, dtype=np.float64).tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_power_matrix(path: str) -> tuple[np.ndarray, Topology]:
    with open(path) as fh:
        doc = json.load(fh)
    topology = Topology(tuple(doc["topology"]["hop_sizes"]))
    values = np.array(doc["values"], dtype=np.float64)
    if values.shape != (topology.stacked_rows, topology.end_users):
        raise ValueError("stored matrix does not match its topology header")
    return values, topology
