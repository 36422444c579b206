"""Snapshot storage: the training corpus of full-order trajectories.

A :class:`SnapshotSet` holds nodal solution values on a (t, mu) grid. The
on-disk format is a little-endian binary container (magic ``LPSNAP01``)
with a JSON sidecar describing the generating problem; a CSV export is
provided for interoperability.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SNAPSHOT_MAGIC = b"LPSNAP01"
BASIS_MAGIC = b"LPBASE01"
_FLAG_PER_TIME_MESHES = 1


@dataclass
class SnapshotSet:
    """Nodal samples ``values[k, j, i]`` at parameter k, time j, node i.

    ``nodes`` has shape (n_nodes,) for a shared mesh or (n_times, n_nodes)
    when every time level carries its own mesh (``per_time_meshes``).
    ``parameters`` has shape (n_mu, mu_dim); ``mu_dim`` may be zero for
    problems without model parameters.
    """

    nodes: np.ndarray
    times: np.ndarray
    parameters: np.ndarray
    values: np.ndarray
    problem: dict = field(default_factory=dict)
    per_time_meshes: bool = False

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.times = np.asarray(self.times, dtype=float)
        self.parameters = np.asarray(self.parameters, dtype=float)
        if self.parameters.ndim == 1:
            self.parameters = self.parameters[:, None]
        self.values = np.asarray(self.values, dtype=float)
        n_mu, n_t, n_x = self.values.shape
        if self.times.shape != (n_t,):
            raise ValueError("times length does not match values")
        if self.parameters.shape[0] != n_mu:
            raise ValueError("parameter table does not match values")
        expected = (n_t, n_x) if self.per_time_meshes else (n_x,)
        if self.nodes.shape != expected:
            raise ValueError(f"nodes shape {self.nodes.shape} does not match {expected}")

    @property
    def n_nodes(self) -> int:
        return self.values.shape[2]

    @property
    def n_times(self) -> int:
        return self.values.shape[1]

    @property
    def n_mu(self) -> int:
        return self.values.shape[0]

    @property
    def mu_dim(self) -> int:
        return self.parameters.shape[1]

    def nodes_at(self, time_index: int) -> np.ndarray:
        return self.nodes[time_index] if self.per_time_meshes else self.nodes

    def trajectory(self, mu) -> np.ndarray:
        """Values (n_times, n_nodes) for one parameter, matched exactly."""
        return self.values[self.parameter_index(mu)]

    def parameter_index(self, mu) -> int:
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        if mu.size != self.mu_dim:
            raise ValueError(f"parameter dimension {mu.size} != {self.mu_dim}")
        if self.mu_dim == 0:
            return 0
        hits = np.nonzero(np.all(np.isclose(self.parameters, mu[None, :], atol=1e-12), axis=1))[0]
        if hits.size == 0:
            raise KeyError(f"parameter {mu.tolist()} not found in snapshot set")
        return int(hits[0])

    def time_index(self, t: float) -> int:
        hits = np.nonzero(np.isclose(self.times, t, atol=1e-9))[0]
        if hits.size == 0:
            raise KeyError(f"time {t} not found in snapshot set")
        return int(hits[0])


def save_snapshots(path, snapshots: SnapshotSet) -> None:
    """Write the binary container plus a JSON sidecar (same stem, .json)."""
    path = Path(path)
    flags = _FLAG_PER_TIME_MESHES if snapshots.per_time_meshes else 0
    header = struct.pack(
        "<8sQQQQQ",
        SNAPSHOT_MAGIC,
        snapshots.n_nodes,
        snapshots.n_times,
        snapshots.n_mu,
        snapshots.mu_dim,
        flags,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(snapshots.nodes, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(snapshots.times, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(snapshots.parameters, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(snapshots.values, dtype="<f8").tobytes())
    sidecar = path.with_suffix(path.suffix + ".json") if path.suffix != ".json" else path
    with open(sidecar, "w") as fh:
        json.dump(snapshots.problem, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_snapshots(path) -> SnapshotSet:
    path = Path(path)
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, n_nodes, n_times, n_mu, mu_dim, flags = struct.unpack_from("<8sQQQQQ", raw, 0)
    if magic != SNAPSHOT_MAGIC:
        raise ValueError(f"{path} is not a snapshot container (magic {magic!r})")
    per_time = bool(flags & _FLAG_PER_TIME_MESHES)
    offset = struct.calcsize("<8sQQQQQ")

    def take(count):
        nonlocal offset
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).astype(float)
        offset += count * 8
        return arr

    node_count = n_times * n_nodes if per_time else n_nodes
    nodes = take(node_count).reshape((n_times, n_nodes) if per_time else (n_nodes,))
    times = take(n_times)
    parameters = take(n_mu * mu_dim).reshape(n_mu, mu_dim)
    values = take(n_mu * n_times * n_nodes).reshape(n_mu, n_times, n_nodes)
    sidecar = path.with_suffix(path.suffix + ".json")
    problem = {}
    if sidecar.exists():
        with open(sidecar) as fh:
            problem = json.load(fh)
    return SnapshotSet(nodes, times, parameters, values, problem, per_time)


def export_snapshots_csv(path, snapshots: SnapshotSet) -> None:
    """Flat CSV with columns mu_0..mu_{d-1}, t, x, u."""
    path = Path(path)
    with open(path, "w") as fh:
        mu_cols = ",".join(f"mu_{d}" for d in range(snapshots.mu_dim))
        fh.write((mu_cols + "," if mu_cols else "") + "t,x,u\n")
        for k in range(snapshots.n_mu):
            mu_prefix = "".join(f"{float(v)!r}," for v in snapshots.parameters[k])
            for j in range(snapshots.n_times):
                xs = snapshots.nodes_at(j)
                t = float(snapshots.times[j])
                for x, u in zip(xs, snapshots.values[k, j]):
                    fh.write(f"{mu_prefix}{t!r},{float(x)!r},{float(u)!r}\n")


def save_basis(path, Phi: np.ndarray, singular_values: np.ndarray, nodes: np.ndarray) -> None:
    """Persist a static basis in the same binary container style (LPBASE01)."""
    path = Path(path)
    Phi = np.asarray(Phi, dtype=float)
    rows, cols = Phi.shape
    header = struct.pack("<8sQQ", BASIS_MAGIC, rows, cols)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(nodes, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(singular_values, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(Phi, dtype="<f8").tobytes())


def load_basis(path):
    path = Path(path)
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, rows, cols = struct.unpack_from("<8sQQ", raw, 0)
    if magic != BASIS_MAGIC:
        raise ValueError(f"{path} is not a basis container (magic {magic!r})")
    offset = struct.calcsize("<8sQQ")
    nodes = np.frombuffer(raw, dtype="<f8", count=rows, offset=offset).astype(float)
    offset += rows * 8
    singular_values = np.frombuffer(raw, dtype="<f8", count=cols, offset=offset).astype(float)
    offset += cols * 8
    Phi = np.frombuffer(raw, dtype="<f8", count=rows * cols, offset=offset).astype(float).reshape(rows, cols)
    return Phi, singular_values, nodes
