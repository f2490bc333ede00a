"""Origin selection, random-walk sampling and origin-tagged datasets."""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ParameterError, SchemaError
from .morphology import City, StreetNetwork
from .perception import PerceptionConfig, VisibilityField, featurize_trajectory


def sub_seed(seed: int, tag) -> int:
    """Derive an independent seed as ``seed XOR crc32(tag)``."""
    return (int(seed) ^ zlib.crc32(str(tag).encode())) & 0xFFFFFFFF


@dataclass
class OriginSet:
    origins: list[int]

    @property
    def K(self) -> int:
        return len(self.origins)


@dataclass
class Trajectory:
    origin_index: int
    nodes: list[int]
    features: np.ndarray
    split: str = "train"


@dataclass
class DatasetConfig:
    K: int = 8
    N_k: int = 64
    L: int = 20
    train_fraction: float = 0.9
    seed: int = 0

    def validate(self):
        if self.K < 2:
            raise ParameterError("K", "must be >= 2")
        if self.N_k < 2:
            raise ParameterError("N_k", "must be >= 2")
        if self.L < 2:
            raise ParameterError("L", "must be >= 2")
        if not 0 < self.train_fraction < 1:
            raise ParameterError("train_fraction", "must lie in (0, 1)")


@dataclass
class Dataset:
    trajectories: list[Trajectory]
    origin_set: OriginSet | None = None
    city: City | None = field(default=None, repr=False)

    @property
    def K(self) -> int:
        if self.origin_set is not None:
            return self.origin_set.K
        return max(t.origin_index for t in self.trajectories) + 1

    def split(self, name: str) -> list[Trajectory]:
        return [t for t in self.trajectories if t.split == name]

    def arrays(self, split: str | None = None):
        """Stack features and origins: ``(N, seq_len, 2)`` and ``(N,)``."""
        ts = self.trajectories if split is None else self.split(split)
        X = np.stack([t.features for t in ts]) if ts else np.zeros((0, 0, 2))
        k = np.array([t.origin_index for t in ts], dtype=int)
        return X, k


def select_origins(network: StreetNetwork, K: int, seed: int = 0) -> OriginSet:
    """Farthest-point sampling starting from the lexicographically smallest (x, y).

    ``seed`` is accepted for interface symmetry; the rule is deterministic.
    """
    nodes = sorted(network.nodes)
    if K > len(nodes):
        raise ParameterError("K", f"K={K} exceeds node count {len(nodes)}")
    if K < 1:
        raise ParameterError("K", "must be >= 1")
    ids = np.array([n for n, _, _ in nodes])
    xy = np.array([(x, y) for _, x, y in nodes])
    first = min(range(len(nodes)), key=lambda i: (xy[i, 0], xy[i, 1], ids[i]))
    chosen = [first]
    mind = np.hypot(*(xy - xy[first]).T)
    for _ in range(K - 1):
        mind[chosen] = -1.0
        best = mind.max()
        # ids are sorted ascending, so the first maximum has the smallest id
        nxt = int(np.flatnonzero(mind == best)[0])
        chosen.append(nxt)
        mind = np.minimum(mind, np.hypot(*(xy - xy[nxt]).T))
    return OriginSet([int(ids[i]) for i in chosen])


def sample_walks(network: StreetNetwork, origin: int, N: int, L: int, seed: int) -> list[list[int]]:
    """N non-backtracking random walks of L steps; dead ends allow backtracking."""
    if L < 2:
        raise ParameterError("L", "must be >= 2")
    if not network.has_node(origin):
        raise DomainError(f"origin {origin} is not in the street network")
    rng = np.random.default_rng(seed)
    walks = []
    for _ in range(N):
        walk = [origin]
        prev = None
        for _ in range(L):
            cur = walk[-1]
            nbrs = network.neighbors(cur)
            if not nbrs:
                raise DomainError(f"node {cur} has no neighbours")
            options = [n for n in nbrs if n != prev] or nbrs
            nxt = options[int(rng.integers(len(options)))]
            walk.append(nxt)
            prev = cur
        walks.append(walk)
    return walks


def build_dataset(city: City, origin_set: OriginSet, cfg: DatasetConfig = DatasetConfig(),
                  perception: PerceptionConfig = PerceptionConfig()) -> Dataset:
    """Sample and featurize N_k walks per origin, then assign a stratified split."""
    cfg.validate()
    vis_field = VisibilityField(city, perception)
    cache: dict[int, float] = {}
    trajectories = []
    for k, origin in enumerate(origin_set.origins):
        walks = sample_walks(city.network, origin, cfg.N_k, cfg.L, sub_seed(cfg.seed, f"walks/{k}"))
        for nodes in walks:
            feats = featurize_trajectory(nodes, city, perception, field=vis_field, cache=cache)
            trajectories.append(Trajectory(k, nodes, feats))

    rng = np.random.default_rng(sub_seed(cfg.seed, "split"))
    u = rng.random(len(trajectories))
    for t, ui in zip(trajectories, u):
        t.split = "train" if ui < cfg.train_fraction else "val"
    for k in range(origin_set.K):
        idx = [i for i, t in enumerate(trajectories) if t.origin_index == k]
        if not any(trajectories[i].split == "val" for i in idx):
            trajectories[max(idx, key=lambda i: u[i])].split = "val"
    return Dataset(trajectories, origin_set, city)


def dumps_dataset(dataset: Dataset) -> str:
    lines = []
    for t in dataset.trajectories:
        rec = {"origin": int(t.origin_index), "nodes": [int(n) for n in t.nodes],
               "features": [[float(v), float(c)] for v, c in t.features], "split": t.split}
        lines.append(json.dumps(rec))
    return "\n".join(lines) + "\n"


def loads_dataset(text: str) -> Dataset:
    trajectories = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"line {lineno}", f"not valid JSON: {exc}") from None
        for key in ("origin", "nodes", "features", "split"):
            if key not in rec:
                raise SchemaError(f"line {lineno}.{key}", "missing field")
        if rec["split"] not in ("train", "val"):
            raise SchemaError(f"line {lineno}.split", "expected 'train' or 'val'")
        feats = np.array(rec["features"], dtype=float)
        if feats.ndim != 2 or feats.shape[1] != 2 or feats.shape[0] != len(rec["nodes"]):
            raise SchemaError(f"line {lineno}.features", "expected one [v, c] pair per node")
        trajectories.append(Trajectory(int(rec["origin"]), [int(n) for n in rec["nodes"]],
                                       feats, rec["split"]))
    if not trajectories:
        raise SchemaError("$", "dataset is empty")
    ds = Dataset(trajectories)
    K = ds.K
    origins = [None] * K
    for t in trajectories:
        origins[t.origin_index] = t.nodes[0]
    if all(o is not None for o in origins):
        ds.origin_set = OriginSet(origins)
    return ds


def save_dataset(dataset: Dataset, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_dataset(dataset))


def load_dataset(path) -> Dataset:
    with open(path) as fh:
        return loads_dataset(fh.read())
