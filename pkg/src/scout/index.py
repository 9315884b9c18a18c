"""Cosine vector search: an HNSW graph index plus an exact brute-force oracle.

Vectors are L2-normalized at insert time and queries at search time, so
cosine similarity reduces to a dot product everywhere. The graph follows the
usual multi-layer construction: geometric level assignment, greedy descent
through upper layers, beam search at layer 0, and diversity-aware neighbor
selection with back-link pruning (degree capped at 2m on layer 0, m above).
Determinism is part of the contract: a fixed seed, insertion order, and query
sequence reproduce identical results, with score ties broken by ascending id.
"""

from __future__ import annotations

import heapq
import math
import random
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SNAPSHOT_MAGIC = b"SCOUTIDX1"


class IndexError_(Exception):
    """Raised on index contract violations (duplicate id, dim mismatch...)."""


@dataclass(frozen=True)
class HnswParams:
    m: int = 16
    ef_construction: int = 64
    ef_search: int = 100
    seed: int = 42

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("m must be >= 2")
        if self.ef_construction < 1 or self.ef_search < 1:
            raise ValueError("ef_construction and ef_search must be positive")


def normalize(vector: np.ndarray) -> np.ndarray:
    """L2-normalize, rejecting zero vectors."""
    arr = np.asarray(vector, dtype=np.float32)
    norm = float(np.linalg.norm(arr))
    if norm == 0.0 or not math.isfinite(norm):
        raise IndexError_("cannot normalize a zero or non-finite vector")
    return (arr / norm).astype(np.float32)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of two nonzero vectors of equal dimension."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise IndexError_(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise IndexError_("cosine undefined for zero vectors")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def brute_force_knn(entries: dict[str, np.ndarray], query: np.ndarray,
                    k: int) -> list[tuple[str, float]]:
    """Exact top-k by cosine similarity; ties broken by ascending id."""
    if k < 1:
        raise IndexError_("k must be >= 1")
    if not entries:
        raise IndexError_("cannot search empty entry set")
    ids = sorted(entries)
    matrix = np.stack([normalize(entries[i]) for i in ids])
    q = normalize(query)
    if matrix.shape[1] != q.shape[0]:
        raise IndexError_(
            f"dimension mismatch: query {q.shape[0]}, entries {matrix.shape[1]}")
    sims = matrix @ q
    scored = sorted(zip(ids, sims.tolist()), key=lambda p: (-p[1], p[0]))
    return [(i, float(np.clip(s, -1.0, 1.0))) for i, s in scored[:k]]


class HnswIndex:
    """Approximate nearest-neighbor index over normalized vectors."""

    def __init__(self, dim: int, params: HnswParams | None = None):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.params = params or HnswParams()
        self._rng = random.Random(self.params.seed)
        # 1/ln(m) keeps the expected layer population geometric in m.
        self._level_scale = 1.0 / math.log(self.params.m)
        self._ids: list[str] = []
        self._id_to_idx: dict[str, int] = {}
        self._capacity = 256
        self._matrix = np.zeros((self._capacity, dim), dtype=np.float32)
        self._levels: list[int] = []
        # _neighbors[node][level] -> list of neighbor node indexes
        self._neighbors: list[list[list[int]]] = []
        self._entry_point = -1
        self._max_level = -1
        self._frozen = False
        # Visit marking reused across searches to avoid per-query set churn.
        self._visit_epoch = 0
        self._visited = np.zeros(self._capacity, dtype=np.int64)

    def __len__(self) -> int:
        return len(self._ids)

    def __contains__(self, id_: str) -> bool:
        return id_ in self._id_to_idx

    @property
    def ids(self) -> list[str]:
        return list(self._ids)

    def vector(self, id_: str) -> np.ndarray:
        idx = self._id_to_idx[id_]
        return self._matrix[idx].copy()

    @property
    def entries(self) -> dict[str, np.ndarray]:
        return {i: self._matrix[self._id_to_idx[i]].copy() for i in self._ids}

    def freeze(self) -> None:
        self._frozen = True

    # -- construction --------------------------------------------------------

    def _grow(self, needed: int) -> None:
        if needed <= self._capacity:
            return
        new_capacity = max(needed, self._capacity * 2)
        matrix = np.zeros((new_capacity, self.dim), dtype=np.float32)
        matrix[: len(self._ids)] = self._matrix[: len(self._ids)]
        self._matrix = matrix
        visited = np.zeros(new_capacity, dtype=np.int64)
        visited[: self._visited.shape[0]] = self._visited
        self._visited = visited
        self._capacity = new_capacity

    def _draw_level(self) -> int:
        u = self._rng.random()
        while u <= 0.0:
            u = self._rng.random()
        return int(-math.log(u) * self._level_scale)

    def _max_degree(self, level: int) -> int:
        return 2 * self.params.m if level == 0 else self.params.m

    def insert(self, id_: str, vector: np.ndarray) -> None:
        if self._frozen:
            raise IndexError_("index is frozen; rebuild to add entries")
        if id_ in self._id_to_idx:
            raise IndexError_(f"duplicate id {id_!r}")
        vec = np.asarray(vector, dtype=np.float32)
        if vec.shape != (self.dim,):
            raise IndexError_(
                f"vector of shape {vec.shape} does not match index dim {self.dim}")
        vec = normalize(vec)

        idx = len(self._ids)
        self._grow(idx + 1)
        self._matrix[idx] = vec
        self._ids.append(id_)
        self._id_to_idx[id_] = idx
        level = self._draw_level()
        self._levels.append(level)
        self._neighbors.append([[] for _ in range(level + 1)])

        if self._entry_point < 0:
            self._entry_point = idx
            self._max_level = level
            return

        ep = [self._entry_point]
        # Greedy descent through layers above the new node's level.
        for lc in range(self._max_level, level, -1):
            ep = [n for _, n in self._search_layer(vec, ep, lc, 1)]

        for lc in range(min(level, self._max_level), -1, -1):
            candidates = self._search_layer(
                vec, ep, lc, self.params.ef_construction)
            selected = self._select_neighbors(vec, candidates, self.params.m)
            self._neighbors[idx][lc] = list(selected)
            for neighbor in selected:
                links = self._neighbors[neighbor][lc]
                links.append(idx)
                cap = self._max_degree(lc)
                if len(links) > cap:
                    base = self._matrix[neighbor]
                    cand = [(-float(np.dot(base, self._matrix[n])), n)
                            for n in links]
                    self._neighbors[neighbor][lc] = self._select_neighbors(
                        base, sorted(cand), cap)
            ep = [n for _, n in candidates]

        if level > self._max_level:
            self._entry_point = idx
            self._max_level = level

    def _select_neighbors(self, base: np.ndarray,
                          candidates: list[tuple[float, int]],
                          m: int) -> list[int]:
        """Diversity-aware selection (closer to base than to any kept node)."""
        if len(candidates) <= m:
            return [n for _, n in candidates]
        selected: list[int] = []
        discarded: list[tuple[float, int]] = []
        for dist, node in candidates:
            if len(selected) >= m:
                break
            if not selected:
                selected.append(node)
                continue
            vecs = self._matrix[selected]
            dist_to_selected = -float(np.max(vecs @ self._matrix[node]))
            if dist < dist_to_selected:
                selected.append(node)
            else:
                discarded.append((dist, node))
        # Pruned links are re-added nearest-first so the graph stays connected.
        for dist, node in discarded:
            if len(selected) >= m:
                break
            selected.append(node)
        return selected

    # -- search ---------------------------------------------------------------

    def _search_layer(self, query: np.ndarray, entry_points: list[int],
                      level: int, ef: int) -> list[tuple[float, int]]:
        """Beam search on one layer; returns (distance, node) sorted ascending.

        Distance is the negated dot product, so smaller means more similar.
        """
        self._visit_epoch += 1
        epoch = self._visit_epoch
        visited = self._visited

        candidates: list[tuple[float, int]] = []
        best: list[tuple[float, int]] = []  # max-heap via negated distance
        for ep in entry_points:
            if visited[ep] == epoch:
                continue
            visited[ep] = epoch
            dist = -float(np.dot(query, self._matrix[ep]))
            heapq.heappush(candidates, (dist, ep))
            heapq.heappush(best, (-dist, ep))

        while candidates:
            dist, node = heapq.heappop(candidates)
            if len(best) >= ef and dist > -best[0][0]:
                break
            fresh = [n for n in self._neighbors[node][level]
                     if visited[n] != epoch]
            if not fresh:
                continue
            for n in fresh:
                visited[n] = epoch
            dists = -(self._matrix[fresh] @ query)
            for neighbor, ndist in zip(fresh, dists.tolist()):
                if len(best) < ef:
                    heapq.heappush(candidates, (ndist, neighbor))
                    heapq.heappush(best, (-ndist, neighbor))
                elif ndist < -best[0][0]:
                    heapq.heappush(candidates, (ndist, neighbor))
                    heapq.heapreplace(best, (-ndist, neighbor))
        return sorted((-d, n) for d, n in best)

    def knn(self, query: np.ndarray, k: int,
            ef_search: int | None = None) -> list[tuple[str, float]]:
        """Top-k ids by cosine similarity, descending; ties by ascending id."""
        if k < 1:
            raise IndexError_("k must be >= 1")
        if not self._ids:
            raise IndexError_("cannot search an empty index")
        q = np.asarray(query, dtype=np.float32)
        if q.shape != (self.dim,):
            raise IndexError_(
                f"query of shape {q.shape} does not match index dim {self.dim}")
        q = normalize(q)
        ef = max(ef_search if ef_search is not None else self.params.ef_search, k)

        ep = [self._entry_point]
        for lc in range(self._max_level, 0, -1):
            ep = [n for _, n in self._search_layer(q, ep, lc, 1)]
        found = self._search_layer(q, ep, 0, ef)

        results = [(self._ids[n], float(np.clip(-d, -1.0, 1.0)))
                   for d, n in found]
        results.sort(key=lambda p: (-p[1], p[0]))
        return results[:k]

    # -- snapshot -------------------------------------------------------------

    def save(self, path: str | Path) -> None:
        """Write the little-endian binary snapshot (vectors + adjacency)."""
        path = Path(path)
        n = len(self._ids)
        parts: list[bytes] = [
            SNAPSHOT_MAGIC,
            struct.pack("<II", self.dim, n),
            struct.pack("<IIIq", self.params.m, self.params.ef_construction,
                        self.params.ef_search, self.params.seed),
        ]
        for idx, id_ in enumerate(self._ids):
            raw = id_.encode("utf-8")
            parts.append(struct.pack("<HI", len(raw), self._levels[idx]))
            parts.append(raw)
            parts.append(self._matrix[idx].astype("<f4").tobytes())
        for idx in range(n):
            for level in range(self._levels[idx] + 1):
                links = self._neighbors[idx][level]
                parts.append(struct.pack("<I", len(links)))
                parts.append(struct.pack(f"<{len(links)}I", *links))
        parts.append(struct.pack("<q", self._entry_point))
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_bytes(b"".join(parts))
        tmp.replace(path)

    @classmethod
    def load(cls, path: str | Path) -> HnswIndex:
        data = Path(path).read_bytes()
        if not data.startswith(SNAPSHOT_MAGIC):
            raise IndexError_(f"{path}: not an index snapshot")
        off = len(SNAPSHOT_MAGIC)
        dim, n = struct.unpack_from("<II", data, off)
        off += 8
        m, efc, efs, seed = struct.unpack_from("<IIIq", data, off)
        off += 20
        index = cls(dim, HnswParams(m=m, ef_construction=efc,
                                    ef_search=efs, seed=seed))
        index._grow(n)
        for idx in range(n):
            id_len, level = struct.unpack_from("<HI", data, off)
            off += 6
            id_ = data[off:off + id_len].decode("utf-8")
            off += id_len
            vec = np.frombuffer(data, dtype="<f4", count=dim, offset=off).copy()
            off += dim * 4
            index._ids.append(id_)
            index._id_to_idx[id_] = idx
            index._matrix[idx] = vec
            index._levels.append(level)
            index._neighbors.append([])
        for idx in range(n):
            levels = []
            for _ in range(index._levels[idx] + 1):
                (count,) = struct.unpack_from("<I", data, off)
                off += 4
                links = list(struct.unpack_from(f"<{count}I", data, off))
                off += count * 4
                levels.append(links)
            index._neighbors[idx] = levels
        (entry_point,) = struct.unpack_from("<q", data, off)
        index._entry_point = int(entry_point)
        index._max_level = max(index._levels, default=-1)
        index.freeze()
        return index
