"""Vector index behavior: exactness on small sets, determinism, snapshots."""

import numpy as np
import pytest

from scout.index import (
    HnswIndex,
    HnswParams,
    IndexError_,
    brute_force_knn,
    cosine,
    normalize,
)


def random_vectors(n: int, dim: int, seed: int = 42) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [rng.standard_normal(dim).astype(np.float32) for _ in range(n)]


def build(vectors, **params) -> HnswIndex:
    index = HnswIndex(dim=vectors[0].shape[0], params=HnswParams(**params))
    for i, vec in enumerate(vectors):
        index.insert(f"v{i:04d}", vec)
    return index


class TestPrimitives:
    def test_normalize_unit_length(self):
        out = normalize(np.array([3.0, 4.0]))
        assert out.dtype == np.float32
        assert abs(float(np.linalg.norm(out)) - 1.0) < 1e-6

    def test_normalize_rejects_zero(self):
        with pytest.raises(IndexError_, match="zero"):
            normalize(np.zeros(4))

    def test_cosine_bounds_and_symmetry(self):
        a = np.array([1.0, 0.0])
        b = np.array([1.0, 1.0])
        assert cosine(a, a) == 1.0
        assert cosine(a, -a) == -1.0
        assert cosine(a, b) == cosine(b, a)

    def test_cosine_dimension_mismatch(self):
        with pytest.raises(IndexError_, match="mismatch"):
            cosine(np.ones(3), np.ones(4))

    def test_brute_force_ties_break_by_ascending_id(self):
        entries = {"b": np.array([1.0, 0.0]), "a": np.array([1.0, 0.0]),
                   "c": np.array([0.0, 1.0])}
        top = brute_force_knn(entries, np.array([1.0, 0.0]), k=2)
        assert [i for i, _ in top] == ["a", "b"]


class TestGraphIndex:
    def test_insert_and_exact_self_lookup(self):
        vectors = random_vectors(50, 32)
        index = build(vectors)
        for i in (0, 17, 49):
            hits = index.knn(vectors[i], k=1)
            assert hits[0][0] == f"v{i:04d}"
            assert hits[0][1] == pytest.approx(1.0, abs=1e-6)

    def test_duplicate_id_rejected(self):
        index = HnswIndex(dim=4)
        index.insert("x", np.ones(4))
        with pytest.raises(IndexError_, match="duplicate"):
            index.insert("x", np.ones(4))

    def test_dimension_mismatch_rejected(self):
        index = HnswIndex(dim=4)
        with pytest.raises(IndexError_, match="shape"):
            index.insert("x", np.ones(5))
        index.insert("x", np.ones(4))
        with pytest.raises(IndexError_, match="shape"):
            index.knn(np.ones(5), k=1)

    def test_empty_index_search_rejected(self):
        with pytest.raises(IndexError_, match="empty"):
            HnswIndex(dim=4).knn(np.ones(4), k=1)

    def test_bad_k_rejected(self):
        index = HnswIndex(dim=4)
        index.insert("x", np.ones(4))
        with pytest.raises(IndexError_, match="k must be"):
            index.knn(np.ones(4), k=0)

    def test_small_set_with_doubled_ef_is_exact(self):
        # ef_search = 2n makes the beam wide enough to visit everything.
        for n in (8, 64, 200):
            vectors = random_vectors(n, 16, seed=n)
            index = build(vectors)
            entries = index.entries
            rng = np.random.default_rng(7)
            for _ in range(5):
                query = rng.standard_normal(16)
                expected = [i for i, _ in brute_force_knn(entries, query, k=5)]
                got = [i for i, _ in index.knn(query, k=5, ef_search=2 * n)]
                assert got == expected

    def test_identical_vectors_tie_by_ascending_id(self):
        index = HnswIndex(dim=4)
        same = np.array([1.0, 2.0, 3.0, 4.0])
        for id_ in ("zeta", "alpha", "mid"):
            index.insert(id_, same)
        hits = index.knn(same, k=3)
        assert [i for i, _ in hits] == ["alpha", "mid", "zeta"]

    def test_search_is_deterministic(self):
        vectors = random_vectors(300, 24)
        index = build(vectors)
        query = np.ones(24)
        runs = [tuple(index.knn(query, k=10)) for _ in range(3)]
        assert runs[0] == runs[1] == runs[2]

    def test_same_seed_same_build(self):
        vectors = random_vectors(120, 16)
        first = build(vectors, seed=42)
        second = build(vectors, seed=42)
        query = np.full(16, 0.3)
        assert first.knn(query, k=8) == second.knn(query, k=8)

    def test_scores_are_descending(self):
        index = build(random_vectors(100, 16))
        hits = index.knn(np.ones(16), k=10)
        scores = [s for _, s in hits]
        assert scores == sorted(scores, reverse=True)

    def test_unnormalized_input_is_normalized_at_insert(self):
        index = HnswIndex(dim=3)
        index.insert("big", np.array([100.0, 0.0, 0.0]))
        assert float(np.linalg.norm(index.vector("big"))) == pytest.approx(1.0)

    def test_recall_at_10_on_medium_set(self):
        vectors = random_vectors(500, 32)
        index = build(vectors)
        entries = index.entries
        rng = np.random.default_rng(3)
        hits = total = 0
        for _ in range(20):
            query = rng.standard_normal(32)
            expected = {i for i, _ in brute_force_knn(entries, query, k=10)}
            got = {i for i, _ in index.knn(query, k=10)}
            hits += len(expected & got)
            total += 10
        assert hits / total >= 0.95


class TestSnapshot:
    def test_round_trip_preserves_search(self, tmp_path):
        vectors = random_vectors(150, 16)
        index = build(vectors)
        path = tmp_path / "graph.idx"
        index.save(path)
        loaded = HnswIndex.load(path)
        assert loaded.ids == index.ids
        query = np.full(16, -0.5)
        assert loaded.knn(query, k=10) == index.knn(query, k=10)

    def test_round_trip_preserves_params(self, tmp_path):
        index = build(random_vectors(10, 8), m=4, ef_construction=20,
                      ef_search=30, seed=7)
        path = tmp_path / "graph.idx"
        index.save(path)
        loaded = HnswIndex.load(path)
        assert loaded.params == HnswParams(m=4, ef_construction=20,
                                           ef_search=30, seed=7)

    def test_loaded_index_is_frozen(self, tmp_path):
        index = build(random_vectors(10, 8))
        path = tmp_path / "graph.idx"
        index.save(path)
        loaded = HnswIndex.load(path)
        with pytest.raises(IndexError_, match="frozen"):
            loaded.insert("new", np.ones(8))

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bogus.idx"
        path.write_bytes(b"NOTANINDEX" + b"\x00" * 64)
        with pytest.raises(IndexError_, match="not an index snapshot"):
            HnswIndex.load(path)

    def test_unicode_ids_survive(self, tmp_path):
        index = HnswIndex(dim=4)
        index.insert("café-観測", np.ones(4))
        path = tmp_path / "graph.idx"
        index.save(path)
        assert HnswIndex.load(path).ids == ["café-観測"]
