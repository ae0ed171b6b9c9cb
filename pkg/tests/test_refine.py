import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from refina import Graph, NoiseSpec, average_mnc, greedy_map, noisy_permuted_copy, random_graph
from refina.errors import DimensionError
from refina.initialization import corrupted_truth
from refina.refine import (
    TRACE_HEADER,
    IterationTrace,
    RefineConfig,
    auto_epsilon,
    mnc_update_dense,
    normalize_single_pass,
    normalize_sinkhorn,
    refine,
    refine_dense,
    refine_sparse,
    sparse_step,
    top_alpha_csr,
)

from conftest import k3, one_hot


def brute_top_alpha(dense, alpha):
    out = np.zeros_like(dense)
    for i, row in enumerate(dense):
        cand = [(-v, j) for j, v in enumerate(row) if v > 0]
        for _, j in sorted(cand)[:alpha]:
            out[i, j] = row[j]
    return out


def no_isolated_graph(n, seed):
    """Random graph with a Hamiltonian path added so every node has an edge."""
    g = random_graph(n, 3, seed=seed)
    return Graph.from_edges(n, np.vstack([g.edges().reshape(-1, 2), [(i, i + 1) for i in range(n - 1)]]))


class TestAutoEpsilon:
    @pytest.mark.parametrize("n, eps", [(1133, 1e-4), (9, 1e-1), (10, 1e-2), (1, 1e-1), (99, 1e-2), (100, 1e-3)])
    def test_examples(self, n, eps):
        assert auto_epsilon(n) == pytest.approx(eps, rel=1e-12)

    @given(st.integers(1, 10**9))
    def test_definition(self, n):
        p = next(p for p in range(1, 12) if 10**p > n)
        assert auto_epsilon(n) == pytest.approx(10.0**-p, rel=1e-12)
        assert n * auto_epsilon(n) < 1

    def test_zero(self):
        with pytest.raises(ValueError):
            auto_epsilon(0)

    def test_uses_larger_side(self):
        assert RefineConfig().resolve_epsilon(5, 1133) == pytest.approx(1e-4)


class TestDenseUpdate:
    def test_triangle(self):
        np.testing.assert_array_equal(mnc_update_dense(k3(), k3(), np.eye(3)), 2 * np.eye(3))

    def test_zero_is_absorbing(self):
        g = random_graph(10, 3, seed=0)
        assert not mnc_update_dense(g, g, np.zeros((10, 10))).any()

    def test_edgeless(self):
        assert not mnc_update_dense(Graph.empty(3), k3(), np.ones((3, 3))).any()

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            mnc_update_dense(k3(), k3(), np.ones((3, 2)))

    def test_matches_explicit_sum(self, rng):
        g1, g2 = random_graph(8, 3, seed=1), random_graph(6, 2, seed=2)
        m = rng.random((8, 6))
        a1, a2 = g1.adjacency.toarray(), g2.adjacency.toarray()
        ref = np.array([[m[i, j] * sum(m[k, l] for k in range(8) for l in range(6) if a1[i, k] and a2[l, j])
                         for j in range(6)] for i in range(8)])
        np.testing.assert_allclose(mnc_update_dense(g1, g2, m), ref, rtol=1e-12)

    def test_high_degree_priority(self):
        # triangle 0-1-2 with pendant 3 attached to 0
        g = Graph.from_edges(4, [(0, 1), (1, 2), (0, 2), (0, 3)])
        out = mnc_update_dense(g, g, np.full((4, 4), 0.25))
        assert np.all(out[0, 0] > out[3, :])


class TestSinglePass:
    def test_example(self):
        np.testing.assert_allclose(normalize_single_pass(np.array([[2.0, 0], [1, 1]])), [[2 / 3, 0], [1 / 3, 1]])

    def test_permutation_fixed(self):
        p = one_hot([2, 0, 1], 3)
        np.testing.assert_array_equal(normalize_single_pass(p), p)
        np.testing.assert_array_equal(normalize_single_pass(sp.csr_matrix(p)).toarray(), p)

    def test_zero(self):
        np.testing.assert_array_equal(normalize_single_pass(np.zeros((2, 3))), np.zeros((2, 3)))

    def test_does_not_mutate(self):
        m = np.array([[2.0, 0], [1, 1]])
        normalize_single_pass(m)
        assert m.tolist() == [[2, 0], [1, 1]]

    @given(arrays(np.float64, (5, 4), elements=st.floats(0, 100)))
    def test_sparse_matches_dense(self, m):
        d = normalize_single_pass(m)
        s = normalize_single_pass(sp.csr_matrix(m)).toarray()
        np.testing.assert_allclose(s, d, rtol=1e-12, atol=0)
        live = d.sum(axis=0) > 0
        np.testing.assert_allclose(d.sum(axis=0)[live], 1.0, rtol=1e-12)


class TestSinkhorn:
    def test_positive_two_by_two(self):
        out = normalize_sinkhorn(np.array([[1.0, 2.0], [3.0, 4.0]]), 1000, 1e-2)
        assert np.all(np.abs(out.sum(axis=0) - 1) < 1e-2)
        assert np.all(np.abs(out.sum(axis=1) - 1) < 1e-2)

    def test_permutation_one_pass(self):
        p = one_hot([1, 2, 0], 3)
        out, n_iter = normalize_sinkhorn(p, 1000, 1e-2, return_n_iter=True)
        assert n_iter == 1
        np.testing.assert_array_equal(out, p)

    def test_uniform(self):
        np.testing.assert_allclose(normalize_sinkhorn(np.ones((2, 2))), np.full((2, 2), 0.5))

    def test_zero_line_warns(self):
        with pytest.warns(RuntimeWarning, match="all-zero"):
            out = normalize_sinkhorn(np.array([[1.0, 0.0], [0.0, 0.0]]))
        assert out.tolist() == [[1.0, 0.0], [0.0, 0.0]]

    @settings(max_examples=50)
    @given(st.integers(1, 8).flatmap(lambda n: arrays(np.float64, (n, n), elements=st.floats(0.01, 100))),
           st.sampled_from([1e-2, 1e-4, 1e-8]))
    def test_post_condition(self, m, tol):
        for store in (m, sp.csr_matrix(m)):
            out = normalize_sinkhorn(store, 10_000, tol)
            out = out.toarray() if sp.issparse(out) else out
            assert np.abs(out.sum(axis=1) - 1).max() < tol
            assert np.abs(out.sum(axis=0) - 1).max() < tol

    def test_rectangular_targets(self, rng):
        out = normalize_sinkhorn(rng.random((3, 6)) + 0.1, 1000, 1e-6)
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-6)
        np.testing.assert_allclose(out.sum(axis=0), 0.5, atol=1e-6)

    def test_bad_iters(self):
        with pytest.raises(ValueError):
            normalize_sinkhorn(np.eye(2), 0)


class TestTopAlpha:
    @settings(max_examples=80)
    @given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 9)), elements=st.integers(0, 3).map(float)),
           st.integers(1, 10), st.integers(0, 2**31))
    def test_matches_brute_force(self, dense, alpha, seed):
        u = sp.csr_matrix(dense)
        # scramble column order inside rows to exercise unsorted input
        rng = np.random.default_rng(seed)
        for i in range(u.shape[0]):
            lo, hi = u.indptr[i], u.indptr[i + 1]
            order = lo + rng.permutation(hi - lo)
            u.indices[lo:hi], u.data[lo:hi] = u.indices[order].copy(), u.data[order].copy()
        u.has_sorted_indices = False
        out = top_alpha_csr(u, alpha)
        assert out.has_sorted_indices
        np.testing.assert_array_equal(out.toarray(), brute_top_alpha(dense, alpha))


class TestSparseStep:
    def test_new_pairs_get_epsilon_and_zero_rows_stay(self):
        # node 2 of g1 is isolated, so its count row is empty
        g1 = Graph.from_edges(3, [(0, 1)])
        g2 = Graph.from_edges(3, [(0, 1), (1, 2)])
        m = sp.csr_matrix(np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 0.7]]))
        out = sparse_step(g1, g2, m, alpha=3, epsilon=1e-3).toarray()
        counts = (g1.adjacency @ m @ g2.adjacency).toarray()
        expected = m.toarray().copy()
        on = counts > 0
        expected[on] = m.toarray()[on] * counts[on] + 1e-3
        np.testing.assert_allclose(out, expected, rtol=1e-15)
        assert out[2].tolist() == [0, 0, 0.7]
        # (0, 2) was absent from m, so it enters with exactly epsilon
        assert out[0, 2] == 1e-3

    def test_carry_over_outside_support(self):
        g = Graph.from_edges(4, [(0, 1), (1, 2), (2, 3)])
        m = sp.csr_matrix(np.full((4, 4), 0.25))
        out = sparse_step(g, g, m, alpha=1, epsilon=0.0).toarray()
        u = brute_top_alpha((g.adjacency @ m @ g.adjacency).toarray(), 1)
        expected = np.where(u > 0, 0.25 * u, 0.25)
        np.testing.assert_allclose(out, expected)


class TestRefineDense:
    def test_zero_iterations(self, noisy_pair):
        g1, g2, truth = noisy_pair
        m0 = corrupted_truth(truth, 0.3, g2.n, 1)
        for mode in ("dense", "sparse"):
            m, trace = refine(g1, g2, m0, RefineConfig(iterations=0, mode=mode))
            np.testing.assert_array_equal(m.toarray() if sp.issparse(m) else m, m0.toarray())
            assert len(trace) == 0

    def test_epsilon_zero_support_never_grows(self, noisy_pair):
        g1, g2, truth = noisy_pair
        m0 = corrupted_truth(truth, 0.3, g2.n, 2)
        support0 = m0.toarray() > 0
        m = m0
        for _ in range(15):
            m, _ = refine_dense(g1, g2, m, RefineConfig(iterations=1, epsilon=0.0))
            assert not np.any((m > 0) & ~support0)

    def test_positive_epsilon_fills_matrix(self, noisy_pair):
        g1, g2, truth = noisy_pair
        m, _ = refine_dense(g1, g2, corrupted_truth(truth, 0.3, g2.n, 2), RefineConfig(iterations=3))
        assert np.all(m > 0)
        assert np.all(m.sum(axis=1) > 0)

    def test_improves_isomorphic_copies(self):
        for seed in range(10):
            g1 = random_graph(100, 8, seed=seed)
            g2, truth = noisy_permuted_copy(g1, NoiseSpec("remove_edges", 0.0, 0), perm_seed=seed + 50)
            m0 = corrupted_truth(truth, 0.3, g2.n, seed)
            m, trace = refine_dense(g1, g2, m0, RefineConfig(iterations=100), truth)
            assert trace.records[-1].accuracy >= trace.initial_accuracy
            assert average_mnc(g1, g2, m) >= average_mnc(g1, g2, m0)

    def test_trace_shape(self, noisy_pair):
        g1, g2, truth = noisy_pair
        m0 = corrupted_truth(truth, 0.3, g2.n, 3)
        _, trace = refine_dense(g1, g2, m0, RefineConfig(iterations=10, log_every=3), truth)
        assert [r.iter for r in trace] == [3, 6, 9, 10]
        assert len(trace.iteration_ms) == 10
        _, trace = refine_dense(g1, g2, m0, RefineConfig(iterations=4))
        assert [r.iter for r in trace] == [1, 2, 3, 4]
        assert all(r.accuracy is None for r in trace)

    def test_changed_rows(self, noisy_pair):
        g1, g2, truth = noisy_pair
        m0 = corrupted_truth(truth, 0.3, g2.n, 3)
        prev = greedy_map(m0)
        m = m0
        _, trace = refine_dense(g1, g2, m0, RefineConfig(iterations=5, epsilon=1e-3))
        for rec in trace:
            m, _ = refine_dense(g1, g2, m, RefineConfig(iterations=1, epsilon=1e-3))
            pi = greedy_map(m)
            assert rec.changed_rows == int(np.sum(pi != prev))
            prev = pi

    def test_early_stop(self, noisy_pair):
        g1, g2, truth = noisy_pair
        m0 = corrupted_truth(truth, 0.3, g2.n, 3)
        _, trace = refine_dense(g1, g2, m0, RefineConfig(iterations=100, early_stop_fraction=0.01), truth)
        assert trace.stopped_early
        assert len(trace) < 100
        assert trace.records[-1].changed_rows <= 0.01 * g1.n

    def test_deterministic(self, noisy_pair):
        g1, g2, truth = noisy_pair
        m0 = corrupted_truth(truth, 0.3, g2.n, 4)
        for mode in ("dense", "sparse"):
            cfg = RefineConfig(iterations=12, mode=mode)
            a, ta = refine(g1, g2, m0, cfg, truth)
            b, tb = refine(g1, g2, m0, cfg, truth)
            if sp.issparse(a):
                a, b = a.toarray(), b.toarray()
            assert a.tobytes() == b.tobytes()
            strip = [(r.iter, r.avg_mnc, r.accuracy, r.changed_rows) for r in ta]
            assert strip == [(r.iter, r.avg_mnc, r.accuracy, r.changed_rows) for r in tb]

    def test_sinkhorn_mode_runs(self, noisy_pair):
        g1, g2, truth = noisy_pair
        m0 = corrupted_truth(truth, 0.3, g2.n, 4)
        m, trace = refine(g1, g2, m0, RefineConfig(iterations=10, normalization="sinkhorn"), truth)
        assert trace.records[-1].accuracy > trace.initial_accuracy
        np.testing.assert_allclose(m.sum(axis=1), 1.0, atol=1e-2)

    def test_bad_shapes(self, noisy_pair):
        g1, g2, truth = noisy_pair
        with pytest.raises(DimensionError):
            refine(g1, g2, np.ones((3, 3)))
        with pytest.raises(DimensionError):
            refine(g1, g2, corrupted_truth(truth, 0.3, g2.n, 0), truth=truth[:5])


class TestRefineSparse:
    @pytest.mark.parametrize("seed", range(6))
    def test_full_alpha_matches_dense(self, seed):
        rng = np.random.default_rng(seed)
        n1, n2 = int(rng.integers(8, 50)), int(rng.integers(8, 50))
        g1, g2 = no_isolated_graph(n1, seed), no_isolated_graph(n2, seed + 100)
        m0 = rng.random((n1, n2)) + 0.01
        dense, sparse = m0, sp.csr_matrix(m0)
        for _ in range(12):
            dense, _ = refine_dense(g1, g2, dense, RefineConfig(iterations=1, epsilon=1e-2))
            sparse, _ = refine_sparse(g1, g2, sparse, RefineConfig(iterations=1, mode="sparse", alpha=n2, epsilon=1e-2))
            np.testing.assert_allclose(sparse.toarray(), dense, rtol=1e-9, atol=0)
            assert greedy_map(sparse).tolist() == greedy_map(dense).tolist()

    def test_nnz_growth_bound_and_nonnegativity(self, noisy_pair):
        g1, g2, truth = noisy_pair
        m0 = corrupted_truth(truth, 0.3, g2.n, 5)
        alpha = 4
        m = m0
        for k in range(1, 8):
            m, _ = refine_sparse(g1, g2, m, RefineConfig(iterations=1, mode="sparse", alpha=alpha))
            assert m.nnz <= m0.nnz + k * g1.n * alpha
            assert np.all(m.data > 0)

    def test_prune_floor(self, noisy_pair):
        g1, g2, truth = noisy_pair
        m0 = corrupted_truth(truth, 0.3, g2.n, 5)
        full, _ = refine_sparse(g1, g2, m0, RefineConfig(iterations=5, mode="sparse"))
        pruned, _ = refine_sparse(g1, g2, m0, RefineConfig(iterations=5, mode="sparse", prune_below=1e-6))
        assert pruned.nnz < full.nnz

    def test_block_rows_do_not_change_result(self, noisy_pair):
        g1, g2, truth = noisy_pair
        m0 = corrupted_truth(truth, 0.3, g2.n, 5)
        cfg = RefineConfig(iterations=6, mode="sparse")
        a, _ = refine_sparse(g1, g2, m0, cfg)
        b, _ = refine_sparse(g1, g2, m0, cfg, block_rows=7)
        assert (a != b).nnz == 0


class TestConfigAndTrace:
    @pytest.mark.parametrize("kw", [
        {"iterations": -1}, {"epsilon": -1e-3}, {"epsilon": "big"}, {"mode": "gpu"}, {"alpha": 0},
        {"normalization": "l2"}, {"sinkhorn_tolerance": 0}, {"sinkhorn_max_iters": 0},
        {"early_stop_fraction": 1.5}, {"log_every": 0},
    ])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            RefineConfig(**kw)

    def test_aliases(self):
        assert RefineConfig(normalization="single_pass").normalization == "single"
        assert RefineConfig(epsilon="1e-4").epsilon == pytest.approx(1e-4)

    def test_csv_round_trip(self, tmp_path, noisy_pair):
        g1, g2, truth = noisy_pair
        m0 = corrupted_truth(truth, 0.3, g2.n, 6)
        for t in (truth, None):
            _, trace = refine(g1, g2, m0, RefineConfig(iterations=5), t)
            trace.to_csv(tmp_path / "t.csv")
            lines = (tmp_path / "t.csv").read_text().splitlines()
            assert lines[0] == ",".join(TRACE_HEADER)
            assert len(lines) == 6
            if t is None:
                assert all(line.split(",")[2] == "" for line in lines[1:])
            back = IterationTrace.from_csv(tmp_path / "t.csv")
            assert back.column("avg_mnc") == trace.column("avg_mnc")
            assert back.column("accuracy") == trace.column("accuracy")
            assert back.column("changed_rows") == trace.column("changed_rows")
