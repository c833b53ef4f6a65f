import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qfk_lab.analysis import (
    FourierTable,
    fourier_fit,
    fourier_reconstruct,
    geometric_difference,
    log2_slope,
    offdiag_values,
    pooled_offdiag_stats,
    spearman,
    sym_eig,
    uniform_grid,
)
from qfk_lab.circuits import build_ala, build_hea, sample_angles
from qfk_lab.errors import FitError
from qfk_lab.kernels import KernelSpec, cross_gram, gram_matrix


def _sym_from_offdiag(vals, n):
    K = np.eye(n)
    K[np.triu_indices(n, 1)] = vals
    return K + np.triu(K, 1).T


def _random_psd(rng, n, rank=None):
    A = rng.standard_normal((n, rank or n))
    return A @ A.T


class TestPooledStats:
    def test_constant(self):
        K = np.full((5, 5), 0.3)
        np.fill_diagonal(K, 1)
        s = pooled_offdiag_stats([K])
        assert s.mean == pytest.approx(0.3) and s.variance == pytest.approx(0.0, abs=1e-30)
        assert s.count == 10

    def test_population_variance(self):
        K = _sym_from_offdiag([1.0, 2.0, 3.0], 3)
        s = pooled_offdiag_stats([K])
        assert s.mean == 2.0 and s.variance == pytest.approx(2 / 3, abs=1e-15)

    def test_rejects_single_point(self):
        with pytest.raises(ValueError):
            pooled_offdiag_stats([np.eye(1)])

    def test_rejects_mixed_sizes(self):
        with pytest.raises(ValueError):
            pooled_offdiag_stats([np.eye(2), np.eye(3)])

    def test_each_pair_once(self):
        K = _sym_from_offdiag([5.0], 2)
        assert offdiag_values(K).tolist() == [5.0]

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.integers(2, 7), st.integers(1, 4))
    def test_matches_brute_force(self, seed, n, count):
        rng = np.random.default_rng(seed)
        grams = [_sym_from_offdiag(rng.uniform(-1, 1, n * (n - 1) // 2), n) for _ in range(count)]
        total, total2, c = 0.0, 0.0, 0
        for K in grams:
            for i in range(n):
                for j in range(i + 1, n):
                    total += K[i, j]
                    total2 += K[i, j] ** 2
                    c += 1
        mean = total / c
        s = pooled_offdiag_stats(grams)
        assert s.count == c
        assert abs(s.mean - mean) < 1e-14
        assert abs(s.variance - (total2 / c - mean**2)) < 1e-14
        brute = sum((K[i, j] - mean) ** 2 for K in grams for i in range(n) for j in range(i + 1, n)) / c
        assert abs(s.variance - brute) < 1e-14

    def test_jackknife_errors_attached(self, rng):
        grams = [_sym_from_offdiag(rng.uniform(size=6), 4) for _ in range(3)]
        s = pooled_offdiag_stats(grams)
        assert s.mean_stderr > 0 and s.variance_stderr > 0

    @pytest.mark.slow
    def test_hea_fidelity_mean(self):
        n = 4
        t = build_hea(n, 3, 0)
        grams = []
        for d in range(5):
            X = sample_angles(np.random.default_rng([30, d]), (100, n))
            for p in range(5):
                th = sample_angles(np.random.default_rng([31, p]), t.n_params)
                grams.append(gram_matrix(KernelSpec("Fidelity", t, th), X))
        s = pooled_offdiag_stats(grams)
        assert abs(s.mean - 1 / 16) < 3 * s.mean_stderr

    def test_log2_slope(self):
        ns = [2, 4, 6]
        assert log2_slope(ns, [2.0**-n for n in ns]) == pytest.approx(-1.0)


class TestFourier:
    grid = uniform_grid(30)

    def _fit(self, f, cutoff=12, grid=None):
        xs = self.grid if grid is None else grid
        return fourier_fit(xs, f(xs[:, None], xs[None, :]), cutoff)

    def test_grid(self):
        g = uniform_grid(100)
        assert g.size == 100 and g[0] == -np.pi and g[-1] < np.pi

    def test_cosine(self):
        t = self._fit(lambda x, y: np.cos(x - y))
        assert abs(t.coef(1, -1) - 0.5) < 1e-10 and abs(t.coef(-1, 1) - 0.5) < 1e-10
        others = np.abs(t.coefficients).copy()
        others[1 + 12, -1 + 12] = others[-1 + 12, 1 + 12] = 0
        assert others.max() < 1e-10
        assert t.fit_mae < 1e-12

    def test_constant(self):
        t = self._fit(lambda x, y: 0.7 + 0 * (x + y))
        assert abs(t.coef(0, 0) - 0.7) < 1e-10
        c = np.abs(t.coefficients).copy()
        c[12, 12] = 0
        assert c.max() < 1e-10

    def test_reconstruct(self):
        t = self._fit(lambda x, y: np.cos(x - y))
        assert abs(fourier_reconstruct(t, 0.0, np.pi / 2)) < 1e-10
        assert fourier_reconstruct(t, 0.3, 0.3) == pytest.approx(1.0, abs=1e-10)

    def test_unit_table(self):
        C = np.zeros((3, 3), dtype=complex)
        C[1, 1] = 1
        t = FourierTable(1, C)
        assert np.allclose(fourier_reconstruct(t, np.linspace(-3, 3, 7), np.linspace(2, -1, 7)), 1.0)

    def test_rank_deficient_grid(self):
        with pytest.raises(FitError, match="25"):
            self._fit(lambda x, y: np.cos(x - y), grid=uniform_grid(20))

    def test_bad_cutoff(self):
        with pytest.raises(ValueError):
            self._fit(lambda x, y: x * 0, cutoff=0)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_idempotent_and_hermitian(self, seed):
        rng = np.random.default_rng(seed)
        c = 4
        C = rng.standard_normal((2 * c + 1, 2 * c + 1)) + 1j * rng.standard_normal((2 * c + 1, 2 * c + 1))
        C = 0.5 * (C + np.conj(C[::-1, ::-1]))
        xs = uniform_grid(15)
        K = fourier_reconstruct(FourierTable(c, C), xs[:, None], xs[None, :])
        t1 = fourier_fit(xs, K, c)
        assert t1.hermitian_error() < 1e-10
        assert np.max(np.abs(t1.coefficients - C)) < 1e-10
        K2 = fourier_reconstruct(t1, xs[:, None], xs[None, :])
        t2 = fourier_fit(xs, K2, c)
        assert np.max(np.abs(t2.coefficients - t1.coefficients)) < 1e-10

    @pytest.mark.parametrize("kind", ["Fidelity", "ALDQFK"])
    def test_one_qubit_ala_exact(self, kind):
        t = build_ala(1, 1, 2, structure_seed=0)
        spec = KernelSpec(kind, t, sample_angles(np.random.default_rng(4), t.n_params))
        xs = uniform_grid(100)
        K = cross_gram(spec, xs[:, None])
        table = fourier_fit(xs, K, 12)
        assert table.fit_mae <= 1e-6
        assert table.hermitian_error() < 1e-10

    def test_csv_columns(self):
        t = self._fit(lambda x, y: np.cos(x - y), cutoff=2, grid=uniform_grid(8))
        lines = t.to_csv().splitlines()
        assert lines[0] == "omega,omega_prime,re,im,abs,sub_threshold"
        assert len(lines) == 1 + 25

    def test_support(self):
        t = self._fit(lambda x, y: np.cos(x - y))
        assert t.support(1e-3) == {(1, -1), (-1, 1)}


class TestSymEig:
    def test_diag(self):
        w, _ = sym_eig(np.diag([3.0, 1.0]))
        assert w.tolist() == [1.0, 3.0]

    def test_pauli_x(self):
        w, _ = sym_eig([[0.0, 1.0], [1.0, 0.0]])
        assert np.allclose(w, [-1, 1])

    def test_reconstruction(self, rng):
        A = rng.standard_normal((8, 8))
        M = A + A.T
        w, Q = sym_eig(M)
        assert np.max(np.abs(Q @ np.diag(w) @ Q.T - M)) < 1e-8 * np.max(np.abs(M))
        assert np.max(np.abs(Q.T @ Q - np.eye(8))) < 1e-10

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            sym_eig([[0.0, 1.0], [0.0, 0.0]])


class TestGeometricDifference:
    def test_identity_vs_diag(self):
        r = geometric_difference(np.eye(2), np.diag([1.5, 0.5]))
        assert r.g == pytest.approx(np.sqrt(1.5), abs=1e-12)
        assert r.normalized == pytest.approx(np.sqrt(1.5) / np.sqrt(2))

    def test_self_is_one(self, rng):
        K = _random_psd(rng, 6)
        assert abs(geometric_difference(K, K).g - 1) < 1e-10

    def test_brute_force(self, rng):
        Ka, Kb = _random_psd(rng, 4), _random_psd(rng, 4)
        w, V = np.linalg.eigh(Kb)
        sq = V @ np.diag(np.sqrt(w)) @ V.T
        ref = np.sqrt(np.linalg.norm(sq @ np.linalg.inv(Ka) @ sq, 2))
        assert geometric_difference(Ka, Kb).g == pytest.approx(ref, rel=1e-8)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.floats(0.01, 100))
    def test_scale(self, seed, c):
        rng = np.random.default_rng(seed)
        Ka, Kb = _random_psd(rng, 5) + np.eye(5), _random_psd(rng, 5)
        g1 = geometric_difference(Ka, Kb).g
        g2 = geometric_difference(Ka, c * Kb).g
        assert abs(g2 - np.sqrt(c) * g1) < 1e-10 * max(1.0, g2)

    def test_floor_reports_discarded(self, rng):
        Ka = _random_psd(rng, 6, rank=3)
        r = geometric_difference(Ka, np.eye(6))
        assert r.discarded == 3
        assert r.to_dict()["discarded_eigenvalues"] == 3

    def test_size_mismatch(self):
        with pytest.raises(ValueError):
            geometric_difference(np.eye(2), np.eye(3))

    def test_all_below_floor(self):
        with pytest.raises(ValueError):
            geometric_difference(np.zeros((3, 3)), np.eye(3), eigen_floor=1e-3)

    def test_rejects_indefinite(self):
        with pytest.raises(ValueError):
            geometric_difference(np.diag([1.0, -1.0]), np.eye(2))


class TestSpearman:
    def test_monotone(self):
        assert spearman([1, 2, 3, 4], [10, 20, 25, 100]) == pytest.approx(1.0)

    def test_ties_average_ranks(self):
        # ranks a = [1, 2.5, 2.5, 4], b = [1, 2, 3, 4]
        assert spearman([0, 1, 1, 2], [0, 1, 2, 3]) == pytest.approx(0.9486832980505138)

    def test_constant_is_nan(self):
        assert np.isnan(spearman([1, 1, 1], [1, 2, 3]))
