import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qfk_lab.errors import ConvergenceError
from qfk_lab.ml import (
    C_GRID,
    LabeledDataset,
    SvmModel,
    cross_validate_c,
    fit_and_score,
    make_sine_dataset,
    misclassification_rate,
    sign,
    stratified_folds,
    svm_predict,
    svm_train,
)


def _block(labels):
    y = np.asarray(labels)
    return (y[:, None] == y[None, :]).astype(float)


def _rbf(x, z, gamma=1.0):
    return np.exp(-gamma * (x[:, None] - z[None, :]) ** 2)


def _objective(K, y, a):
    Q = (y[:, None] * y[None, :]) * K
    return 0.5 * a @ Q @ a - a.sum()


def _kkt(K, y, a, b, C):
    f = K @ (a * y) + b
    m = y * f
    viol = np.where(a <= 0, np.maximum(0, 1 - m), np.where(a >= C, np.maximum(0, m - 1), np.abs(m - 1)))
    return viol.max()


class TestDataset:
    def test_sine_signs(self):
        d = make_sine_dataset(20, w=1, b=0.0, seed=0)
        assert sign(np.sin(np.pi / 2)) == 1 and sign(np.sin(-np.pi / 2)) == -1
        assert np.array_equal(d.labels, sign(np.sin(d.inputs[:, 0])))

    def test_phase_example(self):
        assert sign(np.sin(2 * 0 + 0.3)) == 1

    def test_sign_zero(self):
        assert sign(0.0) == 1 and sign(-0.0) == 1

    def test_flip_symmetry(self):
        a = make_sine_dataset(100, w=3, b=0.3, seed=5)
        b = make_sine_dataset(100, w=3, b=0.3 + np.pi, seed=5)
        assert np.array_equal(a.inputs, b.inputs)
        assert np.array_equal(a.labels, -b.labels)

    def test_range_and_split(self):
        d = make_sine_dataset(100, w=4, seed=9)
        assert d.inputs.min() >= -np.pi and d.inputs.max() < np.pi
        assert len(d.train_idx) == 80 and len(d.test_idx) == 20
        assert set(d.train_idx) | set(d.test_idx) == set(range(100))

    def test_deterministic(self):
        a, b = make_sine_dataset(50, 2, seed=1), make_sine_dataset(50, 2, seed=1)
        assert np.array_equal(a.inputs, b.inputs) and np.array_equal(a.test_idx, b.test_idx)

    def test_inputs_shared_across_w(self):
        assert np.array_equal(make_sine_dataset(50, 2, seed=1).inputs, make_sine_dataset(50, 7, seed=1).inputs)

    def test_preconditions(self):
        with pytest.raises(ValueError):
            make_sine_dataset(5)
        with pytest.raises(ValueError):
            make_sine_dataset(20, w=0)
        with pytest.raises(ValueError):
            LabeledDataset([[0.0]], [0])

    def test_json_roundtrip(self):
        d = make_sine_dataset(20, 3, seed=2)
        back = LabeledDataset.from_json(d.to_json())
        assert np.array_equal(back.inputs, d.inputs) and np.array_equal(back.train_idx, d.train_idx)
        assert back.w == 3


class TestSvm:
    def test_block_gram_separates(self):
        y = np.array([1, 1, -1, 1, -1, -1, 1])
        for C in (1.0, 8.0, 512.0):
            m = svm_train(_block(y), y, C)
            assert np.array_equal(svm_predict(m, _block(y)), y)

    def test_constant_kernel_predicts_majority(self):
        y = np.array([1, 1, 1, -1, -1])
        m = svm_train(np.ones((5, 5)), y, 1.0)
        assert np.all(svm_predict(m, np.ones((3, 5))) == 1)

    def test_two_point_identity(self):
        m = svm_train(np.eye(2), [1, -1], 100.0)
        assert np.allclose(m.alpha, [1, 1], atol=1e-6)
        assert abs(m.bias) < 1e-6
        # brute-force grid over the feasible segment a0 = a1 = t
        ts = np.linspace(0, 3, 30001)
        best = ts[np.argmin([_objective(np.eye(2), np.array([1.0, -1.0]), np.array([t, t])) for t in ts])]
        assert best == pytest.approx(1.0, abs=1e-4)

    def test_support_point_label(self):
        y = np.array([1, -1, 1, -1])
        m = svm_train(_block(y), y, 4.0)
        for i in m.support:
            assert svm_predict(m, _block(y)[i]) == y[i]

    def test_zero_alpha_gives_bias_sign(self):
        m = SvmModel(np.zeros(3), -0.2, np.array([1, -1, 1]), 1.0)
        assert svm_predict(m, [0.3, 0.9, 0.1]) == -1
        m.bias = 0.0
        assert svm_predict(m, [0.3, 0.9, 0.1]) == 1

    def test_decision_matches_direct_sum(self, rng):
        for _ in range(10):
            n = 6
            a = rng.uniform(0, 2, n)
            y = rng.choice([-1, 1], n)
            m = SvmModel(a, float(rng.normal()), y, 2.0)
            row = rng.normal(size=n)
            ref = sum(a[i] * y[i] * row[i] for i in range(n)) + m.bias
            assert svm_predict(m, row) == (1 if ref >= 0 else -1)

    def test_length_mismatch(self):
        m = svm_train(np.eye(2), [1, -1], 1.0)
        with pytest.raises(ValueError):
            svm_predict(m, [0.1, 0.2, 0.3])
        with pytest.raises(ValueError):
            svm_train(np.eye(3), [1, -1], 1.0)
        with pytest.raises(ValueError):
            svm_train(np.eye(2), [1, -1], 0.0)

    def test_nonconvergence_reports_residual(self, rng):
        x = rng.uniform(-3, 3, 40)
        y = sign(np.sin(3 * x))
        with pytest.raises(ConvergenceError) as info:
            svm_train(_rbf(x, x), y, 512.0, max_sweeps=1, polish_every=1)
        assert info.value.residual > 1e-5

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.sampled_from([2.0**-4, 1.0, 2.0**5, 2.0**9]))
    def test_feasible_kkt_and_monotone(self, seed, C):
        rng = np.random.default_rng(seed)
        x = rng.uniform(-np.pi, np.pi, 30)
        y = sign(np.sin(2 * x + 0.3))
        if np.unique(y).size < 2:
            y[0] = -y[0]
        K = _rbf(x, x, 2.0)
        m = svm_train(K, y, C)
        assert np.all(m.alpha >= 0) and np.all(m.alpha <= C)
        assert abs(np.dot(m.alpha, y)) < 1e-8
        assert np.all(np.diff(m.objective_trace) <= 1e-12 * (1 + np.abs(m.objective_trace[:-1])))
        assert m.kkt_residual < 1e-5
        assert _kkt(K, y, m.alpha, m.bias, C) < 1e-3

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.sampled_from([2.0**-3, 1.0, 2.0**4]))
    def test_scaling_covariance(self, seed, C):
        rng = np.random.default_rng(seed)
        x = rng.uniform(-np.pi, np.pi, 25)
        y = sign(np.sin(x + 0.3))
        if np.unique(y).size < 2:
            y[0] = -y[0]
        K = _rbf(x, x, 1.5)
        z = rng.uniform(-np.pi, np.pi, 40)
        rows = _rbf(z, x, 1.5)
        a = svm_predict(svm_train(K, y, C), rows)
        b = svm_predict(svm_train(2 * K, y, C / 2), 2 * rows)
        # points whose decision value is within solver tolerance of zero may flip
        margin = np.abs(svm_train(K, y, C).decision(rows)) > 1e-4
        assert np.array_equal(a[margin], b[margin])


class TestCrossValidation:
    def test_grid(self):
        assert len(C_GRID) == 18 and C_GRID[0] == 2.0**-8 and C_GRID[-1] == 2.0**9

    def test_block_gram_tie_break(self):
        y = np.array([1, -1] * 10)
        best, scores = cross_validate_c(_block(y), y)
        assert all(s == 1.0 for s in scores.values())
        assert best == 2.0**-8

    def test_constant_kernel_majority(self, rng):
        y = np.array([1] * 14 + [-1] * 6)
        _, scores = cross_validate_c(np.ones((20, 20)), y)
        assert all(s == pytest.approx(0.7, abs=0.05) for s in scores.values())

    def test_folds_stratified_and_deterministic(self):
        y = np.array([1] * 12 + [-1] * 8)
        f = stratified_folds(y, 4, seed=3)
        assert np.array_equal(f, stratified_folds(y, 4, seed=3))
        for k in range(4):
            assert np.sum((f == k) & (y == 1)) == 3 and np.sum((f == k) & (y == -1)) == 2

    def test_single_class_fold(self):
        y = np.array([1] * 9 + [-1])
        with pytest.raises(ValueError):
            cross_validate_c(np.eye(10), y, folds=5)

    def test_needs_enough_points(self):
        with pytest.raises(ValueError):
            cross_validate_c(np.eye(3), [1, -1, 1], folds=5)

    def test_fit_and_score(self):
        d = make_sine_dataset(60, w=1, seed=4)
        x = d.inputs[:, 0]
        out = fit_and_score(_rbf(x, x, 1.0), d)
        assert out["C"] in C_GRID
        assert out["misclassification"] <= 0.2


class TestMisclassification:
    def test_counts(self):
        assert misclassification_rate([1, -1], [1, -1]) == 0
        assert misclassification_rate([1, -1], [-1, 1]) == 1
        t = np.ones(20, dtype=int)
        p = t.copy()
        p[:3] = -1
        assert misclassification_rate(p, t) == 0.15

    def test_mismatch(self):
        with pytest.raises(ValueError):
            misclassification_rate([1], [1, 1])
        with pytest.raises(ValueError):
            misclassification_rate([], [])
