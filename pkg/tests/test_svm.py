import itertools
import math

import numpy as np
import pytest

from emgopt.data import MovementClass
from emgopt.svm import (BinarySvmModel, ConvergenceError, OvrModel,
                        SvmHyperparams, decision_value, decision_values,
                        dual_objective, model_dual_variables, ovr_from_json,
                        ovr_to_json, predict, predict_batch, rbf_kernel,
                        rbf_kernel_matrix, train_binary, train_ovr)


def dual_oracle(K, t, C):
    """Exact dual optimum by enumerating active sets (feasible for small m).

    Every face assignment (alpha_i in {0, C, free}) yields a stationary-point
    candidate from the KKT linear system; the best feasible candidate is the
    global optimum of the concave QP.
    """
    m = len(t)
    Q = K * np.outer(t, t)
    best = 0.0  # alpha = 0 is always feasible
    for assignment in itertools.product((0, 1, 2), repeat=m):
        free = [i for i, a in enumerate(assignment) if a == 2]
        fixed = [i for i, a in enumerate(assignment) if a != 2]
        alpha = np.array([C if a == 1 else 0.0 for a in assignment])
        if free:
            nf = len(free)
            A = np.zeros((nf + 1, nf + 1))
            A[:nf, :nf] = Q[np.ix_(free, free)]
            A[:nf, nf] = t[free]
            A[nf, :nf] = t[free]
            rhs = np.zeros(nf + 1)
            rhs[:nf] = 1.0 - (Q[np.ix_(free, fixed)] @ alpha[fixed] if fixed else 0.0)
            rhs[nf] = -(np.dot(t[fixed], alpha[fixed]) if fixed else 0.0)
            sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
            if not np.allclose(A @ sol, rhs, atol=1e-9 * max(1.0, C)):
                continue
            a_free = sol[:nf]
            if np.any(a_free < -1e-9) or np.any(a_free > C + 1e-9):
                continue
            alpha[free] = np.clip(a_free, 0.0, C)
        if abs(np.dot(alpha, t)) > 1e-8 * max(1.0, C):
            continue
        obj = float(alpha.sum() - 0.5 * alpha @ Q @ alpha)
        best = max(best, obj)
    return best


def kkt_violations(model, X, t, C):
    alpha = model_dual_variables(model, X)
    f = decision_values(model, X)
    out = np.zeros(len(t))
    for i in range(len(t)):
        margin = t[i] * f[i]
        if alpha[i] <= 0:
            out[i] = max(0.0, 1.0 - margin)
        elif alpha[i] >= C:
            out[i] = max(0.0, margin - 1.0)
        else:
            out[i] = abs(1.0 - margin)
    return out


def test_rbf_kernel_basics():
    x = np.array([1.0, 2.0])
    assert rbf_kernel(x, x, 3.0) == 1.0
    y = np.array([1.0, 3.0])  # ||x - y||^2 = 1
    assert rbf_kernel(x, y, 1.0) == pytest.approx(math.exp(-1.0), rel=1e-12)
    assert rbf_kernel(x, y, 2.5) == pytest.approx(rbf_kernel(y, x, 2.5))
    with pytest.raises(ValueError):
        rbf_kernel(x, np.array([1.0]), 1.0)


def test_gram_matrix_positive_semidefinite():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((10, 4))
    K = rbf_kernel_matrix(X, X, 0.7)
    np.testing.assert_allclose(K, K.T, atol=1e-14)
    assert np.linalg.eigvalsh(K).min() >= -1e-9


def test_two_point_symmetric_pair():
    X = np.array([[0.0], [1.0]])
    t = np.array([-1.0, 1.0])
    model = train_binary(X, t, SvmHyperparams(c=1e6, gamma=1.0))
    assert model.n_support == 2
    assert decision_value(model, np.array([0.5])) == pytest.approx(0.0, abs=1e-9)
    # free support vectors sit on the margin
    assert decision_value(model, np.array([0.0])) == pytest.approx(-1.0, abs=1e-3)
    assert decision_value(model, np.array([1.0])) == pytest.approx(1.0, abs=1e-3)


def test_xor_separates_with_rbf():
    X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
    t = np.array([1.0, 1.0, -1.0, -1.0])
    model = train_binary(X, t, SvmHyperparams(c=10.0, gamma=1.0))
    preds = np.sign([decision_value(model, x) for x in X])
    assert np.array_equal(preds, t)


def test_dual_matches_enumeration_oracle_small_problems():
    rng = np.random.default_rng(21)
    for _ in range(12):
        m = int(rng.integers(3, 9))
        X = rng.standard_normal((m, 2))
        t = np.ones(m)
        t[: m // 2] = -1.0
        rng.shuffle(t)
        C = float(rng.uniform(0.1, 10.0))
        gamma = float(rng.uniform(0.1, 10.0))
        model = train_binary(X, t, SvmHyperparams(c=C, gamma=gamma), tol=1e-9)
        alpha = model_dual_variables(model, X)
        got = dual_objective(alpha, X, t, gamma)
        want = dual_oracle(rbf_kernel_matrix(X, X, gamma), t, C)
        assert got == pytest.approx(want, abs=1e-6)
        assert got >= -1e-12  # never worse than the zero vector


def test_solver_invariants_on_random_problems():
    rng = np.random.default_rng(5)
    for _ in range(10):
        m = int(rng.integers(10, 40))
        X = rng.standard_normal((m, 3))
        t = np.sign(rng.standard_normal(m))
        t[t == 0] = 1.0
        if np.all(t > 0) or np.all(t < 0):
            t[0] = -t[0]
        C = float(rng.uniform(0.5, 20.0))
        tol = 1e-3
        model = train_binary(X, t, SvmHyperparams(c=C, gamma=0.5), tol=tol)
        alpha = model_dual_variables(model, X)
        assert np.all(alpha >= 0.0) and np.all(alpha <= C + 1e-12)
        assert abs(np.dot(alpha, t)) <= tol
        assert np.all(np.abs(np.asarray(model.dual_coeffs)) > 0)  # non-SVs dropped
        assert kkt_violations(model, X, t, C).max() <= tol


def test_rejects_single_class_and_bad_inputs():
    X = np.zeros((3, 2))
    with pytest.raises(ValueError):
        train_binary(X, np.ones(3), SvmHyperparams(c=1.0, gamma=1.0))
    with pytest.raises(ValueError):
        train_binary(X, np.array([1.0, -1.0, 0.5]), SvmHyperparams(c=1.0, gamma=1.0))
    with pytest.raises(ValueError):
        SvmHyperparams(c=-1.0, gamma=1.0)
    with pytest.raises(ValueError):
        SvmHyperparams(c=1.0, gamma=float("inf"))


def test_convergence_error_reports_violation():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((20, 2))
    t = np.sign(rng.standard_normal(20))
    t[t == 0] = 1.0
    t[0], t[1] = 1.0, -1.0
    with pytest.raises(ConvergenceError) as err:
        train_binary(X, t, SvmHyperparams(c=1.0, gamma=1.0), tol=1e-3, max_updates=1)
    assert err.value.kkt_violation > 0


def eight_class_toy(rng, per_class=20, spread=0.25):
    centers = np.array([[math.cos(2 * math.pi * k / 8),
                         math.sin(2 * math.pi * k / 8)] for k in range(8)]) * 3.0
    X, y = [], []
    for cls in MovementClass:
        pts = centers[cls.index] + spread * rng.standard_normal((per_class, 2))
        X.append(pts)
        y.extend([cls] * per_class)
    return np.vstack(X), y


def test_ovr_trains_eight_binaries_deterministically():
    rng = np.random.default_rng(11)
    X, y = eight_class_toy(rng)
    hp = SvmHyperparams(c=10.0, gamma=1.0)
    a = train_ovr(X, y, hp)
    b = train_ovr(X, y, hp)
    assert len(a.binaries) == 8
    for cls, bin_a, bin_b in zip(MovementClass, a.binaries, b.binaries):
        assert bin_a.positive_class is cls
        assert np.array_equal(bin_a.support_vectors, bin_b.support_vectors)
        assert np.array_equal(bin_a.dual_coeffs, bin_b.dual_coeffs)
        assert bin_a.bias == bin_b.bias
    preds = predict_batch(a, X)
    assert np.mean([p is yy for p, yy in zip(preds, y)]) == 1.0


def test_ovr_rejects_absent_class():
    rng = np.random.default_rng(1)
    X, y = eight_class_toy(rng, per_class=5)
    y = [MovementClass.C1 if c is MovementClass.C8 else c for c in y]
    with pytest.raises(ValueError, match="C8"):
        train_ovr(X, y, SvmHyperparams(c=1.0, gamma=1.0))


def constant_score_model(score, cls, dim=2):
    # single support vector infinitely far away contributes ~0; bias sets score
    return BinarySvmModel(support_vectors=np.full((1, dim), 1e6),
                          dual_coeffs=np.array([1.0]), bias=score,
                          positive_class=cls,
                          hyperparams=SvmHyperparams(c=1.0, gamma=1.0))


def test_predict_argmax_and_tie_rule():
    scores = [-1.0, -2.0, -2.0, -2.0, -2.0, -2.0, -2.0, 0.5]
    ovr = OvrModel(binaries=[constant_score_model(s, c)
                             for s, c in zip(scores, MovementClass)])
    assert predict(ovr, np.zeros(2)) is MovementClass.C8
    tie = [-1.0, 0.7, -1.0, -1.0, 0.7, -1.0, -1.0, -1.0]
    ovr_tie = OvrModel(binaries=[constant_score_model(s, c)
                                 for s, c in zip(tie, MovementClass)])
    assert predict(ovr_tie, np.zeros(2)) is MovementClass.C2


def test_predict_agrees_with_sole_positive_score():
    rng = np.random.default_rng(17)
    hits = 0
    for _ in range(1000):
        scores = -rng.uniform(0.1, 2.0, size=8)
        winner = int(rng.integers(0, 8))
        scores[winner] = rng.uniform(0.05, 2.0)
        ovr = OvrModel(binaries=[constant_score_model(float(s), c)
                                 for s, c in zip(scores, MovementClass)])
        x = rng.standard_normal(2)
        assert predict(ovr, x) is list(MovementClass)[winner]
        hits += 1
    assert hits == 1000


def test_predict_invariant_to_common_positive_scaling():
    rng = np.random.default_rng(23)
    X, y = eight_class_toy(rng, per_class=6)
    ovr = train_ovr(X, y, SvmHyperparams(c=5.0, gamma=0.8))
    pts = rng.standard_normal((20, 2)) * 3
    base = predict_batch(ovr, pts)
    scaled = OvrModel(binaries=[
        BinarySvmModel(support_vectors=b.support_vectors,
                       dual_coeffs=b.dual_coeffs * 3.5, bias=b.bias * 3.5,
                       positive_class=b.positive_class, hyperparams=b.hyperparams)
        for b in ovr.binaries])
    assert predict_batch(scaled, pts) == base


def test_json_roundtrip_bit_equal_predictions():
    rng = np.random.default_rng(29)
    X, y = eight_class_toy(rng, per_class=8)
    ovr = train_ovr(X, y, SvmHyperparams(c=3.0, gamma=0.5))
    back = ovr_from_json(ovr_to_json(ovr))
    pts = rng.standard_normal((50, 2)) * 2
    for b1, b2 in zip(ovr.binaries, back.binaries):
        np.testing.assert_array_equal(decision_values(b1, pts),
                                      decision_values(b2, pts))
    assert predict_batch(back, pts) == predict_batch(ovr, pts)
