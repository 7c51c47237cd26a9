import math

import numpy as np
import pytest

from tvfbe.benchmark import ExperimentConfig, run_experiment
from tvfbe.envelope import EnvelopeParams
from tvfbe.prediction import (PCConfig, build_prediction_model, correct, predict, run,
                              steady_state)
from tvfbe.problem import L1, CompositeProblem, LeastSquares, TargetTracking, Zero
from tvfbe.solvers import SolverConfig, fista_solve


def ramp(weight=0.0):
    smooth = TargetTracking(lambda t: t, lambda t: 1.0)
    return CompositeProblem(smooth, L1(weight) if weight else Zero(), 1.0, 1.0)


def cosine(weight=0.1):
    smooth = TargetTracking(lambda t: math.cos(t / 20), lambda t: -math.sin(t / 20) / 20)
    return CompositeProblem(smooth, L1(weight), 1.0, 1.0)


def test_model_time_invariant_gradient():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((3, 4))
    b = np.tile(rng.standard_normal(3), (5, 1))
    prob = CompositeProblem(LeastSquares(A, b, ridge=0.5, Ts=0.1), Zero(), 0.5, 10.0)
    x_k = rng.standard_normal(4)
    model = build_prediction_model(prob, x_k, 0.2, 0.1)
    np.testing.assert_allclose(model.grad(x_k), prob.smooth.grad(x_k, 0.2), atol=1e-12)


def test_model_gradient_at_base_point():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((3, 4))
    b = rng.standard_normal((5, 3))
    prob = CompositeProblem(LeastSquares(A, b, ridge=0.5, Ts=0.1), Zero(), 0.5, 10.0)
    x_k = rng.standard_normal(4)
    model = build_prediction_model(prob, x_k, 0.3, 0.1)
    expected = prob.smooth.grad(x_k, 0.3) + 0.1 * prob.smooth.grad_t_grad(x_k, 0.3)
    np.testing.assert_allclose(model.grad(x_k), expected, atol=1e-12)
    # curvature of the model lies in [m, L] of the Gram matrix
    ev = np.linalg.eigvalsh(A.T @ A + 0.5 * np.eye(4))
    for _ in range(20):
        u = rng.standard_normal(4)
        u /= np.linalg.norm(u)
        assert ev[0] - 1e-12 <= u @ model.hess_vec(x_k, u) <= ev[-1] + 1e-12


def test_model_scalar_ramp():
    model = build_prediction_model(ramp(), np.array([0.0]), 0.0, 0.1)
    for x in (-1.0, 0.0, 0.7):
        assert model.grad(np.array([x])) == pytest.approx([x - 0.1])
    assert model.linear == pytest.approx([-0.1])


def test_predict_passthrough():
    model = build_prediction_model(ramp(), np.array([0.4]), 0.0, 0.1)
    x, st_ = predict(model, Zero(), np.array([0.4]), EnvelopeParams(0.8), 0, SolverConfig("qn"))
    assert x == pytest.approx([0.4], abs=0)
    assert st_.matvecs == 0


def test_predict_exact_model():
    model = build_prediction_model(ramp(), np.array([0.0]), 0.0, 0.1)
    x, _ = predict(model, Zero(), np.array([0.0]), EnvelopeParams(0.8), 50, SolverConfig("qn"))
    assert abs(x[0] - 0.1) <= 1e-8


def test_correct_fixed_point():
    f = ramp().smooth.at(0.3)
    x, _ = correct(f, Zero(), np.array([0.3]), EnvelopeParams(0.8), 5, SolverConfig("qn-ls"))
    assert x == pytest.approx([0.3], abs=0)


def test_correct_rejects_zero_budget():
    with pytest.raises(ValueError):
        correct(ramp().smooth.at(0.0), Zero(), np.zeros(1), EnvelopeParams(0.8), 0,
                SolverConfig())


def test_time_invariant_converges_to_static_minimizer():
    rng = np.random.default_rng(4)
    A = rng.standard_normal((6, 4))
    b = np.tile(rng.standard_normal(6), (41, 1))
    H = A.T @ A + 0.1 * np.eye(4)
    ev = np.linalg.eigvalsh(H)
    prob = CompositeProblem(LeastSquares(A, b, ridge=0.1, Ts=0.1), L1(0.3), ev[0], ev[-1])
    cfg = PCConfig(P=0, C=5, steps=40)
    recs = run(prob, cfg, oracle=False)
    params = EnvelopeParams.from_factor(0.8, prob.L)
    ref, _ = fista_solve(prob.smooth.at(0.0), prob.nonsmooth, np.zeros(4), params, tol=1e-11)
    assert np.linalg.norm(recs[-1].x - ref) <= 1e-6


def test_run_zero_steps():
    recs = run(ramp(), PCConfig(steps=0), oracle=True)
    assert len(recs) == 1
    assert recs[0].x == pytest.approx([0.0]) and recs[0].x_star == pytest.approx([0.0])


def test_run_record_count_and_errors():
    recs = run(ramp(), PCConfig(P=3, C=2, steps=7))
    assert [r.k for r in recs] == list(range(8))
    for r in recs:
        assert r.E_r == pytest.approx(abs(r.x[0] - r.x_star[0]))
        assert r.x_star == pytest.approx([r.t], abs=1e-9)


def test_exact_model_tracks_ramp():
    recs = run(ramp(), PCConfig(P=50, C=50, steps=30))
    assert max(r.err_norm for r in recs[1:]) <= 1e-6
    # the prediction alone is already exact
    for r in recs[1:]:
        assert abs(r.x_pred[0] - r.t) <= 1e-8


def test_cosine_tracking_prediction_helps():
    cfg = PCConfig(P=5, C=5, steps=600)
    with_pred = [r.E_r for r in run(cosine(), cfg)][-100:]
    without = [r.E_r for r in run(cosine(), PCConfig(P=0, C=5, steps=600))][-100:]
    assert np.isfinite(max(with_pred))
    assert max(with_pred) < max(without)


def test_cosine_tracking_prediction_helps_single_correction():
    with_pred = [r.E_r for r in run(cosine(), PCConfig(P=5, C=1, steps=600))][-100:]
    without = [r.E_r for r in run(cosine(), PCConfig(P=0, C=1, steps=600))][-100:]
    assert max(with_pred) < 0.01 * max(without)


def test_failure_attaches_partial_records():
    class Exploding(TargetTracking):
        def grad(self, x, t):
            if t > 0.25:
                raise FloatingPointError("boom")
            return super().grad(x, t)

    prob = CompositeProblem(Exploding(lambda t: t, lambda t: 1.0), Zero(), 1.0, 1.0)
    with pytest.raises(FloatingPointError) as info:
        run(prob, PCConfig(P=1, C=1, steps=10), oracle=False)
    assert len(info.value.records) == 3


def test_determinism():
    a = run(cosine(), PCConfig(P=3, C=3, steps=50))
    b = run(cosine(), PCConfig(P=3, C=3, steps=50))
    for ra, rb in zip(a, b):
        np.testing.assert_array_equal(ra.x, rb.x)
        assert ra.matvec_pred == rb.matvec_pred and ra.matvec_corr == rb.matvec_corr


def test_zero_prediction_costs_nothing():
    recs = run(cosine(), PCConfig(P=0, C=2, steps=20), oracle=False)
    assert all(r.matvec_pred == 0 for r in recs)
    assert all(np.array_equal(r.x_pred, p.x) for r, p in zip(recs[1:], recs[:-1]))


def test_separate_prediction_step():
    recs = run(cosine(), PCConfig(P=3, C=2, steps=20, predict_gamma_factor=0.5), oracle=False)
    assert len(recs) == 21
    with pytest.raises(ValueError):
        PCConfig(predict_gamma_factor=1.5)


def test_first_step_flags_missing_derivative():
    rep = run_experiment(ExperimentConfig().with_overrides(steps=3), oracle=False)
    assert not rep.records[1].derivative_available
    assert all(r.derivative_available for r in rep.records[2:])


def test_correction_reduces_residual_on_benchmark():
    rep = run_experiment(ExperimentConfig().with_overrides(steps=400))
    recs = rep.records[50:]
    # while the optimum is the zero vector the prediction is already exact
    moving = [r for r in recs if r.resid_pred > 0]
    assert len(moving) >= 0.5 * len(recs)
    assert np.mean([r.resid_corr < r.resid_pred for r in moving]) >= 0.95
    assert all(r.resid_corr == 0 for r in recs if r.resid_pred == 0)


def test_line_search_values_nonincreasing_on_benchmark():
    rep = run_experiment(ExperimentConfig().with_overrides(steps=100), oracle=False)
    for r in rep.records[1:]:
        v = np.array(r.correct_values)
        assert np.all(np.diff(v) <= 1e-12 * (1 + np.abs(v[:-1])))


def test_config_validation():
    with pytest.raises(ValueError):
        PCConfig(Ts=0.0)
    with pytest.raises(ValueError):
        PCConfig(C=0)
    with pytest.raises(ValueError):
        PCConfig(P=-1)
    with pytest.raises(ValueError, match="gamma must lie in"):
        PCConfig(gamma_factor=1.2)
    with pytest.raises(ValueError):
        PCConfig(correct_method="fista")


def test_steady_state_window():
    np.testing.assert_array_equal(steady_state(np.arange(10)), [5, 6, 7, 8, 9])
    np.testing.assert_array_equal(steady_state(np.arange(11)), [5, 6, 7, 8, 9, 10])
