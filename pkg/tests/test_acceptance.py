"""Acceptance suite: one test per criterion, each with its runtime budget.

A pass/fail line per criterion is printed in the pytest summary.
"""
import time

import numpy as np
import pytest

from glovehand.controller import ControllerConfig
from glovehand.grasp import Contact, build_grasp_matrix
from glovehand.hand import chain_jacobian, forward_kinematics
from glovehand.intent import (GloveTrace, decimate, estimate_intent, generate_rigid_motion_trace,
                              generate_sigmoid_trace, glove_mixing, pca_analysis)
from glovehand.pipeline import PipelineConfig, lag_reduction, run_pipeline
from glovehand.plant import Plant, PlantConfig, run_episode
from glovehand.predictor import (TrainConfig, gradient_check, init_params, make_windows, predict_stream,
                                 train_series, xcorr_lag)
from glovehand.se3 import Pose, null_space_basis, pseudoinverse, rodrigues_exp, rotation_angle_between, rotation_log

criterion = pytest.mark.criterion
PERIOD = 12     # glove samples per intent sample (200 Hz -> 16.67 Hz)


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


def z_intent_deg(glove, hand, seed, wavelets, amplitude_deg=20.0):
    st = generate_sigmoid_trace(amplitude_deg=amplitude_deg, wavelets=wavelets, seed=seed, glove=glove, hand=hand)
    est = estimate_intent(st.trace, glove, hand, rotation_only=True)
    return (np.rad2deg(decimate(est.dtheta[:, 2], PERIOD)), np.rad2deg(decimate(st.intent[:, 2], PERIOD)), st)


@pytest.fixture(scope="module")
def trained(glove, hand):
    with Timer() as tm:
        series, _, _ = z_intent_deg(glove, hand, seed=1, wavelets=50)
        res = train_series(series, TrainConfig())
    return res, tm.elapsed


@criterion(1, "grasp null space has 3p-6 orthonormal directions")
def test_null_space_dimension():
    with Timer() as tm:
        r = np.array([[0.03, 0.0, 0.0], [-0.015, 0.026, 0.0], [-0.01, -0.02, 0.015]])
        contacts = [Contact(ri, -ri / np.linalg.norm(ri)) for ri in r]
        G = build_grasp_matrix(contacts).G
        N = null_space_basis(G)
    assert N.shape == (9, 3)
    np.testing.assert_allclose(N.T @ N, np.eye(3), atol=1e-12)
    assert np.max(np.linalg.norm(G @ N, axis=0)) <= 1e-10
    assert tm.elapsed < 1.0


@criterion(2, "Moore-Penrose conditions on 100 matrices per shape class")
def test_moore_penrose():
    rng = np.random.default_rng(2)
    worst = 0.0

    def rel(a, b):
        return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)

    with Timer() as tm:
        for shape, rank in (((8, 5), 5), ((5, 8), 5), ((6, 6), 6), ((7, 7), 4), ((9, 6), 3)):
            for _ in range(100):
                A = rng.normal(size=(shape[0], rank)) @ rng.normal(size=(rank, shape[1]))
                P = pseudoinverse(A)
                AP, PA = A @ P, P @ A
                worst = max(worst, rel(A @ P @ A, A), rel(P @ A @ P, P), rel(AP.T, AP), rel(PA.T, PA))
    assert worst <= 1e-9
    assert tm.elapsed < 5.0


@criterion(3, "Rodrigues/log round trip over 1000 rotation vectors")
def test_rodrigues_round_trip():
    rng = np.random.default_rng(3)
    with Timer() as tm:
        u = rng.normal(size=(1000, 3))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        mags = np.exp(rng.uniform(np.log(1e-6), np.log(np.pi - 1e-3), 1000))
        worst = max(np.linalg.norm(rotation_log(rodrigues_exp(v)) - v) for v in u * mags[:, None])
    assert worst <= 1e-9
    assert tm.elapsed < 1.0


@criterion(4, "Jacobian matches finite differences over 100 configurations")
def test_jacobian_finite_difference(hand):
    rng = np.random.default_rng(4)
    lim = hand.joint_limits_rad
    worst = 0.0
    eps = 1e-7
    with Timer() as tm:
        for _ in range(100):
            q = rng.uniform(lim[:, 0], lim[:, 1])
            qdot = rng.normal(size=hand.k3)
            for chain, s in zip(hand.chains, hand.joint_slices()):
                A = forward_kinematics(chain, q[s] - eps * qdot[s])
                B = forward_kinematics(chain, q[s] + eps * qdot[s])
                fd = np.concatenate([rotation_log(B.rotation @ A.rotation.T), B.origin - A.origin]) / (2 * eps)
                J = chain_jacobian(chain, q[s]) @ qdot[s]
                worst = max(worst, np.linalg.norm(J - fd) / np.linalg.norm(J))
    assert worst <= 1e-5
    assert tm.elapsed < 5.0


def _ten_degree_goal(hand):
    start = Plant(hand, PlantConfig()).initial_state().object_pose
    return Pose(rodrigues_exp(np.deg2rad([0.0, 0.0, 10.0])) @ start.rotation, start.origin)


@criterion(5, "10 degree z relocation, monotone error, under 200 steps")
def test_closed_loop_relocation(hand):
    with Timer() as tm:
        res = run_episode(hand, PlantConfig(), ControllerConfig(), _ten_degree_goal(hand))
    assert res.converged
    assert res.outer_steps <= 200
    assert np.rad2deg(res.final_error) < 0.5
    assert np.all(np.diff(res.errors) <= 0)
    assert tm.elapsed < 5.0


@criterion(6, "interaction forces leave the object trajectory unchanged")
def test_interaction_force_neutrality(hand):
    goal = _ten_degree_goal(hand)
    with Timer() as tm:
        on = run_episode(hand, PlantConfig(squeeze=True), ControllerConfig(), goal)
        off = run_episode(hand, PlantConfig(squeeze=False), ControllerConfig(), goal)
    assert Plant(hand, PlantConfig()).f_min == pytest.approx(1.0)
    assert np.max(np.abs(on.contact_forces - off.contact_forces)) > 0.1
    assert np.max(np.abs(on.quat - off.quat)) <= 1e-12
    assert np.max(np.abs(on.position - off.position)) <= 1e-12
    assert tm.elapsed < 5.0


@criterion(7, "intent round trip from a known object screw")
def test_intent_round_trip(glove, hand):
    screw = np.array([0.12, -0.2, 0.3, 0.0, 0.0, 0.0])
    with Timer() as tm:
        t = np.arange(601) / 200.0
        s = 0.5 - 0.5 * np.cos(np.pi * np.clip((t - 0.5) / 2.0, 0.0, 1.0))
        values = glove.rest_deg() + np.rad2deg(np.outer(s, glove_mixing(glove, hand) @ screw))
        intent = estimate_intent(GloveTrace(t, values), glove, hand)
        err = rotation_angle_between(intent.goal_poses()[-1].rotation, rodrigues_exp(screw[:3]))
    assert err <= 1e-6
    assert tm.elapsed < 2.0


@criterion(8, "rigid-motion glove traces: 6 components hold 95% of variance")
def test_pca_rigid_structure(glove, hand):
    with Timer() as tm:
        trace, _ = generate_rigid_motion_trace(seed=8, glove=glove, hand=hand)
        res = pca_analysis(trace)
    cum = np.cumsum(res.explained_ratio)
    assert cum[5] >= 0.95
    # the first three carry most of the variance, with a clear gap after the third
    assert cum[2] >= 0.9
    assert res.eigenvalues[2] > 2 * res.eigenvalues[3]
    assert tm.elapsed < 2.0


@criterion(9, "LSTM gradient check at 20 random initialisations")
def test_gradient_check():
    rng = np.random.default_rng(9)
    worst = 0.0
    with Timer() as tm:
        for seed in range(20):
            series = np.cumsum(rng.normal(size=40))
            ds = make_windows(series, 20, 10)
            p = init_params(seed=seed)
            p.input_offset, p.input_scale = float(series.mean()), float(series.std())
            idx = rng.choice(len(ds), 3, replace=False)
            worst = max(worst, gradient_check(p, (ds.windows[idx], ds.targets[idx]), epsilon=1e-5))
    assert worst < 1e-4
    assert tm.elapsed < 30.0


@criterion(10, "training and validation MSE below 0.5 deg^2 within 200 epochs")
def test_training_convergence(trained):
    res, elapsed = trained
    assert res.train_loss.size == 201
    assert res.train_loss[-1] < 0.5
    assert res.val_loss[-1] < 0.5
    assert np.all(np.diff(res.train_loss[5:]) <= 0)
    assert elapsed < 120.0


@criterion(11, "held-out prediction leads the truth by 10 +/- 1 samples")
def test_prediction_lead(glove, hand, trained):
    params = trained[0].params
    with Timer() as tm:
        lags = []
        for seed in (21, 22):
            est, truth, _ = z_intent_deg(glove, hand, seed=seed, wavelets=6)
            sp = predict_stream(params, est)
            lags.append(xcorr_lag(sp.value, truth[sp.index], 25))
    assert all(abs(lag + 10) <= 1 for lag in lags), lags
    assert tm.elapsed < 30.0


@criterion(12, "predictor cuts the end-to-end lag by at least half")
def test_latency_mitigation(glove, hand, trained):
    params = trained[0].params
    # beyond about 12 degrees the thumb nears its joint limits and tracking slows down
    st = generate_sigmoid_trace(amplitude_deg=10.0, wavelets=6, seed=11, glove=glove, hand=hand)
    with Timer() as tm:
        base = run_pipeline(st.trace, glove, hand, {}, PipelineConfig())
        pred = run_pipeline(st.trace, glove, hand, {"z": params}, PipelineConfig())
    assert base.lag_samples > 0
    assert lag_reduction(base.lag_samples, pred.lag_samples) >= 0.5, (base.lag_samples, pred.lag_samples)
    assert tm.elapsed < 120.0
