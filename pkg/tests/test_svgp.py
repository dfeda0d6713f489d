import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.distance import cdist

from bathyplan.svgp import (KernelParams, SvgpError, SvgpModel, SvgpTrainer, TrainBuffer,
                            TrainConfig, elbo_minibatch, flatten, get_params, inducing_grid,
                            init_model, kl_divergence, load_checkpoint, matern52,
                            matern52_matrix, optimal_variational, sample_ui_batch,
                            save_checkpoint, set_params, unflatten, PARAM_NAMES)


def toy(n=30, seed=0, noise=0.0):
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(0, 10, n))
    X = np.column_stack([x, np.zeros(n)])
    z = np.sin(x) + 0.3 * x + noise * rng.standard_normal(n)
    return X, z


def dense_matern(A, B, sf2, ell):
    r = cdist(A, B)
    s = math.sqrt(5) * r / ell
    return sf2 * (1 + s + s * s / 3) * np.exp(-s)


def dense_gp(X, z, Xs, sf2, ell, sn2, c=0.0):
    """Textbook exact GP via numpy solves (independent of the package)."""
    K = dense_matern(X, X, sf2, ell) + sn2 * np.eye(len(X))
    Ks = dense_matern(Xs, X, sf2, ell)
    mu = c + Ks @ np.linalg.solve(K, z - c)
    var = sf2 - np.sum(Ks * np.linalg.solve(K, Ks.T).T, axis=1)
    sign, logdet = np.linalg.slogdet(K)
    r = z - c
    lml = -0.5 * r @ np.linalg.solve(K, r) - 0.5 * logdet - 0.5 * len(z) * math.log(2 * math.pi)
    return mu, var, lml


def random_model(rng, Z, c=0.1):
    m0 = init_model(Z, KernelParams(1.3, 2.0), 0.2, mean_const=c)
    p = get_params(m0)
    p["m"] = rng.standard_normal(len(Z))
    p["L_off"] = 0.1 * rng.standard_normal(p["L_off"].shape)
    p["L_logdiag"] = p["L_logdiag"] - 0.5 + 0.1 * rng.standard_normal(len(Z))
    p["log_sf2"] = p["log_sf2"] + rng.normal(0, 0.3)
    p["log_ell"] = p["log_ell"] + rng.normal(0, 0.3)
    p["Z"] = p["Z"] + rng.normal(0, 0.2, p["Z"].shape)
    return m0, p


# kernel

def test_matern_closed_form():
    k = KernelParams(1.0, 1.0)
    expected = (1 + math.sqrt(5) + 5 / 3) * math.exp(-math.sqrt(5))
    assert matern52([0, 0], [1, 0], k) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(0.52399, abs=1e-5)
    assert matern52([3, 4], [3, 4], KernelParams(2.5, 7.0)) == 2.5
    a, b = np.array([0.3, -1.2]), np.array([2.0, 5.5])
    assert matern52(a, b, k) == matern52(b, a, k)


def test_kernel_param_validation():
    with pytest.raises(ValueError):
        KernelParams(0.0, 1.0)
    with pytest.raises(ValueError):
        KernelParams(1.0, -1.0)
    with pytest.raises(ValueError):
        KernelParams(1.0, 1.0, nu=1.5)


# uncertain-input sampling

def test_ui_zero_omega_identity(rng):
    X = rng.normal(size=(50, 2))
    out = sample_ui_batch(X, np.zeros((50, 2, 2)), rng)
    assert np.array_equal(out, X)


def test_ui_clt_bound():
    rng = np.random.default_rng(3)
    n, s2 = 100_000, 2.0
    X = np.zeros((n, 2))
    d = sample_ui_batch(X, np.tile(np.diag([s2, s2]), (n, 1, 1)), rng)
    assert d.shape == (n, 2)
    assert np.all(np.abs(d.mean(axis=0)) <= 4 * math.sqrt(s2) / math.sqrt(n))
    assert np.allclose(d.var(axis=0), s2, rtol=0.02)


def test_ui_indefinite_omega_falls_back():
    rng = np.random.default_rng(0)
    om = np.array([[[1.0, 2.0], [2.0, 1.0]]] * 4)
    out = sample_ui_batch(np.zeros((4, 2)), om, rng)
    assert np.all(np.isfinite(out))


# ELBO

def test_kl_zero_at_prior(rng):
    Z = inducing_grid((0, 0, 50, 50), 25, rng)
    m = init_model(Z, KernelParams(0.7, 12.0), 0.01)
    assert abs(kl_divergence(m)) <= 1e-8


def test_kl_matches_dense_formula(rng):
    Z = rng.uniform(0, 10, (6, 2))
    m0, p = random_model(rng, Z)
    model = set_params(m0, p)
    K = dense_matern(model.Z, model.Z, model.kernel.signal_variance, model.kernel.lengthscale)
    K = K + model.jitter * model.kernel.signal_variance * np.eye(6)
    S = model.var_chol @ model.var_chol.T
    m = model.var_mean
    kl = 0.5 * (np.trace(np.linalg.solve(K, S)) + m @ np.linalg.solve(K, m) - 6
                + np.linalg.slogdet(K)[1] - np.linalg.slogdet(S)[1])
    assert kl_divergence(model) == pytest.approx(kl, rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_kl_nonnegative(seed):
    rng = np.random.default_rng(seed)
    m0, p = random_model(rng, rng.uniform(0, 10, (5, 2)))
    assert kl_divergence(set_params(m0, p)) >= -1e-10


def test_elbo_matches_dense_expression(rng):
    X, z = toy(12, seed=1)
    m0, p = random_model(rng, rng.uniform(0, 10, (5, 2)))
    model = set_params(m0, p)
    mu, var = model.predict(X)
    sn2 = model.noise_variance
    ell = -0.5 * math.log(2 * math.pi * sn2) - (z - mu) ** 2 / (2 * sn2) - var / (2 * sn2)
    expected = 40 / 12 * ell.sum() - kl_divergence(model)
    val, _ = elbo_minibatch(model, X, z, N_t=40, grad=False)
    assert val == pytest.approx(expected, rel=1e-10)


def fd_relative_errors(model, p, X, z, N_t):
    _, g = elbo_minibatch(set_params(model, p), X, z, N_t)
    v0, gv = flatten(p), flatten(g)
    fd = np.empty_like(v0)
    for i in range(len(v0)):
        h = 1e-5 * max(1.0, abs(v0[i]))
        a, b = v0.copy(), v0.copy()
        a[i] += h
        b[i] -= h
        fa, _ = elbo_minibatch(set_params(model, unflatten(a, p)), X, z, N_t, grad=False)
        fb, _ = elbo_minibatch(set_params(model, unflatten(b, p)), X, z, N_t, grad=False)
        fd[i] = (fa - fb) / (2 * h)
    scale = max(1.0, float(np.max(np.abs(fd))))
    return np.abs(fd - gv) / np.maximum(np.abs(fd), 1e-3 * scale)


def test_elbo_gradient_gate():
    rng = np.random.default_rng(7)
    X, z = toy(30, seed=2, noise=0.1)
    X = X + np.column_stack([np.zeros(30), rng.uniform(-1, 1, 30)])
    worst = 0.0
    for _ in range(10):
        m0, p = random_model(rng, rng.uniform(0, 10, (6, 2)), c=rng.normal())
        worst = max(worst, float(fd_relative_errors(m0, p, X, z, N_t=90).max()))
    assert worst < 1e-4


def test_elbo_permutation_invariant(rng):
    X, z = toy(40, seed=4, noise=0.1)
    m0, p = random_model(rng, rng.uniform(0, 10, (7, 2)))
    model = set_params(m0, p)
    perm = rng.permutation(40)
    a, _ = elbo_minibatch(model, X, z, 100, grad=False)
    b, _ = elbo_minibatch(model, X[perm], z[perm], 100, grad=False)
    assert a == pytest.approx(b, rel=1e-12)


def test_dense_oracle_agreement():
    X, z = toy(30, seed=5)
    kern, sn2 = KernelParams(1.0, 2.0), 1e-6
    model = optimal_variational(init_model(X, kern, sn2), X, z)
    Xs = np.column_stack([np.linspace(0.2, 9.8, 57), np.zeros(57)])
    mu, var = model.predict(Xs)
    mu_o, var_o, lml = dense_gp(X, z, Xs, 1.0, 2.0, sn2)
    assert np.max(np.abs(mu - mu_o)) <= 1e-3 * np.max(np.abs(mu_o))
    elbo, _ = elbo_minibatch(model, X, z, N_t=30, grad=False)
    assert elbo <= lml + 1e-6 * abs(lml)
    assert abs(lml - elbo) < 0.01 * abs(lml)


def test_optimal_variational_is_stationary(rng):
    X, z = toy(25, seed=6, noise=0.05)
    model = optimal_variational(init_model(rng.uniform(0, 10, (8, 2)) * [1, 0],
                                           KernelParams(1.0, 2.0), 0.01), X, z)
    _, g = elbo_minibatch(model, X, z, N_t=25)
    assert np.max(np.abs(g["m"])) < 1e-5
    assert np.max(np.abs(g["L_off"])) < 1e-5


# predict

def test_reversion_to_prior(rng):
    X, z = toy(30, seed=1)
    model = optimal_variational(init_model(X, KernelParams(0.8, 1.5), 0.01, mean_const=-3.0), X, z)
    mu, var = model.predict([[1000.0, 1000.0]])
    assert mu[0] == pytest.approx(-3.0, abs=1e-6)
    assert var[0] == pytest.approx(0.8, rel=0.01)
    assert model.prior_mean == -3.0 and model.prior_std == pytest.approx(math.sqrt(0.8))


def test_predict_variance_nonnegative_and_observation_noise(rng):
    X, z = toy(30, seed=1)
    model = optimal_variational(init_model(X, KernelParams(1.0, 2.0), 1e-6), X, z)
    Xs = np.column_stack([rng.uniform(-5, 15, 500), rng.uniform(-3, 3, 500)])
    _, var = model.predict(Xs)
    assert np.all(var >= 0)
    _, var_obs = model.predict(Xs, observation=True)
    assert np.allclose(var_obs - var, 1e-6)


def test_convergence_on_toy():
    X, z = toy(30, seed=8, noise=0.02)
    rng = np.random.default_rng(0)
    Z = np.column_stack([np.linspace(0, 10, 15), np.zeros(15)])
    model = init_model(Z, KernelParams(1.0, 2.0), 0.05, mean_const=float(z.mean()))
    buf = TrainBuffer(100)
    buf.add(X, z)
    tr = SvgpTrainer(model, TrainConfig(minibatch=30, learning_rate=0.02), rng)
    for _ in range(2000):
        tr.train_step(buf)
    Xh, zh = toy(40, seed=9)
    keep = (Xh[:, 0] > X[:, 0].min()) & (Xh[:, 0] < X[:, 0].max())
    mu, _ = tr.model.predict(Xh[keep])
    rmse = math.sqrt(np.mean((mu - zh[keep]) ** 2))
    assert rmse < 0.05 * (z.max() - z.min())
    # noiseless consistency at inducing inputs
    mu_z, var_z = tr.model.predict(tr.model.Z)
    target = np.sin(tr.model.Z[:, 0]) + 0.3 * tr.model.Z[:, 0]
    inside = (tr.model.Z[:, 0] > 0.5) & (tr.model.Z[:, 0] < 9.5)
    resid = np.abs(mu_z - target)[inside]
    assert np.all(resid <= 3 * np.sqrt(var_z[inside] + tr.model.noise_variance))


# training

def test_zero_learning_rate_leaves_model(rng):
    X, z = toy(20)
    model = init_model(X[:5], KernelParams(1.0, 2.0), 0.1)
    buf = TrainBuffer(50)
    buf.add(X, z)
    tr = SvgpTrainer(model, TrainConfig(minibatch=8, learning_rate=0.0), rng)
    new = tr.train_step(buf)
    for k, v in get_params(model).items():
        assert np.array_equal(v, get_params(new)[k])
    assert new.n_seen == 20


def test_zero_omega_reproduces_deterministic_training():
    X, z = toy(60, seed=3, noise=0.05)
    Z = X[::6]

    def run(omega, ui):
        buf = TrainBuffer(100)
        buf.add(X, z, omega)
        tr = SvgpTrainer(init_model(Z, KernelParams(1.0, 2.0), 0.05),
                         TrainConfig(minibatch=16, uncertain_inputs=ui), np.random.default_rng(11))
        return [flatten(get_params(tr.train_step(buf))) for _ in range(30)]

    a = run(np.zeros((60, 2, 2)), True)
    b = run(None, False)
    c = run(np.zeros((60, 2, 2)), True)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert all(np.array_equal(x, y) for x, y in zip(a, c))


def test_nonfinite_elbo_rejected_then_raises():
    model = init_model(np.zeros((1, 2)), KernelParams(1.0, 1.0), 0.1)
    tr = SvgpTrainer(model, TrainConfig(minibatch=1, max_retries=5), np.random.default_rng(0))
    bad = np.array([[np.nan, 0.0]])
    for i in range(5):
        assert tr.step_on(bad, np.array([0.0]), 1) is model
        assert tr.lr == pytest.approx(1e-2 * 0.5 ** (i + 1))
    with pytest.raises(SvgpError):
        tr.step_on(bad, np.array([0.0]), 1)


def test_buffer_ring_and_counts(rng):
    buf = TrainBuffer(5)
    buf.add(np.arange(14).reshape(7, 2), np.arange(7.0))
    assert len(buf) == 5 and buf.total_seen == 7
    assert sorted(buf.z[:5]) == [2, 3, 4, 5, 6]
    idx = buf.sample_indices(8, rng)
    assert len(idx) == 8 and idx.max() < 5
    with pytest.raises(ValueError):
        TrainBuffer(2).sample_indices(3, rng)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(minibatch=0)
    with pytest.raises(ValueError):
        TrainConfig(optimizer="rmsprop")


# snapshots and checkpoints

def test_snapshot_isolation(rng):
    X, z = toy(40, noise=0.05)
    model = init_model(X[::4], KernelParams(1.0, 2.0), 0.05)
    buf = TrainBuffer(100)
    buf.add(X, z)
    tr = SvgpTrainer(model, TrainConfig(minibatch=16), rng)
    tr.train_step(buf)
    snap = tr.model.snapshot()
    Xs = rng.uniform(0, 10, (20, 2))
    before = snap.predict(Xs)
    assert np.array_equal(before[0], tr.model.predict(Xs)[0])
    for _ in range(10):
        tr.train_step(buf)
    after = snap.predict(Xs)
    assert np.array_equal(before[0], after[0]) and np.array_equal(before[1], after[1])
    assert not np.array_equal(after[0], tr.model.predict(Xs)[0])
    assert np.array_equal(snap.snapshot().predict(Xs)[0], after[0])
    with pytest.raises(ValueError):
        snap.var_mean[0] = 1.0


def test_model_size_independent_of_data(rng):
    Z = rng.uniform(0, 10, (16, 2))
    small = init_model(Z, KernelParams(1.0, 2.0), 0.05)
    buf = TrainBuffer(100_000)
    X = rng.uniform(0, 10, (50_000, 2))
    buf.add(X, np.sin(X[:, 0]))
    tr = SvgpTrainer(small, TrainConfig(minibatch=64), rng)
    big = tr.train_step(buf)
    assert big.n_seen == 50_000
    assert big.nbytes() == small.nbytes()


def test_checkpoint_roundtrip(tmp_path, rng):
    m0, p = random_model(rng, rng.uniform(0, 10, (9, 2)))
    model = set_params(m0, p, n_seen=1234)
    save_checkpoint(model, tmp_path / "m.npz")
    back = load_checkpoint(tmp_path / "m.npz")
    Xs = rng.uniform(-5, 15, (30, 2))
    assert back.n_seen == 1234
    for a, b in zip(model.predict(Xs), back.predict(Xs)):
        assert np.array_equal(a, b)


def test_inducing_grid(rng):
    Z = inducing_grid((0, 0, 100, 50), 250, rng)
    assert Z.shape == (250, 2)
    assert np.all((Z[:, 0] >= 0) & (Z[:, 0] <= 100) & (Z[:, 1] >= 0) & (Z[:, 1] <= 50))
    assert len(np.unique(Z, axis=0)) == 250


def test_invalid_model_rejected():
    with pytest.raises(ValueError):
        SvgpModel(np.zeros((2, 2)), np.zeros(2), -np.eye(2), KernelParams(1, 1), 0.1)
    with pytest.raises(ValueError):
        SvgpModel(np.zeros((2, 2)), np.zeros(2), np.eye(2), KernelParams(1, 1), 0.0)
