"""Streaming sparse variational GP regression with uncertain inputs.

The model is the standard non-whitened SVGP: inducing outputs
``u = f(Z) - c`` with prior ``N(0, Kzz)`` and variational posterior
``q(u) = N(m, S)``, ``S = L L^T``.  A constant prior mean ``c`` lets
unobserved seabed revert to the surveyed mean depth.  The minibatch
ELBO is maximised with analytic gradients; training inputs are
resampled from their input covariance at every step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.spatial.distance import cdist

SQRT5 = math.sqrt(5.0)
JITTER_LADDER = (1e-6, 1e-5, 1e-4, 1e-3, 1e-2)
CHECKPOINT_VERSION = 1


class SvgpError(RuntimeError):
    pass


@dataclass(frozen=True)
class KernelParams:
    signal_variance: float
    lengthscale: float
    nu: float = 2.5

    def __post_init__(self):
        if not self.signal_variance > 0 or not self.lengthscale > 0:
            raise ValueError("kernel signal_variance and lengthscale must be positive")
        if self.nu != 2.5:
            raise ValueError("only the Matern nu=5/2 kernel is implemented")


def matern52(a, b, k: KernelParams) -> float:
    r = float(np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))
    t = SQRT5 * r / k.lengthscale
    return k.signal_variance * (1.0 + t + t * t / 3.0) * math.exp(-t)


def matern52_matrix(A: np.ndarray, B: np.ndarray, k: KernelParams) -> np.ndarray:
    t = (SQRT5 / k.lengthscale) * cdist(np.atleast_2d(A), np.atleast_2d(B))
    return k.signal_variance * (1.0 + t + t * t / 3.0) * np.exp(-t)


def _kernel_with_grads(A, B, sf2, ell):
    """Kernel matrix plus its log-lengthscale derivative and the factor
    ``D`` such that ``dk(p, q)/dp = -D * (p - q)``."""
    t = (SQRT5 / ell) * cdist(A, B)
    e = np.exp(-t)
    K = sf2 * (1.0 + t + t * t / 3.0) * e
    dK_dlogell = sf2 * t * t * (1.0 + t) / 3.0 * e
    D = sf2 * (5.0 / (3.0 * ell * ell)) * (1.0 + t) * e
    return K, dK_dlogell, D


def _chol_jittered(K: np.ndarray, sf2: float, base: float = 0.0):
    """Cholesky with the escalating jitter policy; returns ``(L, jitter)``
    where ``jitter`` is relative to ``sf2``."""
    n = K.shape[0]
    ladder = ((base,) if base > 0 else (0.0,)) + tuple(j for j in JITTER_LADDER if j > base)
    for jit in ladder:
        try:
            return cholesky(K + jit * sf2 * np.eye(n), lower=True), jit
        except LinAlgError:
            continue
    raise SvgpError("inducing covariance not positive definite even with jitter 1e-2")


@dataclass(frozen=True, eq=False)
class SvgpModel:
    Z: np.ndarray
    var_mean: np.ndarray
    var_chol: np.ndarray
    kernel: KernelParams
    noise_variance: float
    mean_const: float = 0.0
    n_seen: int = 0
    jitter: float = 0.0

    def __post_init__(self):
        Z = np.array(self.Z, dtype=float).reshape(-1, 2)
        u = len(Z)
        m = np.array(self.var_mean, dtype=float).reshape(u)
        L = np.tril(np.array(self.var_chol, dtype=float).reshape(u, u))
        if np.any(np.diag(L) <= 0):
            raise ValueError("variational Cholesky factor needs a positive diagonal")
        if not self.noise_variance > 0:
            raise ValueError("noise_variance must be positive")
        for name, arr in (("Z", Z), ("var_mean", m), ("var_chol", L)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def num_inducing(self) -> int:
        return len(self.Z)

    @property
    def prior_mean(self) -> float:
        return self.mean_const

    @property
    def prior_std(self) -> float:
        return math.sqrt(self.kernel.signal_variance)

    @cached_property
    def _factors(self):
        sf2 = self.kernel.signal_variance
        Kzz = matern52_matrix(self.Z, self.Z, self.kernel)
        Lz, _ = _chol_jittered(Kzz, sf2, self.jitter)
        w_mean = solve_triangular(Lz, self.var_mean, lower=True)
        W = solve_triangular(Lz, self.var_chol, lower=True)
        return Lz, w_mean, W

    def predict(self, X, observation: bool = False):
        """Posterior mean and variance of the latent surface at ``X``.

        With ``observation=True`` the noise variance is added.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Lz, w_mean, W = self._factors
        Kzx = matern52_matrix(self.Z, X, self.kernel)
        V = solve_triangular(Lz, Kzx, lower=True)
        mean = self.mean_const + V.T @ w_mean
        var = (self.kernel.signal_variance - np.einsum("ij,ij->j", V, V)
               + np.einsum("ij,ij->j", W.T @ V, W.T @ V))
        var = np.maximum(var, 0.0)
        if observation:
            var = var + self.noise_variance
        return mean, var

    def snapshot(self) -> "SvgpModel":
        return replace(self, Z=self.Z.copy(), var_mean=self.var_mean.copy(),
                       var_chol=self.var_chol.copy())

    def nbytes(self) -> int:
        return self.Z.nbytes + self.var_mean.nbytes + self.var_chol.nbytes

    def conditioned(self, X, y=None, noise: float | None = None) -> "SvgpModel":
        """Exact Gaussian update of ``q(u)`` on extra (pseudo-)observations.

        With ``y`` omitted the current posterior mean is used as the target,
        which leaves the mean unchanged and only contracts the variance.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if len(X) == 0:
            return self.snapshot()
        noise = self.noise_variance if noise is None else float(noise)
        Lz, _, _ = self._factors
        Kzx = matern52_matrix(self.Z, X, self.kernel)
        A = cho_solve((Lz, True), Kzx).T                      # (n, u)
        S = self.var_chol @ self.var_chol.T
        resid_var = np.maximum(self.kernel.signal_variance
                               - np.einsum("ij,ji->i", A, Kzx), 0.0)
        AS = A @ S
        G = AS @ A.T + np.diag(noise + resid_var)
        Lg = cholesky(G, lower=True)
        H = cho_solve((Lg, True), AS)                           # G^{-1} A S
        S_new = S - AS.T @ H
        S_new = 0.5 * (S_new + S_new.T)
        m_new = self.var_mean
        if y is not None:
            mu = self.mean_const + A @ self.var_mean
            m_new = self.var_mean + H.T @ (np.asarray(y, dtype=float) - mu)
        L_new, _ = _chol_jittered(S_new, float(np.mean(np.diag(S_new))) + 1e-300, 0.0)
        return replace(self, var_mean=m_new, var_chol=L_new)


def inducing_grid(extent, u: int, rng: np.random.Generator, jitter: float = 0.25) -> np.ndarray:
    """``u`` points on a jittered regular grid covering ``extent``."""
    xmin, ymin, xmax, ymax = extent
    w, h = xmax - xmin, ymax - ymin
    nx = max(1, int(math.ceil(math.sqrt(u * w / h))))
    ny = max(1, int(math.ceil(u / nx)))
    dx, dy = w / nx, h / ny
    gx, gy = np.meshgrid(xmin + dx * (np.arange(nx) + 0.5), ymin + dy * (np.arange(ny) + 0.5))
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    if len(pts) > u:
        pts = pts[np.sort(rng.choice(len(pts), size=u, replace=False))]
    pts = pts + rng.uniform(-jitter, jitter, size=pts.shape) * np.array([dx, dy])
    return pts


def init_model(Z, kernel: KernelParams, noise_variance: float,
               mean_const: float = 0.0, jitter: float = 0.0) -> SvgpModel:
    """Model whose variational posterior equals the prior."""
    Z = np.asarray(Z, dtype=float)
    Kzz = matern52_matrix(Z, Z, kernel)
    Lz, jit = _chol_jittered(Kzz, kernel.signal_variance, jitter)
    return SvgpModel(Z=Z, var_mean=np.zeros(len(Z)), var_chol=Lz, kernel=kernel,
                     noise_variance=noise_variance, mean_const=mean_const, jitter=jit)


# ---------------------------------------------------------------------------
# free parameters

PARAM_NAMES = ("Z", "m", "L_off", "L_logdiag", "log_sf2", "log_ell", "log_sn2", "mean")


def get_params(model: SvgpModel) -> dict[str, np.ndarray]:
    L = model.var_chol
    rows, cols = np.tril_indices(model.num_inducing, -1)
    return {
        "Z": model.Z.copy(),
        "m": model.var_mean.copy(),
        "L_off": L[rows, cols].copy(),
        "L_logdiag": np.log(np.diag(L)),
        "log_sf2": np.array(math.log(model.kernel.signal_variance)),
        "log_ell": np.array(math.log(model.kernel.lengthscale)),
        "log_sn2": np.array(math.log(model.noise_variance)),
        "mean": np.array(float(model.mean_const)),
    }


def set_params(model: SvgpModel, p: dict[str, np.ndarray], n_seen: int | None = None) -> SvgpModel:
    u = len(p["m"])
    L = np.zeros((u, u))
    rows, cols = np.tril_indices(u, -1)
    L[rows, cols] = p["L_off"]
    L[np.diag_indices(u)] = np.exp(p["L_logdiag"])
    kernel = KernelParams(float(np.exp(p["log_sf2"])), float(np.exp(p["log_ell"])))
    return SvgpModel(Z=p["Z"], var_mean=p["m"], var_chol=L, kernel=kernel,
                     noise_variance=float(np.exp(p["log_sn2"])), mean_const=float(p["mean"]),
                     n_seen=model.n_seen if n_seen is None else n_seen, jitter=model.jitter)


def flatten(p: dict[str, np.ndarray]) -> np.ndarray:
    return np.concatenate([np.ravel(p[k]) for k in PARAM_NAMES])


def unflatten(vec: np.ndarray, like: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    out, i = {}, 0
    for k in PARAM_NAMES:
        n = np.size(like[k])
        out[k] = np.asarray(vec[i:i + n]).reshape(np.shape(like[k]))
        i += n
    return out


# ---------------------------------------------------------------------------
# objective

def kl_divergence(model: SvgpModel) -> float:
    """KL[q(u) || p(u)] between the variational posterior and the prior."""
    Kzz = matern52_matrix(model.Z, model.Z, model.kernel)
    Lz, jit = _chol_jittered(Kzz, model.kernel.signal_variance, model.jitter)
    L = model.var_chol
    u = model.num_inducing
    LzinvL = solve_triangular(Lz, L, lower=True)
    alpha_w = solve_triangular(Lz, model.var_mean, lower=True)
    return 0.5 * (np.sum(LzinvL**2) + alpha_w @ alpha_w - u
                  + 2 * np.sum(np.log(np.diag(Lz))) - 2 * np.sum(np.log(np.diag(L))))


def elbo_minibatch(model: SvgpModel, X, z, N_t: int | None = None, grad: bool = True):
    """Minibatch ELBO ``(N_t / M) * sum_j E_q[log p(z_j | f_j)] - KL``.

    Returns ``(value, grads)``; ``grads`` maps the names of
    :func:`get_params` to gradients of the value (``None`` if
    ``grad=False``).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    z = np.asarray(z, dtype=float).ravel()
    M = len(z)
    if M == 0:
        raise ValueError("empty minibatch")
    N_t = M if N_t is None else N_t
    scale = N_t / M
    Z, m, L = model.Z, model.var_mean, model.var_chol
    u = len(Z)
    sf2, ell = model.kernel.signal_variance, model.kernel.lengthscale
    sn2, c = model.noise_variance, model.mean_const

    Kzz, dKzz_l, Dzz = _kernel_with_grads(Z, Z, sf2, ell)
    Lz, jit = _chol_jittered(Kzz, sf2, model.jitter)
    Kzz = Kzz + jit * sf2 * np.eye(u)
    Kinv = cho_solve((Lz, True), np.eye(u))
    Kinv = 0.5 * (Kinv + Kinv.T)
    S = L @ L.T
    alpha = Kinv @ m

    Kxz, dKxz_l, Dxz = _kernel_with_grads(X, Z, sf2, ell)
    # triangular solves instead of Kinv products keep v accurate when it is tiny
    V = solve_triangular(Lz, Kxz.T, lower=True)
    LzinvL = solve_triangular(Lz, L, lower=True)
    WV = LzinvL.T @ V
    mu = c + V.T @ solve_triangular(Lz, m, lower=True)
    v = sf2 - np.einsum("ij,ij->j", V, V) + np.einsum("ij,ij->j", WV, WV)
    r = z - mu
    exp_ll = -0.5 * math.log(2 * math.pi * sn2) - (r * r + v) / (2 * sn2)

    kl = 0.5 * (np.sum(LzinvL**2) + m @ alpha - u
                + 2 * np.sum(np.log(np.diag(Lz))) - 2 * np.sum(np.log(np.diag(L))))
    value = float(scale * np.sum(exp_ll) - kl)
    if not grad:
        return value, None

    g_mu = scale * r / sn2
    g_v = -scale / (2 * sn2)

    beta = Kinv @ (Kxz.T @ g_mu)
    g_m = beta - alpha

    P = Kxz.T @ Kxz
    KPK = Kinv @ P @ Kinv
    g_L = 2 * g_v * (KPK @ L) - (Kinv @ L)
    g_L[np.diag_indices(u)] += 1.0 / np.diag(L)
    g_L = np.tril(g_L)

    A = solve_triangular(Lz, V, lower=True, trans="T").T
    SK = S @ Kinv
    G_xz = np.outer(g_mu, alpha) + 2 * g_v * (A @ (SK - np.eye(u)))
    T = KPK @ SK
    G_zz = (-np.outer(beta, alpha)
            + g_v * (KPK - T - T.T)
            + 0.5 * (Kinv @ SK + np.outer(alpha, alpha) - Kinv))

    g_logsf2 = np.sum(G_zz * Kzz) + np.sum(G_xz * Kxz) + g_v * M * sf2
    g_logell = np.sum(G_zz * dKzz_l) + np.sum(G_xz * dKxz_l)
    g_logsn2 = scale * np.sum(-0.5 + (r * r + v) / (2 * sn2))
    g_mean = np.sum(g_mu)

    Wxz = G_xz * Dxz
    gZ = Wxz.T @ X - Wxz.sum(axis=0)[:, None] * Z
    Wzz = (G_zz + G_zz.T) * Dzz
    gZ -= Wzz.sum(axis=1)[:, None] * Z - Wzz @ Z

    rows, cols = np.tril_indices(u, -1)
    grads = {
        "Z": gZ,
        "m": g_m,
        "L_off": g_L[rows, cols],
        "L_logdiag": np.diag(g_L) * np.diag(L),
        "log_sf2": np.array(g_logsf2),
        "log_ell": np.array(g_logell),
        "log_sn2": np.array(g_logsn2),
        "mean": np.array(g_mean),
    }
    return value, grads


def optimal_variational(model: SvgpModel, X, z) -> SvgpModel:
    """Closed-form maximiser of the full-batch ELBO over ``q(u)``.

    Hyperparameters, inducing inputs and mean constant stay fixed.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    z = np.asarray(z, dtype=float).ravel() - model.mean_const
    sf2, sn2 = model.kernel.signal_variance, model.noise_variance
    Kzz = matern52_matrix(model.Z, model.Z, model.kernel)
    Lz, jit = _chol_jittered(Kzz, sf2, model.jitter)
    Kzx = matern52_matrix(model.Z, X, model.kernel)
    Abar = solve_triangular(Lz, Kzx, lower=True)
    Lam = np.eye(len(Lz)) + Abar @ Abar.T / sn2
    Ll = cholesky(Lam, lower=True)
    # S = Lz Lam^{-1} Lz^T, m = Lz Lam^{-1} Abar z / sn2
    T = solve_triangular(Ll, Lz.T, lower=True)
    S = T.T @ T
    m = Lz @ cho_solve((Ll, True), Abar @ z) / sn2
    L, _ = _chol_jittered(0.5 * (S + S.T), float(np.mean(np.diag(S))), 0.0)
    return replace(model, var_mean=m, var_chol=L, jitter=jit)


# ---------------------------------------------------------------------------
# data buffer and uncertain-input sampling

class TrainBuffer:
    """Ring buffer of ``(input, target, omega)`` beams."""

    def __init__(self, capacity: int = 200_000):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.X = np.empty((capacity, 2))
        self.z = np.empty(capacity)
        self.omega = np.empty((capacity, 2, 2))
        self.size = 0
        self.total_seen = 0
        self._head = 0

    def __len__(self) -> int:
        return self.size

    def add(self, X, z, omega=None) -> None:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        z = np.asarray(z, dtype=float).ravel()
        n = len(z)
        if omega is None:
            omega = np.zeros((n, 2, 2))
        omega = np.asarray(omega, dtype=float).reshape(n, 2, 2)
        if n > self.capacity:
            X, z, omega = X[-self.capacity:], z[-self.capacity:], omega[-self.capacity:]
        k = len(z)
        idx = (self._head + np.arange(k)) % self.capacity
        self.X[idx], self.z[idx], self.omega[idx] = X, z, omega
        self._head = (self._head + k) % self.capacity
        self.size = min(self.size + k, self.capacity)
        self.total_seen += n

    def add_ping(self, ping) -> None:
        self.add(ping.positions[:, :2], ping.positions[:, 2], ping.omegas)

    def sample_indices(self, M: int, rng: np.random.Generator) -> np.ndarray:
        if self.size == 0:
            raise ValueError("buffer is empty")
        if self.size <= M:
            return rng.integers(0, self.size, size=M)
        return rng.choice(self.size, size=M, replace=False)


def sample_ui_batch(X, omega, rng: np.random.Generator) -> np.ndarray:
    """One draw per beam from ``N(x_j, Omega_j)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    om = np.asarray(omega, dtype=float).reshape(len(X), 2, 2)
    eps = rng.standard_normal(X.shape)
    a, b, d = om[:, 0, 0], 0.5 * (om[:, 0, 1] + om[:, 1, 0]), om[:, 1, 1]
    with np.errstate(invalid="ignore", divide="ignore"):
        l11 = np.sqrt(a)
        l21 = b / l11
        l22sq = d - l21 * l21
    ok = (a > 0) & np.isfinite(l21) & (l22sq >= 0)
    # diagonal square root where the 2x2 Cholesky breaks down
    l11 = np.where(ok, l11, np.sqrt(np.maximum(a, 0.0)))
    l21 = np.where(ok, l21, 0.0)
    l22 = np.where(ok, np.sqrt(np.where(ok, l22sq, 0.0)), np.sqrt(np.maximum(d, 0.0)))
    dx = l11 * eps[:, 0]
    dy = l21 * eps[:, 0] + l22 * eps[:, 1]
    return X + np.column_stack([dx, dy])


# ---------------------------------------------------------------------------
# training

@dataclass
class TrainConfig:
    minibatch: int = 1024
    learning_rate: float = 1e-2
    steps_per_ping: float = 1.0
    optimizer: str = "adam"
    seed: int = 0
    buffer_capacity: int = 200_000
    uncertain_inputs: bool = True
    train_hyper: bool = True
    train_inducing: bool = True
    max_retries: int = 5

    def __post_init__(self):
        if self.minibatch < 1:
            raise ValueError("minibatch must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.steps_per_ping < 0:
            raise ValueError("steps_per_ping must be non-negative")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")


@dataclass
class _AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


class SvgpTrainer:
    """Single writer of a model; ascends the ELBO one minibatch at a time.

    Minibatch selection and input resampling use separate generators so
    that zero input covariance reproduces deterministic-input training.
    """

    BETA1, BETA2, EPS = 0.9, 0.999, 1e-8

    def __init__(self, model: SvgpModel, cfg: TrainConfig, rng: np.random.Generator | None = None):
        self.model = model
        self.cfg = cfg
        root = np.random.default_rng(cfg.seed) if rng is None else rng
        self.batch_rng, self.ui_rng = root.spawn(2)
        self.lr = cfg.learning_rate
        self._adam = _AdamState()
        self._failures = 0
        self.steps = 0
        self.last_elbo = float("nan")

    def _frozen(self) -> set[str]:
        frozen = set()
        if not self.cfg.train_hyper:
            frozen |= {"log_sf2", "log_ell", "log_sn2", "mean"}
        if not self.cfg.train_inducing:
            frozen.add("Z")
        return frozen

    def train_step(self, buffer: TrainBuffer) -> SvgpModel:
        if len(buffer) == 0:
            raise ValueError("cannot train on an empty buffer")
        idx = buffer.sample_indices(self.cfg.minibatch, self.batch_rng)
        X, z = buffer.X[idx], buffer.z[idx]
        if self.cfg.uncertain_inputs:
            X = sample_ui_batch(X, buffer.omega[idx], self.ui_rng)
        return self.step_on(X, z, buffer.total_seen)

    def step_on(self, X, z, N_t: int) -> SvgpModel:
        try:
            value, grads = elbo_minibatch(self.model, X, z, N_t)
            finite = np.isfinite(value) and all(np.all(np.isfinite(g)) for g in grads.values())
        except (SvgpError, LinAlgError, FloatingPointError, ValueError):
            finite = False
        if not finite:
            self._failures += 1
            self.lr *= 0.5
            if self._failures > self.cfg.max_retries:
                raise SvgpError(f"ELBO non-finite after {self.cfg.max_retries} learning-rate halvings")
            return self.model
        self._failures = 0
        self.last_elbo = value
        params = get_params(self.model)
        for k in self._frozen():
            grads[k] = np.zeros_like(grads[k])
        new = self._update(params, grads)
        try:
            candidate = set_params(self.model, new, n_seen=N_t)
            candidate._factors  # noqa: B018 - reject steps that break the factorisation
        except (ValueError, SvgpError, LinAlgError):
            self._failures += 1
            self.lr *= 0.5
            if self._failures > self.cfg.max_retries:
                raise SvgpError("parameter update repeatedly produced an invalid model") from None
            return self.model
        self.model = candidate
        self.steps += 1
        return self.model

    def _update(self, params, grads):
        lr = self.lr
        if self.cfg.optimizer == "sgd":
            return {k: params[k] + lr * grads[k] for k in params}
        st = self._adam
        st.t += 1
        out = {}
        for k in params:
            g = grads[k]
            m = st.m.get(k, np.zeros_like(g))
            v = st.v.get(k, np.zeros_like(g))
            m = self.BETA1 * m + (1 - self.BETA1) * g
            v = self.BETA2 * v + (1 - self.BETA2) * g * g
            st.m[k], st.v[k] = m, v
            mhat = m / (1 - self.BETA1**st.t)
            vhat = v / (1 - self.BETA2**st.t)
            out[k] = params[k] + lr * mhat / (np.sqrt(vhat) + self.EPS)
        return out


# ---------------------------------------------------------------------------
# checkpoints

def save_checkpoint(model: SvgpModel, path) -> None:
    with open(path, "wb") as fh:
        np.savez(fh, version=CHECKPOINT_VERSION, Z=model.Z, var_mean=model.var_mean,
                 var_chol=model.var_chol,
                 scalars=np.array([model.kernel.signal_variance, model.kernel.lengthscale,
                                   model.kernel.nu, model.noise_variance, model.mean_const,
                                   model.jitter]),
                 n_seen=np.array(model.n_seen))


def load_checkpoint(path) -> SvgpModel:
    with np.load(Path(path)) as data:
        if int(data["version"]) != CHECKPOINT_VERSION:
            raise SvgpError(f"unsupported checkpoint version {int(data['version'])}")
        sf2, ell, nu, sn2, c, jit = (float(v) for v in data["scalars"])
        return SvgpModel(Z=data["Z"], var_mean=data["var_mean"], var_chol=data["var_chol"],
                         kernel=KernelParams(sf2, ell, nu), noise_variance=sn2,
                         mean_const=c, n_seen=int(data["n_seen"]), jitter=jit)
