"""Comparison algorithms operating on flattened grid samples.

All fitters take ``points`` of shape ``(N, dim)`` and scalar ``targets`` of
length ``N`` in presentation order, and return a :class:`KrlsModel`.  The
online methods are single-pass and deterministic for a fixed order.
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, fields
from typing import Optional

import numpy as np

from .kernels import as_points, gaussian, kernel_matrix, space_time
from .solver import KrlsModel, krls_fit, online_krls_init, online_krls_update

__all__ = [
    "Method",
    "BaselineConfig",
    "COEFFICIENTS",
    "HKRLS_SIGMAS",
    "coefficient_config",
    "presentation_order",
    "fit_full_krls",
    "fit_sparse_krls",
    "fit_sliding_window_krls",
    "fit_fixed_budget_krls",
    "fit_norma",
    "fit_qklms",
    "fit_nonstill_krls",
    "fit_baseline",
]


class Method(str, enum.Enum):
    FULL_KRLS = "full_krls"
    SPARSE_KRLS = "sparse_krls"
    SLIDING_WINDOW_KRLS = "sw_krls"
    FIXED_BUDGET_KRLS = "fb_krls"
    NORMA = "norma"
    QKLMS = "qklms"
    NONSTILL_KRLS = "nonstill_krls"


LABELS = {
    Method.FULL_KRLS: "KRLS",
    Method.SPARSE_KRLS: "S-KRLS",
    Method.SLIDING_WINDOW_KRLS: "SW-KRLS",
    Method.FIXED_BUDGET_KRLS: "FB-KRLS",
    Method.NORMA: "NORMA",
    Method.QKLMS: "QKLMS",
    Method.NONSTILL_KRLS: "NONSTILL-KRLS",
}


@dataclass(frozen=True)
class BaselineConfig:
    """Hyperparameters for one comparison method.

    ``window`` is the dictionary budget ``D`` (SW-KRLS window, FB-KRLS budget,
    NORMA truncation).  ``lam`` is the FB-KRLS ridge or the NORMA shrinkage;
    ``mu`` is the QKLMS step or the FB-KRLS label-update rate.
    Fields a method does not use are ignored.
    """

    method: Method
    sigma: float = 1.0
    ald_delta: float = 0.0
    window: Optional[int] = None
    reg_c: float = 0.0
    lam: float = 0.0
    mu: float = 0.0
    epsilon_q: float = 0.0
    eta: float = 0.1
    a_scale: float = 1.0
    b_scale: float = 1.0
    jitter: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        self.validate()

    def validate(self):
        m = self.method
        if m is not Method.NONSTILL_KRLS and not self.sigma > 0:
            raise ValueError(f"{m.value}: sigma must be positive")
        if m in (Method.SLIDING_WINDOW_KRLS, Method.FIXED_BUDGET_KRLS, Method.NORMA):
            if self.window is None or int(self.window) < 1:
                raise ValueError(f"{m.value}: window/budget D must be a positive integer")
        if m is Method.SPARSE_KRLS and self.ald_delta < 0:
            raise ValueError("sparse_krls: ald_delta must be nonnegative")
        if m is Method.SLIDING_WINDOW_KRLS and self.reg_c < 0:
            raise ValueError("sw_krls: reg_c must be nonnegative")
        if m is Method.FIXED_BUDGET_KRLS and (self.lam < 0 or self.mu < 0):
            raise ValueError("fb_krls: lam and mu must be nonnegative")
        if m is Method.NORMA and (self.eta <= 0 or self.lam < 0 or self.eta * self.lam >= 1):
            raise ValueError("norma: need eta > 0, lam >= 0 and eta * lam < 1")
        if m is Method.QKLMS and (self.mu <= 0 or self.epsilon_q < 0):
            raise ValueError("qklms: need mu > 0 and epsilon_q >= 0")
        if m is Method.NONSTILL_KRLS and not (self.a_scale > 0 and self.b_scale > 0):
            raise ValueError("nonstill_krls: a_scale and b_scale must be positive")
        if self.jitter is not None and self.jitter < 0:
            raise ValueError("jitter must be nonnegative")

    @property
    def label(self) -> str:
        return LABELS[self.method]

    def to_dict(self) -> dict:
        """Only the fields that the method reads."""
        used = {
            Method.FULL_KRLS: ("sigma", "jitter"),
            Method.SPARSE_KRLS: ("sigma", "ald_delta"),
            Method.SLIDING_WINDOW_KRLS: ("sigma", "window", "reg_c"),
            Method.FIXED_BUDGET_KRLS: ("sigma", "window", "lam", "mu"),
            Method.NORMA: ("sigma", "window", "eta", "lam"),
            Method.QKLMS: ("sigma", "mu", "epsilon_q"),
            Method.NONSTILL_KRLS: ("a_scale", "b_scale", "jitter"),
        }[self.method]
        d = asdict(self)
        out = {"method": self.method.value}
        out.update({k: d[k] for k in used})
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "BaselineConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown baseline option(s): {', '.join(sorted(extra))}")
        return cls(**d)


# Coefficient table per dataset column.  KRLS and NONSTILL-KRLS are not listed
# there: sigma = 1 and a' = b' = 1 are used for them.
HKRLS_SIGMAS = {
    "synth2d": (1.0, 0.3),
    "synth3d": (1.0, 0.3, 1.0),
    "intel": (1.0, 1.5),
    "polyculture": (1.0, 1.5),
}

COEFFICIENTS = {
    "synth2d": {
        Method.QKLMS: dict(sigma=1.0, mu=0.15, epsilon_q=1e-6),
        Method.FIXED_BUDGET_KRLS: dict(sigma=1.0, window=800, lam=0.1, mu=0.0),
        Method.SPARSE_KRLS: dict(sigma=1.0, ald_delta=0.01),
        Method.NORMA: dict(sigma=1.0, window=13920, eta=0.02, lam=1e-4),
        Method.SLIDING_WINDOW_KRLS: dict(sigma=1.0, window=1000, reg_c=0.01),
    },
    "synth3d": {
        Method.QKLMS: dict(sigma=0.5, mu=0.03, epsilon_q=0.0005),
        Method.FIXED_BUDGET_KRLS: dict(sigma=0.5, window=600, lam=0.01, mu=0.03),
        Method.SPARSE_KRLS: dict(sigma=1.0, ald_delta=0.99),
        Method.NORMA: dict(sigma=1.0, window=10_000, eta=0.005, lam=1e-7),
        Method.SLIDING_WINDOW_KRLS: dict(sigma=1.0, window=300, reg_c=0.01),
    },
    "intel": {
        Method.QKLMS: dict(sigma=3.5, mu=0.15, epsilon_q=1e-6),
        Method.FIXED_BUDGET_KRLS: dict(sigma=3.5, window=500, lam=0.01, mu=0.03),
        Method.SPARSE_KRLS: dict(sigma=3.5, ald_delta=0.2),
        Method.NORMA: dict(sigma=3.5, window=4160, eta=0.04, lam=1e-6),
        Method.SLIDING_WINDOW_KRLS: dict(sigma=3.5, window=1000, reg_c=0.01),
    },
    "polyculture": {
        Method.QKLMS: dict(sigma=3.5, mu=0.033, epsilon_q=0.0005),
        Method.FIXED_BUDGET_KRLS: dict(sigma=3.5, window=500, lam=0.01, mu=0.03),
        Method.SPARSE_KRLS: dict(sigma=3.5, ald_delta=0.1),
        Method.NORMA: dict(sigma=3.5, window=5800, eta=0.04, lam=1e-6),
        Method.SLIDING_WINDOW_KRLS: dict(sigma=3.5, window=1400, reg_c=0.01),
    },
}


def coefficient_config(dataset: str, method) -> BaselineConfig:
    method = Method(method)
    try:
        params = COEFFICIENTS[dataset][method]
    except KeyError:
        raise KeyError(f"no coefficients for {method.value} on {dataset!r}") from None
    return BaselineConfig(method, **params)


def presentation_order(n: int, seed: Optional[int]) -> np.ndarray:
    """Sample order for online methods: row-major indices shuffled by ``seed``."""
    idx = np.arange(n)
    if seed is None:
        return idx
    return np.random.default_rng(seed).permutation(idx)


def _samples(points, targets):
    P = as_points(points)
    y = np.asarray(targets, dtype=float).reshape(-1)
    if y.shape[0] != P.shape[0]:
        raise ValueError(f"{P.shape[0]} points but {y.shape[0]} targets")
    if y.shape[0] == 0:
        raise ValueError("no samples")
    if not np.all(np.isfinite(y)):
        raise ValueError("targets contain non-finite values")
    return P, y


def _expect(cfg: BaselineConfig, method: Method):
    if cfg.method is not method:
        raise ValueError(f"config is for {cfg.method.value}, not {method.value}")


def fit_full_krls(points, targets, cfg: BaselineConfig) -> KrlsModel:
    _expect(cfg, Method.FULL_KRLS)
    P, y = _samples(points, targets)
    return krls_fit(P, y, gaussian(cfg.sigma), cfg.jitter)


def fit_sparse_krls(points, targets, cfg: BaselineConfig) -> KrlsModel:
    """KRLS with the approximate-linear-dependency dictionary test (S-KRLS)."""
    _expect(cfg, Method.SPARSE_KRLS)
    P, y = _samples(points, targets)
    state = online_krls_init(gaussian(cfg.sigma), P[0], y[0], cfg.ald_delta)
    for t in range(1, P.shape[0]):
        online_krls_update(state, P[t], y[t])
    return state.to_model()


class _RegularizedInverse:
    """Inverse of ``K + ridge * I`` over a dictionary that grows and shrinks."""

    def __init__(self, kernel, ridge, dim, capacity):
        self.kernel = kernel
        self.ridge = ridge
        self.points = np.empty((capacity, dim))
        self.labels = np.empty(capacity)
        self.inv = np.empty((0, 0))
        self.size = 0

    def kvec(self, z):
        return kernel_matrix(self.kernel, self.points[:self.size], z[None, :])[:, 0]

    def grow(self, z, y):
        m = self.size
        kzz = kernel_matrix(self.kernel, z[None, :], z[None, :])[0, 0] + self.ridge
        if m == 0:
            self.inv = np.array([[1.0 / kzz]])
        else:
            b = self.kvec(z)
            g = self.inv @ b
            s = kzz - b @ g
            inv = np.empty((m + 1, m + 1))
            inv[:m, :m] = self.inv + np.outer(g, g) / s
            inv[:m, m] = -g / s
            inv[m, :m] = -g / s
            inv[m, m] = 1.0 / s
            self.inv = inv
        self.points[m] = z
        self.labels[m] = y
        self.size = m + 1

    def remove(self, r):
        keep = np.r_[0:r, r + 1:self.size]
        g = self.inv[keep, r]
        self.inv = self.inv[np.ix_(keep, keep)] - np.outer(g, g) / self.inv[r, r]
        self.points[r:self.size - 1] = self.points[r + 1:self.size]
        self.labels[r:self.size - 1] = self.labels[r + 1:self.size]
        self.size -= 1

    def weights(self):
        return self.inv @ self.labels[:self.size]

    def model(self, jitter) -> KrlsModel:
        return KrlsModel(self.points[:self.size].copy(), self.weights()[:, None], self.kernel,
                         float(jitter))


def fit_sliding_window_krls(points, targets, cfg: BaselineConfig) -> KrlsModel:
    """Ridge KRLS over the ``D`` most recent samples (SW-KRLS)."""
    _expect(cfg, Method.SLIDING_WINDOW_KRLS)
    P, y = _samples(points, targets)
    D = int(cfg.window)
    win = _RegularizedInverse(gaussian(cfg.sigma), cfg.reg_c, P.shape[1], D + 1)
    for t in range(P.shape[0]):
        win.grow(P[t], y[t])
        if win.size > D:
            win.remove(0)
        alpha = win.weights()
    return KrlsModel(win.points[:win.size].copy(), alpha[:, None], win.kernel, float(cfg.reg_c))


def fit_fixed_budget_krls(points, targets, cfg: BaselineConfig) -> KrlsModel:
    """Fixed-budget KRLS.

    Past the budget ``D`` the dictionary drops the point whose omission
    costs least, scored as ``|alpha_i| / [K^-1]_ii`` (the leave-one-out
    error of that point).  A sample identical to a stored point is not added
    twice.  With ``mu > 0`` stored labels move toward each new target,
    weighted by kernel similarity.
    """
    _expect(cfg, Method.FIXED_BUDGET_KRLS)
    P, y = _samples(points, targets)
    D = int(cfg.window)
    dic = _RegularizedInverse(gaussian(cfg.sigma), cfg.lam, P.shape[1], D + 1)
    for t in range(P.shape[0]):
        z = P[t]
        duplicate = dic.size and np.any(np.all(dic.points[:dic.size] == z, axis=1))
        if not duplicate:
            dic.grow(z, y[t])
            if dic.size > D:
                alpha = dic.weights()
                loo = np.abs(alpha) / np.diag(dic.inv)
                dic.remove(int(np.argmin(loo)))
        if cfg.mu > 0:
            k = dic.kvec(z)
            dic.labels[:dic.size] += cfg.mu * k * (y[t] - dic.labels[:dic.size])
    return dic.model(cfg.lam)


def fit_norma(points, targets, cfg: BaselineConfig) -> KrlsModel:
    """NORMA: stochastic gradient in feature space with shrinkage and truncation.

    Each step shrinks every coefficient by ``1 - eta * lam``, appends
    ``eta * e_t`` for the new sample and keeps only the ``D`` most recent
    terms.
    """
    _expect(cfg, Method.NORMA)
    P, y = _samples(points, targets)
    kernel = gaussian(cfg.sigma)
    D = int(cfg.window)
    shrink = 1.0 - cfg.eta * cfg.lam
    n = P.shape[0]
    alpha = np.zeros(n)
    start = 0
    for t in range(n):
        if t > start:
            k = kernel_matrix(kernel, P[start:t], P[t][None, :])[:, 0]
            err = y[t] - alpha[start:t] @ k
            alpha[start:t] *= shrink
        else:
            err = y[t]
        alpha[t] = cfg.eta * err
        if t + 1 - start > D:
            start = t + 1 - D
    return KrlsModel(P[start:].copy(), alpha[start:, None].copy(), kernel)


def fit_qklms(points, targets, cfg: BaselineConfig) -> KrlsModel:
    """Quantized kernel LMS.

    A sample within ``epsilon_q`` (Euclidean) of its nearest center adds its
    update to that center; ties go to the lowest index.  Otherwise it
    becomes a new center.
    """
    _expect(cfg, Method.QKLMS)
    P, y = _samples(points, targets)
    kernel = gaussian(cfg.sigma)
    n = P.shape[0]
    centers = np.empty_like(P)
    alpha = np.empty(n)
    centers[0] = P[0]
    alpha[0] = cfg.mu * y[0]
    m = 1
    for t in range(1, n):
        z = P[t]
        diff = centers[:m] - z
        sq = np.einsum("ij,ij->i", diff, diff)
        err = y[t] - alpha[:m] @ np.exp(sq * (-0.5 / cfg.sigma ** 2))
        j = int(np.argmin(sq))
        if np.sqrt(sq[j]) <= cfg.epsilon_q:
            alpha[j] += cfg.mu * err
        else:
            centers[m] = z
            alpha[m] = cfg.mu * err
            m += 1
    return KrlsModel(centers[:m].copy(), alpha[:m, None].copy(), kernel)


def fit_nonstill_krls(points, targets, cfg: BaselineConfig) -> KrlsModel:
    """Batch KRLS with the space-time covariance as kernel.

    ``points`` are ``(space, time)`` pairs; lags are absolute differences.
    """
    _expect(cfg, Method.NONSTILL_KRLS)
    P, y = _samples(points, targets)
    if P.shape[1] != 2:
        raise ValueError("nonstill_krls needs (space, time) samples")
    return krls_fit(P, y, space_time(cfg.a_scale, cfg.b_scale), cfg.jitter)


_FITTERS = {
    Method.FULL_KRLS: fit_full_krls,
    Method.SPARSE_KRLS: fit_sparse_krls,
    Method.SLIDING_WINDOW_KRLS: fit_sliding_window_krls,
    Method.FIXED_BUDGET_KRLS: fit_fixed_budget_krls,
    Method.NORMA: fit_norma,
    Method.QKLMS: fit_qklms,
    Method.NONSTILL_KRLS: fit_nonstill_krls,
}


def fit_baseline(points, targets, cfg: BaselineConfig) -> KrlsModel:
    return _FITTERS[cfg.method](points, targets, cfg)
