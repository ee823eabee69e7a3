"""Least-squares weight solves against Gram matrices.

Batch solves minimise ``||(K + jitter I) W - Y||^2`` with a Cholesky
factorisation (one factorisation, many right-hand sides).  The recursive
update used by the sparsified baseline grows its dictionary with the
approximate-linear-dependency (ALD) test.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .kernels import KernelConfig, as_points, cross_kernel_vector, eval_kernel, gram, kernel_matrix

log = logging.getLogger(__name__)

__all__ = [
    "SolverError",
    "default_jitter",
    "solve_psd",
    "KrlsModel",
    "krls_fit",
    "krls_predict",
    "krls_predict_many",
    "OnlineState",
    "online_krls_init",
    "online_krls_update",
]

JITTER_SCALE = 1e-8
# ALD errors at or below this are dependence, whatever the threshold
ALD_FLOOR = 1e-12


class SolverError(RuntimeError):
    """A weight solve could not be completed."""


def default_jitter(K) -> float:
    K = np.asarray(K)
    return JITTER_SCALE * float(np.trace(K)) / K.shape[0]


def _where(level) -> str:
    return "" if level is None else f" at level {level}"


def solve_psd(K, targets, jitter=None, level=None) -> np.ndarray:
    """Solve ``(K + jitter I) W = targets`` for symmetric PSD ``K``.

    Parameters
    ----------
    K : (m, m) array
        Gram matrix.
    targets : (m,) or (m, q) array
        Right-hand sides, solved together against one factorisation.
    jitter : float, optional
        Ridge added to the diagonal.  Defaults to ``1e-8 * trace(K) / m``.
    level : int, optional
        Hierarchy level, only used to label errors and log lines.

    Returns
    -------
    W : array with the shape of ``targets``

    Raises
    ------
    SolverError
        If neither the Cholesky factorisation nor the pivoted least-squares
        fallback produces a finite solution.
    """
    K = np.asarray(K, dtype=float)
    Y = np.asarray(targets, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError(f"Gram matrix must be square, got shape {K.shape}")
    m = K.shape[0]
    if Y.shape[0] != m:
        raise ValueError(f"targets have {Y.shape[0]} rows, Gram matrix is {m}x{m}")
    if jitter is None:
        jitter = default_jitter(K)
    if jitter < 0:
        raise ValueError(f"jitter must be nonnegative, got {jitter}")
    A = K + jitter * np.eye(m) if jitter else K
    try:
        W = linalg.cho_solve(linalg.cho_factor(A, lower=True, check_finite=False), Y,
                             check_finite=False)
    except linalg.LinAlgError as exc:
        log.warning("Cholesky failed%s (%s); falling back to pivoted least squares",
                    _where(level), exc)
        try:
            W = linalg.lstsq(A, Y, lapack_driver="gelsy", check_finite=False)[0]
        except (linalg.LinAlgError, ValueError) as exc2:
            raise SolverError(f"weight solve failed{_where(level)}: {exc2}") from exc2
    if not np.all(np.isfinite(W)):
        raise SolverError(f"weight solve produced non-finite weights{_where(level)}")
    return W


@dataclass(frozen=True)
class KrlsModel:
    """Flat kernel expansion ``f(z) = W^T k(dictionary, z)``.

    ``weights`` has one row per dictionary point and one column per target.
    """

    dictionary: np.ndarray
    weights: np.ndarray
    kernel: KernelConfig
    jitter: float = 0.0

    def __post_init__(self):
        if self.weights.ndim != 2 or self.weights.shape[0] != self.dictionary.shape[0]:
            raise ValueError(
                f"weights shape {self.weights.shape} does not match "
                f"{self.dictionary.shape[0]} dictionary points")

    @property
    def size(self) -> int:
        return self.dictionary.shape[0]


def krls_fit(points, targets, kernel: KernelConfig, jitter=None) -> KrlsModel:
    P = as_points(points)
    Y = np.asarray(targets, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape[0] != P.shape[0]:
        raise ValueError(f"{P.shape[0]} points but {Y.shape[0]} target rows")
    K = gram(kernel, P)
    if jitter is None:
        jitter = default_jitter(K)
    W = solve_psd(K, Y, jitter)
    return KrlsModel(P, W, kernel, float(jitter))


def krls_predict(model: KrlsModel, query) -> np.ndarray:
    return model.weights.T @ cross_kernel_vector(model.kernel, model.dictionary, query)


def krls_predict_many(model: KrlsModel, queries) -> np.ndarray:
    """Predictions at many queries, shape ``(n_queries, q)``."""
    Q = as_points(queries, "queries")
    if Q.shape[1] != model.dictionary.shape[1]:
        raise ValueError(
            f"queries have dimension {Q.shape[1]}, dictionary has {model.dictionary.shape[1]}")
    return kernel_matrix(model.kernel, Q, model.dictionary) @ model.weights


@dataclass
class OnlineState:
    """Recursive KRLS state: dictionary, inverse Gram and the P recursion.

    The state is owned by one fitting loop and mutated in place.
    """

    kernel: KernelConfig
    dictionary: np.ndarray
    gram_inverse: np.ndarray
    projection: np.ndarray
    weights: np.ndarray
    ald_threshold: float = 0.0
    n_seen: int = field(default=1)

    def to_model(self) -> KrlsModel:
        return KrlsModel(self.dictionary.copy(), self.weights[:, None].copy(), self.kernel)


def online_krls_init(kernel: KernelConfig, z, y: float, ald_threshold: float = 0.0) -> OnlineState:
    z = as_points(np.atleast_1d(np.asarray(z, dtype=float))[None, :], "z")
    if not np.isfinite(y):
        raise ValueError("target is not finite")
    if ald_threshold < 0:
        raise ValueError("ALD threshold must be nonnegative")
    kzz = eval_kernel(kernel, z[0], z[0])
    return OnlineState(
        kernel=kernel,
        dictionary=z,
        gram_inverse=np.array([[1.0 / kzz]]),
        projection=np.array([[1.0]]),
        weights=np.array([y / kzz]),
        ald_threshold=float(ald_threshold),
    )


def online_krls_update(state: OnlineState, z, y: float) -> OnlineState:
    """Absorb one sample into ``state`` and return it.

    The sample is admitted to the dictionary when its ALD error exceeds the
    threshold; otherwise only the weights move.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if not (np.all(np.isfinite(z)) and np.isfinite(y)):
        raise ValueError("non-finite sample")
    k = cross_kernel_vector(state.kernel, state.dictionary, z)
    a = state.gram_inverse @ k
    ald = eval_kernel(state.kernel, z, z) - k @ a
    err = y - k @ state.weights
    if ald > max(state.ald_threshold, ALD_FLOOR):
        m = state.dictionary.shape[0]
        Kinv = np.empty((m + 1, m + 1))
        Kinv[:m, :m] = state.gram_inverse * ald + np.outer(a, a)
        Kinv[:m, m] = -a
        Kinv[m, :m] = -a
        Kinv[m, m] = 1.0
        state.gram_inverse = Kinv / ald
        P = np.zeros((m + 1, m + 1))
        P[:m, :m] = state.projection
        P[m, m] = 1.0
        state.projection = P
        state.weights = np.concatenate([state.weights - a * (err / ald), [err / ald]])
        state.dictionary = np.vstack([state.dictionary, z[None, :]])
    else:
        Pa = state.projection @ a
        q = Pa / (1.0 + a @ Pa)
        state.projection = state.projection - np.outer(q, Pa)
        state.weights = state.weights + state.gram_inverse @ q * err
    state.n_seen += 1
    return state
