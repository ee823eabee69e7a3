"""Hierarchic kernel least-squares on full grids.

A grid dataset has ``n + 1`` coordinate axes ``x, d1, ..., dn`` and a value
at every point of their Cartesian product.  Fitting proceeds axis by axis:

* level 0 fits one kernel model over ``x`` at every sample of
  ``(d1, ..., dn)``;
* level ``i > 0`` fits the weights recorded at level ``i - 1`` as targets
  over axis ``d_i``.

Every level is a single factorisation of a small per-axis Gram matrix with
all weight columns as simultaneous right-hand sides.  The last level's
weights are kept as ``top_weight`` with shape ``(m_n, m_0 * ... * m_{n-1})``.

Weight matrices are turned into vectors by column stacking: column ``c`` of
an ``(r, s)`` matrix occupies entries ``[c * r, (c + 1) * r)``.  Applied
recursively this gives ``top_weight`` columns indexed with axis ``n - 1``
varying fastest and axis ``0`` slowest.
"""

from __future__ import annotations

import json
import time
import zipfile
from dataclasses import dataclass, field
from math import prod
from pathlib import Path
from typing import Sequence

import numpy as np

from .kernels import KernelConfig, cross_kernel_vector, gaussian, gram, kernel_matrix
from .solver import default_jitter, solve_psd

__all__ = [
    "GridDataset",
    "HkrlsModel",
    "ModelFormatError",
    "DEFAULT_SIGMAS",
    "default_kernels",
    "vectorize_weights",
    "devectorize_weights",
    "fit_2d",
    "predict_2d",
    "fit_3d",
    "predict_3d",
    "fit_general",
    "predict_general",
    "predict_grid",
    "predict_points",
    "save_model",
    "load_model",
]

DEFAULT_SIGMAS = (1.0, 0.3, 1.0)
MODEL_FORMAT = "hkrls-model"
MODEL_VERSION = 1
VECTORIZATION = "column-stack"


class ModelFormatError(ValueError):
    """A saved model file is unreadable or inconsistent."""


@dataclass(frozen=True, eq=False)
class GridDataset:
    """Coordinate axes plus a value tensor over their Cartesian product.

    ``values[i0, i1, ..., in]`` is the sample at ``(axes[0][i0], ...,
    axes[n][in])``.  Flattening with ``order="F"`` gives the first-axis-fastest
    stacking.
    """

    axes: tuple
    values: np.ndarray

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float).reshape(-1) for a in self.axes)
        values = np.asarray(self.values, dtype=float)
        if not axes:
            raise ValueError("a grid needs at least one axis")
        for k, a in enumerate(axes):
            if a.size == 0:
                raise ValueError(f"axis {k} is empty")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"axis {k} has non-finite coordinates")
            if np.any(np.diff(a) <= 0):
                raise ValueError(f"axis {k} is not strictly increasing")
        shape = tuple(a.size for a in axes)
        if values.shape != shape:
            if values.size == prod(shape):
                values = values.reshape(shape, order="F")
            else:
                raise ValueError(f"values have {values.size} entries, axes need {prod(shape)}")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return len(self.axes)

    def points(self, order: str = "F") -> np.ndarray:
        """All grid coordinates as ``(N, ndim)``, in the same order as ``flat_values``."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([g.reshape(-1, order=order) for g in mesh], axis=1)

    def flat_values(self, order: str = "F") -> np.ndarray:
        return self.values.reshape(-1, order=order)


@dataclass(frozen=True, eq=False)
class HkrlsModel:
    """Fitted hierarchy.

    Attributes
    ----------
    axes : tuple of arrays
        Training coordinates per axis.
    kernels : tuple of KernelConfig
        One kernel per axis (``k_I, k_H1, ..., k_Hn``).
    top_weight : (m_n, prod(m_0..m_{n-1})) array
        Weights recorded at the last level.
    jitter : tuple of float
        Ridge used at each level.
    level_times : tuple of float
        Seconds spent in each level's solve.
    """

    axes: tuple
    kernels: tuple
    top_weight: np.ndarray
    jitter: tuple
    level_times: tuple = field(default=())
    vectorization: str = VECTORIZATION

    def __post_init__(self):
        if len(self.kernels) != len(self.axes):
            raise ValueError(f"{len(self.kernels)} kernels for {len(self.axes)} axes")
        m = self.counts
        want = (m[-1], prod(m[:-1]))
        if self.top_weight.shape != want:
            raise ValueError(f"top_weight has shape {self.top_weight.shape}, expected {want}")

    @property
    def counts(self) -> tuple:
        return tuple(a.size for a in self.axes)

    @property
    def ndim(self) -> int:
        return len(self.axes)


def default_kernels(ndim: int, sigmas: Sequence[float] | None = None) -> tuple:
    if sigmas is None:
        if ndim > len(DEFAULT_SIGMAS):
            raise ValueError(f"no default bandwidths for {ndim} axes; pass one sigma per axis")
        sigmas = DEFAULT_SIGMAS[:ndim]
    if len(sigmas) != ndim:
        raise ValueError(f"{len(sigmas)} bandwidths given for {ndim} axes")
    return tuple(s if isinstance(s, KernelConfig) else gaussian(float(s)) for s in sigmas)


def vectorize_weights(beta) -> np.ndarray:
    """Column-stack an ``(r, s)`` weight matrix into a length ``r * s`` vector."""
    beta = np.asarray(beta)
    if beta.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {beta.shape}")
    return beta.reshape(-1, order="F")


def devectorize_weights(v, rows: int, cols: int) -> np.ndarray:
    """Inverse of :func:`vectorize_weights`."""
    v = np.asarray(v)
    if v.size != rows * cols:
        raise ValueError(f"vector of size {v.size} cannot form a {rows}x{cols} matrix")
    return v.reshape((rows, cols), order="F")


def _check_grid(data: GridDataset, ndim=None):
    if ndim is not None and data.ndim != ndim:
        raise ValueError(f"expected {ndim} axes, got {data.ndim}")
    for k, a in enumerate(data.axes):
        if a.size < 2:
            raise ValueError(f"axis {k} has {a.size} sample(s); at least 2 are required")


def _level_jitter(jitter, nlevels: int) -> list:
    if jitter is None or np.isscalar(jitter):
        return [jitter] * nlevels
    jitter = list(jitter)
    if len(jitter) != nlevels:
        raise ValueError(f"{len(jitter)} jitter values for {nlevels} levels")
    return jitter


def _axis_solve(kernel, axis, targets, jitter, level):
    K = gram(kernel, axis)
    j = default_jitter(K) if jitter is None else float(jitter)
    t0 = time.perf_counter()
    W = solve_psd(K, targets, j, level=level)
    return W, j, time.perf_counter() - t0


def fit_2d(data: GridDataset, kernels=None, jitter=None) -> HkrlsModel:
    """Two-level fit: ``rho_j`` over ``x`` at each ``d1`` sample, then ``xi`` over ``d1``."""
    _check_grid(data, 2)
    kernels = default_kernels(2, kernels)
    jit = _level_jitter(jitter, 2)
    x, d1 = data.axes
    # columns of P are the level-0 weight vectors rho_1 .. rho_m1
    P, j0, t0 = _axis_solve(kernels[0], x, data.values, jit[0], 0)
    # each row of P modelled over d1, all m0 at once
    xi, j1, t1 = _axis_solve(kernels[1], d1, P.T, jit[1], 1)
    return HkrlsModel(data.axes, kernels, xi, (j0, j1), (t0, t1))


def predict_2d(model: HkrlsModel, x_q: float, d1_q: float) -> float:
    if model.ndim != 2:
        raise ValueError(f"predict_2d needs a 2-axis model, got {model.ndim}")
    x, d1 = model.axes
    k_d1 = cross_kernel_vector(model.kernels[1], d1, d1_q)
    rho = model.top_weight.T @ k_d1
    k_x = cross_kernel_vector(model.kernels[0], x, x_q)
    return float(rho @ k_x)


def fit_3d(data: GridDataset, kernels=None, jitter=None) -> HkrlsModel:
    """Three-level fit producing ``gamma`` of shape ``(m2, m1 * m0)``."""
    _check_grid(data, 3)
    kernels = default_kernels(3, kernels)
    jit = _level_jitter(jitter, 3)
    x, d1, d2 = data.axes
    m0, m1, m2 = data.shape

    # level 0: theta[:, j, i] is the x-weight at (d1_j, d2_i)
    theta, j0, t0 = _axis_solve(kernels[0], x, data.values.reshape(m0, m1 * m2), jit[0], 0)
    theta = theta.reshape(m0, m1, m2)

    # level 1: column i of the cell (one d2 sample) gives m1 x m0 targets
    targets = np.concatenate([theta[:, :, i].T for i in range(m2)], axis=1)
    betas, j1, t1 = _axis_solve(kernels[1], d1, targets, jit[1], 1)
    omega = np.column_stack([vectorize_weights(betas[:, i * m0:(i + 1) * m0])
                             for i in range(m2)])

    # level 2: rows of omega-tilde over d2
    gamma, j2, t2 = _axis_solve(kernels[2], d2, omega.T, jit[2], 2)
    return HkrlsModel(data.axes, kernels, gamma, (j0, j1, j2), (t0, t1, t2))


def predict_3d(model: HkrlsModel, x_q: float, d1_q: float, d2_q: float) -> float:
    if model.ndim != 3:
        raise ValueError(f"predict_3d needs a 3-axis model, got {model.ndim}")
    x, d1, d2 = model.axes
    m0, m1 = x.size, d1.size
    eta = cross_kernel_vector(model.kernels[2], d2, d2_q)
    beta = devectorize_weights(model.top_weight.T @ eta, m1, m0)
    tau = cross_kernel_vector(model.kernels[1], d1, d1_q)
    vartheta = beta.T @ tau
    iota = cross_kernel_vector(model.kernels[0], x, x_q)
    return float(vartheta @ iota)


def fit_general(data: GridDataset, kernels=None, jitter=None) -> HkrlsModel:
    """Fit any number of axes.

    Parameters
    ----------
    data : GridDataset
        Grid with ``n + 1`` axes, each of length at least 2.
    kernels : sequence of float or KernelConfig, optional
        One kernel (or Gaussian bandwidth) per axis.  Defaults to
        ``DEFAULT_SIGMAS`` for up to three axes.
    jitter : float or sequence of float, optional
        Ridge per level; ``None`` picks ``1e-8 * trace(K) / m`` per level.

    With a single axis the model is plain kernel least-squares.
    """
    _check_grid(data)
    nax = data.ndim
    kernels = default_kernels(nax, kernels)
    jit = _level_jitter(jitter, nax)
    W = data.values
    used, times = [], []
    for i in range(nax):
        front = np.moveaxis(W, i, 0)
        shape = front.shape
        sol, j, t = _axis_solve(kernels[i], data.axes[i], front.reshape(shape[0], -1), jit[i], i)
        W = np.moveaxis(sol.reshape(shape), 0, i)
        used.append(j)
        times.append(t)
    top = np.ascontiguousarray(W.reshape(-1, data.shape[-1]).T)
    return HkrlsModel(data.axes, kernels, top, tuple(used), tuple(times))


def predict_general(model: HkrlsModel, query: Sequence[float]) -> float:
    """Evaluate the hierarchy at one point (one coordinate per axis)."""
    q = np.atleast_1d(np.asarray(query, dtype=float))
    if q.shape != (model.ndim,):
        raise ValueError(f"query has {q.size} coordinate(s); the model expects {model.ndim}")
    if not np.all(np.isfinite(q)):
        raise ValueError("query contains non-finite coordinates")
    n = model.ndim - 1
    k = cross_kernel_vector(model.kernels[n], model.axes[n], q[n])
    v = model.top_weight.T @ k
    for level in range(n - 1, -1, -1):
        m = model.axes[level].size
        beta = devectorize_weights(v, m, v.size // m)
        v = beta.T @ cross_kernel_vector(model.kernels[level], model.axes[level], q[level])
    return float(v[0])


def _weight_tensor(model: HkrlsModel) -> np.ndarray:
    return model.top_weight.T.reshape(model.counts)


def predict_grid(model: HkrlsModel, query_axes: Sequence) -> np.ndarray:
    """Predictions on the Cartesian product of ``query_axes``.

    Returns an array of shape ``(len(q0), ..., len(qn))``.
    """
    if len(query_axes) != model.ndim:
        raise ValueError(f"{len(query_axes)} query axes for a {model.ndim}-axis model")
    out = _weight_tensor(model)
    for k in range(model.ndim - 1, -1, -1):
        Kq = kernel_matrix(model.kernels[k], model.axes[k], np.asarray(query_axes[k], dtype=float))
        out = np.moveaxis(np.tensordot(out, Kq, axes=([k], [0])), -1, k)
    return out


def predict_points(model: HkrlsModel, queries) -> np.ndarray:
    """Predictions at scattered query points ``(N, ndim)``."""
    Q = np.atleast_2d(np.asarray(queries, dtype=float))
    if Q.shape[1] != model.ndim:
        raise ValueError(f"queries have {Q.shape[1]} coordinates; the model expects {model.ndim}")
    W = _weight_tensor(model)
    ks = [kernel_matrix(model.kernels[k], Q[:, k], model.axes[k]) for k in range(model.ndim)]
    out = np.empty(Q.shape[0])
    for r in range(Q.shape[0]):
        t = W
        for k in range(model.ndim - 1, -1, -1):
            t = t @ ks[k][r]
        out[r] = t
    return out


def save_model(model: HkrlsModel, path) -> Path:
    """Write ``model`` as an ``.npz`` archive with a JSON header."""
    path = Path(path)
    meta = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "vectorization": model.vectorization,
        "kernels": [k.to_dict() for k in model.kernels],
        "jitter": [float(j) for j in model.jitter],
        "level_times": [float(t) for t in model.level_times],
    }
    arrays = {f"axis_{k}": a for k, a in enumerate(model.axes)}
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
                 top_weight=model.top_weight, **arrays)
    return path


def load_model(path) -> HkrlsModel:
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(bytes(z["meta"]).decode())
            if meta.get("format") != MODEL_FORMAT:
                raise ModelFormatError(f"{path}: not an hkrls model file")
            if meta.get("version") != MODEL_VERSION:
                raise ModelFormatError(f"{path}: unsupported model version {meta.get('version')!r}")
            nax = len(meta["kernels"])
            axes = tuple(z[f"axis_{k}"] for k in range(nax))
            top = z["top_weight"]
    except ModelFormatError:
        raise
    except (OSError, KeyError, ValueError, zipfile.BadZipFile, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"{path}: corrupt or unreadable model file ({exc})") from exc
    try:
        return HkrlsModel(
            axes=axes,
            kernels=tuple(KernelConfig.from_dict(k) for k in meta["kernels"]),
            top_weight=top,
            jitter=tuple(meta["jitter"]),
            level_times=tuple(meta.get("level_times", ())),
            vectorization=meta.get("vectorization", VECTORIZATION),
        )
    except (TypeError, ValueError, KeyError) as exc:
        raise ModelFormatError(f"{path}: inconsistent model contents ({exc})") from exc
