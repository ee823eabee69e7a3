"""Kernel functions, Gram matrices and cross-kernel vectors.

Two families are supported:

``GAUSSIAN``
    ``k(z, z') = exp(-||z - z'||^2 / (2 sigma^2))`` on coordinate vectors of
    any dimension.

``SPACE_TIME``
    The nonstationary space-time covariance

        C(u, h) = (a^2 u^2 + 1)^(-1/2) exp(-b^2 h^2 / (a^2 u^2 + 1))

    where ``u`` is a time lag and ``h`` a space lag.  When it is evaluated on
    coordinate vectors they are read as ``(space, time)`` pairs and the lags
    are absolute differences.

Everything here is a pure function of its arguments.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "KernelFamily",
    "KernelConfig",
    "KernelError",
    "gaussian",
    "space_time",
    "eval_kernel",
    "nonstill_covariance",
    "kernel_matrix",
    "gram",
    "cross_kernel_vector",
    "as_points",
    "product_kernel_matrix",
]


class KernelError(ValueError):
    """Invalid kernel configuration or kernel arguments."""


class KernelFamily(str, enum.Enum):
    GAUSSIAN = "gaussian"
    SPACE_TIME = "space_time"


@dataclass(frozen=True)
class KernelConfig:
    """Kernel family plus its parameters.

    ``sigma`` is the Gaussian bandwidth in coordinate units.  ``a_scale`` and
    ``b_scale`` scale the time and space lags of the space-time family.
    """

    family: KernelFamily = KernelFamily.GAUSSIAN
    sigma: float = 1.0
    a_scale: float = 1.0
    b_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "family", KernelFamily(self.family))
        if self.family is KernelFamily.GAUSSIAN:
            if not (np.isfinite(self.sigma) and self.sigma > 0):
                raise KernelError(f"sigma must be positive and finite, got {self.sigma!r}")
        elif not (self.a_scale > 0 and self.b_scale > 0
                  and np.isfinite(self.a_scale) and np.isfinite(self.b_scale)):
            raise KernelError(
                f"a_scale and b_scale must be positive, got {self.a_scale!r}, {self.b_scale!r}")

    def to_dict(self) -> dict:
        if self.family is KernelFamily.GAUSSIAN:
            return {"family": self.family.value, "sigma": float(self.sigma)}
        return {"family": self.family.value, "a_scale": float(self.a_scale),
                "b_scale": float(self.b_scale)}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelConfig":
        return cls(**d)


def gaussian(sigma: float) -> KernelConfig:
    return KernelConfig(KernelFamily.GAUSSIAN, sigma=sigma)


def space_time(a_scale: float = 1.0, b_scale: float = 1.0) -> KernelConfig:
    return KernelConfig(KernelFamily.SPACE_TIME, a_scale=a_scale, b_scale=b_scale)


def as_points(points, name: str = "points") -> np.ndarray:
    """Coerce a list of coordinate vectors (or a 1-D axis) to an ``(m, dim)`` array."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr[:, None]
    elif arr.ndim != 2:
        raise KernelError(f"{name} must be a list of coordinate vectors, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise KernelError(f"{name} contains non-finite coordinates")
    return arr


def _as_vector(z, name: str) -> np.ndarray:
    v = np.atleast_1d(np.asarray(z, dtype=float))
    if v.ndim != 1:
        raise KernelError(f"{name} must be a coordinate vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise KernelError(f"{name} contains non-finite values")
    return v


def nonstill_covariance(cfg: KernelConfig, u, h):
    """Space-time covariance at time lag ``u`` and space lag ``h``.

    Broadcasts over array arguments.
    """
    if cfg.family is not KernelFamily.SPACE_TIME:
        raise KernelError(f"nonstill_covariance needs the space_time family, got {cfg.family.value}")
    u = np.asarray(u, dtype=float)
    h = np.asarray(h, dtype=float)
    g = (cfg.a_scale * u) ** 2 + 1.0
    out = np.exp(-(cfg.b_scale * h) ** 2 / g) / np.sqrt(g)
    return float(out) if out.ndim == 0 else out


def eval_kernel(cfg: KernelConfig, z, z2) -> float:
    z = _as_vector(z, "z")
    z2 = _as_vector(z2, "z2")
    if z.shape != z2.shape:
        raise KernelError(f"dimension mismatch: {z.shape[0]} vs {z2.shape[0]}")
    if cfg.family is KernelFamily.GAUSSIAN:
        d = z - z2
        return float(np.exp(-np.dot(d, d) / (2.0 * cfg.sigma ** 2)))
    if z.shape[0] != 2:
        raise KernelError("space_time kernel expects (space, time) coordinate pairs")
    return nonstill_covariance(cfg, abs(z[1] - z2[1]), abs(z[0] - z2[0]))


def kernel_matrix(cfg: KernelConfig, a, b) -> np.ndarray:
    """Matrix of kernel values ``K[i, j] = k(a[i], b[j])``."""
    A = as_points(a, "a")
    B = as_points(b, "b")
    if A.shape[1] != B.shape[1]:
        raise KernelError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    if cfg.family is KernelFamily.GAUSSIAN:
        sq = np.zeros((A.shape[0], B.shape[0]))
        for k in range(A.shape[1]):
            diff = A[:, k, None] - B[None, :, k]
            sq += diff * diff
        return np.exp(sq * (-0.5 / cfg.sigma ** 2))
    if A.shape[1] != 2:
        raise KernelError("space_time kernel expects (space, time) coordinate pairs")
    h = np.abs(A[:, 0, None] - B[None, :, 0])
    u = np.abs(A[:, 1, None] - B[None, :, 1])
    return nonstill_covariance(cfg, u, h)


def gram(cfg: KernelConfig, points) -> np.ndarray:
    """Gram matrix of ``points``, symmetric by construction."""
    P = as_points(points)
    if P.shape[0] == 0:
        raise KernelError("gram needs at least one point")
    K = kernel_matrix(cfg, P, P)
    # exact symmetry; the Gaussian path is already symmetric bit for bit
    K = 0.5 * (K + K.T)
    if cfg.family is KernelFamily.GAUSSIAN:
        np.fill_diagonal(K, 1.0)
    return K


def cross_kernel_vector(cfg: KernelConfig, train_points, query) -> np.ndarray:
    """Kernel values between every training point and one query, length ``m``."""
    P = as_points(train_points, "train_points")
    if P.shape[0] == 0:
        raise KernelError("cross_kernel_vector needs at least one training point")
    q = _as_vector(query, "query")
    if q.shape[0] != P.shape[1]:
        raise KernelError(f"query has dimension {q.shape[0]}, training points have {P.shape[1]}")
    return kernel_matrix(cfg, P, q[None, :])[:, 0]


def product_kernel_matrix(kernels: Sequence[KernelConfig], a, b) -> np.ndarray:
    """Separable kernel ``prod_k k_k(a[:, k], b[:, k])`` with one Gaussian per column."""
    A = as_points(a, "a")
    B = as_points(b, "b")
    if A.shape[1] != len(kernels) or B.shape[1] != len(kernels):
        raise KernelError("one kernel per coordinate is required")
    K = np.ones((A.shape[0], B.shape[0]))
    for k, cfg in enumerate(kernels):
        K *= kernel_matrix(cfg, A[:, k], B[:, k])
    return K
