"""Deterministic, seedable randomness for targets, disorder and phase inits.

Every stochastic task derives its own 64-bit seed as the first 8 bytes
(little-endian) of ``sha256(master_seed | label | index)`` and owns a
private PCG64 generator (``numpy.random.default_rng``), so results never
depend on scheduling or call order and distinct task indices cannot
collide in practice.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .numerics import qr_unitary

__all__ = [
    "derive_seed",
    "SeedPlan",
    "haar_unitary",
    "gaussian_hermitian",
    "uniform_phases",
    "jitter_phases",
]

TWO_PI = 2.0 * np.pi


def derive_seed(master_seed: int, label: str, index: int = 0) -> int:
    """Collision-resistant task seed from (master seed, label, index)."""
    payload = f"{int(master_seed)}|{label}|{int(index)}".encode()
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "little")


@dataclass(frozen=True)
class SeedPlan:
    """Derives per-task seeds and generators from one master seed."""

    master_seed: int

    def seed(self, label: str, index: int = 0) -> int:
        return derive_seed(self.master_seed, label, index)

    def rng(self, label: str, index: int = 0) -> np.random.Generator:
        return np.random.default_rng(self.seed(label, index))


def _generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def haar_unitary(n: int, seed) -> np.ndarray:
    """Haar-distributed n x n unitary.

    QR of a complex Ginibre draw; the positive-diagonal convention of
    ``qr_unitary`` applies exactly the diagonal phase correction that
    makes Q uniform on the unitary group.
    """
    if n < 1:
        raise ValueError(f"dimension must be >= 1, got {n}")
    rng = _generator(seed)
    z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, _ = qr_unitary(z)
    return q


def gaussian_hermitian(n: int, seed) -> np.ndarray:
    """Hermitian disorder draw with N(0,1) real and imaginary parts.

    Each independent entry gets its real and imaginary part drawn i.i.d.
    from N(0,1): the strict upper triangle is a full complex Gaussian
    (per-entry variance 2), the diagonal is real N(0,1), and the lower
    triangle is the conjugate mirror, so the output is Hermitian bitwise.
    """
    if n < 1:
        raise ValueError(f"dimension must be >= 1, got {n}")
    rng = _generator(seed)
    re = rng.standard_normal((n, n))
    im = rng.standard_normal((n, n))
    h = np.zeros((n, n), dtype=np.complex128)
    iu, ju = np.triu_indices(n, k=1)
    h[iu, ju] = re[iu, ju] + 1j * im[iu, ju]
    h = h + h.conj().T
    h[np.arange(n), np.arange(n)] = re.diagonal()
    return h


def uniform_phases(m: int, n: int, seed) -> np.ndarray:
    """(m, n) grid of i.i.d. phases uniform in [0, 2 pi)."""
    return _generator(seed).uniform(0.0, TWO_PI, size=(m, n))


def jitter_phases(x, fraction: float, seed) -> np.ndarray:
    """Relative elementwise jitter: ``x * (1 + u)``, u uniform in [-fraction, fraction]."""
    if fraction < 0:
        raise ValueError(f"jitter fraction must be >= 0, got {fraction}")
    x = np.asarray(x, dtype=float)
    u = _generator(seed).uniform(-fraction, fraction, size=x.shape)
    return x * (1.0 + u)
