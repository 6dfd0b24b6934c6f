"""Dense eigenvalues of small matrices: Hessenberg reduction plus shifted QR.

Implemented in complex arithmetic so real matrices with complex-conjugate
eigenvalue pairs (e.g. periodic stochastic matrices) need no special casing.
The solver is deliberately capped at small sizes; it exists as a numerical
cross-check for the exact graph-theoretic period computation.
"""

from __future__ import annotations

import numpy as np

MAX_SIZE = 16
MAX_ITER = 500
# A stalled active block gets an ad-hoc exceptional shift every this many sweeps.
EXCEPTIONAL_EVERY = 12


class EigenSolveError(RuntimeError):
    """QR iteration failed to deflate within the iteration cap."""


def hessenberg(a: np.ndarray) -> np.ndarray:
    """Unitary similarity reduction to upper Hessenberg form via Householder reflections."""
    h = np.array(a, dtype=np.complex128)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"matrix must be square, got shape {h.shape}")
    n = h.shape[0]
    for j in range(n - 2):
        x = h[j + 1:, j].copy()
        norm_x = np.linalg.norm(x)
        if norm_x == 0.0:
            continue
        v = x
        alpha = x[0]
        phase = alpha / abs(alpha) if alpha != 0.0 else 1.0
        v[0] += phase * norm_x
        norm_v = np.linalg.norm(v)
        if norm_v == 0.0:
            continue
        v /= norm_v
        # H = I - 2 v v^H applied from both sides.
        h[j + 1:, j:] -= 2.0 * np.outer(v, v.conj() @ h[j + 1:, j:])
        h[:, j + 1:] -= 2.0 * np.outer(h[:, j + 1:] @ v, v.conj())
    return h


def _wilkinson_shift(h: np.ndarray, hi: int) -> complex:
    """Eigenvalue of the trailing 2x2 block closest to its bottom-right entry."""
    a = h[hi - 1, hi - 1]
    b = h[hi - 1, hi]
    c = h[hi, hi - 1]
    d = h[hi, hi]
    tr = a + d
    disc = np.sqrt((a - d) * (a - d) / 4.0 + b * c + 0j)
    r1 = tr / 2.0 + disc
    r2 = tr / 2.0 - disc
    return r1 if abs(r1 - d) <= abs(r2 - d) else r2


def _givens(a: complex, b: complex) -> tuple[float, complex]:
    """Rotation [[c, s], [-conj(s), c]] with real c >= 0 zeroing b below a."""
    if b == 0.0:
        return 1.0, 0.0 + 0.0j
    if a == 0.0:
        return 0.0, np.conj(b) / abs(b)
    denom = np.hypot(abs(a), abs(b))
    c = abs(a) / denom
    s = (a / abs(a)) * np.conj(b) / denom
    return c, s


def _qr_shift_step(h: np.ndarray, lo: int, hi: int, mu: complex) -> None:
    """One explicit shifted QR sweep on the active diagonal block h[lo:hi+1, lo:hi+1].

    Restricting the similarity to the block is sound for eigenvalues: the
    matrix stays block upper triangular across deflated boundaries.
    """
    idx = slice(lo, hi + 1)
    block = h[idx, idx]
    m = block.shape[0]
    for k in range(m):
        block[k, k] -= mu
    rotations = []
    for k in range(m - 1):
        c, s = _givens(block[k, k], block[k + 1, k])
        rotations.append((c, s))
        rows = block[k:k + 2, k:].copy()
        block[k, k:] = c * rows[0] + s * rows[1]
        block[k + 1, k:] = -np.conj(s) * rows[0] + c * rows[1]
    for k, (c, s) in enumerate(rotations):
        cols = block[: min(k + 2, m) + 0, k:k + 2].copy()
        block[: cols.shape[0], k] = c * cols[:, 0] + np.conj(s) * cols[:, 1]
        block[: cols.shape[0], k + 1] = -s * cols[:, 0] + c * cols[:, 1]
    for k in range(m):
        block[k, k] += mu


def eigenvalues(a: np.ndarray, max_iter: int = MAX_ITER) -> np.ndarray:
    """All eigenvalues of a dense matrix of size at most MAX_SIZE.

    Raises EigenSolveError if the shifted QR iteration fails to deflate every
    eigenvalue within `max_iter` sweeps.
    """
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"matrix must be square, got shape {a.shape}")
    n = a.shape[0]
    if n > MAX_SIZE:
        raise ValueError(f"matrix size {n} exceeds solver cap {MAX_SIZE}")
    if n == 0:
        return np.zeros(0, dtype=np.complex128)
    h = hessenberg(a)
    eps = np.finfo(np.float64).eps
    out: list[complex] = []
    hi = n - 1
    sweeps = 0
    stalled = 0
    while hi > 0:
        for k in range(1, hi + 1):
            if abs(h[k, k - 1]) <= eps * (abs(h[k - 1, k - 1]) + abs(h[k, k])):
                h[k, k - 1] = 0.0
        if h[hi, hi - 1] == 0.0:
            out.append(h[hi, hi])
            hi -= 1
            stalled = 0
            continue
        if sweeps >= max_iter:
            raise EigenSolveError(
                f"no deflation after {max_iter} QR sweeps ({hi + 1} eigenvalues pending)"
            )
        lo = hi
        while lo > 0 and h[lo, lo - 1] != 0.0:
            lo -= 1
        stalled += 1
        if stalled % EXCEPTIONAL_EVERY == 0:
            # Break shift cycles (e.g. permutation spectra) with a detuned shift.
            mu = h[hi, hi] + 1.5 * abs(h[hi, hi - 1])
        else:
            mu = _wilkinson_shift(h, hi)
        _qr_shift_step(h, lo, hi, mu)
        sweeps += 1
    out.append(h[0, 0])
    return np.array(out[::-1], dtype=np.complex128)
