"""Sampled spectra of discounted state sequences and their exact fixed points.

For a state-action pair the prediction target is the L-point sampled
discrete-time Fourier transform of the discounted expected successor sequence
x_n = gamma^n E[s_{t+n+1} | s_t, a_t].  Consecutive-step spectra satisfy a
TD-style recursion

    F(s, a) = Stilde(s, a) + Gamma * E[F(s', a')],

where every row of Stilde equals the expected next-state embedding and Gamma
is the diagonal of gamma * exp(-i omega_k).  The recursion is a gamma
contraction in the sup/row norm, so iterating it from zero converges to the
exact spectrum field on tabular models.

Real sequences give conjugate-symmetric spectra, so only bins 0..L/2 are
stored by default and the full spectrum is reconstructed on demand.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .mdp import TabularMdp, TabularPolicy, _check_match


class AliasingWarning(UserWarning):
    """Recovery step index at or past the frequency resolution; result aliases."""


@dataclass(frozen=True)
class DtftConfig:
    """Sampling grid: n_freq equally spaced frequencies 2*pi*k/n_freq."""

    n_freq: int
    dim: int
    gamma: float
    half_spectrum: bool = True

    def __post_init__(self):
        if self.n_freq < 2 or self.n_freq % 2 != 0:
            raise ValueError(f"n_freq must be even and >= 2, got {self.n_freq}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.dim < 1:
            raise ValueError(f"dim must be positive, got {self.dim}")

    @property
    def n_stored(self) -> int:
        return self.n_freq // 2 + 1 if self.half_spectrum else self.n_freq

    def omegas(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.n_stored) / self.n_freq


@dataclass(frozen=True)
class GammaDiagonal:
    """Per-bin complex factors gamma * exp(-i omega_k); |entry| == gamma."""

    entries: np.ndarray  # complex (n_stored,)

    @classmethod
    def from_config(cls, config: DtftConfig) -> "GammaDiagonal":
        return cls(entries=config.gamma * np.exp(-1j * config.omegas()))

    @property
    def real(self) -> np.ndarray:
        return self.entries.real

    @property
    def imag(self) -> np.ndarray:
        return self.entries.imag


@dataclass(frozen=True)
class DtftMatrix:
    """Sampled spectrum of one sequence: rows are frequency bins, columns dims.

    tail_bound records the worst-case magnitude of truncated terms when the
    matrix was computed from a finite sequence (zero for exact fixed points).
    """

    values: np.ndarray  # complex (n_stored or n_freq, dim)
    n_freq: int
    half_spectrum: bool
    tail_bound: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        expected = self.n_freq // 2 + 1 if self.half_spectrum else self.n_freq
        if values.ndim != 2 or values.shape[0] != expected:
            raise ValueError(
                f"expected {expected} stored bins for n_freq={self.n_freq}, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values.view(np.float64))):
            raise ValueError("spectrum contains non-finite entries")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class DtftField:
    """Spectrum matrices for every (state, action) pair of a tabular MDP."""

    values: np.ndarray  # complex (S, A, n_stored, dim)
    config: DtftConfig

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        if values.ndim != 4 or values.shape[2:] != (self.config.n_stored, self.config.dim):
            raise ValueError(
                f"field values shape {values.shape} does not match config "
                f"(bins={self.config.n_stored}, dim={self.config.dim})"
            )
        object.__setattr__(self, "values", values)

    def matrix(self, state: int, action: int) -> DtftMatrix:
        return DtftMatrix(
            values=self.values[state, action],
            n_freq=self.config.n_freq,
            half_spectrum=self.config.half_spectrum,
        )


@dataclass(frozen=True)
class SolveInfo:
    converged: bool
    iterations: int
    final_change: float
    residual_bound: float


def dtft_of_sequence(
    seq: np.ndarray, gamma: float, n_freq: int, half_spectrum: bool = True
) -> DtftMatrix:
    """Sampled spectrum sum_n gamma^n seq[n] exp(-i omega_k n) by direct summation.

    The caller passes the raw sequence; discounting is applied here.  The
    reported tail bound covers everything beyond the truncation horizon.
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    seq = np.atleast_1d(np.asarray(seq, dtype=np.float64))
    if seq.ndim == 1:
        seq = seq[:, None]
    n = seq.shape[0]
    n_stored = n_freq // 2 + 1 if half_spectrum else n_freq
    if n == 0:
        return DtftMatrix(
            values=np.zeros((n_stored, seq.shape[1]), dtype=np.complex128),
            n_freq=n_freq,
            half_spectrum=half_spectrum,
            tail_bound=0.0,
        )
    omegas = 2.0 * np.pi * np.arange(n_stored) / n_freq
    steps = np.arange(n)
    weights = gamma**steps
    phases = np.exp(-1j * np.outer(omegas, steps))  # (bins, n)
    values = phases @ (weights[:, None] * seq)
    seq_max = float(np.linalg.norm(seq, axis=1).max())
    tail = seq_max * gamma**n / (1.0 - gamma)
    return DtftMatrix(values=values, n_freq=n_freq, half_spectrum=half_spectrum, tail_bound=tail)


def expected_successor_embedding(mdp: TabularMdp) -> np.ndarray:
    """E[embedding(s') | s, a] for every pair, shape (S, A, D)."""
    return np.einsum("sat,td->sad", mdp.transition, mdp.embedding)


def zero_field(mdp: TabularMdp, config: DtftConfig) -> DtftField:
    shape = (mdp.n_states, mdp.n_actions, config.n_stored, config.dim)
    return DtftField(values=np.zeros(shape, dtype=np.complex128), config=config)


def _check_field(field: DtftField, mdp: TabularMdp) -> None:
    if field.config.dim != mdp.dim:
        raise ValueError(
            f"field dim {field.config.dim} does not match MDP embedding dim {mdp.dim}"
        )
    if field.values.shape[:2] != (mdp.n_states, mdp.n_actions):
        raise ValueError(
            f"field table shape {field.values.shape[:2]} does not match MDP "
            f"({mdp.n_states} states, {mdp.n_actions} actions)"
        )


def apply_bellman_dtft(field: DtftField, mdp: TabularMdp, policy: TabularPolicy) -> DtftField:
    """One application of the spectrum recursion to every (state, action) pair."""
    _check_field(field, mdp)
    _check_match(mdp, policy)
    gamma_diag = GammaDiagonal.from_config(field.config).entries  # (bins,)
    # Expectation over s' ~ P(.|s,a), a' ~ pi(.|s') of F(s', a').
    mixed = np.einsum("ub,ubkd->ukd", policy.probs, field.values)  # (S', bins, D)
    expect = np.einsum("sau,ukd->sakd", mdp.transition, mixed)
    stilde = expected_successor_embedding(mdp)  # (S, A, D)
    values = stilde[:, :, None, :] + gamma_diag[None, None, :, None] * expect
    return DtftField(values=values, config=field.config)


def field_norm(values: np.ndarray) -> float:
    """sup over (s, a), max over bins, Euclidean norm over dims."""
    return float(np.sqrt((np.abs(values) ** 2).sum(axis=-1)).max())


def solve_dtft_fixed_point(
    mdp: TabularMdp,
    policy: TabularPolicy,
    config: DtftConfig,
    tol: float = 1e-10,
    max_iter: int = 100_000,
) -> tuple[DtftField, SolveInfo]:
    """Iterate the recursion from the zero field until the sup-norm change
    drops to tol.  The contraction modulus gamma bounds the fixed-point
    residual of the returned field by gamma * final_change.

    A Jacobi-style sweep (every pair updated from the previous iterate) keeps
    results independent of update order.
    """
    field = zero_field(mdp, config)
    change = np.inf
    iterations = 0
    for iterations in range(1, max_iter + 1):
        new = apply_bellman_dtft(field, mdp, policy)
        change = field_norm(new.values - field.values)
        field = new
        if change <= tol:
            break
    converged = change <= tol
    info = SolveInfo(
        converged=converged,
        iterations=iterations,
        final_change=float(change),
        residual_bound=float(config.gamma * change),
    )
    return field, info


def contraction_check(
    field1: DtftField, field2: DtftField, mdp: TabularMdp, policy: TabularPolicy
) -> tuple[float, float]:
    """(lhs, rhs) of the contraction inequality: distance after one recursion
    step versus gamma times the original distance."""
    if field1.config != field2.config:
        raise ValueError("fields must share a config")
    t1 = apply_bellman_dtft(field1, mdp, policy)
    t2 = apply_bellman_dtft(field2, mdp, policy)
    lhs = field_norm(t1.values - t2.values)
    rhs = field1.config.gamma * field_norm(field1.values - field2.values)
    return lhs, rhs


def halve_spectrum(matrix: DtftMatrix) -> DtftMatrix:
    """Keep bins 0..L/2 of a full spectrum."""
    if matrix.half_spectrum:
        return matrix
    return DtftMatrix(
        values=matrix.values[: matrix.n_freq // 2 + 1],
        n_freq=matrix.n_freq,
        half_spectrum=True,
        tail_bound=matrix.tail_bound,
    )


def expand_half_spectrum(
    matrix: DtftMatrix, real_bin_tol: float | None = 1e-10
) -> DtftMatrix:
    """Reconstruct all L bins from bins 0..L/2 using conjugate symmetry.

    Bins 0 and L/2 are not forced real; for spectra of real sequences they
    must already be, which is checked against real_bin_tol (pass None to skip
    the check, e.g. for learned approximations).
    """
    if not matrix.half_spectrum:
        raise ValueError("matrix already stores the full spectrum")
    half = matrix.n_freq // 2
    if real_bin_tol is not None:
        worst = float(np.abs(matrix.values[[0, half]].imag).max())
        if worst > real_bin_tol:
            raise ValueError(
                f"bins 0 and L/2 should be real for real sequences; |imag| up to {worst:.3g}"
            )
    full = np.empty((matrix.n_freq, matrix.values.shape[1]), dtype=np.complex128)
    full[: half + 1] = matrix.values
    full[half + 1:] = np.conj(matrix.values[1:half][::-1])
    return DtftMatrix(
        values=full, n_freq=matrix.n_freq, half_spectrum=False, tail_bound=matrix.tail_bound
    )


def recover_state(
    field: DtftField,
    state: int,
    action: int,
    k: int,
    imag_tol: float = 1e-6,
) -> np.ndarray:
    """Expected state k steps ahead, recovered from the spectrum.

    The inverse transform sample at index k-1 equals gamma^(k-1) E[s_{t+k}]
    (plus aliasing terms of order gamma^L), so the discount is divided out
    before returning.  The imaginary residue must stay below imag_tol times
    the recovered scale and is then discarded.
    """
    if k < 1:
        raise ValueError(f"step offset k must be >= 1, got {k}")
    cfg = field.config
    if k - 1 >= cfg.n_freq:
        warnings.warn(
            f"recovery index {k - 1} is at or past the frequency resolution "
            f"{cfg.n_freq}; the result aliases onto index {(k - 1) % cfg.n_freq}",
            AliasingWarning,
            stacklevel=2,
        )
    matrix = field.matrix(state, action)
    if cfg.half_spectrum:
        matrix = expand_half_spectrum(matrix, real_bin_tol=None)
    n = cfg.n_freq
    phases = np.exp(2j * np.pi * np.arange(n) * (k - 1) / n)
    sample = (phases @ matrix.values) / n
    denom = cfg.gamma ** (k - 1)
    if denom == 0.0:
        raise ValueError("nothing to recover beyond one step when gamma is 0")
    recovered = sample / denom
    scale = max(1.0, float(np.abs(recovered.real).max()))
    residue = float(np.abs(recovered.imag).max())
    if residue > imag_tol * scale:
        raise ValueError(
            f"imaginary residue {residue:.3g} exceeds tolerance {imag_tol} at scale {scale:.3g}"
        )
    return recovered.real
