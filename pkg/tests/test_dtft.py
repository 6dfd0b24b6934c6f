import warnings

import numpy as np
import pytest

from spflab.bounds import random_mdp, random_policy
from spflab.dtft import (
    AliasingWarning,
    DtftConfig,
    DtftField,
    DtftMatrix,
    GammaDiagonal,
    apply_bellman_dtft,
    contraction_check,
    dtft_of_sequence,
    expand_half_spectrum,
    expected_successor_embedding,
    field_norm,
    halve_spectrum,
    recover_state,
    solve_dtft_fixed_point,
    zero_field,
)
from spflab.mdp import TabularMdp, TabularPolicy
from spflab.rng import stream


def single_state_mdp(gamma=0.5, value=1.0):
    return TabularMdp(
        transition=np.ones((1, 1, 1)),
        reward=np.zeros(1),
        initial_dist=np.array([1.0]),
        gamma=gamma,
        embedding=np.array([[value]]),
    )


def cycle_mdp(period=3, gamma=0.9, embeddings=None):
    transition = np.zeros((period, 1, period))
    for s in range(period):
        transition[s, 0, (s + 1) % period] = 1.0
    if embeddings is None:
        embeddings = np.arange(period, dtype=float)[:, None]
    return TabularMdp(
        transition=transition,
        reward=np.zeros(period),
        initial_dist=np.eye(period)[0],
        gamma=gamma,
        embedding=embeddings,
    )


def rollout_embeddings(mdp, start, n):
    """Successor embedding sequence from (start, action 0) of a deterministic MDP."""
    seq = np.empty((n, mdp.dim))
    s = start
    for t in range(n):
        s = int(np.argmax(mdp.transition[s, 0]))
        seq[t] = mdp.embedding[s]
    return seq


def random_field(rng, mdp, config):
    shape = (mdp.n_states, mdp.n_actions, config.n_stored, config.dim)
    values = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    return DtftField(values=values, config=config)


class TestDtftOfSequence:
    def test_constant_sequence_dc_bin(self):
        seq = np.ones((64, 1))
        m = dtft_of_sequence(seq, gamma=0.5, n_freq=8)
        assert abs(m.values[0, 0] - 2.0) <= 1e-19
        assert m.tail_bound <= 0.5**64 / 0.5 + 1e-30

    def test_constant_sequence_quarter_bin_closed_form(self):
        seq = np.ones((200, 1))
        m = dtft_of_sequence(seq, gamma=0.5, n_freq=4)
        want = 1.0 / (1.0 + 0.5j)  # geometric sum with ratio gamma e^{-i pi/2}
        assert abs(m.values[1, 0] - want) < 1e-12
        assert abs(want - (0.8 - 0.4j)) < 1e-15

    def test_matches_naive_summation(self):
        rng = stream(1)
        seq = rng.normal(size=(32, 3))
        m = dtft_of_sequence(seq, gamma=0.8, n_freq=16, half_spectrum=False)
        for k in range(16):
            acc = np.zeros(3, dtype=complex)
            for n in range(32):
                acc += 0.8**n * seq[n] * np.exp(-2j * np.pi * k * n / 16)
            assert np.abs(m.values[k] - acc).max() < 1e-12

    def test_empty_sequence(self):
        m = dtft_of_sequence(np.zeros((0, 2)), gamma=0.9, n_freq=8)
        assert np.all(m.values == 0) and m.tail_bound == 0.0


class TestGammaDiagonal:
    def test_modulus_is_gamma(self):
        cfg = DtftConfig(n_freq=16, dim=1, gamma=0.7)
        diag = GammaDiagonal.from_config(cfg)
        assert np.allclose(np.abs(diag.entries), 0.7)
        assert np.allclose(diag.real + 1j * diag.imag, diag.entries)


class TestBellmanOperator:
    def test_zero_field_maps_to_expected_successor(self):
        rng = stream(2)
        mdp = random_mdp(rng, 4, 2, 0.9)
        policy = random_policy(rng, 4, 2)
        cfg = DtftConfig(n_freq=8, dim=4, gamma=0.9)
        out = apply_bellman_dtft(zero_field(mdp, cfg), mdp, policy)
        stilde = expected_successor_embedding(mdp)
        for k in range(cfg.n_stored):
            assert np.abs(out.values[:, :, k, :] - stilde).max() < 1e-14

    def test_fixed_point_is_fixed(self):
        mdp = single_state_mdp()
        cfg = DtftConfig(n_freq=4, dim=1, gamma=0.5)
        field, _ = solve_dtft_fixed_point(mdp, TabularPolicy.uniform(1, 1), cfg, tol=1e-14)
        again = apply_bellman_dtft(field, mdp, TabularPolicy.uniform(1, 1))
        assert field_norm(again.values - field.values) < 1e-12

    def test_matches_naive_triple_loop(self):
        rng = stream(3)
        mdp = random_mdp(rng, 4, 2, 0.9)
        policy = random_policy(rng, 4, 2)
        cfg = DtftConfig(n_freq=8, dim=4, gamma=0.9)
        field = random_field(rng, mdp, cfg)
        out = apply_bellman_dtft(field, mdp, policy)
        gamma_diag = 0.9 * np.exp(-2j * np.pi * np.arange(cfg.n_stored) / 8)
        for s in range(4):
            for a in range(2):
                expect = np.zeros((cfg.n_stored, 4), dtype=complex)
                stilde = np.zeros(4)
                for s2 in range(4):
                    stilde += mdp.transition[s, a, s2] * mdp.embedding[s2]
                    for a2 in range(2):
                        expect += (mdp.transition[s, a, s2] * policy.probs[s2, a2]
                                   * field.values[s2, a2])
                want = stilde[None, :] + gamma_diag[:, None] * expect
                assert np.abs(out.values[s, a] - want).max() < 1e-12

    def test_config_mismatch_rejected(self):
        rng = stream(4)
        mdp = random_mdp(rng, 3, 2, 0.9)
        cfg = DtftConfig(n_freq=8, dim=2, gamma=0.9)
        values = np.zeros((3, 2, cfg.n_stored, 2), dtype=complex)
        field = DtftField(values=values, config=cfg)
        with pytest.raises(ValueError, match="dim"):
            apply_bellman_dtft(field, mdp, random_policy(rng, 3, 2))


class TestFixedPointSolve:
    def test_single_state_closed_form(self):
        mdp = single_state_mdp(gamma=0.5)
        cfg = DtftConfig(n_freq=4, dim=1, gamma=0.5)
        field, info = solve_dtft_fixed_point(mdp, TabularPolicy.uniform(1, 1), cfg, tol=1e-13)
        assert info.converged
        for k, want in ((0, 2.0), (1, 0.8 - 0.4j), (2, 2 / 3)):
            assert abs(field.values[0, 0, k, 0] - want) < 1e-9

    def test_cycle_matches_rollout_oracle(self):
        mdp = cycle_mdp(3, gamma=0.9)
        cfg = DtftConfig(n_freq=16, dim=1, gamma=0.9)
        field, _ = solve_dtft_fixed_point(mdp, TabularPolicy.uniform(3, 1), cfg, tol=1e-12)
        for s in range(3):
            oracle = dtft_of_sequence(rollout_embeddings(mdp, s, 600), 0.9, 16)
            assert np.abs(field.values[s, 0] - oracle.values).max() < 1e-8

    def test_gamma_zero_gives_expected_successor(self):
        rng = stream(5)
        mdp = random_mdp(rng, 3, 2, 0.0)
        policy = random_policy(rng, 3, 2)
        cfg = DtftConfig(n_freq=8, dim=3, gamma=0.0)
        field, _ = solve_dtft_fixed_point(mdp, policy, cfg)
        stilde = expected_successor_embedding(mdp)
        for k in range(cfg.n_stored):
            assert np.abs(field.values[:, :, k, :] - stilde).max() < 1e-14

    def test_iteration_cap_flags_nonconvergence(self):
        mdp = cycle_mdp(3, gamma=0.9)
        cfg = DtftConfig(n_freq=8, dim=1, gamma=0.9)
        field, info = solve_dtft_fixed_point(mdp, TabularPolicy.uniform(3, 1), cfg,
                                             tol=1e-12, max_iter=1)
        assert not info.converged and info.iterations == 1
        assert field is not None

    def test_residual_bound_on_random_instances(self):
        rng = stream(6)
        for _ in range(5):
            mdp = random_mdp(rng, 5, 2, 0.9)
            policy = random_policy(rng, 5, 2)
            cfg = DtftConfig(n_freq=8, dim=5, gamma=0.9)
            field, info = solve_dtft_fixed_point(mdp, policy, cfg, tol=1e-11)
            residual = field_norm(
                apply_bellman_dtft(field, mdp, policy).values - field.values
            )
            assert residual <= info.residual_bound + 1e-15


class TestContraction:
    def test_equal_fields(self):
        rng = stream(7)
        mdp = random_mdp(rng, 3, 2, 0.9)
        policy = random_policy(rng, 3, 2)
        cfg = DtftConfig(n_freq=8, dim=3, gamma=0.9)
        f = random_field(rng, mdp, cfg)
        lhs, rhs = contraction_check(f, f, mdp, policy)
        assert lhs == 0.0 and rhs == 0.0

    def test_random_pairs_contract(self):
        rng = stream(8)
        for _ in range(100):
            gamma = float(rng.choice([0.5, 0.9, 0.99]))
            mdp = random_mdp(rng, 5, 2, gamma)
            policy = random_policy(rng, 5, 2)
            cfg = DtftConfig(n_freq=8, dim=5, gamma=gamma)
            lhs, rhs = contraction_check(
                random_field(rng, mdp, cfg), random_field(rng, mdp, cfg), mdp, policy
            )
            assert lhs <= rhs + 1e-12

    def test_constant_offset_is_the_equality_case(self):
        rng = stream(9)
        mdp = random_mdp(rng, 3, 1, 0.9)  # deterministic policy space
        policy = TabularPolicy.uniform(3, 1)
        cfg = DtftConfig(n_freq=8, dim=3, gamma=0.9)
        f1 = random_field(rng, mdp, cfg)
        offset = rng.normal(size=(cfg.n_stored, 3)) + 1j * rng.normal(size=(cfg.n_stored, 3))
        f2 = DtftField(values=f1.values + offset[None, None], config=cfg)
        lhs, rhs = contraction_check(f1, f2, mdp, policy)
        # T is affine, so a constant offset propagates as Gamma * offset exactly
        assert abs(lhs - rhs) < 1e-12


class TestHalfSpectrum:
    def test_round_trip_of_solved_field(self):
        mdp = single_state_mdp(gamma=0.5)
        cfg = DtftConfig(n_freq=8, dim=1, gamma=0.5, half_spectrum=False)
        field, _ = solve_dtft_fixed_point(mdp, TabularPolicy.uniform(1, 1), cfg, tol=1e-13)
        full = field.matrix(0, 0)
        again = expand_half_spectrum(halve_spectrum(full))
        assert np.abs(again.values - full.values).max() < 1e-15

    def test_random_symmetric_matrix_reproduced(self):
        rng = stream(10)
        half = rng.normal(size=(5, 2)) + 1j * rng.normal(size=(5, 2))
        half[0] = half[0].real
        half[4] = half[4].real
        full = np.concatenate([half, np.conj(half[1:4][::-1])], axis=0)
        m = DtftMatrix(values=full, n_freq=8, half_spectrum=False)
        again = expand_half_spectrum(halve_spectrum(m))
        assert np.array_equal(again.values, full)

    def test_solved_field_has_real_edge_bins(self):
        rng = stream(11)
        mdp = random_mdp(rng, 4, 2, 0.9)
        cfg = DtftConfig(n_freq=8, dim=4, gamma=0.9)
        field, _ = solve_dtft_fixed_point(mdp, random_policy(rng, 4, 2), cfg, tol=1e-12)
        m = field.matrix(0, 0)
        assert np.abs(m.values[[0, 4]].imag).max() <= 1e-10
        expand_half_spectrum(m)  # passes the real-bin check

    def test_complex_edge_bins_rejected(self):
        values = np.ones((5, 1), dtype=complex)
        values[0] = 1 + 1j
        m = DtftMatrix(values=values, n_freq=8, half_spectrum=True)
        with pytest.raises(ValueError, match="real"):
            expand_half_spectrum(m)
        expand_half_spectrum(m, real_bin_tol=None)  # learned spectra skip the check

    def test_row_count_mismatch_rejected(self):
        with pytest.raises(ValueError, match="bins"):
            DtftMatrix(values=np.zeros((4, 1), dtype=complex), n_freq=8, half_spectrum=True)


class TestRecovery:
    def test_cycle_recovery_within_aliasing_bound(self):
        mdp = cycle_mdp(3, gamma=0.9)
        cfg = DtftConfig(n_freq=128, dim=1, gamma=0.9)
        field, _ = solve_dtft_fixed_point(mdp, TabularPolicy.uniform(3, 1), cfg, tol=1e-12)
        bound = 0.9**128 / 0.1 + 1e-8
        got = recover_state(field, 0, 0, 1)
        assert abs(got[0] - 1.0) <= bound

    def test_gamma_zero_single_step(self):
        rng = stream(12)
        mdp = random_mdp(rng, 3, 2, 0.0)
        policy = random_policy(rng, 3, 2)
        cfg = DtftConfig(n_freq=8, dim=3, gamma=0.0)
        field, _ = solve_dtft_fixed_point(mdp, policy, cfg)
        stilde = expected_successor_embedding(mdp)
        got = recover_state(field, 1, 0, 1)
        assert np.abs(got - stilde[1, 0]).max() < 1e-12

    def test_multi_step_recovery_follows_rollout(self):
        mdp = cycle_mdp(3, gamma=0.9)
        cfg = DtftConfig(n_freq=128, dim=1, gamma=0.9)
        field, _ = solve_dtft_fixed_point(mdp, TabularPolicy.uniform(3, 1), cfg, tol=1e-12)
        rolled = rollout_embeddings(mdp, 0, 5)
        for k in range(1, 6):
            got = recover_state(field, 0, 0, k)
            assert np.abs(got - rolled[k - 1]).max() < 1e-3

    def test_aliasing_warning(self):
        mdp = cycle_mdp(3, gamma=0.9)
        cfg = DtftConfig(n_freq=4, dim=1, gamma=0.9)
        field, _ = solve_dtft_fixed_point(mdp, TabularPolicy.uniform(3, 1), cfg, tol=1e-12)
        with pytest.warns(AliasingWarning):
            recover_state(field, 0, 0, 5)


class TestConsistencyAndSignature:
    def test_deterministic_fields_match_rollout_spectra(self):
        rng = stream(13)
        for _ in range(5):
            period = int(rng.integers(2, 5))
            emb = rng.normal(size=(period, 2))
            mdp = cycle_mdp(period, gamma=0.9, embeddings=emb)
            cfg = DtftConfig(n_freq=16, dim=2, gamma=0.9)
            field, _ = solve_dtft_fixed_point(mdp, TabularPolicy.uniform(period, 1),
                                              cfg, tol=1e-12)
            n = 600
            for s in range(period):
                oracle = dtft_of_sequence(rollout_embeddings(mdp, s, n), 0.9, 16)
                assert (np.abs(field.values[s, 0] - oracle.values).max()
                        <= oracle.tail_bound + 1e-10)

    def test_periodic_cycle_concentrates_energy_on_harmonics(self):
        # Closed form of the fixed point: with x the cycle embeddings,
        # F(w) = sum_{n<p} g^n x_n e^{-iwn} / (1 - g^p e^{-iwp}).  At gamma
        # close to 1 the harmonics at multiples of L/p dominate all other
        # bins by the ratio of (1 - gamma) to the grid spacing.
        gamma = 1.0 - 1e-8
        p, L = 4, 8
        x = np.arange(p, dtype=float)
        omegas = 2 * np.pi * np.arange(L) / L
        numer = sum(gamma**n * x[n] * np.exp(-1j * omegas * n) for n in range(p))
        denom = 1.0 - gamma**p * np.exp(-1j * omegas * p)
        spectrum = numer / denom
        on_bins = np.arange(0, L, L // p)
        off_bins = np.setdiff1d(np.arange(L), on_bins)
        assert np.abs(spectrum[off_bins]).max() <= 1e-6 * np.abs(spectrum[on_bins]).min()

    def test_signature_closed_form_matches_solver_at_moderate_gamma(self):
        gamma = 0.9
        p, L = 4, 8
        mdp = cycle_mdp(p, gamma=gamma)
        cfg = DtftConfig(n_freq=L, dim=1, gamma=gamma, half_spectrum=False)
        field, _ = solve_dtft_fixed_point(mdp, TabularPolicy.uniform(p, 1), cfg, tol=1e-13)
        omegas = 2 * np.pi * np.arange(L) / L
        for s in range(p):
            x = np.array([mdp.embedding[(s + 1 + n) % p, 0] for n in range(p)])
            numer = sum(gamma**n * x[n] * np.exp(-1j * omegas * n) for n in range(p))
            denom = 1.0 - gamma**p * np.exp(-1j * omegas * p)
            assert np.abs(field.values[s, 0, :, 0] - numer / denom).max() < 1e-9
