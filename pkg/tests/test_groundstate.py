"""Ground-state solver tests against dense diagonalization and perturbation
theory."""

import numpy as np
import pytest

from latqp.cluster import Collection, Truncation, exp_apply, triple_norm, weighted_norm
from latqp.groundstate import (
    ContractionError,
    correlation,
    decay_scan,
    fixed_point_map,
    ground_residual,
    solve_ground_state,
)
from latqp.model import assemble_dense_hamiltonian, chain_volume, preset_tfi
from latqp.oracle import dense_spectrum

SX = np.array([[0.0, 1.0], [1.0, 0.0]])


def _ed_ground(lam, n, boundary="open"):
    site, pert = preset_tfi(lam)
    vol = chain_volume(n, boundary)
    H = assemble_dense_hamiltonian(vol, site, pert)
    vals, vecs = dense_spectrum(H)
    return vals[0], vecs[:, 0], site, pert, vol, H


def test_zero_coupling_fixed_point_is_empty():
    site, pert = preset_tfi(0.0)
    vol = chain_volume(4)
    start = Collection(2, Truncation())
    out, energy = fixed_point_map(start, site, pert, vol)
    assert energy == 0.0
    assert len(out) == 0
    frame, e, diag = solve_ground_state(site, pert, vol)
    assert e == 0.0
    assert diag.iterations == 1
    assert len(frame.gs) == 0


def test_first_sweep_reproduces_first_order_theory():
    lam = 0.1
    site, pert = preset_tfi(lam)
    vol = chain_volume(4)
    start = Collection(2, Truncation())
    out, energy = fixed_point_map(start, site, pert, vol)
    assert energy == 0.0
    for x in range(3):
        amp = out.get(((x,), (x + 1,)))
        assert amp is not None
        assert complex(amp.reshape(())) == pytest.approx(lam / 2, abs=1e-12)


def test_converged_energy_matches_ed_n8():
    lam = 0.1
    e_ed, _, site, pert, vol, H = _ed_ground(lam, 8)
    frame, e, diag = solve_ground_state(
        site, pert, vol, truncation=Truncation(kmax=4, dmax=5), hamiltonian=H
    )
    assert abs(e - e_ed) < 1e-3
    assert diag.converged


def test_reconstructed_state_fidelity_n6():
    lam = 0.1
    e_ed, gs_ed, site, pert, vol, H = _ed_ground(lam, 6)
    frame, e, _ = solve_ground_state(
        site, pert, vol, truncation=Truncation(kmax=4, dmax=5), hamiltonian=H
    )
    psi = exp_apply(frame.gs, vol.space(site))
    psi /= np.linalg.norm(psi)
    fidelity = abs(np.vdot(gs_ed, psi))
    assert fidelity >= 1 - 1e-5


def test_second_order_energy_small_coupling():
    lam, n = 0.05, 8
    site, pert = preset_tfi(lam)
    vol = chain_volume(n)
    frame, e, _ = solve_ground_state(site, pert, vol, truncation=Truncation(4, 5))
    second_order = -(n - 1) * lam ** 2 / 2
    assert e == pytest.approx(second_order, rel=0.1)


def test_fixed_point_residual_bound():
    lam = 0.1
    site, pert = preset_tfi(lam)
    vol = chain_volume(6)
    tol = 1e-9
    frame, e, _ = solve_ground_state(
        site, pert, vol, truncation=Truncation.none(), tol=tol
    )
    assert ground_residual(frame, site, pert, vol) <= 10 * tol


def test_truncation_refinement_improves_energy():
    lam, n = 0.05, 8
    e_ed, _, site, pert, vol, H = _ed_ground(lam, n)
    errs = []
    for dmax in (2, 3, 4, 5):
        _, e, _ = solve_ground_state(
            site, pert, vol, truncation=Truncation(4, dmax), hamiltonian=H
        )
        errs.append(abs(e - e_ed))
    for a, b in zip(errs, errs[1:]):
        assert b <= a * (1 + 1e-6) + 1e-12


def test_contraction_failure_raises():
    site, pert = preset_tfi(0.45)
    vol = chain_volume(6)
    with pytest.raises(ContractionError):
        solve_ground_state(site, pert, vol, truncation=Truncation(3, 3), max_iter=60)


def test_weighted_bound_certificate():
    lam = 0.1
    site, pert = preset_tfi(lam)
    vol = chain_volume(8)
    frame, _, diag = solve_ground_state(site, pert, vol, truncation=Truncation(4, 5))
    assert diag.eps_certificate is not None
    assert weighted_norm(frame.gs, diag.eps_certificate, site, vol) <= 1.0 + 1e-9
    assert diag.eps_decay is not None
    assert diag.eps_decay < 5 * lam


def test_eps_decay_roughly_linear_in_coupling():
    site0, _ = preset_tfi(0.1)
    vol = chain_volume(8)
    fits = {}
    for lam in (0.02, 0.05, 0.1):
        site, pert = preset_tfi(lam)
        frame, _, diag = solve_ground_state(site, pert, vol, truncation=Truncation(4, 5))
        fits[lam] = diag.eps_decay / lam
    ratios = list(fits.values())
    assert max(ratios) <= 2 * min(ratios)


def test_gap_surrogate_across_sizes():
    lam = 0.1
    c2s = []
    for n in (6, 8):
        e_ed, _, site, pert, vol, H = _ed_ground(lam, n)
        vals, _ = dense_spectrum(H)
        gap = vals[1] - vals[0]
        assert gap >= 1 - 3 * lam
        c2s.append((1 - gap) / lam)
    mean = np.mean(c2s)
    assert all(abs(c - mean) <= 0.5 * mean for c in c2s)


# ---------------------------------------------------------------------------
# correlations


def test_zero_coupling_correlation_vanishes():
    site, pert = preset_tfi(0.0)
    vol = chain_volume(5)
    frame, _, _ = solve_ground_state(site, pert, vol)
    val = correlation(frame, SX, [(0,)], SX, [(3,)], vol, site)
    assert abs(val) < 1e-13


def test_identity_correlation_vanishes():
    site, pert = preset_tfi(0.1)
    vol = chain_volume(5)
    frame, _, _ = solve_ground_state(site, pert, vol, truncation=Truncation(4, 4))
    eye = np.eye(2)
    val = correlation(frame, eye, [(0,)], eye, [(3,)], vol, site)
    assert abs(val) < 1e-12


def test_correlation_matches_ed_and_decays():
    lam, n = 0.1, 10
    site, pert = preset_tfi(lam)
    vol = chain_volume(n)
    H = assemble_dense_hamiltonian(vol, site, pert)
    vals, vecs = dense_spectrum(H)
    gs = vecs[:, 0]
    space = vol.space(site)
    from latqp import tensors

    frame, _, _ = solve_ground_state(
        site, pert, vol, truncation=Truncation(4, 5), hamiltonian=H
    )
    rows, slope = decay_scan(frame, SX, SX, range(1, 5), vol, site, base=(2,))
    prev = None
    for r, val in rows:
        other = (2 + r,)
        a = tensors.apply_local_operator(gs, SX, [(2,)], space)
        b = tensors.apply_local_operator(gs, SX, [other], space)
        ed_con = np.vdot(a, b) - np.vdot(gs, a) * np.vdot(gs, b)
        # solver correlation tracks the dense oracle
        assert abs(val - ed_con) <= 2e-4 + 0.05 * abs(ed_con)
        if prev is not None:
            assert abs(val) <= 3 * lam * abs(prev)
        prev = val
    assert slope is not None and slope < 0


def test_overlapping_supports_rejected():
    site, pert = preset_tfi(0.1)
    vol = chain_volume(4)
    frame, _, _ = solve_ground_state(site, pert, vol, truncation=Truncation(3, 3))
    with pytest.raises(ValueError):
        correlation(frame, SX, [(1,)], SX, [(1,)], vol, site)
