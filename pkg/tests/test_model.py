"""Model construction, validation, assembly and cluster-metric tests."""

import itertools

import numpy as np
import pytest

from latqp.model import (
    assemble_dense_hamiltonian,
    box_volume,
    chain_volume,
    cluster_metric,
    cluster_metric_rel,
    free_diagonal,
    make_local_site,
    make_perturbation,
    preset_tfi,
    validate_model,
    ModelError,
)
from latqp.tensors import CapacityError


def test_validate_tfi_preset_passes():
    site, pert = preset_tfi(0.1)
    report = validate_model(site, pert)
    assert report.ok
    assert report.gap == pytest.approx(1.0)
    assert report.strength == pytest.approx(0.1)


def test_validate_rejects_small_gap():
    site = make_local_site(np.diag([0.0, 0.5]), omega_index=0, mu_index=1)
    pert = make_perturbation([(0,)], np.zeros((2, 2)), site)
    report = validate_model(site, pert)
    assert not report.ok
    bad = [c for c in report.checks if not c.passed]
    assert any("gap" in c.name for c in bad)


def test_validate_rejects_mu_equal_to_sum():
    site = make_local_site(np.diag([0.0, 1.0, 2.0]), omega_index=0, mu_index=2)
    pert = make_perturbation([(0,)], np.zeros((3, 3)), site)
    report = validate_model(site, pert)
    assert not report.ok
    bad = [c for c in report.checks if not c.passed]
    assert any("sum" in c.name for c in bad)


def test_validate_reports_hermiticity_defect():
    site = make_local_site(np.diag([0.0, 1.5]), omega_index=0, mu_index=1)
    phi = np.array([[0.0, 1.0], [0.0, 0.0]])
    pert = make_perturbation([(0,)], phi, site)
    report = validate_model(site, pert)
    bad = [c for c in report.checks if not c.passed]
    assert any("perturbation hermitian" in c.name for c in bad)
    assert any(c.value > 0.5 for c in bad)


def test_preset_zero_coupling():
    site, pert = preset_tfi(0.0)
    assert pert.strength == 0.0
    assert np.all(pert.phi == 0)


def test_preset_strength_is_operator_norm():
    _, pert = preset_tfi(0.1)
    assert pert.strength == pytest.approx(0.1, abs=1e-14)


def test_preset_rejects_negative():
    with pytest.raises(ModelError):
        preset_tfi(-0.1)


def test_two_site_ground_energy_matches_dense_oracle():
    # independent oracle: diagonalize the 4x4 matrix directly
    lam = 0.1
    site, pert = preset_tfi(lam)
    vol = chain_volume(2)
    H = assemble_dense_hamiltonian(vol, site, pert).toarray()
    evals = np.linalg.eigvalsh(H)
    sx = np.array([[0, 1], [1, 0]], dtype=float)
    oracle = np.kron(np.diag([0.0, 1.0]), np.eye(2)) + np.kron(np.eye(2), np.diag([0.0, 1.0]))
    oracle = oracle - lam * np.kron(sx, sx)
    expected = np.linalg.eigvalsh(oracle)
    assert np.allclose(evals, expected, atol=1e-12)
    assert -0.01 < evals[0] < 0.0
    assert evals[0] == pytest.approx(1.0 - np.sqrt(1.0 + lam ** 2), abs=1e-12)


def test_free_hamiltonian_is_excitation_count():
    site, pert = preset_tfi(0.0)
    vol = chain_volume(3)
    H = assemble_dense_hamiltonian(vol, site, pert).toarray()
    assert np.allclose(H, np.diag(np.diag(H)))
    counts = sorted(np.diag(H).real)
    expected = sorted(bin(i).count("1") for i in range(8))
    assert counts == expected


def test_two_site_coupling_structure():
    lam = 0.1
    site, pert = preset_tfi(lam)
    vol = chain_volume(2)
    H = assemble_dense_hamiltonian(vol, site, pert).toarray().real
    # basis order 00, 01, 10, 11
    assert H[0, 3] == pytest.approx(-lam)
    assert H[1, 2] == pytest.approx(-lam)
    assert H[0, 1] == 0 and H[0, 2] == 0


def test_chain_leading_order_ground_energy():
    lam, n = 0.1, 8
    site, pert = preset_tfi(lam)
    vol = chain_volume(n)
    H = assemble_dense_hamiltonian(vol, site, pert).toarray()
    e0 = np.linalg.eigvalsh(H)[0]
    leading = -(n - 1) * lam ** 2 / 2
    assert e0 == pytest.approx(leading, abs=2e-4)


def test_assembled_hamiltonian_is_hermitian():
    site, pert = preset_tfi(0.17)
    vol = chain_volume(5)
    H = assemble_dense_hamiltonian(vol, site, pert)
    assert abs(H - H.conj().T).max() < 1e-14


def test_free_spectrum_is_sums_of_site_levels():
    site = make_local_site(np.diag([0.0, 1.0, 2.5]), omega_index=0, mu_index=1)
    pert = make_perturbation([(0,)], np.zeros((3, 3)), site)
    vol = chain_volume(3)
    H = assemble_dense_hamiltonian(vol, site, pert)
    got = sorted(np.round(free_diagonal(vol, site), 9))
    expected = sorted(
        round(sum(c), 9) for c in itertools.product([0.0, 1.0, 2.5], repeat=3)
    )
    assert got == expected
    assert np.allclose(sorted(np.linalg.eigvalsh(H.toarray())), got)


def test_capacity_error_names_ceiling():
    site, pert = preset_tfi(0.1)
    vol = chain_volume(8)
    with pytest.raises(CapacityError) as err:
        assemble_dense_hamiltonian(vol, site, pert, ceiling=100)
    assert "100" in str(err.value)


def test_periodic_assembly_adds_wrap_bond():
    lam = 0.1
    site, pert = preset_tfi(lam)
    open_H = assemble_dense_hamiltonian(chain_volume(4, "open"), site, pert)
    per_H = assemble_dense_hamiltonian(chain_volume(4, "periodic"), site, pert)
    diff = per_H - open_H
    assert abs(diff).max() == pytest.approx(lam)


# ---------------------------------------------------------------------------
# cluster metrics


def test_metric_single_site():
    assert cluster_metric([(3,)]) == 0


def test_metric_pair_is_path_length():
    assert cluster_metric([(0,), (3,)]) == 3


def _steiner_oracle_2d(points):
    # exhaustive: best single junction in the bounding box (3 terminals)
    xs = range(min(p[0] for p in points), max(p[0] for p in points) + 1)
    ys = range(min(p[1] for p in points), max(p[1] for p in points) + 1)
    best = None
    for s in itertools.product(xs, ys):
        tot = sum(abs(p[0] - s[0]) + abs(p[1] - s[1]) for p in points)
        best = tot if best is None else min(best, tot)
    return best


def test_metric_three_points_2d():
    pts = [(0, 0), (2, 0), (0, 2)]
    assert _steiner_oracle_2d(pts) == 4
    assert cluster_metric(pts) == 4


def test_metric_steiner_beats_mst():
    pts = [(0, 0), (1, 1), (2, 0)]
    assert cluster_metric(pts) == 3  # junction at (1, 0)


def test_metric_shift_invariance():
    rng = np.random.default_rng(7)
    for _ in range(20):
        pts = [tuple(rng.integers(0, 5, size=2)) for _ in range(3)]
        pts = list(dict.fromkeys(pts))
        shift = tuple(rng.integers(-3, 4, size=2))
        moved = [tuple(p + s for p, s in zip(pt, shift)) for pt in pts]
        assert cluster_metric(pts) == cluster_metric(moved)


def test_metric_monotone_under_extra_site():
    rng = np.random.default_rng(11)
    for _ in range(20):
        pts = {tuple(rng.integers(0, 4, size=2)) for _ in range(3)}
        extra = tuple(rng.integers(0, 4, size=2))
        d0 = cluster_metric(sorted(pts))
        d1 = cluster_metric(sorted(pts | {extra}))
        assert d0 <= d1


def test_metric_rel_bounded_by_union():
    cases = [
        ([(1,)], [(0,)]),
        ([(4,), (6,)], [(0,), (1,)]),
        ([(0, 0), (1, 1)], [(2, 0)]),
    ]
    for J, I in cases:
        assert cluster_metric_rel(J, I) <= cluster_metric(tuple(J) + tuple(I))


def test_metric_rel_examples():
    assert cluster_metric_rel([], [(0,)]) == 0
    assert cluster_metric_rel([(3,)], [(0,), (1,)]) == 2
    # two far sites each attach to the base separately
    assert cluster_metric_rel([(-2,), (3,)], [(0,), (1,)]) == 4


def test_metric_periodic_wraps():
    vol = chain_volume(8, "periodic")
    assert cluster_metric([(0,), (7,)], vol) == 1
    assert cluster_metric([(0,), (4,)], vol) == 4


def test_periodic_volume_must_be_box():
    with pytest.raises(ModelError):
        from latqp.model import Volume

        Volume(nu=1, sites=((0,), (2,)), boundary="periodic", extent=(3,))


def test_d3_model_builds():
    h = np.diag([0.0, 1.0, 1.7])
    site = make_local_site(h, omega_index=0, mu_index=1)
    assert site.mu == pytest.approx(1.0)
    assert list(site.excited_energies) == [1.0, 1.7]
    x = np.zeros((3, 3))
    x[0, 1] = x[1, 0] = 1.0
    x[1, 2] = x[2, 1] = 1.0
    pert = make_perturbation([(0,), (1,)], -0.1 * np.kron(x, x), site)
    report = validate_model(site, pert)
    assert report.ok
