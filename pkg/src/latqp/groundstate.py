"""Ground-state solver: a residual-correction fixed point on collections.

Each sweep expands (H - E) applied to the current exponential-ansatz vector
back into cluster coordinates and cancels the residual against the inverse of
the diagonal free action, which is well defined on excited clusters thanks to
the unit spectral gap.  The energy is re-evaluated self-consistently as the
ground-component of the residual before the shift.
"""

from dataclasses import dataclass, field

import numpy as np

from . import cluster, tensors
from .model import assemble_dense_hamiltonian, cluster_metric


class ContractionError(Exception):
    pass


@dataclass
class GroundFrame:
    """Converged ground-state collection plus the certificate it carries."""

    gs: cluster.Collection
    energy: float
    epsilon: float = None  # smallest weight for which the anchored bound holds


@dataclass
class SolveDiagnostics:
    iterations: int
    update_norms: list = field(default_factory=list)
    contraction_ratios: list = field(default_factory=list)
    eps_certificate: float = None
    eps_decay: float = None
    converged: bool = False
    energy_history: list = field(default_factory=list)


def fixed_point_map(coll, site, pert, volume, hamiltonian=None, supports=None):
    """One sweep of the residual-correction map; returns (new collection, E).

    E is fixed so the ground component of the shifted residual vanishes; the
    excited components are divided by their free energies and subtracted.
    """
    space = volume.space(site)
    H = hamiltonian if hamiltonian is not None else assemble_dense_hamiltonian(volume, site, pert)
    if supports is None:
        supports = cluster.enumerate_supports(volume, coll.truncation)
    gv = cluster.exp_apply(coll, space)
    hv = H @ gv
    energy = float(np.real(hv.flat[0]))  # ground overlap of exp ansatz is 1
    resid_vec = hv - energy * gv
    resid, _ = cluster.frame_components(
        resid_vec, coll, space, truncation=coll.truncation, supports=supports
    )
    new = coll.copy()
    for key, amps in resid.items():
        corr = amps / _free_factors(site, len(key))
        prev = new.entries.get(key)
        new.entries[key] = (prev - corr) if prev is not None else -corr
    new.prune()
    return new, energy


def _free_factors(site, k):
    levels = site.excited_energies
    if k == 0:
        return np.array(1.0)
    grids = np.meshgrid(*([levels] * k), indexing="ij")
    return sum(grids)


def solve_ground_state(
    site,
    pert,
    volume,
    truncation=None,
    tol=1e-10,
    max_iter=200,
    damping=1.0,
    hamiltonian=None,
):
    """Iterate the residual-correction map from the empty collection.

    Stops when the update's amplitude-sum norm drops below tol; oscillation
    halves the damping once, two consecutive growths abort.  Returns
    (GroundFrame, energy, SolveDiagnostics).
    """
    truncation = truncation if truncation is not None else cluster.Truncation()
    space = volume.space(site)
    H = hamiltonian if hamiltonian is not None else assemble_dense_hamiltonian(volume, site, pert)
    supports = cluster.enumerate_supports(volume, truncation)
    coll = cluster.Collection(site.dim, truncation)
    diag = SolveDiagnostics(iterations=0)
    energy = 0.0
    grew = 0
    for it in range(1, max_iter + 1):
        proposal, energy = fixed_point_map(
            coll, site, pert, volume, hamiltonian=H, supports=supports
        )
        if damping != 1.0:
            proposal = coll.plus(proposal.plus(coll, -1.0), damping)
        update = proposal.plus(coll, -1.0)
        unorm = cluster.triple_norm(update)
        diag.update_norms.append(unorm)
        diag.energy_history.append(energy)
        diag.iterations = it
        if len(diag.update_norms) >= 2 and diag.update_norms[-2] > 0:
            ratio = unorm / diag.update_norms[-2]
            diag.contraction_ratios.append(ratio)
            if ratio > 1.0:
                grew += 1
                if grew >= 2:
                    raise ContractionError(
                        "perturbation too strong: update norm grew twice in a row"
                    )
                damping = max(damping / 2, 0.125)
            else:
                grew = 0
        coll = proposal
        if unorm < tol:
            diag.converged = True
            break
    if not diag.converged:
        raise ContractionError(f"no convergence within {max_iter} sweeps")
    # energy for the final collection
    gv = cluster.exp_apply(coll, space)
    energy = float(np.real((H @ gv).flat[0]))
    diag.eps_certificate = cluster.smallest_certified_eps(coll, site, volume)
    diag.eps_decay = cluster.decay_rate_eps(coll, site, volume)
    frame = GroundFrame(gs=coll, energy=energy, epsilon=diag.eps_certificate)
    return frame, energy, diag


def ground_residual(frame, site, pert, volume, hamiltonian=None):
    """||(H - E) v|| / ||v|| for the reconstructed ground vector."""
    space = volume.space(site)
    H = hamiltonian if hamiltonian is not None else assemble_dense_hamiltonian(volume, site, pert)
    gv = cluster.exp_apply(frame.gs, space)
    return float(np.linalg.norm(H @ gv - frame.energy * gv) / np.linalg.norm(gv))


# ---------------------------------------------------------------------------
# correlations in the reconstructed ground state


def correlation(frame, a1, sites1, a2, sites2, volume, site):
    """Connected expectation of two local observables in the ground state.

    Observables are matrices over the listed site factors in the original
    per-site basis; supports may not overlap.
    """
    if set(map(tuple, sites1)) & set(map(tuple, sites2)):
        raise ValueError("observable supports overlap")
    space = volume.space(site)
    psi = cluster.exp_apply(frame.gs, space)
    psi = psi / np.linalg.norm(psi)
    A1 = _canonical_operator(a1, len(sites1), site)
    A2 = _canonical_operator(a2, len(sites2), site)
    v2 = tensors.apply_local_operator(psi, A2, sites2, space)
    v12 = tensors.apply_local_operator(v2, A1, sites1, space)
    ev12 = complex(np.vdot(psi, v12))
    ev1 = complex(np.vdot(psi, tensors.apply_local_operator(psi, A1, sites1, space)))
    ev2 = complex(np.vdot(psi, v2))
    return ev12 - ev1 * ev2


def _canonical_operator(a, nsites, site):
    a = np.asarray(a, dtype=complex)
    U = site.to_canonical
    Uk = U
    for _ in range(nsites - 1):
        Uk = np.kron(Uk, U)
    return Uk.conj().T @ a @ Uk


def decay_scan(frame, a1, a2, separations, volume, site, base=None):
    """Connected correlations of single-site observables versus separation.

    Returns (rows, slope): rows of (distance, value) and the fitted slope of
    log-magnitude against distance (None when everything is negligible).
    """
    base = tuple(base) if base is not None else min(volume.sites)
    rows = []
    for r in separations:
        other = volume.translate(base, (r,) + (0,) * (volume.nu - 1))
        val = correlation(frame, a1, [base], a2, [other], volume, site)
        rows.append((r, val))
    pts = [(r, abs(v)) for r, v in rows if abs(v) > 1e-14]
    slope = None
    if len(pts) >= 2:
        xs = np.array([p[0] for p in pts], dtype=float)
        ys = np.log([p[1] for p in pts])
        slope = float(np.polyfit(xs, ys, 1)[0])
    return rows, slope
