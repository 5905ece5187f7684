"""One-particle subspace: projected seed vectors, Gram orthonormalization,
hopping amplitudes of the resulting translated basis and the dispersion
relation on the torus of quasi-momenta.

Momentum conventions: the torus is [0, 1)^nu, lattice shifts act in the
momentum picture as multiplication by exp(2 pi i <x, p>), and the dispersion
is the finite Fourier sum of the hopping amplitudes.  Group velocities are
quoted in lattice sites per unit time, i.e. the stationary-phase velocity
d m / d p divided by 2 pi.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import cluster
from .model import cluster_metric


class BasisError(Exception):
    pass


@dataclass
class OneParticleBasis:
    """Projected seeds, their Gram matrix, the orthonormal family and its
    hopping data over a window of bulk sites."""

    window: tuple
    projected: dict
    gram: np.ndarray
    xi: dict
    hoppings: dict = field(default_factory=dict)
    dispersion_grid: np.ndarray = None
    dispersion: np.ndarray = None
    frame: object = None
    operator: object = None


def marked_seed(site, x):
    """Collection holding the marked single-site vector at x."""
    out = cluster.Collection(site.dim)
    out.set(((tuple(x)),), site.w_excited)
    return out


def bulk_window(volume, truncation, pert):
    """Sites far enough from an open boundary for projected seeds to be clean."""
    if volume.boundary == "periodic":
        return tuple(sorted(volume.sites))
    span = max(
        abs(c) for off in pert.range_offsets for c in off
    )
    margin = truncation.dmax if truncation.dmax < 10 ** 9 else 0
    margin = margin + span
    lo = tuple(min(s[i] for s in volume.sites) for i in range(volume.nu))
    hi = tuple(max(s[i] for s in volume.sites) for i in range(volume.nu))
    out = [
        s
        for s in sorted(volume.sites)
        if all(s[i] - lo[i] >= margin and hi[i] - s[i] >= margin for i in range(volume.nu))
    ]
    if not out:
        raise BasisError("volume too small for a bulk window at this truncation")
    return tuple(out)


def project_seed(x, op, contour=None, k_max=20):
    """Spectral projection of the marked seed at x; returns (collection,
    remainder report).

    The projected collection carries the seed as its leading entry; the
    remainder is everything else, reported with its amplitude-sum norm and
    the smallest weight for which its anchored distance-weighted sum stays
    below one.
    """
    x = tuple(x)
    if op.volume.boundary == "open":
        margin = op.truncation.dmax if op.truncation.dmax < 10 ** 9 else 0
        vol = op.volume
        for ax in range(vol.nu):
            lo = min(s[ax] for s in vol.sites)
            hi = max(s[ax] for s in vol.sites)
            if x[ax] - lo < margin or hi - x[ax] < margin:
                raise BasisError(f"seed site {x} too close to the open boundary")
    seed = marked_seed(op.site, x)
    proj = op.projector_apply(seed, contour, k_max=k_max)
    remainder = proj.plus(seed, -1.0)
    report = {
        "remainder_norm": cluster.triple_norm(remainder),
        "remainder_eps": _anchored_eps(remainder, op.site, x, op.volume),
    }
    return proj, report


def _anchored_eps(coll, site, x, volume, tol=1e-4):
    """Smallest eps with sum_I ||H_I0 v_I|| eps^-(d_{I u {x}}+1) <= 1."""
    terms = []
    for key, amps in coll.items():
        a = cluster.free_apply_amps(amps, site)
        dd = cluster_metric(tuple(set(key) | {tuple(x)}), volume)
        terms.append((float(np.linalg.norm(a)), dd))
    if abs(coll.scalar) > 0:
        terms.append((abs(coll.scalar), 0))
    if not terms:
        return None

    def total(eps):
        return sum(w * eps ** (-(dd + 1)) for w, dd in terms)

    hi = 1.0 - 1e-9
    if total(hi) > 1.0:
        return None
    lo = 1e-6
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if total(mid) <= 1.0:
            hi = mid
        else:
            lo = mid
        if hi - lo < tol * hi:
            break
    return hi


def project_window(op, window=None, contour=None, k_max=20):
    """Projected seeds for every window site; periodic volumes compute one
    column and translate it."""
    vol = op.volume
    window = tuple(tuple(x) for x in (window or bulk_window(vol, op.truncation, op.pert)))
    projected = {}
    reports = {}
    if vol.boundary == "periodic":
        base = window[0]
        proj0, rep0 = project_seed(base, op, contour, k_max)
        for x in window:
            shift = tuple(a - b for a, b in zip(x, base))
            projected[x] = (
                proj0 if not any(shift) else cluster.translate_collection(proj0, shift, vol)
            )
            reports[x] = rep0
    else:
        for x in window:
            projected[x], reports[x] = project_seed(x, op, contour, k_max)
    return window, projected, reports


def gram_matrix(projected, frame, space, window=None):
    """Overlaps of the projected seeds in the interacting ground state."""
    window = tuple(window) if window is not None else tuple(sorted(projected))
    gv = cluster.exp_apply(frame, space)
    gnorm2 = float(np.vdot(gv, gv).real)
    vecs = {
        x: cluster.apply_creation_sum(projected[x], gv, space) for x in window
    }
    n = len(window)
    G = np.zeros((n, n), dtype=complex)
    for i, x in enumerate(window):
        for j, y in enumerate(window):
            if j < i:
                continue
            val = np.vdot(vecs[y], vecs[x]) / gnorm2
            G[j, i] = val
            G[i, j] = np.conj(val)
    herm_defect = np.linalg.norm(G - G.conj().T)
    if herm_defect > 1e-10 * max(1.0, np.linalg.norm(G)):
        raise BasisError(f"Gram matrix not Hermitian (defect {herm_defect:.2e})")
    return G


def orthonormalize(projected, G, window=None):
    """Inverse-square-root combination of the projected family."""
    window = tuple(window) if window is not None else tuple(sorted(projected))
    evals, evecs = np.linalg.eigh(G)
    if evals.min() <= 1e-12:
        raise BasisError(
            f"Gram matrix not positive definite (min eigenvalue {evals.min():.2e}); "
            "shrink the window or the coupling"
        )
    Gmh = evecs @ np.diag(evals ** -0.5) @ evecs.conj().T
    xi = {}
    for i, x in enumerate(window):
        combo = cluster.Collection(next(iter(projected.values())).dim)
        for j, y in enumerate(window):
            c = Gmh[i, j]
            if abs(c) >= 1e-15:
                combo.add_scaled(projected[y], c)
        xi[x] = combo.prune()
    return xi


def hopping_amplitudes(xi, op, space, center=None, window=None):
    """t(y) = overlap of the renormalized action on the translated basis
    vector with the central one; returns {offset: t} plus a decay fit."""
    window = tuple(window) if window is not None else tuple(sorted(xi))
    center = tuple(center) if center is not None else window[len(window) // 2]
    vol = op.volume
    gv = cluster.exp_apply(op.frame, space)
    gnorm2 = float(np.vdot(gv, gv).real)
    center_vec = cluster.apply_creation_sum(xi[center], gv, space)
    hoppings = {}
    for x in window:
        hx = op.apply(xi[x])
        hvec = cluster.apply_creation_sum(hx, gv, space)
        offset = vol.displacement(center, x)
        t = complex(np.vdot(center_vec, hvec) / gnorm2)
        for image, weight in _boundary_images(offset, vol):
            hoppings[image] = hoppings.get(image, 0.0) + weight * t
    fit = hopping_decay_fit(hoppings)
    return hoppings, fit


def _boundary_images(offset, vol):
    """Split offsets sitting exactly at half a period across both images, so
    the Fourier sums stay real for Hermitian data."""
    if vol.boundary != "periodic":
        return [(offset, 1.0)]
    choices = []
    for o, L in zip(offset, vol.extent):
        if 2 * abs(o) == L:
            choices.append((o, -o))
        else:
            choices.append((o,))
    images = list(itertools.product(*choices))
    return [(im, 1.0 / len(images)) for im in images]


def hopping_decay_fit(hoppings, floor=1e-13):
    """Linear fit of log magnitude against distance; returns (slope, r2)."""
    pts = [
        (sum(abs(c) for c in off), abs(t))
        for off, t in hoppings.items()
        if sum(abs(c) for c in off) > 0 and abs(t) > floor
    ]
    if len(pts) < 2:
        return None, None
    xs = np.array([p[0] for p in pts])
    ys = np.log(np.array([p[1] for p in pts]))
    slope, intercept = np.polyfit(xs, ys, 1)
    pred = slope * xs + intercept
    ss_res = float(np.sum((ys - pred) ** 2))
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(r2)


def check_hermitian_hoppings(hoppings, tol=1e-10):
    worst = 0.0
    for off, t in hoppings.items():
        neg = tuple(-c for c in off)
        if neg in hoppings:
            worst = max(worst, abs(t - np.conj(hoppings[neg])))
    return worst <= tol, worst


def dispersion(hoppings, grid_size, nu=1, imag_tol=1e-8):
    """m(p) on a uniform torus grid from the finite hopping Fourier sum.

    Returns (grid points, m values, group velocities in sites per unit time).
    """
    grids = np.meshgrid(
        *[np.arange(g) / g for g in ([grid_size] * nu)], indexing="ij"
    )
    m = np.zeros(grids[0].shape, dtype=complex)
    v = [np.zeros(grids[0].shape, dtype=complex) for _ in range(nu)]
    for off, t in hoppings.items():
        phase = np.exp(2j * np.pi * sum(o * g for o, g in zip(off, grids)))
        m += t * phase
        for ax in range(nu):
            v[ax] += t * 2j * np.pi * off[ax] * phase
    if np.max(np.abs(m.imag)) > imag_tol:
        raise BasisError(
            f"dispersion has residual imaginary part {np.max(np.abs(m.imag)):.2e}: "
            "non-Hermitian hopping data"
        )
    vel = np.stack([vv.real / (2 * np.pi) for vv in v])
    for vv in v:
        if np.max(np.abs(vv.imag)) > imag_tol:
            raise BasisError("group velocity has residual imaginary part")
    if nu == 1:
        return grids[0], m.real, vel[0]
    return np.stack(grids), m.real, vel


def dispersion_at(hoppings, p):
    """Evaluate the hopping Fourier sum at arbitrary momenta (band-limited)."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    m = np.zeros(p.shape, dtype=complex)
    for off, t in hoppings.items():
        m += t * np.exp(2j * np.pi * off[0] * p)
    return m.real


def group_velocity_at(hoppings, p):
    p = np.atleast_1d(np.asarray(p, dtype=float))
    v = np.zeros(p.shape, dtype=complex)
    for off, t in hoppings.items():
        v += t * 2j * np.pi * off[0] * np.exp(2j * np.pi * off[0] * p)
    return v.real / (2 * np.pi)


def expand_one_particle(u, basis, op, space):
    """Coefficients of the projected cluster vector over the orthonormal
    family, by one least-squares solve; returns (coefficients, residual)."""
    coll = cluster.Collection(op.site.dim)
    coll.set(u.sites, u.amplitudes)
    proj = op.projector_apply(coll)
    gv = cluster.exp_apply(op.frame, space)
    gnorm = np.linalg.norm(gv)
    target = cluster.apply_creation_sum(proj, gv, space) / gnorm
    window = tuple(sorted(basis.xi))
    cols = np.stack(
        [cluster.apply_creation_sum(basis.xi[x], gv, space) / gnorm for x in window],
        axis=1,
    )
    coeffs, *_ = np.linalg.lstsq(cols, target, rcond=None)
    resid = float(np.linalg.norm(cols @ coeffs - target))
    cond = np.linalg.cond(cols.conj().T @ cols)
    if cond > 1e8:
        raise BasisError(f"ill-conditioned one-particle solve (cond {cond:.2e})")
    return {x: complex(c) for x, c in zip(window, coeffs)}, resid


def build_basis(op, window=None, contour=None, grid_size=None, k_max=20):
    """Full pipeline: project seeds, orthonormalize, extract hoppings and the
    dispersion samples."""
    space = op.volume.space(op.site)
    window, projected, reports = project_window(op, window, contour, k_max)
    G = gram_matrix(projected, op.frame, space, window)
    xi = orthonormalize(projected, G, window)
    hoppings, fit = hopping_amplitudes(xi, op, space, window=window)
    herm_ok, herm_defect = check_hermitian_hoppings(hoppings)
    if not herm_ok:
        raise BasisError(f"hopping data not Hermitian (defect {herm_defect:.2e})")
    grid_size = grid_size if grid_size is not None else len(window)
    grid, m, vel = dispersion(hoppings, grid_size, op.volume.nu)
    basis = OneParticleBasis(
        window=window,
        projected=projected,
        gram=G,
        xi=xi,
        hoppings=hoppings,
        dispersion_grid=grid,
        dispersion=m,
        frame=op.frame,
        operator=op,
    )
    basis.reports = reports
    basis.decay_fit = fit
    return basis
