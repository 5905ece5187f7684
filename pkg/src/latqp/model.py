"""Lattice model definition: local spaces, free Hamiltonian, perturbation,
volumes and the geometric cluster metrics.

Single-site data are canonicalized to the eigenbasis of the on-site
Hamiltonian (ground level first, then excited levels by increasing energy),
so the free part acts diagonally on the digit strings used by tensors.py.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps

from .tensors import SiteSpace, embed_sparse_operator, state_ceiling, CapacityError

HERMITICITY_TOL = 1e-12
EIG_TOL = 1e-9


class ModelError(Exception):
    pass


# ---------------------------------------------------------------------------
# single-site data


@dataclass(frozen=True)
class LocalSite:
    """On-site Hamiltonian with a zero ground level and a marked excited level.

    dim: local Hilbert dimension.
    h: Hermitian dim x dim matrix (dimensionless energy, ground level 0).
    omega_index: basis index of the ground vector.
    mu: the marked isolated non-degenerate eigenvalue.
    w: unit eigenvector of h for mu.
    """

    dim: int
    h: np.ndarray
    omega_index: int
    mu: float
    w: np.ndarray
    # canonical (eigenbasis) data, filled in by make_local_site
    excited_energies: np.ndarray = field(repr=False, default=None)
    to_canonical: np.ndarray = field(repr=False, default=None)
    w_excited: np.ndarray = field(repr=False, default=None)
    mu_slot: int = field(repr=False, default=-1)


def make_local_site(h, omega_index, mu_index):
    """Build a LocalSite from a matrix, the ground basis index and the index
    of the marked eigenvalue in the ascending spectrum of h."""
    h = np.asarray(h, dtype=complex)
    d = h.shape[0]
    if h.shape != (d, d):
        raise ModelError("single-site Hamiltonian must be square")
    evals, evecs = np.linalg.eigh(h)
    omega = np.zeros(d)
    omega[omega_index] = 1.0
    # identify the ground eigenvector with the requested basis vector
    ground_slot = int(np.argmin(np.abs(evals)))
    if abs(evals[ground_slot]) > EIG_TOL:
        raise ModelError("h has no zero eigenvalue for the ground vector")
    if abs(abs(np.vdot(evecs[:, ground_slot], omega)) - 1.0) > 1e-8:
        raise ModelError("ground basis vector is not an eigenvector of h")
    mu = float(evals[mu_index])
    w = evecs[:, mu_index].copy()
    # fix a deterministic phase: largest-magnitude entry real positive
    j = int(np.argmax(np.abs(w)))
    w = w * np.exp(-1j * np.angle(w[j]))
    if abs(np.vdot(w, w).real - 1.0) > 1e-12:
        w = w / np.linalg.norm(w)

    order = [i for i in np.argsort(evals) if i != ground_slot]
    excited = np.array([evals[i] for i in order])
    U = np.zeros((d, d), dtype=complex)
    U[:, 0] = omega
    for col, i in enumerate(order, start=1):
        vec = evecs[:, i]
        j = int(np.argmax(np.abs(vec)))
        U[:, col] = vec * np.exp(-1j * np.angle(vec[j]))
    w_exc = U[:, 1:].conj().T @ w
    mu_slot = int(np.argmax(np.abs(w_exc)))
    return LocalSite(
        dim=d,
        h=h,
        omega_index=int(omega_index),
        mu=mu,
        w=w,
        excited_energies=excited,
        to_canonical=U,
        w_excited=w_exc,
        mu_slot=mu_slot,
    )


@dataclass(frozen=True)
class PerturbationTemplate:
    """Finite-range perturbation cell: offsets, the coupling matrix and its norm."""

    range_offsets: tuple
    phi: np.ndarray
    strength: float
    phi_canonical: np.ndarray = field(repr=False, default=None)


def make_perturbation(offsets, phi, site):
    offsets = tuple(tuple(o) for o in offsets)
    phi = np.asarray(phi, dtype=complex)
    k = len(offsets)
    d = site.dim
    if phi.shape != (d ** k, d ** k):
        raise ModelError(f"perturbation matrix must be {d**k} x {d**k}")
    strength = float(np.linalg.norm(phi, 2))
    U = site.to_canonical
    Uk = U
    for _ in range(k - 1):
        Uk = np.kron(Uk, U)
    phi_c = Uk.conj().T @ phi @ Uk
    return PerturbationTemplate(offsets, phi, strength, phi_c)


# ---------------------------------------------------------------------------
# volumes


@dataclass(frozen=True)
class Volume:
    """A finite set of lattice points with open or periodic identification."""

    nu: int
    sites: tuple
    boundary: str
    extent: tuple = None

    def __post_init__(self):
        if self.boundary not in ("open", "periodic"):
            raise ModelError("boundary must be 'open' or 'periodic'")
        if len(set(self.sites)) != len(self.sites):
            raise ModelError("volume sites must be distinct")
        if self.boundary == "periodic":
            if self.extent is None:
                raise ModelError("periodic volume needs an extent")
            box = set(itertools.product(*[range(L) for L in self.extent]))
            if set(self.sites) != box:
                raise ModelError("periodic volume must be a full rectangular box")

    @property
    def nsites(self):
        return len(self.sites)

    def space(self, site):
        return SiteSpace(self.sites, site.dim)

    def wrap(self, x):
        if self.boundary == "periodic":
            return tuple(int(c) % L for c, L in zip(x, self.extent))
        return tuple(int(c) for c in x)

    def contains(self, x):
        return self.wrap(x) in set(self.sites) if self.boundary == "periodic" else tuple(x) in set(self.sites)

    def shift_site(self, x, offset):
        y = tuple(a + b for a, b in zip(x, offset))
        if self.boundary == "periodic":
            return self.wrap(y)
        return y if y in self._site_set() else None

    def _site_set(self):
        return set(self.sites)

    def displacement(self, a, b):
        """Per-axis displacement b - a, minimal image for periodic volumes."""
        delta = [bb - aa for aa, bb in zip(a, b)]
        if self.boundary == "periodic":
            out = []
            for dlt, L in zip(delta, self.extent):
                dlt = dlt % L
                if 2 * dlt > L:
                    dlt -= L
                out.append(dlt)
            return tuple(out)
        return tuple(delta)

    def distance(self, a, b):
        return sum(abs(c) for c in self.displacement(a, b))

    def pert_positions(self, pert):
        """Anchor shifts x such that the shifted perturbation cell lies in the volume."""
        out = []
        if self.boundary == "periodic":
            for x in self.sites:
                out.append(tuple(x))
            return out
        sset = self._site_set()
        lo = tuple(min(s[i] for s in self.sites) for i in range(self.nu))
        hi = tuple(max(s[i] for s in self.sites) for i in range(self.nu))
        omin = tuple(min(o[i] for o in pert.range_offsets) for i in range(self.nu))
        omax = tuple(max(o[i] for o in pert.range_offsets) for i in range(self.nu))
        for x in itertools.product(
            *[range(lo[i] - omin[i], hi[i] - omax[i] + 1) for i in range(self.nu)]
        ):
            cell = [tuple(a + b for a, b in zip(x, off)) for off in pert.range_offsets]
            if all(c in sset for c in cell):
                out.append(tuple(x))
        return sorted(out)

    def pert_cell(self, pert, x):
        return tuple(self.wrap(tuple(a + b for a, b in zip(x, off))) for off in pert.range_offsets)

    def translate(self, x, shift):
        y = tuple(a + b for a, b in zip(x, shift))
        return self.wrap(y) if self.boundary == "periodic" else y


def box_volume(lengths, boundary="open", origin=None):
    lengths = tuple(int(x) for x in lengths)
    nu = len(lengths)
    origin = tuple(origin) if origin else (0,) * nu
    sites = tuple(
        tuple(o + c for o, c in zip(origin, x))
        for x in itertools.product(*[range(L) for L in lengths])
    )
    extent = lengths if boundary == "periodic" else None
    if boundary == "periodic" and origin != (0,) * nu:
        raise ModelError("periodic box must start at the origin")
    return Volume(nu=nu, sites=sites, boundary=boundary, extent=extent)


def chain_volume(n, boundary="open"):
    return box_volume([n], boundary=boundary)


# ---------------------------------------------------------------------------
# cluster metrics (minimal connected-graph length, l1 geometry)


def _image_choices(cluster, volume):
    """Candidate unwrapped coordinates on a torus: the first site is pinned,
    every other site may shift by one period per axis.  Minimal connecting
    graphs never span a full period, so these images are exhaustive."""
    anchor = cluster[0]
    base = []
    for s in cluster:
        delta = volume.displacement(anchor, s)
        base.append(tuple(a + d for a, d in zip(anchor, delta)))
    options = [[base[0]]]
    for pt in base[1:]:
        alts = []
        for shift in itertools.product((-1, 0, 1), repeat=volume.nu):
            alts.append(tuple(c + k * L for c, k, L in zip(pt, shift, volume.extent)))
        options.append(sorted(set(alts)))
    return itertools.product(*options)


def _l1(a, b):
    return sum(abs(x - y) for x, y in zip(a, b))


def _steiner3(pts):
    """Exact minimal connecting length for up to three points: enumerate
    junction candidates over the bounding box (the coordinate-median star)."""
    if len(pts) <= 1:
        return 0
    if len(pts) == 2:
        return _l1(pts[0], pts[1])
    nu = len(pts[0])
    ranges = [range(min(p[i] for p in pts), max(p[i] for p in pts) + 1) for i in range(nu)]
    best = None
    for s in itertools.product(*ranges):
        tot = sum(_l1(p, s) for p in pts)
        if best is None or tot < best:
            best = tot
    return best


def _mst(pts):
    n = len(pts)
    if n <= 1:
        return 0
    intree = [False] * n
    dist = [np.inf] * n
    dist[0] = 0
    total = 0
    for _ in range(n):
        i = min((k for k in range(n) if not intree[k]), key=lambda k: dist[k])
        intree[i] = True
        total += dist[i]
        for j in range(n):
            if not intree[j]:
                dij = _l1(pts[i], pts[j])
                if dij < dist[j]:
                    dist[j] = dij
    return int(total)


def _graph_length(pts):
    if len(pts) <= 3:
        return _steiner3(pts)
    return _mst(pts)


_metric_cache = {}


def cluster_metric(cluster, volume=None):
    """Minimal length of a connected graph containing the cluster.

    Exact Steiner value for up to 3 sites, l1 minimum-spanning-tree length
    beyond (an upper bound within a constant factor).  On periodic volumes
    the minimum runs over the per-site period images.
    """
    cluster = tuple(tuple(s) for s in cluster)
    if len(cluster) <= 1:
        return 0
    if volume is None or volume.boundary != "periodic":
        return _graph_length(list(cluster))
    key = (cluster, volume.extent)
    hit = _metric_cache.get(key)
    if hit is not None:
        return hit
    best = min(_graph_length(list(pts)) for pts in _image_choices(cluster, volume))
    if len(_metric_cache) > 200000:
        _metric_cache.clear()
    _metric_cache[key] = best
    return best


def _rel_length(bpts, cpts):
    def dist_to_base(p):
        return min(_l1(p, b) for b in bpts)

    if len(cpts) == 1:
        return dist_to_base(cpts[0])
    if len(cpts) == 2:
        p, q = cpts
        separate = dist_to_base(p) + dist_to_base(q)
        together = min(_steiner3([p, q, b]) for b in bpts)
        return min(separate, together)
    # virtual contracted node for the base set
    n = len(cpts)
    intree = [False] * (n + 1)
    dist = [np.inf] * (n + 1)
    dist[n] = 0  # the base node
    total = 0
    for _ in range(n + 1):
        i = min((k for k in range(n + 1) if not intree[k]), key=lambda k: dist[k])
        intree[i] = True
        total += dist[i]
        for j in range(n):
            if not intree[j]:
                dij = dist_to_base(cpts[j]) if i == n else _l1(cpts[i], cpts[j])
                if dij < dist[j]:
                    dist[j] = dij
    return int(total)


def cluster_metric_rel(cluster, base, volume=None):
    """Minimal length of a graph connecting every site of `cluster` to the
    set `base`.  Exact (partition enumeration) for |cluster| <= 2, otherwise
    a virtual-node MST upper bound."""
    cluster = tuple(tuple(s) for s in cluster)
    base = tuple(tuple(s) for s in base)
    if len(cluster) == 0:
        return 0
    if len(base) == 0:
        return cluster_metric(cluster, volume)
    if volume is None or volume.boundary != "periodic":
        return _rel_length(list(base), list(cluster))
    best = None
    for pts in _image_choices(base + cluster, volume):
        val = _rel_length(list(pts[: len(base)]), list(pts[len(base):]))
        best = val if best is None else min(best, val)
    return best


# ---------------------------------------------------------------------------
# validation


@dataclass
class CheckRow:
    name: str
    passed: bool
    value: float
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list
    gap: float
    mu_isolation: float
    strength: float

    @property
    def ok(self):
        return all(c.passed for c in self.checks)

    def lines(self):
        out = []
        for c in self.checks:
            tag = "pass" if c.passed else "FAIL"
            out.append(f"{tag} {c.name}: {c.value:.6g} {c.detail}".rstrip())
        return out


def _sum_isolation(evals, mu, margin):
    """Distance from mu to all sums of >= 2 nonzero eigenvalues up to mu+margin."""
    nonzero = [e for e in evals if abs(e) > EIG_TOL]
    bound = mu + margin
    sums = set()
    frontier = {round(e, 12) for e in nonzero}
    for _ in range(1, 64):
        nxt = set()
        for s in frontier:
            for e in nonzero:
                t = round(s + e, 12)
                if t <= bound + EIG_TOL:
                    nxt.add(t)
        nxt -= sums
        if not nxt:
            break
        sums |= nxt
        frontier = nxt
    if not sums:
        return np.inf
    return min(abs(mu - s) for s in sums)


def validate_model(site, pert, sum_margin=2.0):
    """Check every structural requirement of the model data; returns a report."""
    checks = []
    h = site.h
    herm = float(np.linalg.norm(h - h.conj().T))
    checks.append(CheckRow("h hermitian", herm <= HERMITICITY_TOL * max(1.0, np.linalg.norm(h)), herm, "symmetry defect"))

    omega = np.zeros(site.dim)
    omega[site.omega_index] = 1.0
    ground_res = float(np.linalg.norm(h @ omega))
    checks.append(CheckRow("h annihilates ground vector", ground_res <= 1e-10, ground_res))

    evals = np.linalg.eigvalsh(h)
    excited = np.sort(evals)[1:]
    gap = float(excited[0]) if len(excited) else np.inf
    checks.append(CheckRow("spectral gap >= 1", gap >= 1.0 - EIG_TOL, gap, "gap < 1" if gap < 1.0 - EIG_TOL else ""))

    wres = float(np.linalg.norm(h @ site.w - site.mu * site.w))
    checks.append(CheckRow("marked eigenpair", wres <= 1e-9, wres))
    wnorm = float(np.linalg.norm(site.w))
    checks.append(CheckRow("marked vector normalized", abs(wnorm - 1.0) <= 1e-9, wnorm))
    worth = float(abs(site.w[site.omega_index]))
    checks.append(CheckRow("marked vector orthogonal to ground", worth <= 1e-9, worth))
    degeneracy = int(np.sum(np.abs(evals - site.mu) <= 1e-9))
    checks.append(CheckRow("marked eigenvalue non-degenerate", degeneracy == 1, degeneracy))

    iso = _sum_isolation(evals, site.mu, sum_margin)
    checks.append(
        CheckRow(
            "marked eigenvalue not a sum of excited levels",
            iso > 1e-9,
            iso,
            "mu equals a sum of nonzero eigenvalues" if iso <= 1e-9 else "",
        )
    )

    phi = pert.phi
    pherm = float(np.linalg.norm(phi - phi.conj().T))
    checks.append(CheckRow("perturbation hermitian", pherm <= HERMITICITY_TOL * max(1.0, np.linalg.norm(phi)), pherm, "symmetry defect"))
    sv = float(np.linalg.norm(phi, 2))
    checks.append(CheckRow("strength equals operator norm", abs(sv - pert.strength) <= 1e-9, sv))

    return ValidationReport(checks=checks, gap=gap, mu_isolation=iso, strength=pert.strength)


# ---------------------------------------------------------------------------
# the transverse-field Ising preset


def preset_tfi(lam):
    """Two-level sites with unit splitting and a -lam * sx sx pair coupling."""
    if lam < 0:
        raise ModelError("coupling must be non-negative")
    if lam >= 0.5:
        raise ModelError("preset requires coupling < 1/2")
    site = make_local_site(np.diag([0.0, 1.0]), omega_index=0, mu_index=1)
    sx = np.array([[0.0, 1.0], [1.0, 0.0]])
    phi = -lam * np.kron(sx, sx)
    pert = make_perturbation([(0,), (1,)], phi, site)
    return site, pert


# ---------------------------------------------------------------------------
# Hamiltonian assembly


def free_diagonal(volume, site):
    """Diagonal of the free Hamiltonian in the canonical digit basis."""
    space = volume.space(site)
    d = site.dim
    n = space.nsites
    levels = np.concatenate([[0.0], site.excited_energies])
    diag = np.zeros(space.size)
    idx = np.arange(space.size)
    for i in range(n):
        digits = (idx // d ** (n - 1 - i)) % d
        diag += levels[digits]
    return diag


def assemble_dense_hamiltonian(volume, site, pert, ceiling=None):
    """Sparse Hermitian H = sum_x h_x + sum_x phi_x on the volume (canonical basis)."""
    space = volume.space(site)
    space.check_capacity(ceiling)
    H = sps.diags(free_diagonal(volume, site)).tocsr().astype(complex)
    for x in volume.pert_positions(pert):
        cell = volume.pert_cell(pert, x)
        H = H + embed_sparse_operator(pert.phi_canonical, cell, space).tocsr()
    return H.tocsr()
