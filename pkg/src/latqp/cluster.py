"""Collection algebra: sparse families of excited-sector cluster vectors,
raising operators, the exponential ansatz and its inverse, expansions in a
ground frame, and the weighted norms used by the solver certificates.

A collection assigns to finite site subsets I a tensor of amplitudes over the
excited local levels (shape (d-1,)^|I| in the canonical eigenbasis), plus an
optional scalar part for the empty set.  Raising operators for different
subsets commute; products over overlapping subsets vanish identically, which
keeps all exponentials finite.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import tensors
from .model import cluster_metric

PRUNE_TOL = 1e-14


class ExpansionError(Exception):
    pass


@dataclass(frozen=True)
class Truncation:
    """Caps on retained clusters: cardinality kmax and connection length dmax."""

    kmax: int = 4
    dmax: int = 6

    @staticmethod
    def none():
        return Truncation(kmax=10 ** 9, dmax=10 ** 9)

    def allows(self, cluster, volume=None):
        if len(cluster) > self.kmax:
            return False
        if self.dmax < 10 ** 9 and cluster_metric(cluster, volume) > self.dmax:
            return False
        return True


@dataclass(frozen=True)
class ClusterVector:
    """Amplitudes over the excited levels of an ordered site subset."""

    sites: tuple
    amplitudes: np.ndarray

    def norm(self):
        return float(np.linalg.norm(self.amplitudes))


def _key(cluster):
    return tuple(sorted(tuple(s) for s in cluster))


class Collection:
    """Sparse map from site subsets to excited-sector amplitude tensors."""

    def __init__(self, dim, truncation=None, scalar=0.0):
        self.dim = int(dim)
        self.truncation = truncation if truncation is not None else Truncation.none()
        self.scalar = complex(scalar)
        self.entries = {}

    def copy(self):
        out = Collection(self.dim, self.truncation, self.scalar)
        out.entries = {k: v.copy() for k, v in self.entries.items()}
        return out

    def set(self, cluster, amps):
        key = _key(cluster)
        amps = np.asarray(amps, dtype=complex).reshape((self.dim - 1,) * len(key))
        if np.linalg.norm(amps) > PRUNE_TOL:
            self.entries[key] = amps
        else:
            self.entries.pop(key, None)
        return self

    def add(self, cluster, amps):
        key = _key(cluster)
        amps = np.asarray(amps, dtype=complex).reshape((self.dim - 1,) * len(key))
        if key in self.entries:
            self.entries[key] = self.entries[key] + amps
        else:
            self.entries[key] = amps
        return self

    def get(self, cluster):
        return self.entries.get(_key(cluster))

    def items(self):
        return sorted(self.entries.items())

    def clusters(self):
        return sorted(self.entries.keys())

    def __len__(self):
        return len(self.entries)

    def __contains__(self, cluster):
        return _key(cluster) in self.entries

    def prune(self, tol=PRUNE_TOL):
        self.entries = {
            k: v for k, v in self.entries.items() if np.linalg.norm(v) > tol
        }
        if abs(self.scalar) <= tol:
            self.scalar = 0.0
        return self

    def scaled(self, c):
        out = Collection(self.dim, self.truncation, c * self.scalar)
        out.entries = {k: c * v for k, v in self.entries.items()}
        return out

    def plus(self, other, coeff=1.0):
        out = self.copy()
        out.scalar += coeff * other.scalar
        for k, v in other.entries.items():
            out.add(k, coeff * v)
        return out.prune()

    def add_scaled(self, other, coeff=1.0):
        """In-place accumulation (no pruning); for hot loops."""
        self.scalar += coeff * other.scalar
        ent = self.entries
        for k, v in other.entries.items():
            cur = ent.get(k)
            ent[k] = coeff * v if cur is None else cur + coeff * v
        return self

    def truncated(self, volume=None):
        """Drop entries outside the truncation bounds; returns (collection, dropped norm)."""
        out = Collection(self.dim, self.truncation, self.scalar)
        dropped_sq = 0.0
        for k, v in self.entries.items():
            if self.truncation.allows(k, volume):
                out.entries[k] = v
            else:
                dropped_sq += float(np.vdot(v, v).real)
        return out, np.sqrt(dropped_sq)


def collection_from_entries(dim, pairs, truncation=None, scalar=0.0):
    out = Collection(dim, truncation, scalar)
    for cluster, amps in pairs:
        out.add(cluster, amps)
    return out.prune()


# ---------------------------------------------------------------------------
# raising operators


def creation_apply(u: ClusterVector, vec, space):
    """The raising operator of u applied to a full-space vector."""
    for s in u.sites:
        if tuple(s) not in space.index:
            raise ExpansionError(f"cluster site {s} outside the volume")
    return tensors.creation_image(vec, _key(u.sites), u.amplitudes, space)


def creation_product(u: ClusterVector, v: ClusterVector):
    """Composition of two raising operators: zero on overlap, tensor merge else."""
    su, sv = set(u.sites), set(v.sites)
    if su & sv:
        return None
    merged = _key(tuple(su | sv))
    ku, kv = _key(u.sites), _key(v.sites)
    amps = np.multiply.outer(
        u.amplitudes.reshape((-1,)), v.amplitudes.reshape((-1,))
    ).reshape(u.amplitudes.shape + v.amplitudes.shape)
    # reorder amplitude axes to the sorted merged site order
    concat = list(ku) + list(kv)
    perm = [concat.index(s) for s in merged]
    amps = np.transpose(amps, perm)
    return ClusterVector(sites=merged, amplitudes=amps)


# ---------------------------------------------------------------------------
# exponential ansatz


def exp_apply(coll: Collection, space, ceiling=None):
    """Reconstruct exp(sum of raising operators) applied to the product ground
    vector.  Overlapping products vanish, so this is the finite product of
    (1 + u^) over the stored clusters."""
    space.check_capacity(ceiling)
    vec = space.vacuum()
    for cluster, amps in coll.items():
        tensors.creation_into(vec, cluster, amps, space)
    return vec


def apply_creation_sum(coll: Collection, vec, space, include_scalar=True):
    """(scalar + sum of raising operators) applied to vec."""
    out = coll.scalar * vec if include_scalar and coll.scalar else np.zeros_like(vec)
    for cluster, amps in coll.items():
        out += tensors.creation_image(vec, cluster, amps, space)
    return out


def conjugate_by_frame(vec, frame: Collection, space, inverse=False):
    """Multiply by the commuting product of (1 -+ g^) over the frame clusters."""
    sign = 1.0 if inverse else -1.0
    out = vec.copy()
    for cluster, amps in frame.items():
        tensors.creation_into(out, cluster, amps, space, sign=sign)
    return out


def truncate_log(vec, space, truncation=None, volume=None, prune=PRUNE_TOL):
    """Invert the exponential ansatz on a vector with unit ground overlap.

    Components are peeled off by subset size: the cluster amplitude on I is
    the raw component minus every product of already-known amplitudes over
    the partitions of I into smaller stored clusters.  Truncation bounds are
    applied after the exact peel.
    """
    ov = tensors.scalar_component(vec)
    if abs(ov) < 1e-12:
        raise ExpansionError("vector has no ground component; cannot take the exponential inverse")
    if abs(ov - 1.0) > 1e-12:
        vec = vec / ov
    out = Collection(space.dim, Truncation.none())
    supports = tensors.excited_supports(vec, space, tol=prune)
    supports.sort(key=lambda s: (len(s), s))
    for sup in supports:
        comp = tensors.component(vec, sup, space)
        # with sup itself absent from the store, this sums the proper partitions
        corr = _all_partition_products(out, list(_key(sup)))
        amps = comp - corr if corr is not None else comp
        if np.linalg.norm(amps) > prune:
            out.set(sup, amps)
    if truncation is not None:
        out.truncation = truncation
        out, _ = out.truncated(volume)
    return out


def _all_partition_products(coll: Collection, sites):
    """Sum over all partitions of sites into stored clusters (>= 1 block)."""
    sites = list(sites)
    if not sites:
        return None
    total = None
    first = sites[0]
    rest = sites[1:]
    for r in range(0, len(rest) + 1):
        for combo in itertools.combinations(rest, r):
            block = _key((first,) + combo)
            amps = coll.entries.get(block)
            if amps is None:
                continue
            remainder = [s for s in rest if s not in combo]
            if not remainder:
                piece = amps
            else:
                sub = _all_partition_products(coll, remainder)
                if sub is None:
                    continue
                piece = _merge_amplitudes(block, amps, tuple(remainder), sub, _key(sites))
            if total is None:
                total = np.zeros((coll.dim - 1,) * len(sites), dtype=complex)
            # piece axes are ordered by _key(sites); accumulate
            total = total + piece
    return total


def _merge_amplitudes(sites_a, amps_a, sites_b, amps_b, merged):
    """Outer product of two amplitude tensors, axes sorted to `merged` order."""
    merged = _key(merged)
    amps = np.multiply.outer(amps_a, amps_b)
    concat = list(_key(sites_a)) + list(_key(sites_b))
    perm = [concat.index(s) for s in merged]
    return np.transpose(amps, perm)


# ---------------------------------------------------------------------------
# ground-frame expansions


def decompose(vec, space, truncation=None, supports=None, volume=None, prune=PRUNE_TOL):
    """Split a vector into cluster components (the orthogonal level splitting).

    Returns (collection, dropped_norm): the collection holds the scalar part
    and every allowed component; dropped_norm measures what the truncation
    discarded.
    """
    out = Collection(space.dim, truncation if truncation is not None else Truncation.none())
    out.scalar = tensors.scalar_component(vec)
    kept_sq = abs(out.scalar) ** 2
    if supports is None:
        supports = [
            s
            for s in tensors.excited_supports(vec, space, tol=prune)
            if out.truncation.allows(s, volume)
        ]
    for sup in supports:
        comp = tensors.component(vec, sup, space)
        nrm_sq = float(np.vdot(comp, comp).real)
        if nrm_sq > prune ** 2:
            out.entries[_key(sup)] = comp
            kept_sq += nrm_sq
    total_sq = float(np.vdot(vec, vec).real)
    dropped = np.sqrt(max(total_sq - kept_sq, 0.0))
    return out, dropped


def frame_components(vec, frame: Collection, space, truncation=None, supports=None, volume=None):
    """Expand a vector over raising operators applied to the frame's ground
    vector; the scalar part rides on the returned collection."""
    stripped = conjugate_by_frame(vec, frame, space, inverse=False)
    return decompose(stripped, space, truncation=truncation, supports=supports, volume=volume)


def reconstruct(coll: Collection, frame: Collection, space):
    """The vector (scalar + sum of raising operators) applied to the frame's
    ground vector."""
    gv = exp_apply(frame, space)
    return apply_creation_sum(coll, gv, space, include_scalar=True)


# ---------------------------------------------------------------------------
# norms and certificates


def triple_norm(coll: Collection):
    """Sum of cluster amplitude norms (plus the scalar magnitude)."""
    total = abs(coll.scalar)
    for _, amps in coll.entries.items():
        total += float(np.linalg.norm(amps))
    return total


def _free_energy_factors(site, nsites):
    levels = site.excited_energies
    grids = np.meshgrid(*([levels] * nsites), indexing="ij") if nsites else []
    return sum(grids) if nsites else None


def free_apply_amps(amps, site):
    """Multiply amplitudes by the summed excited level energies (diagonal action)."""
    k = amps.ndim
    fac = _free_energy_factors(site, k)
    return amps * fac if fac is not None else amps


def weighted_norm(coll: Collection, eps, site, volume=None, h0=True):
    """Anchored, distance-weighted amplitude sum: the maximum over anchor
    sites of sum_{I containing x} ||(H_I0) u_I|| eps^-(d_I+1)."""
    if not (0 < eps < 1):
        raise ValueError("eps must lie in (0, 1)")
    per_anchor = {}
    for cluster, amps in coll.items():
        a = free_apply_amps(amps, site) if h0 else amps
        w = float(np.linalg.norm(a)) * eps ** (-(cluster_metric(cluster, volume) + 1))
        for s in cluster:
            per_anchor[s] = per_anchor.get(s, 0.0) + w
    return max(per_anchor.values()) if per_anchor else 0.0


def smallest_certified_eps(coll: Collection, site, volume=None, h0=True, tol=1e-6):
    """Smallest eps in (0,1) with weighted_norm <= 1, by bisection; None if
    the bound fails even at eps -> 1."""
    if not coll.entries:
        return tol
    hi = 1.0 - 1e-9
    if weighted_norm(coll, hi, site, volume, h0) > 1.0:
        return None
    lo = 1e-6
    if weighted_norm(coll, lo, site, volume, h0) <= 1.0:
        return lo
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if weighted_norm(coll, mid, site, volume, h0) <= 1.0:
            hi = mid
        else:
            lo = mid
        if hi - lo < tol * hi:
            break
    return hi


def decay_rate_eps(coll: Collection, site, volume=None, h0=True, floor=1e-13):
    """Geometric decay rate of anchored cluster weight versus connection
    length, from a log-linear fit; None when fewer than two lengths carry
    weight."""
    per = {}
    for cluster, amps in coll.items():
        a = free_apply_amps(amps, site) if h0 else amps
        w = float(np.linalg.norm(a))
        dd = cluster_metric(cluster, volume)
        for s in cluster:
            per.setdefault(s, {})
            per[s][dd] = per[s].get(dd, 0.0) + w
    if not per:
        return None
    # use the anchor with the largest total weight (a bulk site)
    anchor = max(per, key=lambda s: sum(per[s].values()))
    pts = [(dd, w) for dd, w in sorted(per[anchor].items()) if w > floor]
    if len(pts) < 2:
        return None
    xs = np.array([p[0] for p in pts], dtype=float)
    ys = np.log(np.array([p[1] for p in pts]))
    slope = np.polyfit(xs, ys, 1)[0]
    return float(np.exp(slope))


# ---------------------------------------------------------------------------
# translations (periodic volumes)


def translate_collection(coll: Collection, shift, volume):
    """Shift every cluster by a lattice vector, re-sorting amplitude axes."""
    out = Collection(coll.dim, coll.truncation, coll.scalar)
    for cluster, amps in coll.entries.items():
        moved = [volume.translate(s, shift) for s in cluster]
        order = sorted(range(len(moved)), key=lambda i: moved[i])
        key = tuple(moved[i] for i in order)
        out.entries[key] = np.ascontiguousarray(np.transpose(amps, order))
    return out


def enumerate_supports(volume, truncation, anchor_sites=None):
    """All site subsets within the truncation bounds (sorted, deterministic)."""
    sites = sorted(volume.sites)
    out = []
    for a in (sorted(anchor_sites) if anchor_sites else sites):
        near = [s for s in sites if s > a and volume.distance(a, s) <= truncation.dmax]
        for r in range(0, min(truncation.kmax - 1, len(near)) + 1):
            for combo in itertools.combinations(near, r):
                cand = (a,) + combo
                if truncation.allows(cand, volume):
                    out.append(cand)
    return sorted(set(out))


# ---------------------------------------------------------------------------
# inner products in the ground frame


def ground_norm(frame: Collection, space):
    return float(np.linalg.norm(exp_apply(frame, space)))


def collection_inner(a: Collection, b: Collection, frame: Collection, space):
    """Physical inner product of two expansions over the interacting ground
    vector, normalized by the ground vector's squared norm."""
    gv = exp_apply(frame, space)
    va = apply_creation_sum(a, gv, space)
    vb = apply_creation_sum(b, gv, space)
    return complex(np.vdot(vb, va) / np.vdot(gv, gv))
