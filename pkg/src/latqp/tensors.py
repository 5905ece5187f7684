"""Low-level tensor arithmetic on a finite product of identical local spaces.

Full-space vectors are dense numpy arrays of length d**n, indexed in C order
by the per-site digit strings (digit 0 = local ground level, digits 1..d-1 =
excited levels in the canonical per-site eigenbasis).  Everything heavier
(cluster algebra, Hamiltonians) is built on the primitives here.
"""

import numpy as np
import scipy.sparse as sps


class CapacityError(Exception):
    """Raised when a dense/sparse full-space object would exceed the ceiling."""


DEFAULT_STATE_CEILING = 2 ** 20


def state_ceiling(override=None):
    """Configured maximum number of basis states; LATQP_MAX_STATES overrides."""
    import os

    if override is not None:
        return int(override)
    env = os.environ.get("LATQP_MAX_STATES")
    if env:
        return int(env)
    return DEFAULT_STATE_CEILING


class SiteSpace:
    """An ordered list of lattice sites carrying d-dimensional local spaces."""

    def __init__(self, sites, dim):
        self.sites = tuple(tuple(s) for s in sites)
        self.dim = int(dim)
        self.index = {s: i for i, s in enumerate(self.sites)}
        if len(self.index) != len(self.sites):
            raise ValueError("duplicate sites in space")

    @property
    def nsites(self):
        return len(self.sites)

    @property
    def size(self):
        return self.dim ** self.nsites

    def check_capacity(self, ceiling=None):
        cap = state_ceiling(ceiling)
        if self.size > cap:
            raise CapacityError(
                f"d^n = {self.dim}^{self.nsites} = {self.size} exceeds the "
                f"state ceiling {cap} (override with LATQP_MAX_STATES)"
            )

    def positions(self, cluster):
        return tuple(self.index[s] for s in cluster)

    def vacuum(self, dtype=complex):
        v = np.zeros(self.size, dtype=dtype)
        v[0] = 1.0
        return v


def _dst_src_ix(space, pos):
    n = space.nsites
    d = space.dim
    posset = set(pos)
    src = tuple(0 if i in posset else slice(None) for i in range(n))
    dst = tuple(slice(1, d) if i in posset else slice(None) for i in range(n))
    return dst, src


def _amp_shape(space, pos):
    n = space.nsites
    shape = [1] * n
    for i in pos:
        shape[i] = space.dim - 1
    return tuple(shape)


def creation_into(vec, cluster, amps, space, sign=1.0):
    """In-place (1 + sign*u^) action: add the cluster-raising image to vec.

    The source block (cluster sites at level 0) and destination block
    (cluster sites excited) are disjoint, so the update is aliasing-safe.
    """
    pos = space.positions(cluster)
    dst, src = _dst_src_ix(space, pos)
    v = vec.reshape((space.dim,) * space.nsites)
    sub = v[src]
    sub = np.expand_dims(sub, axis=tuple(sorted(pos)))
    a = np.asarray(amps).reshape(_amp_shape(space, pos))
    v[dst] += sign * a * sub
    return vec


def creation_image(vec, cluster, amps, space):
    """The raising operator applied to vec (zero outside the image block)."""
    pos = space.positions(cluster)
    dst, src = _dst_src_ix(space, pos)
    v = vec.reshape((space.dim,) * space.nsites)
    out = np.zeros_like(v)
    sub = np.expand_dims(v[src], axis=tuple(sorted(pos)))
    a = np.asarray(amps).reshape(_amp_shape(space, pos))
    out[dst] = a * sub
    return out.reshape(vec.shape)

def component(vec, cluster, space):
    """The block of vec with the cluster sites excited and all others at 0."""
    n = space.nsites
    d = space.dim
    posset = set(space.positions(cluster))
    ix = tuple(slice(1, d) if i in posset else 0 for i in range(n))
    return np.array(vec.reshape((d,) * n)[ix])


def scalar_component(vec):
    return complex(vec.flat[0])


def apply_local_operator(vec, mat, op_sites, space):
    """Apply an operator on the tensor factor over op_sites, identity elsewhere.

    mat is (d^k x d^k) with row/column digit order matching op_sites.
    """
    n = space.nsites
    d = space.dim
    pos = list(space.positions(op_sites))
    k = len(pos)
    v = vec.reshape((d,) * n)
    m = np.asarray(mat).reshape((d,) * (2 * k))
    out = np.tensordot(m, v, axes=(list(range(k, 2 * k)), pos))
    # tensordot puts the k operator axes first; restore original ordering
    out = np.moveaxis(out, list(range(k)), pos)
    return np.ascontiguousarray(out).reshape(vec.shape)


def embed_sparse_operator(mat, op_sites, space, tol=0.0):
    """COO embedding of a local operator into the full space."""
    n = space.nsites
    d = space.dim
    pos = list(space.positions(op_sites))
    k = len(pos)
    strides = np.array([d ** (n - 1 - i) for i in range(n)], dtype=np.int64)
    op_strides = strides[pos]
    rest = [i for i in range(n) if i not in pos]
    rest_strides = strides[rest]

    m = np.asarray(mat)
    rr, cc = np.nonzero(np.abs(m) > tol)
    vals = m[rr, cc]

    def local_offsets(flat):
        # digits of the local (d^k) index mapped to full-space offsets
        offs = np.zeros(len(flat), dtype=np.int64)
        f = flat.astype(np.int64)
        for j in range(k - 1, -1, -1):
            offs += (f % d) * op_strides[j]
            f //= d
        return offs

    row_off = local_offsets(rr)
    col_off = local_offsets(cc)

    nrest = d ** len(rest)
    env = np.zeros(nrest, dtype=np.int64)
    f = np.arange(nrest, dtype=np.int64)
    for j in range(len(rest) - 1, -1, -1):
        env += (f % d) * rest_strides[j]
        f //= d

    rows = (row_off[:, None] + env[None, :]).ravel()
    cols = (col_off[:, None] + env[None, :]).ravel()
    data = np.repeat(vals, nrest)
    return sps.coo_matrix((data, (rows, cols)), shape=(space.size, space.size))


def excited_supports(vec, space, tol=1e-14):
    """Site subsets whose component blocks are non-negligible, as sorted tuples."""
    n = space.nsites
    d = space.dim
    idx = np.nonzero(np.abs(vec) > tol)[0]
    masks = set()
    for flat in idx:
        mask = []
        f = int(flat)
        for i in range(n - 1, -1, -1):
            digit = f % d
            f //= d
            if digit:
                mask.append(i)
        masks.add(tuple(sorted(mask)))
    masks.discard(())
    return [tuple(space.sites[i] for i in m) for m in sorted(masks)]
