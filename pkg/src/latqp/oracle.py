"""Brute-force reference solvers: dense and Lanczos eigensolution, momentum
sector band extraction on periodic chains, and Chebyshev time propagation.

These paths are deliberately independent of the cluster-expansion machinery;
they provide the ground truth the perturbative construction is tested against.
"""

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps
from scipy.special import jv

from .tensors import CapacityError

DENSE_CEILING = 2 ** 13
SPARSE_CEILING = 2 ** 20


class SolverError(Exception):
    pass


def dense_spectrum(H):
    """Full Hermitian eigendecomposition, eigenvalues ascending."""
    n = H.shape[0]
    if n > DENSE_CEILING:
        raise CapacityError(f"dense solve limited to dimension {DENSE_CEILING}, got {n}")
    mat = H.toarray() if sps.issparse(H) else np.asarray(H)
    return np.linalg.eigh(mat)


def extremal_eigs(H, k=1, tol=1e-9, max_iter=400, seed=0):
    """Lowest k eigenpairs by Lanczos with full reorthogonalization.

    Returns (values, vectors) with vectors in columns; every returned pair
    satisfies ||H v - E v|| <= tol.  Krylov breakdowns append a zero coupling
    and continue with a fresh orthogonal direction.
    """
    n = H.shape[0]
    if n > SPARSE_CEILING:
        raise CapacityError(f"sparse solve limited to dimension {SPARSE_CEILING}, got {n}")
    if k >= n or n <= 32:
        vals, vecs = np.linalg.eigh(H.toarray() if sps.issparse(H) else np.asarray(H))
        return vals[:k], vecs[:, :k]
    rng = np.random.default_rng(seed)
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    v /= np.linalg.norm(v)
    m_max = min(n, max_iter)
    Q = np.zeros((n, m_max), dtype=complex)
    Q[:, 0] = v
    alphas, betas = [], []

    def ritz(m):
        T = np.diag(alphas)
        off = np.array(betas[: m - 1])
        T += np.diag(off, 1) + np.diag(off, -1)
        tvals, tvecs = np.linalg.eigh(T)
        vecs = Q[:, :m] @ tvecs[:, :k]
        vals = tvals[:k].copy()
        resid = []
        for i in range(vecs.shape[1]):
            vecs[:, i] /= np.linalg.norm(vecs[:, i])
            resid.append(np.linalg.norm(H @ vecs[:, i] - vals[i] * vecs[:, i]))
        return vals, vecs, np.array(resid)

    first_check = min(max(2 * k, 10), m_max)
    for m in range(1, m_max + 1):
        w = H @ Q[:, m - 1]
        a = float(np.vdot(Q[:, m - 1], w).real)
        alphas.append(a)
        w = w - a * Q[:, m - 1]
        if m > 1:
            w = w - betas[-1] * Q[:, m - 2]
        for _ in range(2):
            w = w - Q[:, :m] @ (Q[:, :m].conj().T @ w)
        b = float(np.linalg.norm(w))
        if m >= first_check and (m % 5 == 0 or m == m_max or b < 1e-12):
            vals, vecs, resid = ritz(m)
            if np.all(resid <= tol):
                return vals, vecs
            if m == m_max:
                raise SolverError(
                    f"Lanczos residuals {resid.max():.2e} above tol {tol} after {m} steps"
                )
        if m == m_max:
            break
        if b < 1e-12:
            betas.append(0.0)
            w = rng.normal(size=n) + 1j * rng.normal(size=n)
            for _ in range(2):
                w = w - Q[:, :m] @ (Q[:, :m].conj().T @ w)
            b = float(np.linalg.norm(w))
            if b < 1e-12:
                vals, vecs, resid = ritz(m)
                if np.all(resid <= tol):
                    return vals, vecs
                raise SolverError("Krylov space exhausted before convergence")
        else:
            betas.append(b)
        Q[:, m] = w / b
    raise SolverError(f"Lanczos did not converge within {m_max} iterations")


# ---------------------------------------------------------------------------
# momentum sectors on periodic chains


def translation_permutation(volume, site):
    """Index permutation implementing the unit lattice shift on digit strings."""
    if volume.boundary != "periodic":
        raise SolverError("translation sectors need a periodic volume")
    if volume.nu != 1:
        raise SolverError("momentum sectors implemented for chains")
    d = site.dim
    sites = volume.sites
    n = len(sites)
    order = {s: i for i, s in enumerate(sites)}
    shifted_axis = [order[volume.translate(s, (1,))] for s in sites]
    idx = np.arange(d ** n)
    digits = np.empty((n, d ** n), dtype=np.int64)
    f = idx.copy()
    for i in range(n - 1, -1, -1):
        digits[i] = f % d
        f //= d
    out = np.zeros(d ** n, dtype=np.int64)
    for i in range(n):
        out += digits[i] * d ** (n - 1 - shifted_axis[i])
    return out


def momentum_sectors(volume, site):
    """Orbit decomposition of the digit basis under cyclic shifts."""
    perm = translation_permutation(volume, site)
    nstates = len(perm)
    n = volume.nsites
    seen = np.zeros(nstates, dtype=bool)
    orbits = []
    for s in range(nstates):
        if seen[s]:
            continue
        orbit = [s]
        seen[s] = True
        t = int(perm[s])
        while t != s:
            seen[t] = True
            orbit.append(t)
            t = int(perm[t])
        orbits.append(orbit)
    return orbits


def sector_basis(orbits, momentum_index, n, nstates):
    """Sparse orthonormal basis of the momentum sector exp(2 pi i j / n)."""
    cols = []
    rows = []
    vals = []
    ncol = 0
    for orbit in orbits:
        p = len(orbit)
        if (momentum_index * p) % n != 0:
            continue
        amp = np.exp(-2j * np.pi * momentum_index * np.arange(p) / n) / np.sqrt(p)
        rows.extend(orbit)
        cols.extend([ncol] * p)
        vals.extend(amp)
        ncol += 1
    B = sps.coo_matrix((vals, (rows, cols)), shape=(nstates, ncol)).tocsr()
    return B


def momentum_band(volume, site, pert, window, hamiltonian=None):
    """Lowest excitation energy above the ground state per momentum j/n.

    Block-diagonalizes the Hamiltonian over the cyclic translation group via
    the discrete Fourier combinations of digit-string orbits; returns
    {j/n: E_j - E_0} restricted to the energy window, plus sector data.
    """
    from .model import assemble_dense_hamiltonian

    H = hamiltonian if hamiltonian is not None else assemble_dense_hamiltonian(volume, site, pert)
    n = volume.nsites
    orbits = momentum_sectors(volume, site)
    nstates = H.shape[0]
    sector_evals = {}
    for j in range(n):
        B = sector_basis(orbits, j, n, nstates)
        if B.shape[1] == 0:
            sector_evals[j] = np.array([])
            continue
        Hj = (B.conj().T @ (H @ B)).toarray()
        sector_evals[j] = np.linalg.eigvalsh(Hj)
    e0 = min(v[0] for v in sector_evals.values() if len(v))
    lo, hi = window
    band = {}
    for j in range(n):
        rel = sector_evals[j] - e0
        inside = rel[(rel >= lo) & (rel <= hi)]
        if len(inside) == 0:
            raise SolverError(f"no level in window [{lo}, {hi}] for momentum {j}/{n}")
        band[j / n] = float(inside[0])
    return band, e0, sector_evals


# ---------------------------------------------------------------------------
# reference time evolution


def spectral_bounds(H, seed=0):
    """Safe enclosure of the spectrum from extremal Lanczos estimates."""
    n = H.shape[0]
    if n <= 64:
        vals = np.linalg.eigvalsh(H.toarray() if sps.issparse(H) else H)
        lo, hi = float(vals[0]), float(vals[-1])
    else:
        try:
            lo_vals, _ = extremal_eigs(H, k=1, tol=1e-6, seed=seed)
            hi_vals, _ = extremal_eigs(-H, k=1, tol=1e-6, seed=seed + 1)
            lo, hi = float(lo_vals[0]), float(-hi_vals[0])
        except SolverError as err:
            raise SolverError(f"spectral interval estimation failed: {err}")
    pad = 0.02 * (hi - lo) + 0.1
    return lo - pad, hi + pad


def evolve_reference(H, v, t, tol=1e-9, bounds=None, seed=0):
    """exp(-i t H) v by Chebyshev expansion with Bessel coefficients.

    Needs only sparse matvecs; the expansion order grows linearly with
    |t| * spectral half-width and the tail is cut at the target tolerance.
    """
    if H.shape[0] > SPARSE_CEILING:
        raise CapacityError(f"propagation limited to dimension {SPARSE_CEILING}")
    if t == 0:
        return v.astype(complex).copy()
    lo, hi = bounds if bounds is not None else spectral_bounds(H, seed=seed)
    a = 0.5 * (hi - lo)
    b = 0.5 * (hi + lo)
    tau = a * t
    order = int(abs(tau) + 20 + 10 * np.log1p(abs(tau)))
    ks = np.arange(order + 1)
    bes = jv(ks, tau)
    # drop the superexponentially small tail
    keep = np.nonzero(np.abs(bes) > tol * 1e-3)[0]
    order = int(keep[-1]) + 1 if len(keep) else 1

    ident = sps.identity(H.shape[0], dtype=complex, format="csr")
    Hs = (H - b * ident) * (1.0 / a)
    phase = np.exp(-1j * b * t)
    v = v.astype(complex)
    tkm1 = v
    tk = Hs @ v
    out = bes[0] * tkm1 + 2.0 * (-1j) * bes[1] * tk
    for kk in range(2, order + 1):
        tkp1 = 2.0 * (Hs @ tk) - tkm1
        out += 2.0 * ((-1j) ** kk) * bes[kk] * tkp1
        tkm1, tk = tk, tkp1
    out *= phase
    drift = abs(np.linalg.norm(out) - np.linalg.norm(v))
    if drift > max(10 * tol, 1e-8 * abs(t) + 1e-9):
        raise SolverError(
            f"propagation norm drift {drift:.2e}; spectral interval estimate unsafe"
        )
    return out
