"""Shared fixtures: solved models and one-particle bases reused across files."""

import numpy as np
import pytest

from latqp.cluster import Truncation
from latqp.groundstate import solve_ground_state
from latqp.model import assemble_dense_hamiltonian, chain_volume, preset_tfi
from latqp.oneparticle import build_basis
from latqp.renorm import RenormOperator


@pytest.fixture(scope="session")
def tfi_n12():
    """Solved TFI chain, periodic, 12 sites, coupling 0.1, with basis."""
    lam = 0.1
    site, pert = preset_tfi(lam)
    vol = chain_volume(12, "periodic")
    trunc = Truncation(4, 5)
    H = assemble_dense_hamiltonian(vol, site, pert)
    frame, energy, diag = solve_ground_state(
        site, pert, vol, truncation=trunc, hamiltonian=H
    )
    op = RenormOperator(site, pert, vol, frame, truncation=trunc)
    basis = build_basis(op)
    return {
        "lam": lam,
        "site": site,
        "pert": pert,
        "volume": vol,
        "H": H,
        "frame": frame,
        "energy": energy,
        "op": op,
        "basis": basis,
        "diag": diag,
    }
