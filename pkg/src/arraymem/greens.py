"""Free-space electromagnetic Green's tensor and the photon-exchange matrix.

The dyadic Green's function of the vector wave equation,

    G(R) = e^{ikR}/(4 pi R) [ (1 + (ikR - 1)/(kR)^2) I
                              + (3 - 3ikR - (kR)^2)/(kR)^2  RR/R^2 ],

couples pairs of dipoles. In wavelength units k = 2 pi and single-atom
rates are measured in units of the vacuum decay rate, which fixes the
coupling matrix to

    M_jl = 3 pi k^{-1} d_j* . G(r_j - r_l) . d_l      (j != l)
    M_jj = i/2

with the divergent real self-term dropped (a resonance-frequency
renormalization) and the imaginary part fixed so a lone atom decays at
exactly the single-atom rate.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, SingularGeometryError, SingularPointError
from .geometry import Geometry

K0 = 2.0 * np.pi

TWO_LEVEL = "two-level"
ISOTROPIC = "isotropic"
MODELS = (TWO_LEVEL, ISOTROPIC)


def _scalar_parts(r_norm):
    """Transverse/longitudinal scalar factors multiplying I and RR/R^2."""
    kr = K0 * r_norm
    phase = np.exp(1j * kr) / (4.0 * np.pi * r_norm)
    f_t = phase * (1.0 + (1j * kr - 1.0) / kr**2)
    f_l = phase * (3.0 - 3.0j * kr - kr**2) / kr**2
    return f_t, f_l


def greens_tensor(r, r_prime) -> np.ndarray:
    """3x3 Green's tensor between two points (wavelength units)."""
    r = np.asarray(r, dtype=float)
    r_prime = np.asarray(r_prime, dtype=float)
    dr = r - r_prime
    dist = np.linalg.norm(dr)
    if dist <= 0.0:
        raise SingularPointError("Green's tensor is singular at coincident points")
    f_t, f_l = _scalar_parts(dist)
    rhat = dr / dist
    return f_t * np.eye(3) + f_l * np.outer(rhat, rhat)


def greens_tensor_batch(points, source) -> np.ndarray:
    """G(r_i, source) for a batch of observation points; shape (n, 3, 3)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    dr = points - np.asarray(source, dtype=float)[None, :]
    dist = np.linalg.norm(dr, axis=1)
    if np.any(dist <= 0.0):
        raise SingularPointError("Green's tensor is singular at coincident points")
    f_t, f_l = _scalar_parts(dist)
    rhat = dr / dist[:, None]
    outer = rhat[:, :, None] * rhat[:, None, :]
    return f_t[:, None, None] * np.eye(3)[None] + f_l[:, None, None] * outer


@dataclass(frozen=True)
class InteractionMatrix:
    """Dense complex symmetric coupling matrix.

    entries: (N_a, N_a) for the two-level model or (3 N_a, 3 N_a) for the
    isotropic three-excited-state model, with rows/columns of the latter
    ordered atom-major as (atom 0 x, y, z, atom 1 x, ...).
    """

    entries: np.ndarray
    model: str

    @property
    def size(self) -> int:
        return self.entries.shape[0]


def _pair_couplings(positions, orientations=None):
    """Upper-triangle couplings, either projected scalars or 3x3 blocks."""
    n = len(positions)
    iu, ju = np.triu_indices(n, k=1)
    dr = positions[iu] - positions[ju]
    dist = np.linalg.norm(dr, axis=1)
    if np.any(dist <= 0.0):
        raise SingularGeometryError("duplicate atom positions in geometry")
    f_t, f_l = _scalar_parts(dist)
    rhat = dr / dist[:, None]
    if orientations is not None:
        di = orientations[iu]
        dj = orientations[ju]
        proj = f_t * np.sum(di * dj, axis=1) + f_l * np.sum(di * rhat, axis=1) * np.sum(
            rhat * dj, axis=1
        )
        return iu, ju, proj
    outer = rhat[:, :, None] * rhat[:, None, :]
    blocks = f_t[:, None, None] * np.eye(3)[None] + f_l[:, None, None] * outer
    return iu, ju, blocks


def interaction_matrix(g: Geometry, model: str = TWO_LEVEL) -> InteractionMatrix:
    """Assemble M for a geometry; exactly symmetric by construction."""
    if model not in MODELS:
        raise InvalidArgumentError(f"model must be one of {MODELS}, got {model!r}")
    n = g.n_atoms
    coupling = 3.0 * np.pi / K0
    if model == TWO_LEVEL:
        m = np.zeros((n, n), dtype=complex)
        if n > 1:
            iu, ju, proj = _pair_couplings(g.positions, g.dipole_orientations)
            m[iu, ju] = coupling * proj
            m[ju, iu] = coupling * proj
        np.fill_diagonal(m, 0.5j)
        return InteractionMatrix(entries=m, model=model)

    m = np.zeros((n, 3, n, 3), dtype=complex)
    if n > 1:
        iu, ju, blocks = _pair_couplings(g.positions)
        m[iu, :, ju, :] = coupling * blocks
        # G(-R) = G(R), so the mirrored block is the same 3x3 matrix
        m[ju, :, iu, :] = coupling * blocks
    m = m.reshape(3 * n, 3 * n)
    idx = np.arange(3 * n)
    m[idx, idx] = 0.5j
    return InteractionMatrix(entries=m, model=model)


def im_part_min_eigenvalue(m: InteractionMatrix) -> float:
    """Smallest eigenvalue of the Im-part quadratic form.

    Non-negative (up to roundoff) for physical geometries: no collective
    excitation can have a negative total emission rate.
    """
    im = (m.entries - m.entries.conj()) / 2j
    return float(np.linalg.eigvalsh(im.real).min())


_MAGIC = b"AMEM"
_MODEL_CODE = {TWO_LEVEL: 1, ISOTROPIC: 2}
_MODEL_NAME = {v: k for k, v in _MODEL_CODE.items()}


def save_matrix(m: InteractionMatrix, path) -> None:
    """Binary dump: magic, uint8 model code, uint64 size, then row-major
    complex little-endian doubles."""
    data = np.ascontiguousarray(m.entries, dtype="<c16")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<BQ", _MODEL_CODE[m.model], m.size))
        fh.write(data.tobytes())


def load_matrix(path) -> InteractionMatrix:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise InvalidArgumentError(f"{path} is not an interaction-matrix dump")
        code, size = struct.unpack("<BQ", fh.read(9))
        data = np.frombuffer(fh.read(), dtype="<c16")
    if data.size != size * size:
        raise InvalidArgumentError("matrix dump is truncated")
    entries = data.reshape(size, size).astype(complex)
    return InteractionMatrix(entries=entries, model=_MODEL_NAME[code])
