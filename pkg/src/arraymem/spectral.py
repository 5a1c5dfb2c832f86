"""Eigendecomposition of the complex symmetric coupling matrix.

A complex symmetric M (when diagonalizable) admits eigenvectors that are
orthonormal under the non-conjugated bilinear product, v_a^T v_b =
delta_ab, and complete, sum_a v_a v_a^T = I. A general dense solver does
not return this normalization: eigenvectors come back unit in the
Hermitian sense, and within (near-)degenerate clusters they need not be
bilinearly orthogonal at all. This module restores the bilinear structure
as a post-pass and turns the identities into hard, checked invariants.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DefectiveSpectrumError, InvalidArgumentError
from .greens import InteractionMatrix

BILINEAR_TOL = 1e-8
DECAY_TOL = 1e-10
TRACE_RTOL = 1e-9
# Eigenvalues closer than this are treated as one (symmetry-degenerate)
# cluster and re-orthogonalized together.
CLUSTER_GAP = 1e-9


@dataclass(frozen=True)
class SpectralDecomposition:
    """Bilinearly normalized eigensystem of the coupling matrix.

    eigenvalues:          (n,) complex, ordered by descending imaginary
                          part (most radiant first)
    eigenvectors:         (n, n) complex, columns v_xi with v^T v = 1
    bilinear_condition:   max |V^T V - I| entry
    completeness_residual:max |V V^T - I| entry
    model:                model tag of the source matrix
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    bilinear_condition: float
    completeness_residual: float
    model: str

    @property
    def size(self) -> int:
        return len(self.eigenvalues)

    def min_decay_rate(self) -> float:
        """Smallest collective decay rate, 2 min Im(lambda)."""
        return float(2.0 * self.eigenvalues.imag.min())

    def diagnostics(self) -> dict:
        return {
            "bilinear_condition": self.bilinear_condition,
            "completeness_residual": self.completeness_residual,
            "min_im_lambda": float(self.eigenvalues.imag.min()),
            "trace_residual": float(
                abs(self.eigenvalues.sum() - 0.5j * self.size)
                / (0.5 * self.size)
            ),
        }


def _cluster_eigenvalues(lam: np.ndarray, gap: float) -> list:
    """Chain (near-)coincident eigenvalues into clusters.

    Lexicographic order makes exactly degenerate values adjacent, so
    chaining consecutive entries within `gap` is enough.
    """
    order = np.lexsort((lam.imag, lam.real))
    clusters = []
    current = [order[0]]
    for idx in order[1:]:
        if abs(lam[idx] - lam[current[-1]]) < gap:
            current.append(idx)
        else:
            clusters.append(current)
            current = [idx]
    clusters.append(current)
    return clusters


def _fix_phase(v: np.ndarray) -> np.ndarray:
    """Resolve the residual sign so the largest component has Re >= 0."""
    lead = v[np.argmax(np.abs(v))]
    if lead.real < 0.0 or (lead.real == 0.0 and lead.imag < 0.0):
        return -v
    return v


def eigendecompose(m: InteractionMatrix) -> SpectralDecomposition:
    """Full eigensystem of M with bilinear normalization and diagnostics."""
    a = m.entries
    if not np.all(np.isfinite(a)):
        raise InvalidArgumentError("interaction matrix has non-finite entries")
    if not np.array_equal(a, a.T):
        raise InvalidArgumentError("interaction matrix is not symmetric")

    lam, vecs = scipy.linalg.eig(a)

    bad: list = []
    for cluster in _cluster_eigenvalues(lam, CLUSTER_GAP):
        # Bilinear Gram-Schmidt inside each (near-)degenerate cluster;
        # distinct eigenvalues are bilinearly orthogonal automatically.
        done: list = []
        for idx in cluster:
            v = vecs[:, idx]
            for u in done:
                v = v - (u @ v) * u
            q = v @ v
            if np.abs(q) < BILINEAR_TOL:
                bad.append(idx)
                continue
            v = v / np.sqrt(q)
            v = _fix_phase(v)
            vecs[:, idx] = v
            done.append(v)
    if bad:
        raise DefectiveSpectrumError(
            f"{len(bad)} eigenvector(s) have vanishing bilinear norm; "
            "matrix is near-defective",
            indices=sorted(bad),
        )

    order = np.argsort(-lam.imag, kind="stable")
    lam = lam[order]
    vecs = vecs[:, order]

    gram = vecs.T @ vecs
    bilinear = float(np.max(np.abs(gram - np.eye(len(lam)))))
    completeness = float(np.max(np.abs(vecs @ vecs.T - np.eye(len(lam)))))
    dec = SpectralDecomposition(
        eigenvalues=lam,
        eigenvectors=vecs,
        bilinear_condition=bilinear,
        completeness_residual=completeness,
        model=m.model,
    )
    _check_invariants(dec)
    return dec


def _check_invariants(dec: SpectralDecomposition) -> None:
    problems = []
    if dec.bilinear_condition >= BILINEAR_TOL:
        problems.append(f"bilinear residual {dec.bilinear_condition:.3e}")
    if dec.completeness_residual >= BILINEAR_TOL:
        problems.append(f"completeness residual {dec.completeness_residual:.3e}")
    min_im = dec.eigenvalues.imag.min()
    if min_im <= -DECAY_TOL:
        problems.append(f"negative collective decay rate, Im lambda = {min_im:.3e}")
    trace = dec.eigenvalues.sum()
    expected = 0.5j * dec.size
    if abs(trace - expected) > TRACE_RTOL * abs(expected):
        problems.append(f"trace identity violated, sum lambda = {trace:.6e}")
    if problems:
        raise DefectiveSpectrumError(
            "spectral invariants violated: " + "; ".join(problems)
        )


def reconstruction_residual(m: InteractionMatrix, dec: SpectralDecomposition) -> float:
    """Max-norm of V Lambda V^T - M relative to max |M|."""
    rebuilt = (dec.eigenvectors * dec.eigenvalues) @ dec.eigenvectors.T
    return float(
        np.max(np.abs(rebuilt - m.entries)) / np.max(np.abs(m.entries))
    )
