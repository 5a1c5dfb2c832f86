"""Atom configurations: perfect square arrays, holes, and position disorder.

Lengths are in units of the resonant wavelength. Arrays live in the z = 0
plane and are centered on the origin, so the focus of the detection beam
(on-axis, z = 0) coincides with the array center.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, SingularGeometryError

MIN_SEPARATION = 1e-9
UNIT_NORM_TOL = 1e-12

X_HAT = np.array([1.0, 0.0, 0.0])


@dataclass(frozen=True)
class Geometry:
    """Immutable atom configuration.

    positions:            (N_a, 3) array, wavelength units
    dipole_orientations:  (N_a, 3) array of unit vectors (x for the
                          two-level model)
    lattice_constant:     lattice spacing d
    linear_size:          N for an N x N parent lattice
    hole_indices:         removed sites, indexed into the parent lattice
                          (row-major, 0 .. N^2-1)
    site_indices:         parent-lattice index of each remaining atom
    sigma:                in-plane Gaussian disorder std (0 for none)
    disorder_seed:        64-bit PRNG seed, None when sigma == 0
    """

    positions: np.ndarray
    dipole_orientations: np.ndarray
    lattice_constant: float
    linear_size: int
    hole_indices: frozenset = frozenset()
    site_indices: np.ndarray = None
    sigma: float = 0.0
    disorder_seed: int | None = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        dip = np.asarray(self.dipole_orientations, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise InvalidArgumentError("positions must be an (N_a, 3) array")
        if dip.shape != pos.shape:
            raise InvalidArgumentError("one dipole orientation per atom required")
        norms = np.linalg.norm(dip, axis=1)
        if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
            raise InvalidArgumentError("dipole orientations must have unit norm")
        site = self.site_indices
        if site is None:
            site = np.arange(len(pos))
        site = np.asarray(site, dtype=int)
        if site.shape != (len(pos),):
            raise InvalidArgumentError("site_indices must match atom count")
        pos.setflags(write=False)
        dip.setflags(write=False)
        site.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "dipole_orientations", dip)
        object.__setattr__(self, "site_indices", site)
        object.__setattr__(self, "hole_indices", frozenset(self.hole_indices))
        self._check_separation()

    def _check_separation(self):
        dmin = self.min_separation()
        if dmin <= MIN_SEPARATION:
            raise SingularGeometryError(
                f"minimum atom separation {dmin:.3e} is below {MIN_SEPARATION:.0e}"
            )

    @property
    def n_atoms(self) -> int:
        return len(self.positions)

    def min_separation(self) -> float:
        pos = self.positions
        if len(pos) < 2:
            return np.inf
        sq = np.sum(pos**2, axis=1)
        dist_sq = sq[:, None] + sq[None, :] - 2.0 * (pos @ pos.T)
        np.fill_diagonal(dist_sq, np.inf)
        return float(np.sqrt(max(dist_sq.min(), 0.0)))

    def index_map(self) -> dict:
        """Map parent-lattice site index -> current atom index."""
        return {int(s): i for i, s in enumerate(self.site_indices)}

    def to_json(self, include_positions: bool = True) -> str:
        doc = {
            "N": int(self.linear_size),
            "d": float(self.lattice_constant),
            "holes": sorted(int(h) for h in self.hole_indices),
            "sigma": float(self.sigma),
            "seed": None if self.disorder_seed is None else int(self.disorder_seed),
        }
        if include_positions:
            doc["positions"] = [[float(c) for c in row] for row in self.positions]
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "Geometry":
        doc = json.loads(text)
        g = build_square_array(doc["N"], doc["d"])
        holes = doc.get("holes") or []
        if holes:
            g = remove_holes(g, holes)
        sigma = doc.get("sigma", 0.0) or 0.0
        if sigma > 0:
            g = apply_position_disorder(g, sigma, doc["seed"])
        if "positions" in doc and doc["positions"] is not None:
            ref = np.asarray(doc["positions"], dtype=float)
            if ref.shape != g.positions.shape or not np.allclose(
                ref, g.positions, atol=1e-12, rtol=0.0
            ):
                raise InvalidArgumentError(
                    "stored positions disagree with regenerated lattice"
                )
        return g


def _lattice_sites(n: int, d: float) -> np.ndarray:
    """Row-major N x N sites in the z = 0 plane, centered on the origin."""
    offs = (np.arange(n) - (n - 1) / 2.0) * d
    xx, yy = np.meshgrid(offs, offs, indexing="ij")
    pos = np.zeros((n * n, 3))
    pos[:, 0] = xx.ravel()
    pos[:, 1] = yy.ravel()
    return pos


def build_square_array(n: int, d: float) -> Geometry:
    """Perfect N x N square array with lattice constant d, all dipoles along x."""
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise InvalidArgumentError(f"linear size must be a positive integer, got {n!r}")
    if d <= 0:
        raise InvalidArgumentError(f"lattice constant must be positive, got {d!r}")
    pos = _lattice_sites(int(n), float(d))
    dip = np.tile(X_HAT, (len(pos), 1))
    return Geometry(
        positions=pos,
        dipole_orientations=dip,
        lattice_constant=float(d),
        linear_size=int(n),
    )


def remove_holes(g: Geometry, holes) -> Geometry:
    """Delete lattice sites by parent-lattice index.

    Hole indices always refer to the original N x N lattice (row-major),
    so removal commutes with position disorder and repeated calls
    accumulate. Removing an index twice is an error.
    """
    holes = list(holes)
    if len(set(holes)) != len(holes):
        raise InvalidArgumentError("hole indices must be distinct")
    n_sites = g.linear_size**2
    for h in holes:
        if not isinstance(h, (int, np.integer)) or h < 0 or h >= n_sites:
            raise InvalidArgumentError(f"hole index {h!r} outside 0..{n_sites - 1}")
        if h in g.hole_indices:
            raise InvalidArgumentError(f"site {h} was already removed")
    if not holes:
        return g
    hole_set = set(int(h) for h in holes)
    keep = np.array([s not in hole_set for s in g.site_indices])
    return Geometry(
        positions=g.positions[keep],
        dipole_orientations=g.dipole_orientations[keep],
        lattice_constant=g.lattice_constant,
        linear_size=g.linear_size,
        hole_indices=g.hole_indices | frozenset(hole_set),
        site_indices=g.site_indices[keep],
        sigma=g.sigma,
        disorder_seed=g.disorder_seed,
    )


def _site_displacements(n: int, sigma: float, seed: int) -> np.ndarray:
    """In-plane Gaussian displacements for every parent-lattice site.

    Drawn for all N^2 sites regardless of holes, so a given (N, sigma,
    seed) triple always produces the same displacement at a given site.
    """
    rng = np.random.default_rng(seed)
    delta = np.zeros((n * n, 3))
    delta[:, :2] = rng.normal(0.0, sigma, size=(n * n, 2))
    return delta


def apply_position_disorder(g: Geometry, sigma: float, seed: int) -> Geometry:
    """Displace every atom in-plane by independent Gaussian draws of std sigma."""
    if sigma < 0:
        raise InvalidArgumentError(f"disorder sigma must be non-negative, got {sigma!r}")
    if g.sigma != 0.0:
        raise InvalidArgumentError("geometry already carries position disorder")
    if sigma == 0:
        return g
    delta = _site_displacements(g.linear_size, float(sigma), int(seed))
    return Geometry(
        positions=g.positions + delta[g.site_indices],
        dipole_orientations=g.dipole_orientations,
        lattice_constant=g.lattice_constant,
        linear_size=g.linear_size,
        hole_indices=g.hole_indices,
        site_indices=g.site_indices,
        sigma=float(sigma),
        disorder_seed=int(seed),
    )
