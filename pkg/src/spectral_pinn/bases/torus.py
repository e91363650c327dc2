"""Numerically computed Laplace-Beltrami eigenbasis on the embedded torus.

The torus ((R + r cos t) cos p, (R + r cos t) sin p, r sin t) is meshed by
a structured periodic grid of linear triangles; stiffness and mass
matrices are assembled from the embedded geometry and the generalized
symmetric eigenproblem S v = lambda B v is solved densely (desk scale).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator, TransformerMixin

from ..exceptions import DegenerateTriangleError, InvalidGridError
from ..validation import check_coeffs, check_samples

__all__ = [
    "TorusGeometry", "TorusMesh", "EigenBasis", "TorusBasis",
    "build_torus_mesh", "assemble_fem", "solve_eigenbasis", "torus_basis_eval",
    "save_eigenbasis", "load_eigenbasis",
]


@dataclass(frozen=True)
class TorusGeometry:
    """Embedded torus with major radius R, minor radius r and grid sizes."""

    R: float = 2.0
    r: float = 1.0
    n_theta: int = 15
    n_phi: int = 15

    def __post_init__(self):
        if not self.R > self.r > 0:
            raise ValueError(f"need R > r > 0, got R={self.R}, r={self.r}")

    def embed(self, theta, phi):
        """Map parametric (theta, phi) to R^3."""
        R, r = self.R, self.r
        w = R + r * np.cos(theta)
        return np.stack([w * np.cos(phi), w * np.sin(phi), r * np.sin(theta)], axis=-1)

    @property
    def area(self) -> float:
        return 4.0 * np.pi**2 * self.R * self.r


@dataclass
class TorusMesh:
    geometry: TorusGeometry
    vertices: np.ndarray   # (V, 3)
    triangles: np.ndarray  # (F, 3) vertex indices
    theta: np.ndarray      # (n_theta,) parametric rows
    phi: np.ndarray        # (n_phi,)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_edges(self) -> int:
        edges = set()
        for tri in self.triangles:
            for a, b in ((0, 1), (1, 2), (2, 0)):
                edges.add(tuple(sorted((int(tri[a]), int(tri[b])))))
        return len(edges)

    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + self.triangles.shape[0]

    def vertex_index(self, i: int, j: int) -> int:
        return (i % len(self.theta)) * len(self.phi) + (j % len(self.phi))


def build_torus_mesh(geom: TorusGeometry) -> TorusMesh:
    """Structured periodic triangulation: each grid quad split in two."""
    nt, np_ = geom.n_theta, geom.n_phi
    if nt < 3 or np_ < 3:
        raise InvalidGridError(f"need at least a 3x3 grid, got {nt}x{np_}")
    theta = 2.0 * np.pi * np.arange(nt) / nt
    phi = 2.0 * np.pi * np.arange(np_) / np_
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    vertices = geom.embed(tt.ravel(), pp.ravel())

    tris = []
    for i in range(nt):
        for j in range(np_):
            v00 = i * np_ + j
            v10 = ((i + 1) % nt) * np_ + j
            v01 = i * np_ + (j + 1) % np_
            v11 = ((i + 1) % nt) * np_ + (j + 1) % np_
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    return TorusMesh(geom, vertices, np.array(tris, dtype=int), theta, phi)


def assemble_fem(mesh: TorusMesh) -> tuple:
    """P1 stiffness and consistent mass matrices on the embedded surface.

    Per triangle with edge vectors e_i opposite vertex i:
    S_ij = (e_i . e_j) / (4 A), M = (A/12) (1 + delta_ij).
    """
    V = mesh.n_vertices
    S = np.zeros((V, V))
    B = np.zeros((V, V))
    pts = mesh.vertices
    for tri in mesh.triangles:
        p = pts[tri]
        e = np.array([p[2] - p[1], p[0] - p[2], p[1] - p[0]])
        area = 0.5 * np.linalg.norm(np.cross(e[1], e[2]))
        if area < 1e-14:
            raise DegenerateTriangleError(f"triangle {tri} has zero area")
        sl = (e @ e.T) / (4.0 * area)
        ml = (area / 12.0) * (np.ones((3, 3)) + np.eye(3))
        for a in range(3):
            for b in range(3):
                S[tri[a], tri[b]] += sl[a, b]
                B[tri[a], tri[b]] += ml[a, b]
    return S, B


@dataclass
class EigenBasis:
    """Ascending eigenpairs of S v = lambda B v, B-orthonormal vectors."""

    eigenvalues: np.ndarray   # (K,)
    vectors: np.ndarray       # (V, K) nodal values
    mass: np.ndarray          # (V, V)
    stiffness: np.ndarray     # (V, V)
    mesh: TorusMesh

    @property
    def n_modes(self) -> int:
        return len(self.eigenvalues)


def solve_eigenbasis(S: np.ndarray, B: np.ndarray, K: int,
                     mesh: TorusMesh = None) -> EigenBasis:
    """Dense generalized symmetric eigensolve, first K modes.

    scipy reduces via Cholesky of B to a standard symmetric problem;
    eigenvectors come back B-orthonormal and are sign-fixed so the first
    non-negligible component is positive.
    """
    if K > S.shape[0]:
        raise ValueError(f"requested {K} modes from a {S.shape[0]}-vertex mesh")
    try:
        vals, vecs = scipy.linalg.eigh(S, B, subset_by_index=(0, K - 1))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - B is SPD by construction
        raise np.linalg.LinAlgError(f"Cholesky of mass matrix failed: {exc}")
    vals = np.where((vals < 0) & (vals > -1e-8), 0.0, vals)  # kernel mode roundoff
    for k in range(K):
        v = vecs[:, k]
        lead = np.argmax(np.abs(v) > 1e-8 * np.max(np.abs(v)))
        if v[lead] < 0:
            vecs[:, k] = -v
    return EigenBasis(vals, vecs, B, S, mesh)


def torus_basis_eval(basis: EigenBasis, k: int, theta, phi):
    """P1 interpolation of eigenvector k at parametric (theta, phi)."""
    return _interp_nodal(basis.mesh, basis.vectors[:, k - 1], theta, phi)


def _interp_nodal(mesh: TorusMesh, nodal: np.ndarray, theta, phi):
    """Piecewise-linear interpolation on the structured periodic grid."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    scalar = theta.ndim == 0
    theta = np.atleast_1d(theta) % (2 * np.pi)
    phi = np.atleast_1d(phi) % (2 * np.pi)
    nt, np_ = len(mesh.theta), len(mesh.phi)
    ht = 2 * np.pi / nt
    hp = 2 * np.pi / np_
    i = np.floor(theta / ht).astype(int) % nt
    j = np.floor(phi / hp).astype(int) % np_
    lt = theta / ht - np.floor(theta / ht)  # local coords in [0,1)
    lp = phi / hp - np.floor(phi / hp)

    v00 = nodal[(i % nt) * np_ + (j % np_)]
    v10 = nodal[((i + 1) % nt) * np_ + (j % np_)]
    v01 = nodal[(i % nt) * np_ + ((j + 1) % np_)]
    v11 = nodal[((i + 1) % nt) * np_ + ((j + 1) % np_)]

    # quad split as (v00, v10, v11) and (v00, v11, v01): diagonal lt = lp
    lower = lt >= lp
    out = np.where(
        lower,
        v00 * (1 - lt) + v10 * (lt - lp) + v11 * lp,
        v00 * (1 - lp) + v11 * lt + v01 * (lp - lt),
    )
    return float(out[0]) if scalar else out


class TorusBasis(BaseEstimator, TransformerMixin):
    """FEM eigenbasis transform: nodal samples -> spectral coefficients.

    Coefficients of a nodal vector f are V^T B f (B-orthonormal expansion);
    with K equal to the vertex count the transform is exactly invertible.
    """

    def __init__(self, R: float = 2.0, r: float = 1.0, n_theta: int = 15,
                 n_phi: int = 15, n_modes: int = None):
        self.R = R
        self.r = r
        self.n_theta = n_theta
        self.n_phi = n_phi
        self.n_modes = n_modes

    @property
    def n_coeffs(self) -> int:
        return self.n_modes if self.n_modes else self.n_theta * self.n_phi

    @property
    def n_grid(self) -> int:
        return self.n_theta * self.n_phi

    def fit(self, X=None, y=None):
        geom = TorusGeometry(self.R, self.r, self.n_theta, self.n_phi)
        self.mesh_ = build_torus_mesh(geom)
        S, B = assemble_fem(self.mesh_)
        self.basis_ = solve_eigenbasis(S, B, self.n_coeffs, self.mesh_)
        self.forward_ = self.basis_.vectors.T @ B  # (K, V)
        return self

    def _check_fitted(self):
        if not hasattr(self, "basis_"):
            self.fit()

    def transform(self, X) -> np.ndarray:
        self._check_fitted()
        X = check_samples(X, self.n_grid)
        return X @ self.forward_.T

    def inverse_transform(self, C) -> np.ndarray:
        self._check_fitted()
        C = check_coeffs(C, self.n_coeffs)
        return C @ self.basis_.vectors.T

    def evaluate(self, coeffs: np.ndarray, theta, phi):
        """Synthesis at arbitrary parametric points via P1 interpolation."""
        self._check_fitted()
        nodal = self.basis_.vectors @ np.asarray(coeffs, dtype=float)
        return _interp_nodal(self.mesh_, nodal, theta, phi)

    @property
    def eigenvalues_(self) -> np.ndarray:
        self._check_fitted()
        return self.basis_.eigenvalues


# ---------------------------------------------------------------------------
# Persistence: little-endian binary so eigen-solves cache across runs
#   magic "SPNNEIG1", u32 n_theta, u32 n_phi, f64 R, f64 r, u32 K, u32 V,
#   f64 eigenvalues[K], f64 vectors[V*K] row-major
# ---------------------------------------------------------------------------

_MAGIC = b"SPNNEIG1"


def save_eigenbasis(path, basis: TorusBasis) -> None:
    basis._check_fitted()
    eb = basis.basis_
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIddII", basis.n_theta, basis.n_phi,
                             basis.R, basis.r, eb.n_modes, eb.vectors.shape[0]))
        fh.write(np.ascontiguousarray(eb.eigenvalues, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(eb.vectors, dtype="<f8").tobytes())


def load_eigenbasis(path) -> TorusBasis:
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValueError(f"{path} is not an eigenbasis file")
        nt, np_, R, r, K, V = struct.unpack("<IIddII", fh.read(32))
        vals = np.frombuffer(fh.read(8 * K), dtype="<f8").astype(float)
        vecs = np.frombuffer(fh.read(8 * V * K), dtype="<f8").reshape(V, K).astype(float)
    tb = TorusBasis(R, r, nt, np_, n_modes=K)
    geom = TorusGeometry(R, r, nt, np_)
    tb.mesh_ = build_torus_mesh(geom)
    S, B = assemble_fem(tb.mesh_)
    tb.basis_ = EigenBasis(vals, vecs, B, S, tb.mesh_)
    tb.forward_ = vecs.T @ B
    return tb
