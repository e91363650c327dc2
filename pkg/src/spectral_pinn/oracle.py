"""Ground-truth solvers: analytic heat solution and IMEX-BDF4 Galerkin.

The Allen-Cahn solver works in coefficient space against a spectral basis
(spherical harmonics or the torus FEM eigenbasis): the diffusion term is
diagonal there and handled implicitly; the reaction u - u^3 is evaluated
nodally on the basis grid, projected back, and extrapolated with the
4th-order explicit weights.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bases.interval import sine_reconstruct
from .exceptions import InstabilityError, NonFiniteCoefficientError, TimeOutOfRangeError

__all__ = [
    "PdeSpec",
    "OracleSolution",
    "heat_analytic",
    "imex_bdf4_solve",
    "oracle_evaluate",
    "save_solution",
    "load_solution",
]


@dataclass(frozen=True)
class PdeSpec:
    """Equation descriptor: heat (coefficient alpha) or allen_cahn (epsilon)."""

    kind: str                 # "heat" | "allen_cahn"
    coefficient: float        # alpha or epsilon
    geometry: str             # interval | sphere | torus
    horizon: float = 1.0
    include_reaction: bool = True   # allen_cahn only; off = pure diffusion

    def __post_init__(self):
        if self.kind not in ("heat", "allen_cahn"):
            raise ValueError(f"unknown PDE kind {self.kind!r}")
        if self.coefficient <= 0:
            raise ValueError("diffusion coefficient must be positive")


def heat_analytic(coeffs: np.ndarray, x, t, alpha: float = 0.01):
    """Exact heat solution sum_k exp(-4 pi^2 k^2 alpha t) c_k sin(2 pi k x)."""
    coeffs = np.asarray(coeffs, dtype=float)
    k = np.arange(1, len(coeffs) + 1, dtype=float)
    decay = np.exp(-4.0 * np.pi**2 * k**2 * alpha * np.asarray(t, dtype=float)[..., None])
    return np.einsum("...k,...k->...", decay * coeffs,
                     np.sin(2 * np.pi * np.multiply.outer(np.asarray(x, dtype=float), k)))


@dataclass
class OracleSolution:
    """Coefficient trajectory on a uniform time grid."""

    coeffs: np.ndarray        # (n_steps + 1, K)
    dt: float
    pde: PdeSpec
    scheme: str = "imex-bdf4"
    startup: str = "rk4/10-substeps"

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.coeffs.shape[0])

    def at_time(self, t: float) -> np.ndarray:
        n = int(round(t / self.dt))
        if n < 0 or n >= self.coeffs.shape[0] or abs(n * self.dt - t) > self.dt / 2:
            raise TimeOutOfRangeError(f"t={t} not on the stored grid (dt={self.dt})")
        return self.coeffs[n]


class SpectralProblem:
    """Adapter giving the solver eigenvalues, synthesis and analysis maps."""

    def __init__(self, eigenvalues: np.ndarray, synth: np.ndarray, analysis: np.ndarray):
        self.eigenvalues = np.asarray(eigenvalues, dtype=float)
        self.synth = synth          # (n_grid, K): coeffs -> nodal values
        self.analysis = analysis    # (K, n_grid): nodal values -> coeffs

    @classmethod
    def from_basis(cls, basis) -> "SpectralProblem":
        """Accepts a fitted SphereBasis or TorusBasis."""
        if hasattr(basis, "eigenvalues_"):        # torus
            return cls(basis.eigenvalues_, basis.basis_.vectors, basis.forward_)
        return cls(basis.eigenvalues(), basis.design_, basis.pinv_)


def _rhs(c: np.ndarray, prob: SpectralProblem, pde: PdeSpec) -> np.ndarray:
    lin = -pde.coefficient * prob.eigenvalues * c
    if pde.kind == "allen_cahn" and pde.include_reaction:
        u = prob.synth @ c
        lin = lin + prob.analysis @ (u - u**3)
    return lin


def _nonlinear(c: np.ndarray, prob: SpectralProblem, pde: PdeSpec) -> np.ndarray:
    if pde.kind == "allen_cahn" and pde.include_reaction:
        u = prob.synth @ c
        return prob.analysis @ (u - u**3)
    return np.zeros_like(c)


def imex_bdf4_solve(coeffs0: np.ndarray, pde: PdeSpec, basis,
                    dt: float = 1e-3) -> OracleSolution:
    """March the semilinear system c' = -eps Lambda c + N(c) to the horizon.

    BDF4 implicit weights on the diagonal diffusion, 4th-order explicit
    extrapolation of N; the three startup values come from RK4 on the full
    right-hand side at dt/10 sub-steps.  Aborts on blow-up or NaN.
    """
    prob = basis if isinstance(basis, SpectralProblem) else SpectralProblem.from_basis(basis)
    c0 = np.asarray(coeffs0, dtype=float)
    n_steps = int(round(pde.horizon / dt))
    traj = np.empty((n_steps + 1, len(c0)))
    traj[0] = c0

    def rk4_step(c, h):
        k1 = _rhs(c, prob, pde)
        k2 = _rhs(c + 0.5 * h * k1, prob, pde)
        k3 = _rhs(c + 0.5 * h * k2, prob, pde)
        k4 = _rhs(c + h * k3, prob, pde)
        return c + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    limit = max(1.0, np.linalg.norm(c0)) * 1e6
    n_start = min(3, n_steps)
    for n in range(n_start):
        c = traj[n]
        for _ in range(10):
            c = rk4_step(c, dt / 10.0)
        _check(c, limit)
        traj[n + 1] = c

    # SBDF4: (25/12 c+ - 4 c0 + 3 c1 - 4/3 c2 + 1/4 c3)/dt
    #        = L c+ + 4 N0 - 6 N1 + 4 N2 - N3
    denom = 25.0 / 12.0 + dt * pde.coefficient * prob.eigenvalues
    N = [_nonlinear(traj[n], prob, pde) for n in range(min(4, n_steps + 1))]
    for n in range(n_start, n_steps):
        hist = 4.0 * traj[n] - 3.0 * traj[n - 1] + (4.0 / 3.0) * traj[n - 2] \
            - 0.25 * traj[n - 3]
        expl = 4.0 * N[3] - 6.0 * N[2] + 4.0 * N[1] - N[0]
        c_next = (hist + dt * expl) / denom
        _check(c_next, limit)
        traj[n + 1] = c_next
        N = [N[1], N[2], N[3], _nonlinear(c_next, prob, pde)]
    return OracleSolution(traj, dt, pde)


def _check(c: np.ndarray, limit: float) -> None:
    if not np.all(np.isfinite(c)):
        raise NonFiniteCoefficientError("time stepper produced NaN/Inf")
    if np.linalg.norm(c) > limit:
        raise InstabilityError("coefficient norm blow-up; reduce dt")


def oracle_evaluate(solution: OracleSolution, basis, point, t: float):
    """Basis synthesis of the stored coefficients nearest to time t."""
    c = solution.at_time(t)
    if solution.pde.geometry == "interval":
        return sine_reconstruct(c, point)
    theta, phi = point
    return basis.evaluate(c, theta, phi)


# ---------------------------------------------------------------------------
# Trajectory cache: little-endian binary keyed by problem hash
# ---------------------------------------------------------------------------

_MAGIC = b"SPNNTRJ1"


def solution_key(pde: PdeSpec, basis_tag: str, coeffs0: np.ndarray, dt: float) -> str:
    h = hashlib.sha256()
    h.update(f"{pde.kind}|{pde.coefficient}|{pde.geometry}|{pde.horizon}|"
             f"{pde.include_reaction}|{basis_tag}|{dt}".encode())
    h.update(np.ascontiguousarray(coeffs0, dtype="<f8").tobytes())
    return h.hexdigest()[:24]


def save_solution(path, solution: OracleSolution) -> None:
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        n, K = solution.coeffs.shape
        fh.write(struct.pack("<IId", n, K, solution.dt))
        fh.write(np.ascontiguousarray(solution.coeffs, dtype="<f8").tobytes())


def load_solution(path, pde: PdeSpec) -> OracleSolution:
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ValueError(f"{path} is not a trajectory file")
        n, K, dt = struct.unpack("<IId", fh.read(16))
        coeffs = np.frombuffer(fh.read(8 * n * K), dtype="<f8").reshape(n, K).astype(float)
    return OracleSolution(coeffs, dt, pde)
