"""Density operators, qubit Bloch vectors, ensembles and random states."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidDimensionError, InvalidStateError
from .linalg import as_matrix, dag, hermiticity_residual, kron_power

STATE_TOL = 1e-9

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = np.array([SIGMA_X, SIGMA_Y, SIGMA_Z])

MEASURES = ("hilbert-schmidt", "bures-like", "pure-haar")


def validate_density(rho, tol: float = STATE_TOL) -> np.ndarray:
    """Check the density-operator invariants and return the matrix.

    Raises :class:`InvalidStateError` if ``rho`` is not Hermitian, not of unit
    trace, or has an eigenvalue below ``-tol``.
    """
    rho = as_matrix(rho)
    if hermiticity_residual(rho) > tol:
        raise InvalidStateError("density operator is not Hermitian")
    tr = np.trace(rho).real
    if abs(tr - 1) > tol:
        raise InvalidStateError(f"density operator has trace {tr!r}")
    lo = np.linalg.eigvalsh((rho + dag(rho)) / 2)[0]
    if lo < -tol:
        raise InvalidStateError(f"density operator has negative eigenvalue {lo:.3e}")
    return rho


def ket(index: int, d: int) -> np.ndarray:
    v = np.zeros(d, dtype=complex)
    v[index] = 1
    return v


def pure(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    psi = psi / np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


def basis_state(index: int, d: int) -> np.ndarray:
    return pure(ket(index, d))


def maximally_mixed(d: int) -> np.ndarray:
    return np.eye(d, dtype=complex) / d


def max_entangled_vector(d: int) -> np.ndarray:
    """``d^{-1/2} sum_k |k>|k>``."""
    return np.eye(d, dtype=complex).reshape(-1) / np.sqrt(d)


def ghz_state(n: int = 3) -> np.ndarray:
    psi = np.zeros(2**n, dtype=complex)
    psi[0] = psi[-1] = 1
    return pure(psi)


def product_state(rho, n: int) -> np.ndarray:
    return kron_power(rho, n)


# ---------------------------------------------------------------- qubits


def _bloch_array(s) -> np.ndarray:
    s = np.asarray(s, dtype=float).reshape(-1)
    if s.shape != (3,):
        raise InvalidStateError(f"Bloch vector must have 3 components, got {s.shape}")
    return s


def bloch_to_rho(s) -> np.ndarray:
    """``(I + s.sigma)/2``; requires ``|s| <= 1``."""
    s = _bloch_array(s)
    if np.linalg.norm(s) > 1 + 1e-12:
        raise InvalidStateError(f"Bloch vector has length {np.linalg.norm(s):.6g} > 1")
    return 0.5 * (np.eye(2, dtype=complex) + np.einsum("k,kij->ij", s, PAULIS))


def rho_to_bloch(rho) -> np.ndarray:
    rho = as_matrix(rho)
    if rho.shape != (2, 2):
        raise InvalidDimensionError("Bloch vectors exist only for qubits (dim 2)")
    return np.einsum("ij,kji->k", rho, PAULIS).real


@dataclass(frozen=True, eq=False)
class QubitEnsemble:
    """Weighted pure qubit states given by unit Bloch directions."""

    weights: np.ndarray
    directions: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        n = np.asarray(self.directions, dtype=float).reshape(-1, 3)
        if len(w) != len(n):
            raise InvalidStateError("weights and directions differ in length")
        if np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
            raise InvalidStateError("ensemble weights must be a probability vector")
        if np.any(np.abs(np.linalg.norm(n, axis=1) - 1) > 1e-12):
            raise InvalidStateError("ensemble directions must be unit vectors")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "directions", n)

    def to_json(self) -> dict:
        return {"weights": self.weights.tolist(), "directions": self.directions.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "QubitEnsemble":
        return cls(obj["weights"], obj["directions"])


def ensemble_to_rho(e: QubitEnsemble) -> np.ndarray:
    return sum(p * bloch_to_rho(n) for p, n in zip(e.weights, e.directions))


def ensemble_outcome_probability(e: QubitEnsemble, direction) -> float:
    """Probability of finding the pure state along ``direction``, ensemble by ensemble.

    Uses the member overlaps ``|<m|n_j>|^2 = (1 + m.n_j)/2`` rather than the
    averaged density operator, so it is an independent route to ``<m|rho|m>``.
    """
    m = _bloch_array(direction)
    overlaps = 0.5 * (1 + e.directions @ m)
    return float(e.weights @ overlaps)


# ---------------------------------------------------------------- sampling


def _ginibre(d: int, k: int, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal((d, k)) + 1j * rng.standard_normal((d, k))


def haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(_ginibre(d, d, rng))
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def sample_density(d: int, rng: np.random.Generator, measure: str = "hilbert-schmidt") -> np.ndarray:
    """Draw one density operator.

    ``hilbert-schmidt``: ``GG^dagger`` normalised, ``G`` complex Ginibre.
    ``bures-like``: ``(I+U) GG^dagger (I+U)^dagger`` normalised, ``U`` Haar.
    ``pure-haar``: projector onto a normalised Gaussian vector.
    """
    if d < 2:
        raise InvalidDimensionError("dimension must be at least 2")
    if measure == "hilbert-schmidt":
        g = _ginibre(d, d, rng)
        m = g @ dag(g)
    elif measure == "bures-like":
        g = _ginibre(d, d, rng)
        a = (np.eye(d) + haar_unitary(d, rng)) @ g
        m = a @ dag(a)
    elif measure == "pure-haar":
        return pure(_ginibre(d, 1, rng))
    else:
        raise ValueError(f"unknown measure {measure!r}; choose from {MEASURES}")
    return m / np.trace(m).real


def sample_densities(n: int, d: int, rng: np.random.Generator, measure: str = "hilbert-schmidt") -> np.ndarray:
    return np.array([sample_density(d, rng, measure) for _ in range(n)])
