"""Minimal informationally complete POVMs and probability-to-operator reconstruction."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DimensionError, InvalidDimensionError, InvalidStateError, OvercompleteError
from .linalg import (
    as_matrix,
    dag,
    hermitian_basis,
    hs_gram,
    inv_sqrt_psd,
    matrix_from_json,
    matrix_to_json,
    numerical_rank,
)

PSD_TOL = 1e-10
SUM_TOL = 1e-10
PHYSICAL_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class Povm:
    """Ordered POVM elements with shape ``(n, d, d)``.

    The element order is part of the outcome labelling.  Validation enforces
    positivity and resolution of the identity; ``minimal_ic`` additionally
    requires ``d**2`` linearly independent elements.
    """

    elements: np.ndarray
    minimal_ic: bool = False
    name: str = ""

    def __post_init__(self):
        el = np.array(self.elements, dtype=complex)
        if el.ndim != 3 or el.shape[1] != el.shape[2] or len(el) == 0:
            raise DimensionError(f"POVM elements must have shape (n, d, d), got {el.shape}")
        d = el.shape[1]
        for a, e in enumerate(el):
            lo = np.linalg.eigvalsh((e + dag(e)) / 2)[0]
            if lo < -PSD_TOL:
                raise InvalidStateError(f"POVM element {a} has eigenvalue {lo:.3e}")
        resid = np.linalg.norm(el.sum(axis=0) - np.eye(d))
        if resid > SUM_TOL:
            raise InvalidStateError(f"POVM elements sum to identity only within {resid:.3e}")
        if self.minimal_ic:
            if len(el) != d * d:
                raise InvalidStateError(f"minimal IC-POVM needs {d * d} elements, got {len(el)}")
            if numerical_rank(hs_gram(el)) != d * d:
                raise InvalidStateError("POVM elements are not linearly independent")
        el.setflags(write=False)
        object.__setattr__(self, "elements", el)

    @property
    def dim(self) -> int:
        return self.elements.shape[1]

    def __len__(self) -> int:
        return len(self.elements)

    @cached_property
    def _reconstruction_system(self) -> np.ndarray:
        # rows: outcomes, columns: coefficients on the orthonormal Hermitian basis
        basis = hermitian_basis(self.dim)
        return np.einsum("aij,mji->am", self.elements, basis).real

    def identity_residual(self) -> float:
        return float(np.linalg.norm(self.elements.sum(axis=0) - np.eye(self.dim)))

    def gram_rank(self) -> int:
        return numerical_rank(hs_gram(self.elements))

    def to_json(self) -> dict:
        return {
            "dim": self.dim,
            "minimal_ic": bool(self.minimal_ic),
            "elements": [matrix_to_json(e) for e in self.elements],
        }

    @classmethod
    def from_json(cls, obj: dict, name: str = "") -> "Povm":
        elements = [matrix_from_json(e) for e in obj["elements"]]
        povm = cls(np.array(elements), minimal_ic=bool(obj.get("minimal_ic", False)), name=name)
        if povm.dim != int(obj["dim"]):
            raise DimensionError("POVM 'dim' disagrees with its elements")
        return povm


@dataclass(frozen=True, eq=False)
class ReconstructedOperator:
    matrix: np.ndarray
    is_physical: bool
    min_eigenvalue: float = field(default=0.0)


def build_projector_family(d: int) -> list[np.ndarray]:
    """The ``d**2`` rank-one projectors the POVM is built from.

    Order: ``|e_j><e_j|``; then ``(e_j + e_k)/sqrt2`` for ``j<k``; then
    ``(e_j + i e_k)/sqrt2`` for ``j<k``.
    """
    if d < 2:
        raise InvalidDimensionError(f"dimension must be at least 2, got {d}")
    eye = np.eye(d, dtype=complex)
    vecs = [eye[j] for j in range(d)]
    pairs = [(j, k) for j in range(d) for k in range(j + 1, d)]
    vecs += [(eye[j] + eye[k]) / np.sqrt(2) for j, k in pairs]
    vecs += [(eye[j] + 1j * eye[k]) / np.sqrt(2) for j, k in pairs]
    return [np.outer(v, v.conj()) for v in vecs]


def frame_operator(d: int) -> np.ndarray:
    """Sum of the projector family (positive definite)."""
    return np.sum(build_projector_family(d), axis=0)


def build_min_ic_povm(d: int) -> Povm:
    """``E_a = G^{-1/2} Pi_a G^{-1/2}`` with ``G`` the sum of the projector family."""
    family = build_projector_family(d)
    g_inv = inv_sqrt_psd(np.sum(family, axis=0))
    elements = np.array([g_inv @ p @ g_inv for p in family])
    return Povm(elements, minimal_ic=True, name=f"minimal-ic-{d}")


def von_neumann_povm(d: int) -> Povm:
    """Projective measurement in the computational basis."""
    return Povm(np.array([np.diag(row) for row in np.eye(d, dtype=complex)]), name=f"z-basis-{d}")


def binary_povm(projector) -> Povm:
    p = as_matrix(projector)
    return Povm(np.array([p, np.eye(len(p)) - p]), name="binary")


def as_prob_vector(probs, n: int | None = None) -> np.ndarray:
    p = np.asarray(probs, dtype=float).reshape(-1)
    if n is not None and len(p) != n:
        raise DimensionError(f"probability vector has length {len(p)}, expected {n}")
    if np.any(p < -1e-12):
        raise InvalidStateError(f"probability vector has negative entry {p.min():.3e}")
    if abs(p.sum() - 1) > 1e-10:
        raise InvalidStateError(f"probabilities sum to {p.sum()!r}")
    return np.clip(p, 0.0, None)


def outcome_probabilities(rho, povm: Povm) -> np.ndarray:
    rho = as_matrix(rho)
    if rho.shape[0] != povm.dim:
        raise DimensionError(f"state of dim {rho.shape[0]} vs POVM of dim {povm.dim}")
    p = np.einsum("ij,aji->a", rho, povm.elements)
    if np.max(np.abs(p.imag)) > 1e-10:
        raise InvalidStateError("non-Hermitian input produced complex probabilities")
    return p.real


def reconstruct_operator(probs, povm: Povm) -> ReconstructedOperator:
    """Solve ``tr(A E_a) = p_a`` for the unique Hermitian ``A``.

    Any probability vector yields a Hermitian unit-trace ``A``; it is a
    density operator only when the vector lies in the image of state space.
    """
    if not povm.minimal_ic:
        raise OvercompleteError("reconstruction needs a minimal informationally complete POVM")
    p = as_prob_vector(probs, len(povm))
    try:
        coeffs = np.linalg.solve(povm._reconstruction_system, p)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"reconstruction system is singular: {exc}") from exc
    a = np.einsum("m,mij->ij", coeffs, hermitian_basis(povm.dim))
    a = (a + dag(a)) / 2
    lo = float(np.linalg.eigvalsh(a)[0])
    return ReconstructedOperator(a, is_physical=lo >= -PHYSICAL_TOL, min_eigenvalue=lo)


def max_prob_bound(d: int) -> float:
    """``[d - (1 + cot(3 pi / 4d)) / 2]^{-1}``.

    Upper bound on any single outcome probability ``tr(rho E_a)`` for the
    POVM of :func:`build_min_ic_povm`.  It tends to ``1/(0.79 d)``.
    """
    if d < 2:
        raise InvalidDimensionError(f"dimension must be at least 2, got {d}")
    return 1.0 / (d - 0.5 * (1.0 + 1.0 / np.tan(3 * np.pi / (4 * d))))


def max_outcome_probability(povm: Povm) -> float:
    """Exact ``max_{rho, a} tr(rho E_a)``: the largest eigenvalue over all elements."""
    return float(max(np.linalg.eigvalsh(e)[-1] for e in povm.elements))
