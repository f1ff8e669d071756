"""Symmetry, extendibility and de Finetti mixtures for distributions and states.

Also hosts the negative-eigenvalue witness: a Hermitian unit-trace operator
with eigenvalue ``-lam`` gives a projector ``P`` with ``tr(A P) = 1 + lam``,
and even powers of that number eventually exceed any probability.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from math import factorial, prod
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import linprog

from .errors import ContractError, DimensionError, InvalidStateError, NoWitnessError, ResourceLimitError
from .linalg import as_matrix, herm_eig, hermiticity_residual, kron_power, matrix_to_json, partial_trace, permute_systems, transposition
from .povm import PHYSICAL_TOL, ReconstructedOperator
from .states import validate_density

MAX_TABLE_ENTRIES = 2**22
DIST_TOL = 1e-12
QSYM_TOL = 1e-10


class SymmetryResult(NamedTuple):
    symmetric: bool
    transposition: tuple[int, int] | None = None
    outcome: tuple[int, ...] | None = None

    def __bool__(self) -> bool:
        return self.symmetric


def _check_size(entries: int, limit: int | None) -> None:
    limit = MAX_TABLE_ENTRIES if limit is None else limit
    if entries > limit:
        raise ResourceLimitError(f"{entries} entries exceeds the limit of {limit}")


# ---------------------------------------------------------------- classical


@dataclass(frozen=True, eq=False)
class JointDistribution:
    """``p(x_1, ..., x_N)`` stored as an array of shape ``(k,) * N``."""

    table: np.ndarray

    def __post_init__(self):
        t = np.array(self.table, dtype=float)
        if t.ndim < 1 or len(set(t.shape)) != 1:
            raise DimensionError(f"table must have shape (k,)*N, got {t.shape}")
        if np.any(t < -DIST_TOL) or abs(t.sum() - 1) > DIST_TOL:
            raise InvalidStateError("table is not a probability distribution")
        object.__setattr__(self, "table", t)

    @property
    def num_trials(self) -> int:
        return self.table.ndim

    @property
    def num_outcomes(self) -> int:
        return self.table.shape[0]

    def marginal(self, n: int) -> "JointDistribution":
        """Distribution of the first ``n`` trials."""
        return JointDistribution(self.table.sum(axis=tuple(range(n, self.num_trials))))

    def to_json(self) -> dict:
        return {
            "num_trials": self.num_trials,
            "num_outcomes": self.num_outcomes,
            "table": self.table.reshape(-1).tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "JointDistribution":
        n, k = int(obj["num_trials"]), int(obj["num_outcomes"])
        flat = np.asarray(obj["table"], dtype=float)
        if flat.size != k**n:
            raise DimensionError(f"table needs {k**n} entries, got {flat.size}")
        return cls(flat.reshape((k,) * n))


@dataclass(frozen=True, eq=False)
class SimplexMixture:
    """Finite-support prior on the probability simplex: weights over points."""

    weights: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if len(w) != len(pts):
            raise DimensionError("weights and points differ in length")
        if np.any(w < 0) or abs(w.sum() - 1) > DIST_TOL:
            raise InvalidStateError("mixture weights must be a probability vector")
        if np.any(pts < -DIST_TOL) or np.any(np.abs(pts.sum(axis=1) - 1) > DIST_TOL):
            raise InvalidStateError("mixture points must lie on the simplex")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "points", pts)


def is_symmetric_distribution(p: JointDistribution, tol: float = DIST_TOL) -> SymmetryResult:
    """Check invariance under adjacent transpositions of the trial labels.

    On failure the offending transposition ``(i, i+1)`` (0-based) and an
    outcome tuple where the two values differ are returned.
    """
    t = p.table
    for i in range(p.num_trials - 1):
        swapped = np.swapaxes(t, i, i + 1)
        diff = np.abs(swapped - t)
        if diff.max() > tol:
            where = tuple(int(x) for x in np.unravel_index(np.argmax(diff), t.shape))
            return SymmetryResult(False, (i, i + 1), where)
    return SymmetryResult(True)


def count_orbits(n: int, k: int) -> list[tuple[int, ...]]:
    """All outcome-count vectors of ``n`` trials over ``k`` outcomes, in a fixed order."""
    out = []
    for combo in itertools.combinations_with_replacement(range(k), n):
        c = [0] * k
        for x in combo:
            c[x] += 1
        out.append(tuple(c))
    return out


def multinomial(counts: Sequence[int]) -> int:
    return factorial(sum(counts)) // prod(factorial(c) for c in counts)


def _representative(counts: Sequence[int]) -> tuple[int, ...]:
    return tuple(j for j, c in enumerate(counts) for _ in range(c))


@dataclass(frozen=True, eq=False)
class ExtensionResult:
    feasible: bool
    extension: JointDistribution | None = None
    certificate: list[Fraction] | None = None
    certificate_exact: bool = False
    residual: float = 0.0


def _orbit_system(n: int, extra: int, k: int):
    small = count_orbits(n, k)
    big = count_orbits(n + extra, k)
    big_index = {c: i for i, c in enumerate(big)}
    a = np.zeros((len(small), len(big)), dtype=np.int64)
    for r, a_counts in enumerate(small):
        for c in count_orbits(extra, k):
            tot = tuple(x + y for x, y in zip(a_counts, c))
            a[r, big_index[tot]] += multinomial(c)
    return small, big, a


def verify_farkas(a: np.ndarray, b: Sequence[Fraction], y: Sequence[Fraction]) -> bool:
    """Exact rational check that ``A^T y >= 0`` and ``b.y < 0``.

    Such a ``y`` proves ``{q >= 0 : A q = b}`` empty.
    """
    rows, cols = a.shape
    for c in range(cols):
        if sum(int(a[r, c]) * y[r] for r in range(rows)) < 0:
            return False
    return sum(bi * yi for bi, yi in zip(b, y)) < 0


def is_extendible_distribution(
    p: JointDistribution, extra: int, max_entries: int | None = None
) -> ExtensionResult:
    """Decide whether ``p`` is the marginal of a symmetric ``N + extra`` trial distribution.

    A symmetric distribution is constant on count-orbits, so the unknowns are
    one probability per orbit of the longer sequence.  The resulting linear
    feasibility problem is solved with HiGHS.  If infeasible, a Farkas
    certificate is computed, rationalised and verified in exact arithmetic.
    """
    if extra < 1:
        raise ContractError("extra must be a positive integer")
    if not is_symmetric_distribution(p):
        raise ContractError("extendibility is defined for symmetric distributions only")
    n, k = p.num_trials, p.num_outcomes
    _check_size(k ** (n + extra), max_entries)
    small, big, a = _orbit_system(n, extra, k)
    b = np.array([p.table[_representative(c)] for c in small])

    res = linprog(np.zeros(len(big)), A_eq=a, b_eq=b, bounds=(0, None), method="highs")
    if res.status == 0:
        q = np.clip(res.x, 0.0, None)
        ext = np.empty((k,) * (n + extra))
        index = {c: i for i, c in enumerate(big)}
        for x in itertools.product(range(k), repeat=n + extra):
            ext[x] = q[index[tuple(x.count(j) for j in range(k))]]
        ext /= ext.sum()
        resid = float(np.abs(ext.sum(axis=tuple(range(n, n + extra))) - p.table).max())
        return ExtensionResult(True, JointDistribution(ext), residual=resid)
    if res.status != 2:
        raise RuntimeError(f"feasibility solver failed: {res.message}")

    # Farkas alternative: minimise b.y subject to A^T y >= 0, |y| <= 1
    cert = linprog(b, A_ub=-a.T, b_ub=np.zeros(len(big)), bounds=(-1, 1), method="highs")
    y = [Fraction(v).limit_denominator(10**6) for v in cert.x]
    exact = verify_farkas(a, [Fraction(v) for v in b], y)
    return ExtensionResult(False, certificate=y, certificate_exact=exact)


def classical_definetti_mix(mix: SimplexMixture, n: int, max_entries: int | None = None) -> JointDistribution:
    """``p(x) = sum_i w_i prod_t points_i[x_t]``."""
    k = mix.points.shape[1]
    _check_size(k**n, max_entries)
    table = np.zeros((k,) * n)
    for w, pt in zip(mix.weights, mix.points):
        term = np.ones(())
        for _ in range(n):
            term = np.multiply.outer(term, pt)
        table += w * term
    return JointDistribution(table)


def anticorrelated_pair() -> JointDistribution:
    return JointDistribution(np.array([[0.0, 0.5], [0.5, 0.0]]))


# ---------------------------------------------------------------- quantum


@dataclass(frozen=True, eq=False)
class StateMixture:
    weights: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        s = np.asarray(self.states, dtype=complex)
        if s.ndim == 2:
            s = s[None]
        if len(w) != len(s):
            raise DimensionError("weights and states differ in length")
        if np.any(w < 0) or abs(w.sum() - 1) > DIST_TOL:
            raise InvalidStateError("mixture weights must be a probability vector")
        for rho in s:
            validate_density(rho)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "states", s)

    @property
    def dim(self) -> int:
        return self.states.shape[1]


def quantum_symmetric_check(rho, dims: Sequence[int], tol: float = QSYM_TOL) -> SymmetryResult:
    rho = as_matrix(rho)
    n = len(dims)
    for i in range(n - 1):
        diff = np.abs(permute_systems(rho, dims, transposition(n, i, i + 1)) - rho).max()
        if diff > tol:
            return SymmetryResult(False, (i, i + 1))
    return SymmetryResult(True)


def quantum_extendibility_probe(rho, dims: Sequence[int], candidate, tol: float = QSYM_TOL) -> bool:
    """Check that ``candidate`` certifies a one-system symmetric extension of ``rho``.

    This verifies a proposed extension; it does not search for one.
    """
    rho, candidate = as_matrix(rho), as_matrix(candidate)
    dims = tuple(dims)
    if len(set(dims)) != 1:
        raise DimensionError("extendibility probe needs identical local dimensions")
    big = dims + (dims[0],)
    if candidate.shape[0] != rho.shape[0] * dims[0]:
        raise DimensionError("candidate must live on one more system than rho")
    if not quantum_symmetric_check(candidate, big, tol):
        return False
    marginal = partial_trace(candidate, big, range(len(dims)))
    return bool(np.abs(marginal - rho).max() <= tol)


def exchangeable_state_from_mixture(mix: StateMixture, n: int, max_entries: int | None = None) -> np.ndarray:
    """``sum_i w_i rho_i^{(x) n}``."""
    _check_size(mix.dim ** (2 * n), max_entries)
    return sum(w * kron_power(rho, n) for w, rho in zip(mix.weights, mix.states))


# ---------------------------------------------------------------- witness


class Witness(NamedTuple):
    projector: np.ndarray
    lam: float


def negativity_witness(a) -> Witness:
    """Projector ``I - |psi><psi|`` onto the complement of the most negative eigenvector.

    For unit-trace ``a`` with lowest eigenvalue ``-lam``, ``tr(a P) = 1 + lam``.
    """
    m = a.matrix if isinstance(a, ReconstructedOperator) else as_matrix(a)
    w, v = herm_eig(m)
    if w[-1] >= -PHYSICAL_TOL:
        raise NoWitnessError(f"operator is physical (min eigenvalue {w[-1]:.3e})")
    psi = v[:, -1]
    return Witness(np.eye(len(m)) - np.outer(psi, psi.conj()), float(-w[-1]))


def witness_growth(weights, operators, projector, n: int) -> float:
    """``sum_i w_i [tr(A_i P)]^n`` i.e. ``tr(rho^(n) P^{(x) n})`` for ``rho^(n) = sum w_i A_i^{(x) n}``."""
    if n < 0 or n % 2:
        raise ContractError(f"witness growth requires an even number of trials, got {n}")
    w = np.asarray(weights, dtype=float)
    ops = np.asarray(operators, dtype=complex)
    if ops.ndim == 2:
        ops = ops[None]
    for op in ops:
        if hermiticity_residual(op) > 1e-9 or abs(np.trace(op) - 1) > 1e-9:
            raise ContractError("mixture components must be Hermitian with unit trace")
    vals = np.einsum("nij,ji->n", ops, as_matrix(projector)).real
    return float(w @ vals**n)


def witness_table(weights, operators, projector, n_max: int = 200) -> list[tuple[int, float]]:
    return [(n, witness_growth(weights, operators, projector, n)) for n in range(2, n_max + 1, 2)]


def first_violation(weights, operators, projector, n_max: int = 200) -> int | None:
    """Smallest even ``n <= n_max`` with growth value above 1."""
    for n, val in witness_table(weights, operators, projector, n_max):
        if val > 1:
            return n
    return None


def witness_report(weights, operators, witness: Witness, n_max: int = 200) -> dict:
    return {
        "lambda": witness.lam,
        "projector": matrix_to_json(witness.projector),
        "growth": [[n, v] for n, v in witness_table(weights, operators, witness.projector, n_max)],
    }
