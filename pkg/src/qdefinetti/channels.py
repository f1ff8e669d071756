"""Quantum operations: Kraus, Choi and superoperator forms, dilations, and
symmetry/extendibility of multi-copy operations.

Conventions
-----------
* Choi matrices are ``(I (x) Phi)(|Psi><Psi|)`` with the reference system R
  first and ``|Psi> = D^{-1/2} sum_k |k>|k>``, so they have unit trace.
* Superoperators act on column-stacked vectorizations,
  ``vec(X) = X.reshape(-1, order="F")``.
* Multi-copy Choi matrices use slot order ``R1 Q1 R2 Q2 ...``;
  :func:`blocks_permutation` converts to ``R1..RN Q1..QN``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DimensionError, InvalidStateError, IsometryError, NotCPError, ResourceLimitError
from .exchangeability import SymmetryResult
from .linalg import (
    as_matrix,
    dag,
    herm_eig,
    hermiticity_residual,
    inverse_permutation,
    kron_all,
    matrix_from_json,
    matrix_to_json,
    partial_trace,
    permutation_operator,
    permute_systems,
    trace_distance,
    transposition,
)
from .states import SIGMA_X, SIGMA_Y, SIGMA_Z, max_entangled_vector

TP_TOL = 1e-9
KRAUS_RANK_CUTOFF = 1e-10
NOT_CP_TOL = 1e-8
MAX_SUPEROP_DIM = 4096


@dataclass(frozen=True, eq=False)
class KrausChannel:
    """``rho -> sum_i A_i rho A_i^dagger`` with ``kraus`` of shape ``(m, D, D)``.

    ``require_tp=False`` admits non-trace-preserving maps; the library uses
    them only for the trace-preservation filter demonstrations.
    """

    kraus: np.ndarray
    require_tp: bool = True

    def __post_init__(self):
        k = np.array(self.kraus, dtype=complex)
        if k.ndim == 2:
            k = k[None]
        if k.ndim != 3 or k.shape[1] != k.shape[2] or len(k) == 0:
            raise DimensionError(f"Kraus operators must have shape (m, D, D), got {k.shape}")
        k.setflags(write=False)
        object.__setattr__(self, "kraus", k)
        if self.require_tp and self.tp_residual() > TP_TOL:
            raise InvalidStateError(f"Kraus operators are not trace preserving (residual {self.tp_residual():.3e})")

    @property
    def dim(self) -> int:
        return self.kraus.shape[1]

    @property
    def rank(self) -> int:
        return len(self.kraus)

    def tp_residual(self) -> float:
        s = np.einsum("kji,kjl->il", self.kraus.conj(), self.kraus)
        return float(np.abs(s - np.eye(self.dim)).max())

    def is_trace_preserving(self, tol: float = TP_TOL) -> bool:
        return self.tp_residual() <= tol

    def __call__(self, rho) -> np.ndarray:
        return apply_channel(self, rho)

    def to_json(self) -> dict:
        return {"dim": self.dim, "kraus": [matrix_to_json(a) for a in self.kraus]}


@dataclass(frozen=True, eq=False)
class ChoiMatrix:
    """Unit-trace Choi matrix on ``R (x) Q``."""

    matrix: np.ndarray

    def __post_init__(self):
        m = as_matrix(self.matrix)
        d = int(round(np.sqrt(m.shape[0])))
        if d * d != m.shape[0]:
            raise DimensionError(f"Choi matrix size {m.shape[0]} is not a square")
        if hermiticity_residual(m) > 1e-9:
            raise InvalidStateError("Choi matrix is not Hermitian")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return int(round(np.sqrt(self.matrix.shape[0])))

    def reference_marginal(self) -> np.ndarray:
        return partial_trace(self.matrix, (self.dim, self.dim), [0])

    def is_trace_preserving(self, tol: float = TP_TOL) -> bool:
        return bool(np.abs(self.reference_marginal() - np.eye(self.dim) / self.dim).max() <= tol)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])

    def to_json(self) -> dict:
        return {"dim": self.dim, "choi": matrix_to_json(self.matrix)}


@dataclass(frozen=True, eq=False)
class Superoperator:
    """Matrix of a linear map on ``N`` systems of dimension ``D`` (column stacking)."""

    matrix: np.ndarray
    dim: int
    num_copies: int = 1

    def __post_init__(self):
        size = self.dim ** (2 * self.num_copies)
        if np.shape(self.matrix) != (size, size):
            raise DimensionError(f"superoperator for N={self.num_copies}, D={self.dim} must be {size}x{size}")

    @property
    def space_dim(self) -> int:
        return self.dim**self.num_copies

    def is_trace_preserving(self, tol: float = TP_TOL) -> bool:
        # dual condition: vec(I)^dagger S = vec(I)^dagger
        vid = vec(np.eye(self.space_dim))
        return bool(np.abs(vid @ self.matrix - vid).max() <= tol)


# ---------------------------------------------------------------- constructors


def identity_channel(d: int = 2) -> KrausChannel:
    return KrausChannel(np.eye(d, dtype=complex)[None])


def unitary_channel(u) -> KrausChannel:
    return KrausChannel(as_matrix(u)[None])


def depolarizing_channel(p: float) -> KrausChannel:
    """Qubit depolarizing map ``rho -> (1-p) rho + p I/2`` in its four-Kraus form."""
    ops = [np.sqrt(1 - 3 * p / 4) * np.eye(2)] + [np.sqrt(p / 4) * s for s in (SIGMA_X, SIGMA_Y, SIGMA_Z)]
    return KrausChannel(np.array(ops))


def fully_depolarizing_channel(d: int) -> KrausChannel:
    """``rho -> tr(rho) I/d`` via the ``d^2`` operators ``|i><j|/sqrt(d)``."""
    ops = []
    for i in range(d):
        for j in range(d):
            a = np.zeros((d, d), dtype=complex)
            a[i, j] = 1 / np.sqrt(d)
            ops.append(a)
    return KrausChannel(np.array(ops))


def scaled_channel(ch: KrausChannel, factor: float) -> KrausChannel:
    """``factor * Phi``; not trace preserving unless ``factor == 1``."""
    return KrausChannel(np.sqrt(factor) * ch.kraus, require_tp=False)


def collapse_operations(d: int) -> list[KrausChannel]:
    """Selective von Neumann operations ``rho -> E_a rho E_a`` for the basis projectors."""
    return [KrausChannel(np.diag(row).astype(complex)[None], require_tp=False) for row in np.eye(d)]


def random_channel(d: int, rng: np.random.Generator, kraus_rank: int = 2) -> KrausChannel:
    """Haar-random isometry ``C^d -> C^d (x) C^m`` cut into ``m`` Kraus operators."""
    g = rng.standard_normal((d * kraus_rank, d)) + 1j * rng.standard_normal((d * kraus_rank, d))
    q, r = np.linalg.qr(g)
    q = q * (np.diag(r) / np.abs(np.diag(r)))
    return KrausChannel(q.reshape(kraus_rank, d, d))


def remix_kraus(ch: KrausChannel, u) -> KrausChannel:
    """Kraus operators ``B_i = sum_j u_ij A_j`` for unitary ``u``; same channel."""
    u = as_matrix(u)
    if u.shape[0] != ch.rank:
        raise DimensionError("mixing unitary must match the number of Kraus operators")
    return KrausChannel(np.einsum("ij,jab->iab", u, ch.kraus), require_tp=ch.require_tp)


def channel_from_json(obj: dict) -> KrausChannel:
    """Read ``{"dim", "kraus": [...]}`` or ``{"dim", "choi": matrix}``."""
    if "kraus" in obj:
        ch = KrausChannel(np.array([matrix_from_json(m) for m in obj["kraus"]]))
    elif "choi" in obj:
        ch = channel_from_choi(ChoiMatrix(matrix_from_json(obj["choi"])))
        if not ch.is_trace_preserving():
            raise InvalidStateError("Choi matrix does not describe a trace-preserving channel")
        ch = KrausChannel(ch.kraus)
    else:
        raise DimensionError("channel JSON needs a 'kraus' or 'choi' member")
    if "dim" in obj and int(obj["dim"]) != ch.dim:
        raise DimensionError("channel 'dim' disagrees with its operators")
    return ch


# ---------------------------------------------------------------- action and representations


def apply_channel(ch: KrausChannel, rho) -> np.ndarray:
    rho = as_matrix(rho)
    if rho.shape[0] != ch.dim:
        raise DimensionError(f"state of dim {rho.shape[0]} vs channel of dim {ch.dim}")
    return np.einsum("kij,jl,kml->im", ch.kraus, rho, ch.kraus.conj())


def matrix_unit(j: int, k: int, d: int) -> np.ndarray:
    e = np.zeros((d, d), dtype=complex)
    e[j, k] = 1
    return e


def choi_from_channel(ch: KrausChannel) -> ChoiMatrix:
    """``(I (x) Phi)(|Psi><Psi|)``."""
    d = ch.dim
    # v_i[j, q] = A_i[q, j]
    v = np.swapaxes(ch.kraus, 1, 2).reshape(ch.rank, d * d)
    return ChoiMatrix(np.einsum("ka,kb->ab", v, v.conj()) / d)


def channel_from_choi(j: ChoiMatrix) -> KrausChannel:
    """Kraus operators from the spectral decomposition of ``D * J``."""
    d = j.dim
    w, v = herm_eig(d * j.matrix)
    if w[-1] < -NOT_CP_TOL * d:
        raise NotCPError(f"Choi matrix has eigenvalue {w[-1] / d:.3e}: map is not completely positive")
    keep = w > KRAUS_RANK_CUTOFF
    if not np.any(keep):
        raise NotCPError("Choi matrix is zero")
    ops = [np.sqrt(lam) * vec_.reshape(d, d).T for lam, vec_ in zip(w[keep], v[:, keep].T)]
    return KrausChannel(np.array(ops), require_tp=False)


def vec(x) -> np.ndarray:
    return np.asarray(x).reshape(-1, order="F")


def unvec(v, n: int | None = None) -> np.ndarray:
    v = np.asarray(v)
    n = int(round(np.sqrt(v.size))) if n is None else n
    return v.reshape(n, n, order="F")


def superop_from_kraus(kraus) -> np.ndarray:
    kraus = np.asarray(kraus, dtype=complex)
    return sum(np.kron(a.conj(), a) for a in kraus)


def superop_from_map(fn, d: int) -> np.ndarray:
    """Matrix of an arbitrary linear map by evaluating it on matrix units."""
    cols = [vec(fn(unvec(e, d))) for e in np.eye(d * d, dtype=complex)]
    return np.array(cols).T


def _check_superop_size(dim: int, n: int) -> None:
    if dim ** (2 * n) > MAX_SUPEROP_DIM:
        raise ResourceLimitError(f"superoperator of size {dim ** (2 * n)} exceeds {MAX_SUPEROP_DIM}")


def superop_from_channels(chs: Sequence[KrausChannel]) -> Superoperator:
    """``Phi_1 (x) ... (x) Phi_N`` as a superoperator."""
    dims = {c.dim for c in chs}
    if len(dims) != 1:
        raise DimensionError("all factors must have the same dimension")
    d, n = dims.pop(), len(chs)
    _check_superop_size(d, n)
    kraus = [kron_all(ops) for ops in itertools.product(*(c.kraus for c in chs))]
    return Superoperator(superop_from_kraus(kraus), d, n)


def mixture_superop(weights, chs: Sequence[KrausChannel], n: int) -> Superoperator:
    """``sum_i p_i Phi_i^{(x) n}``."""
    w = np.asarray(weights, dtype=float)
    if len(w) != len(chs) or np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
        raise InvalidStateError("mixture weights must be a probability vector over the channels")
    parts = [superop_from_channels([c] * n) for c in chs]
    return Superoperator(sum(p * s.matrix for p, s in zip(w, parts)), parts[0].dim, n)


def apply_superop(phi: Superoperator, rho) -> np.ndarray:
    rho = as_matrix(rho)
    if rho.shape[0] != phi.space_dim:
        raise DimensionError("state does not match the superoperator's input space")
    return unvec(phi.matrix @ vec(rho), phi.space_dim)


def s_coefficients(phi: Superoperator) -> np.ndarray:
    """``S[l, j, m, k]`` with ``Phi(|j><k|) = sum_{l,m} S[l,j,m,k] |l><m|`` (multi-indices flattened)."""
    n = phi.space_dim
    return phi.matrix.reshape(n, n, n, n, order="F").transpose(0, 2, 1, 3)


def interleave_permutation(n: int) -> tuple[int, ...]:
    """Permutation taking slot order ``R1..RN Q1..QN`` to ``R1 Q1 ... RN QN``."""
    source = [s for t in range(n) for s in (t, n + t)]
    return inverse_permutation(source)


def blocks_permutation(n: int) -> tuple[int, ...]:
    """Inverse of :func:`interleave_permutation`."""
    return inverse_permutation(interleave_permutation(n))


def choi_from_superop(phi: Superoperator, interleaved: bool = True) -> np.ndarray:
    """``J(Phi^(N)) = (I (x) Phi^(N))((|Psi><Psi|)^{(x) N})``."""
    n, d = phi.space_dim, phi.dim
    s = s_coefficients(phi)  # [l, j, m, k]
    blocked = np.einsum("ljmk->jlkm", s).reshape(n * n, n * n) / n
    if not interleaved or phi.num_copies == 1:
        return blocked
    return permute_systems(blocked, (d,) * (2 * phi.num_copies), interleave_permutation(phi.num_copies))


# ---------------------------------------------------------------- dilation


class Dilation(NamedTuple):
    ancilla_state: np.ndarray
    unitary: np.ndarray


def _complete_to_unitary(v: np.ndarray, columns: Sequence[int]) -> np.ndarray:
    """Place isometry columns at ``columns`` and fill the rest by Gram-Schmidt on the standard basis."""
    n = v.shape[0]
    u = np.zeros((n, n), dtype=complex)
    u[:, list(columns)] = v
    free = [c for c in range(n) if c not in set(columns)]
    basis = [v[:, i] for i in range(v.shape[1])]
    for e in np.eye(n, dtype=complex):
        if not free:
            break
        r = e.copy()
        for _ in range(2):
            for b in basis:
                r -= (b.conj() @ r) * b
        nrm = np.linalg.norm(r)
        if nrm > 1e-8:
            r /= nrm
            basis.append(r)
            u[:, free.pop(0)] = r
    return u


def dilation_action(dil: Dilation, rho) -> np.ndarray:
    """``tr_A(U (rho (x) sigma) U^dagger)``; the system comes first."""
    rho = as_matrix(rho)
    d, m = rho.shape[0], dil.ancilla_state.shape[0]
    big = dil.unitary @ np.kron(rho, dil.ancilla_state) @ dag(dil.unitary)
    return partial_trace(big, (d, m), [0])


def stinespring_dilate(ch: KrausChannel, ancilla_index: int = 0) -> Dilation:
    """Unitary ``U`` on system (x) ancilla and pure ancilla state ``|a><a|``.

    ``U(|psi> (x) |a>) = sum_i A_i|psi> (x) |i>``; the ancilla has one level
    per Kraus operator (at least two).  The result is checked on all matrix
    units before returning.
    """
    if not ch.is_trace_preserving():
        raise IsometryError(f"channel is not trace preserving (residual {ch.tp_residual():.3e})")
    d = ch.dim
    m = max(ch.rank, 2)
    kraus = np.concatenate([ch.kraus, np.zeros((m - ch.rank, d, d))]) if m > ch.rank else ch.kraus
    if not 0 <= ancilla_index < m:
        raise DimensionError(f"ancilla index {ancilla_index} outside [0, {m})")
    v = np.transpose(kraus, (1, 0, 2)).reshape(d * m, d)
    u = _complete_to_unitary(v, [j * m + ancilla_index for j in range(d)])
    sigma = np.zeros((m, m), dtype=complex)
    sigma[ancilla_index, ancilla_index] = 1
    dil = Dilation(sigma, u)
    for j in range(d):
        for k in range(d):
            e = matrix_unit(j, k, d)
            if np.abs(dilation_action(dil, e) - apply_channel(ch, e)).max() > TP_TOL:
                raise IsometryError("dilation does not reproduce the channel")
    return dil


# ---------------------------------------------------------------- multi-copy structure


def permutation_superop(perm: Sequence[int], d: int) -> np.ndarray:
    u = permutation_operator(perm, d)
    return np.kron(u, u)


def op_symmetry_check(phi: Superoperator, tol: float = 1e-9) -> SymmetryResult:
    """``Phi == pi o Phi o pi^{-1}`` for every adjacent transposition (Frobenius norm)."""
    n = phi.num_copies
    if n < 2:
        raise DimensionError("symmetry needs at least two copies")
    for i in range(n - 1):
        p = permutation_superop(transposition(n, i, i + 1), phi.dim)
        if np.linalg.norm(phi.matrix - p @ phi.matrix @ p.T) > tol:
            return SymmetryResult(False, (i, i + 1))
    return SymmetryResult(True)


def partial_trace_last_superop(d: int, n: int) -> np.ndarray:
    """Matrix of ``tr_{n}`` from ``n`` copies to ``n - 1`` copies."""
    dims = (d,) * n
    size = d**n
    cols = []
    for e in np.eye(size * size, dtype=complex):
        cols.append(vec(partial_trace(unvec(e, size), dims, range(n - 1))))
    return np.array(cols).T


def op_extendibility_check(phi_n: Superoperator, phi_n1: Superoperator, tol: float = 1e-9) -> bool:
    """``Phi^(N) o tr_{N+1} == tr_{N+1} o Phi^(N+1)`` on every matrix unit of ``N+1`` copies."""
    if phi_n1.num_copies != phi_n.num_copies + 1 or phi_n1.dim != phi_n.dim:
        raise DimensionError("second superoperator must act on exactly one more copy")
    t = partial_trace_last_superop(phi_n.dim, phi_n1.num_copies)
    return bool(np.abs(phi_n.matrix @ t - t @ phi_n1.matrix).max() <= tol)


# ---------------------------------------------------------------- trace-preservation filter


@dataclass
class TPFilterReport:
    rows: list[tuple[int, float]]
    traces: list[float]
    violation: bool
    first_violation: int | None
    growing_index: int | None
    deficient_indices: list[int] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "traces": self.traces,
            "violation": self.violation,
            "first_violation": self.first_violation,
            "growing_index": self.growing_index,
            "deficient_indices": self.deficient_indices,
            "flags": self.flags,
            "rows": [[n, v] for n, v in self.rows],
        }


def tp_filter_demo(weights, maps: Sequence[KrausChannel], rho, n_max: int = 50, tol: float = 0.01) -> TPFilterReport:
    """Tabulate ``sum_i p_i [tr Phi_i(rho)]^N`` for ``N = 1..n_max``.

    For a mixture of ``N``-fold powers to be trace preserving this must equal
    1 for every ``N``; any non-trace-preserving component breaks that.
    """
    w = np.asarray(weights, dtype=float)
    traces = [float(np.trace(apply_channel(m, rho)).real) for m in maps]
    t = np.asarray(traces)
    rows = [(n, float(w @ t**n)) for n in range(1, n_max + 1)]
    off = np.abs(t - 1) > TP_TOL
    if not np.any(off[w > 0]):
        return TPFilterReport(rows, traces, False, None, None)
    first = next((n for n, v in rows if abs(v - 1) > tol), None)
    growing = [i for i in range(len(t)) if t[i] > 1 + TP_TOL and w[i] > 0]
    deficient = [i for i in range(len(t)) if t[i] < 1 - TP_TOL and w[i] > 0]
    flags = []
    if growing:
        flags.append(f"component {growing[0]} has trace {t[growing[0]]:.6g} > 1: its term diverges")
    if deficient and not growing:
        flags.append("trace-deficient component without a compensating component: single-copy normalization fails")
    return TPFilterReport(rows, traces, True, first, growing[0] if growing else None, deficient, flags)


# ---------------------------------------------------------------- misc helpers


def choi_distance(a, b) -> float:
    ma = a.matrix if isinstance(a, ChoiMatrix) else a
    mb = b.matrix if isinstance(b, ChoiMatrix) else b
    return trace_distance(ma, mb)


def channels_agree(a: KrausChannel, b: KrausChannel, tol: float = 1e-9) -> bool:
    """Compare the two maps on every matrix unit."""
    if a.dim != b.dim:
        return False
    d = a.dim
    return all(
        np.abs(apply_channel(a, matrix_unit(j, k, d)) - apply_channel(b, matrix_unit(j, k, d))).max() <= tol
        for j in range(d)
        for k in range(d)
    )


def max_entangled_state(d: int) -> np.ndarray:
    psi = max_entangled_vector(d)
    return np.outer(psi, psi.conj())

