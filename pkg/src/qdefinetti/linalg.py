"""Dense complex linear algebra on tensor-product spaces.

Matrices are plain ``numpy`` arrays of shape ``(n, n)``.  Composite systems are
described by a tuple of local dimensions; factor 0 is the most significant
index of the multi-index (big-endian), so ``kron(a, b)`` has ``a`` on system 0.
System indices and permutations are 0-based throughout.
"""

from __future__ import annotations

from math import prod
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionError, NotHermitianError, SingularMatrixError, UnsupportedShapeError

TOL_PD = 1e-12
_TIE_TOL = 1e-12


def tol_herm(dim: int) -> float:
    """Hermiticity tolerance for a ``dim x dim`` matrix."""
    return 1e-9 * dim


def as_matrix(m) -> np.ndarray:
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise DimensionError(f"expected a non-empty square matrix, got shape {a.shape}")
    return a


def dag(m: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(m, -1, -2))


def hermiticity_residual(m: np.ndarray) -> float:
    m = np.asarray(m)
    return float(np.max(np.abs(m - dag(m)))) if m.size else 0.0


def is_hermitian(m, tol: float | None = None) -> bool:
    m = as_matrix(m)
    tol = tol_herm(m.shape[0]) if tol is None else tol
    return hermiticity_residual(m) <= tol


def kron(a, b) -> np.ndarray:
    return np.kron(as_matrix(a), as_matrix(b))


def kron_all(mats: Iterable) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, as_matrix(m))
    return out


def kron_power(m, n: int) -> np.ndarray:
    return kron_all([m] * n)


def _check_shape(m: np.ndarray, dims: Sequence[int]) -> tuple[int, ...]:
    dims = tuple(int(d) for d in dims)
    if not dims or any(d < 1 for d in dims):
        raise DimensionError(f"invalid system shape {dims}")
    if prod(dims) != m.shape[0]:
        raise DimensionError(f"shape {dims} does not describe a {m.shape[0]}x{m.shape[0]} matrix")
    return dims


def partial_trace(m, dims: Sequence[int], keep: Iterable[int]) -> np.ndarray:
    """Trace out every system not listed in ``keep``.

    Kept systems retain their original relative order.  An empty ``keep``
    returns the full trace as a 1x1 matrix.
    """
    m = as_matrix(m)
    dims = _check_shape(m, dims)
    n = len(dims)
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= n for k in keep):
        raise DimensionError(f"keep={keep} out of range for {n} systems")
    t = m.reshape(dims + dims)
    remaining = n
    for ax in sorted(set(range(n)) - set(keep), reverse=True):
        t = np.trace(t, axis1=ax, axis2=ax + remaining)
        remaining -= 1
    d_out = prod(dims[k] for k in keep)
    return t.reshape(d_out, d_out)


def _check_perm(perm: Sequence[int], n: int) -> tuple[int, ...]:
    perm = tuple(int(p) for p in perm)
    if sorted(perm) != list(range(n)):
        raise ValueError(f"{perm} is not a permutation of 0..{n - 1}")
    return perm


def inverse_permutation(perm: Sequence[int]) -> tuple[int, ...]:
    inv = [0] * len(perm)
    for i, p in enumerate(perm):
        inv[p] = i
    return tuple(inv)


def transposition(n: int, i: int, j: int) -> tuple[int, ...]:
    perm = list(range(n))
    perm[i], perm[j] = perm[j], perm[i]
    return tuple(perm)


def permute_systems(m, dims: Sequence[int], perm: Sequence[int]) -> np.ndarray:
    """Return ``pi m`` with matrix elements ``(pi m)[j, l] = m[pi j, pi l]``.

    ``pi j = (j[perm[0]], ..., j[perm[n-1]])``.  For a product operator the
    factor sitting in slot ``i`` of the result is the one originally in slot
    ``perm^{-1}(i)``.
    """
    m = as_matrix(m)
    dims = _check_shape(m, dims)
    if len(set(dims)) != 1:
        raise UnsupportedShapeError(f"permutation requires identical local dimensions, got {dims}")
    n = len(dims)
    perm = _check_perm(perm, n)
    inv = inverse_permutation(perm)
    axes = inv + tuple(n + i for i in inv)
    return np.transpose(m.reshape(dims + dims), axes).reshape(m.shape)


def permutation_operator(perm: Sequence[int], d: int) -> np.ndarray:
    """Real permutation matrix ``U`` with ``U m U^T == permute_systems(m, ...)``."""
    n = len(perm)
    perm = _check_perm(perm, n)
    idx = np.arange(d**n).reshape((d,) * n)
    src = np.transpose(idx, inverse_permutation(perm)).reshape(-1)
    u = np.zeros((d**n, d**n))
    u[np.arange(d**n), src] = 1.0
    return u


def _phase_fix(v: np.ndarray) -> np.ndarray:
    out = v.copy()
    for c in range(out.shape[1]):
        col = out[:, c]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size:
            ph = col[nz[0]] / abs(col[nz[0]])
            out[:, c] = col / ph
    return out


def herm_eig(m, tol: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix, eigenvalues descending.

    Each eigenvector is phase-fixed so its first non-negligible component is
    real and positive.  Degenerate eigenvalues are ordered by descending
    lexicographic comparison of their eigenvector components.
    """
    m = as_matrix(m)
    tol = tol_herm(m.shape[0]) if tol is None else tol
    res = hermiticity_residual(m)
    if res > tol:
        raise NotHermitianError(f"matrix is not Hermitian (residual {res:.3e} > {tol:.1e})")
    w, v = np.linalg.eigh((m + dag(m)) / 2)
    w, v = w[::-1], _phase_fix(v[:, ::-1])

    def key(c: int):
        comps = np.round(v[:, c], 12)
        return tuple(x for z in comps for x in (z.real, z.imag))

    order = []
    start = 0
    for stop in range(1, len(w) + 1):
        if stop == len(w) or abs(w[stop] - w[start]) > _TIE_TOL * max(1.0, abs(w[start])):
            block = list(range(start, stop))
            order.extend(sorted(block, key=key, reverse=True))
            start = stop
    # eigenvalues inside a tie block are equal to tolerance; keep them sorted
    return w, v[:, np.array(order)]


def psd_function(m, fn) -> np.ndarray:
    w, v = herm_eig(m)
    return (v * fn(w)) @ dag(v)


def inv_sqrt_psd(m) -> np.ndarray:
    """``m^{-1/2}`` for a strictly positive definite Hermitian matrix."""
    w, v = herm_eig(m)
    if w[-1] <= TOL_PD:
        raise SingularMatrixError(w[-1])
    return (v * w**-0.5) @ dag(v)


def sqrt_psd(m) -> np.ndarray:
    return psd_function(m, lambda w: np.sqrt(np.clip(w, 0.0, None)))


def trace_distance(a, b) -> float:
    """Half the trace norm of ``a - b``."""
    a, b = as_matrix(a), as_matrix(b)
    if a.shape != b.shape:
        raise DimensionError(f"dimension mismatch {a.shape} vs {b.shape}")
    diff = a - b
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh((diff + dag(diff)) / 2))))


def hermitian_basis(d: int) -> np.ndarray:
    """Orthonormal Hermitian operator basis: ``I/sqrt(d)`` then generalized Gell-Mann.

    Order after the identity: symmetric ``(j,k)``, antisymmetric ``(j,k)`` for
    ``j<k`` lexicographic, then the ``d-1`` diagonal matrices.  Every element
    satisfies ``tr(B_a B_b) = delta_ab``.
    """
    if d < 1:
        raise DimensionError("dimension must be positive")
    basis = [np.eye(d, dtype=complex) / np.sqrt(d)]
    for j in range(d):
        for k in range(j + 1, d):
            s = np.zeros((d, d), dtype=complex)
            s[j, k] = s[k, j] = 1 / np.sqrt(2)
            basis.append(s)
    for j in range(d):
        for k in range(j + 1, d):
            a = np.zeros((d, d), dtype=complex)
            a[j, k], a[k, j] = -1j / np.sqrt(2), 1j / np.sqrt(2)
            basis.append(a)
    for l in range(1, d):
        diag = np.zeros(d)
        diag[:l] = 1.0
        diag[l] = -l
        basis.append(np.diag(diag / np.sqrt(l * (l + 1))).astype(complex))
    return np.array(basis)


def hs_gram(ops) -> np.ndarray:
    """Gram matrix ``tr(A_a^dagger A_b)`` of a stack of operators."""
    ops = np.asarray(ops, dtype=complex)
    flat = ops.reshape(ops.shape[0], -1)
    return flat.conj() @ flat.T


def numerical_rank(gram: np.ndarray, tol: float = 1e-10) -> int:
    w = np.linalg.eigvalsh((gram + dag(gram)) / 2)
    return int(np.sum(w > tol))


# ---------------------------------------------------------------- JSON format

def matrix_to_json(m) -> dict:
    m = as_matrix(m)
    flat = m.reshape(-1)
    return {"dim": int(m.shape[0]), "entries": [[float(z.real), float(z.imag)] for z in flat]}


def matrix_from_json(obj: dict) -> np.ndarray:
    try:
        dim = int(obj["dim"])
        entries = obj["entries"]
    except (KeyError, TypeError) as exc:
        raise DimensionError(f"malformed matrix object: {exc}") from None
    if dim < 1 or len(entries) != dim * dim:
        raise DimensionError(f"matrix of dim {dim} needs {dim * dim} entries, got {len(entries)}")
    arr = np.array([complex(re, im) for re, im in entries], dtype=complex)
    return arr.reshape(dim, dim)
