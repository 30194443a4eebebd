"""Dense complex linear algebra: matrix units, Kronecker products, partial
traces, orthonormal bases and basis-overlap matrices.

Conventions (fixed globally, see README):

* ``matrix_unit(i, j, d)`` is the matrix with a single 1 at row ``i``,
  column ``j``; as an operator it acts by ``e_ij @ xi = <e_j, xi> e_i``.
* ``kron`` flattens row-major: ``(A (x) B)[(i*dB + k), (j*dB + l)] = A[i,j] B[k,l]``,
  i.e. the first tensor factor owns the coarse (block) index.  This matches
  ``numpy.kron``.
* All structural validations use an absolute tolerance of 1e-10; oracle
  equalities 1e-12 per entry.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import STRUCT_TOL, CapExceededError, op_dim_cap


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def as_complex_matrix(m, name: str = "matrix") -> np.ndarray:
    """Validate and return a finite, 2-d complex ndarray."""
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {a.shape}")
    if not np.all(np.isfinite(a.real)) or not np.all(np.isfinite(a.imag)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def dag(a: np.ndarray) -> np.ndarray:
    """Conjugate transpose."""
    return a.conj().T


def matrix_unit(i: int, j: int, d: int) -> np.ndarray:
    """Matrix unit e_ij in M_d: entry 1 at row i, column j, zeros elsewhere."""
    if not (0 <= i < d and 0 <= j < d):
        raise IndexError(f"matrix unit indices ({i},{j}) out of range for d={d}")
    out = np.zeros((d, d), dtype=complex)
    out[i, j] = 1.0
    return out


def kron(a, b, cap: int | None = None) -> np.ndarray:
    """Kronecker product with the row-major flattening convention above."""
    a = as_complex_matrix(a, "kron first factor")
    b = as_complex_matrix(b, "kron second factor")
    cap = op_dim_cap() if cap is None else cap
    if a.shape[0] * b.shape[0] > cap or a.shape[1] * b.shape[1] > cap:
        raise CapExceededError(
            f"kron result {a.shape[0] * b.shape[0]}x{a.shape[1] * b.shape[1]} "
            f"exceeds operator dimension cap {cap}"
        )
    return np.kron(a, b)


def kron_all(mats, cap: int | None = None) -> np.ndarray:
    """Left-to-right Kronecker product of a sequence of matrices."""
    mats = list(mats)
    out = mats[0]
    for m in mats[1:]:
        out = kron(out, m, cap=cap)
    return out


def identity(d: int) -> np.ndarray:
    return np.eye(d, dtype=complex)


def partial_trace_second(x, d1: int, d2: int) -> np.ndarray:
    """Partial trace over the second factor: Y[i,j] = sum_k X[(i,k),(j,k)].

    Satisfies partial_trace_second(a (x) b) = a * Tr(b) and is trace
    compatible: Tr(Y) = Tr(X).
    """
    x = as_complex_matrix(x, "partial trace input")
    n = d1 * d2
    if x.shape != (n, n):
        raise ValueError(f"expected a {n}x{n} matrix for d1={d1}, d2={d2}, got {x.shape}")
    return np.einsum("ikjk->ij", x.reshape(d1, d2, d1, d2))


def partial_trace_first(x, d1: int, d2: int) -> np.ndarray:
    """Partial trace over the first factor: Y[k,l] = sum_i X[(i,k),(i,l)]."""
    x = as_complex_matrix(x, "partial trace input")
    n = d1 * d2
    if x.shape != (n, n):
        raise ValueError(f"expected a {n}x{n} matrix for d1={d1}, d2={d2}, got {x.shape}")
    return np.einsum("ikil->kl", x.reshape(d1, d2, d1, d2))


def partial_trace_last(x, dims) -> np.ndarray:
    """Partial trace over the last site of a multi-site operator."""
    dims = list(dims)
    d_rest = int(np.prod(dims[:-1]))
    return partial_trace_second(x, d_rest, dims[-1])


def first_factor_blocks(k: np.ndarray, d: int) -> np.ndarray:
    """Blocks of K = sum_{i,j} e_ij (x) K_ij, returned as B[i, j] = K_ij.

    The matrix-unit index lives in the FIRST tensor factor; K_ij is the
    ordinary (i, j) block of the flat d^2 x d^2 matrix.  Shape (d, d, d, d)
    with B[i, j][a, b] = K[(i, a), (j, b)].
    """
    k = as_complex_matrix(k, "block input")
    if k.shape != (d * d, d * d):
        raise ValueError(f"expected {d * d}x{d * d} matrix, got {k.shape}")
    return k.reshape(d, d, d, d).transpose(0, 2, 1, 3)


def second_factor_blocks(k: np.ndarray, d: int) -> np.ndarray:
    """Blocks of K = sum_{i,j} K'_ij (x) e_ij, returned as B[i, j] = K'_ij.

    The matrix-unit index lives in the SECOND tensor factor; K'_ij is the
    strided slice K[i::d, j::d].
    """
    k = as_complex_matrix(k, "block input")
    if k.shape != (d * d, d * d):
        raise ValueError(f"expected {d * d}x{d * d} matrix, got {k.shape}")
    return k.reshape(d, d, d, d).transpose(1, 3, 0, 2)


def assemble_from_first_factor_blocks(blocks: np.ndarray) -> np.ndarray:
    """Inverse of :func:`first_factor_blocks`."""
    b = np.asarray(blocks, dtype=complex)
    d = b.shape[0]
    return b.transpose(0, 2, 1, 3).reshape(d * d, d * d)


@dataclass(frozen=True)
class OrthonormalBasis:
    """An orthonormal basis of C^d, stored as the columns of a unitary.

    ``vectors[:, k]`` is the k-th basis vector.
    """

    vectors: np.ndarray = field()

    def __post_init__(self):
        u = as_complex_matrix(self.vectors, "basis")
        if u.shape[0] != u.shape[1]:
            raise ValueError(f"basis matrix must be square, got {u.shape}")
        gram = dag(u) @ u
        err = np.abs(gram - np.eye(u.shape[0])).max()
        if err > STRUCT_TOL:
            raise ValueError(f"basis is not orthonormal: max Gram deviation {err:.3e}")
        object.__setattr__(self, "vectors", _freeze(u))

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    @classmethod
    def standard(cls, d: int) -> "OrthonormalBasis":
        return cls(np.eye(d, dtype=complex))

    def vector(self, k: int) -> np.ndarray:
        return self.vectors[:, k]

    def projector(self, k: int) -> np.ndarray:
        """Rank-one projector |e_k><e_k| as a d x d matrix in standard coordinates."""
        v = self.vectors[:, k]
        return np.outer(v, v.conj())

    def to_basis(self, a: np.ndarray) -> np.ndarray:
        """Matrix of the operator ``a`` in this basis: U^dag a U."""
        return dag(self.vectors) @ a @ self.vectors


def rotate_two_site(k: np.ndarray, basis: OrthonormalBasis) -> np.ndarray:
    """Express a two-site operator in the product basis e (x) e: (U (x) U)^dag K (U (x) U)."""
    uu = np.kron(basis.vectors, basis.vectors)
    return dag(uu) @ k @ uu


def basis_overlap_matrix(e: OrthonormalBasis, f: OrthonormalBasis) -> np.ndarray:
    """Doubly stochastic matrix of squared overlaps |<e_j, f_k>|^2."""
    if e.dim != f.dim:
        raise ValueError(f"basis dimensions differ: {e.dim} vs {f.dim}")
    overlaps = dag(e.vectors) @ f.vectors
    return np.abs(overlaps) ** 2


def hermitian_part_deviation(a: np.ndarray) -> float:
    return float(np.abs(a - dag(a)).max())


def is_psd(a: np.ndarray, floor: float = -1e-10) -> bool:
    """Positive semidefiniteness via a Hermitian eigenvalue check."""
    w = np.linalg.eigvalsh((a + dag(a)) / 2)
    return bool(w.min() >= floor)
