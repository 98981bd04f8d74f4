"""Block-structured linear algebra on stacked trajectories.

State sequences live in R^{m(N+1)} as arrays of shape (N+1, m); mismatch
sequences live in R^{mN} as arrays of shape (N, m).  Gaussian weights are
block-diagonal with one (m, m) block repeated along the time axis, so every
weighted operation here works blockwise and never materializes a dense
trajectory-space matrix.  The shifted Gram systems arising in the solvers are
symmetric positive-definite block-tridiagonal; they are packed into LAPACK
banded storage (bandwidth 2m-1) and factored with dpbtrf.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import lapack

from .errors import FactorizationError

__all__ = [
    "BlockCovariance",
    "SteppedCovariance",
    "BlockBidiagonalMatrix",
    "ShiftedGramSolver",
    "weighted_sq_norm",
    "solve_shifted_gram",
    "gaussian_sample",
    "blocks_to_banded",
    "solve_block_tridiagonal",
    "block_tridiagonal_dense",
]

# relative symmetry defect tolerated in covariance blocks
_SYMMETRY_RTOL = 1e-12


class BlockCovariance:
    """SPD covariance block applied independently to each state in a stack.

    The eigendecomposition is computed once at construction; the principal
    square root, its inverse, and the precision matrix are cached attributes.

    Parameters
    ----------
    block : array_like, shape (m, m) or scalar
        Symmetric positive-definite covariance of a single block.
    """

    def __init__(self, block):
        block = np.atleast_2d(np.asarray(block, dtype=float))
        if block.ndim != 2 or block.shape[0] != block.shape[1]:
            raise ValueError(f"covariance block must be square, got {block.shape}")
        if not np.all(np.isfinite(block)):
            raise ValueError("covariance block contains non-finite entries")
        scale = float(np.linalg.norm(block))
        if np.linalg.norm(block - block.T) > _SYMMETRY_RTOL * max(scale, 1.0):
            raise ValueError("covariance block is not symmetric")
        evals, evecs = np.linalg.eigh(block)
        if evals[0] <= 0.0:
            raise ValueError(
                f"covariance block is not positive definite (min eigenvalue {evals[0]:g})"
            )
        self.block = block
        self.dim = block.shape[0]
        self.sqrt = (evecs * np.sqrt(evals)) @ evecs.T
        self.inv_sqrt = (evecs / np.sqrt(evals)) @ evecs.T
        self.inv = (evecs / evals) @ evecs.T
        self._evals = evals

    def whiten(self, x: np.ndarray) -> np.ndarray:
        """Apply C^{-1/2} to each row-block of ``x`` (shape (..., m))."""
        return np.asarray(x) @ self.inv_sqrt

    def solve(self, x: np.ndarray) -> np.ndarray:
        """Apply C^{-1} to each row-block of ``x``."""
        return np.asarray(x) @ self.inv

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Apply C to each row-block of ``x``."""
        return np.asarray(x) @ self.block

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        """Draw N(0, C) samples; shape (m,) or (size, m)."""
        shape = (self.dim,) if size is None else (size, self.dim)
        return rng.standard_normal(shape) @ self.sqrt

    def __repr__(self) -> str:  # pragma: no cover
        return f"BlockCovariance(dim={self.dim})"


class SteppedCovariance:
    """Block-diagonal weight whose (m, m) block varies along the time axis.

    Each trajectory step n uses ``blocks[index[n]]``, so a weight with only a
    few distinct blocks (the common case) stores each block once.  The
    blockwise operations mirror :class:`BlockCovariance` but act on stacks
    whose leading axis has exactly ``len(index)`` rows.
    """

    def __init__(self, blocks, index):
        blocks = tuple(blocks)
        if not blocks:
            raise ValueError("at least one covariance block is required")
        if not all(isinstance(b, BlockCovariance) for b in blocks):
            raise TypeError("blocks must be BlockCovariance instances")
        dim = blocks[0].dim
        if any(b.dim != dim for b in blocks):
            raise ValueError("all blocks must share one dimension")
        index = np.asarray(index, dtype=int)
        if index.ndim != 1 or index.size == 0:
            raise ValueError("index must be a non-empty 1-d array")
        if index.min() < 0 or index.max() >= len(blocks):
            raise ValueError("index refers to a missing block")
        self.blocks = blocks
        self.index = index
        self.dim = dim
        self.n_steps = index.size

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_steps, self.dim):
            raise ValueError(f"expected shape {(self.n_steps, self.dim)}, got {x.shape}")
        return x

    def _blockwise(self, x: np.ndarray, attr: str) -> np.ndarray:
        x = self._check(x)
        out = np.empty_like(x)
        for i, b in enumerate(self.blocks):
            mask = self.index == i
            out[mask] = x[mask] @ getattr(b, attr)
        return out

    def whiten(self, x: np.ndarray) -> np.ndarray:
        """Apply C_n^{-1/2} to row n of ``x`` (shape (K, m))."""
        return self._blockwise(x, "inv_sqrt")

    def solve(self, x: np.ndarray) -> np.ndarray:
        """Apply C_n^{-1} to row n of ``x``."""
        return self._blockwise(x, "inv")

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Apply C_n to row n of ``x``."""
        return self._blockwise(x, "block")

    def block_stack(self) -> np.ndarray:
        """Materialize the per-step blocks as an array of shape (K, m, m)."""
        return np.stack([b.block for b in self.blocks])[self.index]

    def __repr__(self) -> str:  # pragma: no cover
        return (f"SteppedCovariance(dim={self.dim}, n_steps={self.n_steps}, "
                f"n_distinct={len(self.blocks)})")


def weighted_sq_norm(v: np.ndarray, cov) -> float:
    """Squared weighted norm ``sum_n v_n^T C_n^{-1} v_n`` of a stacked vector.

    ``v`` may be flat of length k*m or an array of shape (k, m); ``cov`` is a
    :class:`BlockCovariance` (one block for every row) or a
    :class:`SteppedCovariance` (k must match its step count).
    """
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        if v.size % cov.dim:
            raise ValueError(f"length {v.size} is not a multiple of block dim {cov.dim}")
        v = v.reshape(-1, cov.dim)
    elif v.shape[-1] != cov.dim:
        raise ValueError(f"trailing axis {v.shape[-1]} != block dim {cov.dim}")
    return float(np.sum(v * cov.solve(v)))


def gaussian_sample(
    rng: np.random.Generator, cov: BlockCovariance, size: int | None = None
) -> np.ndarray:
    """Sample from N(0, C) using the cached principal square root."""
    return cov.sample(rng, size)


class BlockBidiagonalMatrix:
    """The mN x m(N+1) matrix with block row n equal to [L_n, I] at columns (n, n+1).

    ``lower`` holds the L_n blocks, shape (N, m, m).  Matrix-vector products
    act on stacked arrays: ``matvec`` maps (N+1, m) -> (N, m) and ``rmatvec``
    is its adjoint.
    """

    def __init__(self, lower: np.ndarray):
        lower = np.asarray(lower, dtype=float)
        if lower.ndim != 3 or lower.shape[1] != lower.shape[2]:
            raise ValueError(f"expected (N, m, m) blocks, got {lower.shape}")
        self.lower = lower
        self.n_blocks = lower.shape[0]
        self.dim = lower.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        n, m = self.n_blocks, self.dim
        return (n * m, (n + 1) * m)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v)
        if v.shape != (self.n_blocks + 1, self.dim):
            raise ValueError(f"expected shape {(self.n_blocks + 1, self.dim)}, got {v.shape}")
        return (self.lower @ v[:-1, :, None])[:, :, 0] + v[1:]

    def rmatvec(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w)
        if w.shape != (self.n_blocks, self.dim):
            raise ValueError(f"expected shape {(self.n_blocks, self.dim)}, got {w.shape}")
        out = np.zeros((self.n_blocks + 1, self.dim))
        out[:-1] = (self.lower.transpose(0, 2, 1) @ w[:, :, None])[:, :, 0]
        out[1:] += w
        return out

    def to_dense(self) -> np.ndarray:
        n, m = self.n_blocks, self.dim
        dense = np.zeros((n * m, (n + 1) * m))
        eye = np.eye(m)
        for k in range(n):
            dense[k * m:(k + 1) * m, k * m:(k + 1) * m] = self.lower[k]
            dense[k * m:(k + 1) * m, (k + 1) * m:(k + 2) * m] = eye
        return dense


def blocks_to_banded(diag: np.ndarray, sub: np.ndarray | None) -> np.ndarray:
    """Pack a symmetric block-tridiagonal matrix into LAPACK lower banded storage.

    Parameters
    ----------
    diag : (K, m, m)
        Diagonal blocks.  Only their lower triangles are referenced.
    sub : (K-1, m, m) or None
        Sub-diagonal blocks; ``sub[i]`` sits at block position (i+1, i).

    Returns
    -------
    ab : (2m, K*m)
        Storage with ``ab[i - j, j] = A[i, j]`` for ``0 <= i - j <= 2m-1``.
    """
    K, m, _ = diag.shape
    ab = np.zeros((2 * m, K * m))
    abv = ab.reshape(2 * m, K, m)
    for q in range(m):
        abv[q, :, :m - q] = diag.diagonal(offset=-q, axis1=1, axis2=2)
    if sub is not None and K > 1:
        for q in range(m):
            abv[m + q, :K - 1, :m - q] = sub.diagonal(offset=-q, axis1=1, axis2=2)
        for p in range(1, m):
            abv[m - p, :K - 1, p:] = sub.diagonal(offset=p, axis1=1, axis2=2)
    return ab


def _banded_cholesky(ab: np.ndarray, block_dim: int) -> np.ndarray:
    c, info = lapack.dpbtrf(ab, lower=1)
    if info > 0:
        raise FactorizationError(block_index=(info - 1) // block_dim,
                                 detail="matrix is not positive definite")
    if info < 0:  # pragma: no cover - argument error
        raise ValueError(f"invalid argument {-info} passed to dpbtrf")
    return c


def _banded_solve(chol: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    x, info = lapack.dpbtrs(chol, rhs, lower=1)
    if info != 0:  # pragma: no cover - argument error
        raise ValueError(f"invalid argument {-info} passed to dpbtrs")
    return x


def solve_block_tridiagonal(diag: np.ndarray, sub: np.ndarray | None,
                            rhs: np.ndarray) -> np.ndarray:
    """Solve an SPD block-tridiagonal system via banded Cholesky.

    ``rhs`` has shape (K, m) or (K*m,); the solution matches it.
    Raises :class:`FactorizationError` with the failing block index if the
    matrix is not positive definite.
    """
    m = diag.shape[1]
    ab = blocks_to_banded(diag, sub)
    chol = _banded_cholesky(ab, m)
    x = _banded_solve(chol, np.asarray(rhs, dtype=float).reshape(-1))
    return x.reshape(np.shape(rhs))


def block_tridiagonal_dense(diag: np.ndarray, sub: np.ndarray | None) -> np.ndarray:
    """Dense assembly of a symmetric block-tridiagonal matrix (test oracle)."""
    K, m, _ = diag.shape
    dense = np.zeros((K * m, K * m))
    for k in range(K):
        dense[k * m:(k + 1) * m, k * m:(k + 1) * m] = diag[k]
    if sub is not None:
        for k in range(K - 1):
            b = sub[k]
            dense[(k + 1) * m:(k + 2) * m, k * m:(k + 1) * m] = b
            dense[k * m:(k + 1) * m, (k + 1) * m:(k + 2) * m] = b.T
    return dense


class ShiftedGramSolver:
    """Solver for steps ``delta = -Co J^T (J Co J^T + alpha Cm)^{-1} g``.

    Everything independent of ``alpha`` (the Gram blocks of J Co J^T and their
    banded layout) is assembled once, so scanning a sequence of shifts only
    pays for one Cholesky factorization per shift.

    Parameters
    ----------
    jac : BlockBidiagonalMatrix
        Linearization with N block rows.
    co : BlockCovariance or SteppedCovariance
        Trajectory-space weight over the N+1 states (a SteppedCovariance must
        carry exactly N+1 per-step blocks).
    cm : BlockCovariance
        Mismatch-space weight (N blocks); also the shift direction.
    """

    def __init__(self, jac: BlockBidiagonalMatrix, co, cm: BlockCovariance):
        if co.dim != jac.dim or cm.dim != jac.dim:
            raise ValueError("covariance block dimension does not match the Jacobian")
        self.jac = jac
        self.co = co
        self.cm = cm
        L = jac.lower
        if isinstance(co, SteppedCovariance):
            if co.n_steps != jac.n_blocks + 1:
                raise ValueError(f"per-step weight has {co.n_steps} blocks, "
                                 f"trajectory has {jac.n_blocks + 1} states")
            S = co.block_stack()               # (N+1, m, m)
            T = L @ S[:-1]                     # (N, m, m)
            diag = T @ L.transpose(0, 2, 1)
            diag += S[1:]
        else:
            T = L @ co.block                   # (N, m, m)
            diag = T @ L.transpose(0, 2, 1)
            diag += co.block
        self._base_ab = blocks_to_banded(diag, T[1:] if jac.n_blocks > 1 else None)
        self._m = jac.dim

    def solve(self, alpha: float, g: np.ndarray) -> np.ndarray:
        """Return the step for shift ``alpha`` and residual stack ``g`` (N, m)."""
        if alpha < 0:
            raise ValueError(f"shift must be non-negative, got {alpha}")
        g = np.asarray(g, dtype=float)
        if g.shape != (self.jac.n_blocks, self._m):
            raise ValueError(f"expected residual shape {(self.jac.n_blocks, self._m)}, "
                             f"got {g.shape}")
        m = self._m
        ab = self._base_ab.copy()
        if alpha:
            abv = ab.reshape(2 * m, self.jac.n_blocks, m)
            for q in range(m):
                abv[q, :, :m - q] += alpha * np.diagonal(self.cm.block, offset=-q)
        chol = _banded_cholesky(ab, m)
        lam = _banded_solve(chol, g.reshape(-1)).reshape(g.shape)
        return -self.co.apply(self.jac.rmatvec(lam))


def solve_shifted_gram(jac: BlockBidiagonalMatrix, co,
                       cm: BlockCovariance, alpha: float, g: np.ndarray) -> np.ndarray:
    """One-shot form of :class:`ShiftedGramSolver` for a single shift."""
    return ShiftedGramSolver(jac, co, cm).solve(alpha, g)
