"""Finite-difference solver for steady-state saturated groundwater flow.

Discretizes div(K grad h) = 0 on a cell-centered grid with unit spacing and
a 5-point stencil. Fixed (Dirichlet) cells are eliminated from the unknowns,
which leaves a symmetric positive-definite system over the free cells that
is solved by Jacobi-preconditioned conjugate gradients.

All entry points accept either typed fields or raw 2-D numpy arrays.
"""

import logging
import time
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import sparse

from app.errors import ConvergenceError, DegenerateSystemError, DomainError, SizeLimitError
from app.models.grid import (
    CellMask,
    ConductivityField,
    HeadField,
    ScenarioSpec,
    build_fixed_mask,
    fixed_head_values,
)

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE = 1e-10
DENSE_CELL_LIMIT = 4096

FieldLike = Union[ConductivityField, CellMask, HeadField, np.ndarray]

# (row offset, col offset) of the four face neighbours.
_NEIGHBOURS = ((-1, 0), (1, 0), (0, -1), (0, 1))


def _values(field: FieldLike) -> np.ndarray:
    if isinstance(field, CellMask):
        return np.asarray(field.flags, dtype=bool)
    if isinstance(field, (ConductivityField, HeadField)):
        return np.asarray(field.values, dtype=np.float64)
    return np.asarray(field)


def transmissivity(k_i, k_j):
    """Face coefficient between two cells: the harmonic mean 2 Ki Kj / (Ki + Kj).

    Raises:
        DomainError: If either conductivity is not strictly positive
    """
    k_i = np.asarray(k_i, dtype=np.float64)
    k_j = np.asarray(k_j, dtype=np.float64)
    if np.any(k_i <= 0) or np.any(k_j <= 0):
        raise DomainError("conductivity must be strictly positive")
    result = 2.0 * k_i * k_j / (k_i + k_j)
    return float(result) if result.ndim == 0 else result


@dataclass(frozen=True)
class LinearSystem:
    """Stencil system restricted to the free cells."""

    matrix: sparse.csr_matrix
    rhs: np.ndarray
    free_index: np.ndarray  # flat cell index of each unknown
    unknown_index: np.ndarray  # per cell: unknown number, -1 for fixed cells
    shape: tuple[int, int]

    @property
    def n_free(self) -> int:
        return int(self.free_index.size)


def _shifted(rows: int, cols: int, dr: int, dc: int):
    """Slices selecting (cell, neighbour) pairs for one stencil direction."""
    src_r = slice(max(0, -dr), rows - max(0, dr))
    src_c = slice(max(0, -dc), cols - max(0, dc))
    dst_r = slice(max(0, dr), rows - max(0, -dr))
    dst_c = slice(max(0, dc), cols - max(0, -dc))
    return (src_r, src_c), (dst_r, dst_c)


def assemble_system(
    K: FieldLike, mask: FieldLike, fixed_heads: FieldLike
) -> LinearSystem:
    """Assemble the 5-point system over the free cells.

    For every free cell i: sum_j T_ij (h_j - h_i) = 0, where neighbours j that
    are free go into the matrix and fixed neighbours contribute T_ij h_j to the
    right-hand side. Faces on the grid edge carry no flow.

    Args:
        K: Conductivity per cell
        mask: True at fixed cells
        fixed_heads: Head values, read at fixed cells only

    Returns:
        LinearSystem with a symmetric positive-definite matrix

    Raises:
        DegenerateSystemError: If every cell is fixed
        DomainError: If a conductivity is not strictly positive
        ValueError: If shapes disagree or a fixed cell has no finite head
    """
    k = _values(K).astype(np.float64)
    fixed = _values(mask).astype(bool)
    heads = _values(fixed_heads).astype(np.float64)
    if not (k.shape == fixed.shape == heads.shape) or k.ndim != 2:
        raise ValueError(
            f"K {k.shape}, mask {fixed.shape} and heads {heads.shape} must share one 2-D grid"
        )
    if not np.all(np.isfinite(heads[fixed])):
        raise ValueError("every fixed cell needs a finite head value")

    rows, cols = k.shape
    free = ~fixed
    n_free = int(free.sum())
    if n_free == 0:
        raise DegenerateSystemError("no free cells: every cell has a fixed head")

    unknown_index = np.full(k.shape, -1, dtype=np.int64)
    unknown_index[free] = np.arange(n_free)

    diagonal = np.zeros(n_free)
    rhs = np.zeros(n_free)
    off_rows: list[np.ndarray] = []
    off_cols: list[np.ndarray] = []
    off_vals: list[np.ndarray] = []

    for dr, dc in _NEIGHBOURS:
        src, dst = _shifted(rows, cols, dr, dc)
        t = transmissivity(k[src], k[dst])
        src_free = free[src]
        dst_free = free[dst]
        src_idx = unknown_index[src]
        dst_idx = unknown_index[dst]

        np.add.at(diagonal, src_idx[src_free], t[src_free])

        coupled = src_free & dst_free
        off_rows.append(src_idx[coupled])
        off_cols.append(dst_idx[coupled])
        off_vals.append(-t[coupled])

        boundary = src_free & ~dst_free
        np.add.at(rhs, src_idx[boundary], t[boundary] * heads[dst][boundary])

    diag_idx = np.arange(n_free)
    matrix = sparse.coo_matrix(
        (
            np.concatenate([diagonal] + off_vals),
            (np.concatenate([diag_idx] + off_rows), np.concatenate([diag_idx] + off_cols)),
        ),
        shape=(n_free, n_free),
    ).tocsr()

    return LinearSystem(
        matrix=matrix,
        rhs=rhs,
        free_index=np.flatnonzero(free.ravel()),
        unknown_index=unknown_index,
        shape=k.shape,
    )


def conjugate_gradient(
    matrix: sparse.spmatrix,
    rhs: np.ndarray,
    tol: float = DEFAULT_TOLERANCE,
    max_iter: Optional[int] = None,
) -> tuple[np.ndarray, int, float]:
    """Jacobi-preconditioned conjugate gradients.

    Args:
        matrix: Symmetric positive-definite operator
        rhs: Right-hand side
        tol: Target relative residual ||r|| / ||rhs||
        max_iter: Iteration cap (default 10 * n)

    Returns:
        Tuple of (solution, iterations, final relative residual)

    Raises:
        ConvergenceError: If the cap is reached before the tolerance
    """
    n = rhs.size
    if max_iter is None:
        max_iter = 10 * n
    x = np.zeros(n)
    rhs_norm = float(np.linalg.norm(rhs))
    if rhs_norm == 0.0:
        return x, 0, 0.0

    inv_diag = 1.0 / matrix.diagonal()
    r = rhs.copy()
    z = inv_diag * r
    d = z.copy()
    rz = float(r @ z)
    residual = 1.0
    k = 0
    while residual > tol and k < max_iter:
        ad = matrix @ d
        alpha = rz / float(d @ ad)
        x += alpha * d
        r -= alpha * ad
        residual = float(np.linalg.norm(r)) / rhs_norm
        z = inv_diag * r
        rz_next = float(r @ z)
        d = z + (rz_next / rz) * d
        rz = rz_next
        k += 1

    if residual > tol:
        raise ConvergenceError(k, residual)
    return x, k, residual


def _scatter(system: LinearSystem, solution: np.ndarray, mask: np.ndarray, heads: np.ndarray):
    result = np.where(mask, heads, 0.0).astype(np.float64)
    result.ravel()[system.free_index] = solution
    return result


def solve_heads(
    K: FieldLike,
    mask: FieldLike,
    fixed_heads: FieldLike,
    tol: float = DEFAULT_TOLERANCE,
) -> np.ndarray:
    """Solve for the head at every free cell given arbitrary fixed cells.

    Returns:
        Head array of the grid's shape; fixed cells hold their imposed values
    """
    fixed = _values(mask).astype(bool)
    heads = _values(fixed_heads).astype(np.float64)
    system = assemble_system(K, fixed, heads)

    start = time.perf_counter()
    solution, iterations, residual = conjugate_gradient(system.matrix, system.rhs, tol)
    elapsed = time.perf_counter() - start
    logger.debug(
        f"CG solved {system.n_free} unknowns in {iterations} iterations "
        f"(residual {residual:.2e}, {elapsed * 1e3:.1f} ms)"
    )
    return _scatter(system, solution, fixed, heads)


def solve_steady_state(
    K: FieldLike, scenario: ScenarioSpec, tol: float = DEFAULT_TOLERANCE
) -> HeadField:
    """Solve the Dirichlet problem defined by a scenario.

    Args:
        K: Conductivity per cell
        scenario: Boundary head and wells
        tol: Relative residual tolerance

    Returns:
        HeadField with fixed cells at their imposed values

    Raises:
        ConvergenceError: If CG exceeds 10 * n_free iterations
    """
    mask = build_fixed_mask(scenario)
    heads = solve_heads(K, mask, fixed_head_values(scenario), tol)
    return HeadField(grid=scenario.grid, values=heads)


def dense_solve_heads(K: FieldLike, mask: FieldLike, fixed_heads: FieldLike) -> np.ndarray:
    """Solve the same system by dense factorization (test oracle).

    Raises:
        SizeLimitError: If the grid has more than 4096 cells
    """
    fixed = _values(mask).astype(bool)
    if fixed.size > DENSE_CELL_LIMIT:
        raise SizeLimitError(
            f"dense solve limited to {DENSE_CELL_LIMIT} cells, grid has {fixed.size}"
        )
    heads = _values(fixed_heads).astype(np.float64)
    system = assemble_system(K, fixed, heads)
    solution = np.linalg.solve(system.matrix.toarray(), system.rhs)
    return _scatter(system, solution, fixed, heads)


def dense_reference_solve(K: FieldLike, scenario: ScenarioSpec) -> HeadField:
    """Dense-factorization counterpart of solve_steady_state."""
    mask = build_fixed_mask(scenario)
    heads = dense_solve_heads(K, mask, fixed_head_values(scenario))
    return HeadField(grid=scenario.grid, values=heads)


def flux_imbalance(K: FieldLike, mask: FieldLike, heads: FieldLike) -> np.ndarray:
    """Net inflow sum_j T_ij (h_j - h_i) at every free cell (0 at fixed cells)."""
    k = _values(K).astype(np.float64)
    fixed = _values(mask).astype(bool)
    h = _values(heads).astype(np.float64)
    rows, cols = k.shape
    balance = np.zeros(k.shape)
    for dr, dc in _NEIGHBOURS:
        src, dst = _shifted(rows, cols, dr, dc)
        balance[src] += transmissivity(k[src], k[dst]) * (h[dst] - h[src])
    balance[fixed] = 0.0
    return balance
