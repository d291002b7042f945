"""Small dense nonnegative-matrix toolkit.

Matrices are plain 2-D ``numpy`` float arrays. Everything here is a pure
function of its inputs.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import SingularMatrixError

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100_000
PIVOT_TOL = 1e-14
# unshifted iterations tried on primitive input before switching to a shift
PRIMITIVE_BUDGET = 2000
# shifted iterations spent looking for Perron vectors of reducible input
REDUCIBLE_VECTOR_BUDGET = 5000


@dataclass(frozen=True)
class PerronData:
    """Dominant eigenvalue of a nonnegative matrix plus its Perron vectors.

    ``right`` is L1-normalised; ``left`` is scaled so that ``left @ right == 1``.
    Both are ``None`` when they could not be obtained (nilpotent input, or the
    power iteration did not converge and the value came from the Gelfand
    fallback).
    """

    value: float
    right: Optional[np.ndarray]
    left: Optional[np.ndarray]
    converged: bool
    iterations: int


def _square(B, name="matrix"):
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ValueError(f"{name} must be square, got shape {B.shape}")
    return B


def l1_norm_vector(x) -> float:
    return float(np.abs(np.asarray(x, dtype=float)).sum())


def l1_norm_matrix(B) -> float:
    """Induced L1 norm: the maximum absolute column sum."""
    B = np.asarray(B, dtype=float)
    if B.size == 0:
        return 0.0
    return float(np.abs(B).sum(axis=0).max())


def frobenius_bounds(B) -> tuple[float, float]:
    """Return (min, max) absolute column sums, which bracket rho(B) for B >= 0."""
    B = _square(B)
    sums = np.abs(B).sum(axis=0)
    return float(sums.min()), float(sums.max())


def _bool_matmul(X, Y):
    return (X.astype(np.int64) @ Y.astype(np.int64)) > 0


def _bool_power(P, k):
    result = np.eye(P.shape[0], dtype=bool)
    base = P.copy()
    while k > 0:
        if k & 1:
            result = _bool_matmul(result, base)
        k >>= 1
        if k:
            base = _bool_matmul(base, base)
    return result


def is_irreducible(B) -> bool:
    """True iff (I + sign(B))^(m-1) is entrywise positive."""
    B = _square(B)
    m = B.shape[0]
    pattern = (B != 0) | np.eye(m, dtype=bool)
    return bool(_bool_power(pattern, m - 1).all())


def is_primitive(B) -> bool:
    """True iff sign(B)^((m-1)^2 + 2) is entrywise positive."""
    B = _square(B)
    m = B.shape[0]
    return bool(_bool_power(B != 0, (m - 1) ** 2 + 2).all())


def _is_nilpotent(B):
    m = B.shape[0]
    return not _bool_power(B != 0, m).any()


def _log_norm_power(B, t):
    """log ||B^t||_1 for t a power of two, computed by rescaled squaring."""
    log_scale = 0.0
    M = B.copy()
    steps = int(round(math.log2(t)))
    for _ in range(steps):
        c = l1_norm_matrix(M)
        if c == 0.0:
            return -math.inf
        M = M / c
        log_scale = 2.0 * (log_scale + math.log(c))
        M = M @ M
    c = l1_norm_matrix(M)
    if c == 0.0:
        return -math.inf
    return log_scale + math.log(c)


def gelfand_radius(B, ts=(64, 128, 256)) -> tuple[float, float]:
    """Estimate rho(B) from ||B^t||^(1/t) with Richardson extrapolation in 1/t.

    Returns ``(estimate, spread)`` where ``spread`` is the disagreement between
    the two extrapolations built from consecutive ``t`` pairs. Accuracy is
    modest (roughly 1e-4 relative), so this is used as a shift estimate and a
    last-resort fallback, never as the primary answer.
    """
    B = _square(B)
    logs = [_log_norm_power(B, t) / t for t in ts]
    if any(math.isinf(v) for v in logs):
        return 0.0, 0.0
    # log g(t) ~ log rho + c/t; consecutive t double so 2*g(2t) - g(t) cancels c.
    extrap = [2.0 * logs[i + 1] - logs[i] for i in range(len(logs) - 1)]
    est = math.exp(extrap[-1])
    spread = abs(math.exp(extrap[-1]) - math.exp(extrap[0])) if len(extrap) > 1 else 0.0
    return est, spread


def _power_iterate(M, shift, tol, max_iter):
    n = M.shape[0]
    x = np.full(n, 1.0 / n)
    # below this the step size is rounding noise and its ratio is meaningless
    noise_floor = 100.0 * n * np.finfo(float).eps
    prev_delta = None
    for it in range(1, max_iter + 1):
        y = M @ x
        s = y.sum()
        if s <= 0.0:
            return 0.0, None, True, it
        y /= s
        delta = np.abs(y - x).sum()
        x = y
        if delta <= noise_floor:
            return float((M @ x).sum() - shift), x, True, it
        if prev_delta is not None and delta <= tol:
            q = delta / prev_delta
            # remaining error of a geometric tail
            if q < 1.0 and delta * q / (1.0 - q) <= tol:
                value = float((M @ x).sum() - shift)
                return value, x, True, it
        prev_delta = delta
    value = float((M @ x).sum() - shift)
    return value, x, False, max_iter


def _irreducible_radius(B, tol, max_iter):
    n = B.shape[0]
    if n == 1:
        v = np.ones(1)
        return PerronData(float(B[0, 0]), v, v.copy(), True, 0)
    I = np.eye(n)
    gelfand = None
    attempts = []
    if is_primitive(B):
        attempts.append((0.0, min(max_iter, PRIMITIVE_BUDGET)))
    attempts.append((None, max_iter))
    iterations = 0
    for shift, budget in attempts:
        if shift is None:
            gelfand = gelfand_radius(B)[0]
            shift = gelfand
        value, right, ok_r, it_r = _power_iterate(B + shift * I, shift, tol, budget)
        _, left, ok_l, it_l = _power_iterate(B.T + shift * I, shift, tol, budget)
        iterations += max(it_r, it_l)
        if ok_r and ok_l:
            break

    lo, hi = frobenius_bounds(B)
    if not ok_r or not (lo - 10 * tol <= value <= hi + 10 * tol):
        est = gelfand if gelfand is not None else gelfand_radius(B)[0]
        return PerronData(float(min(max(est, lo), hi)), None, None, False, iterations)

    if left is not None and ok_l:
        overlap = float(left @ right)
        if overlap > 1e-14:
            left = left / overlap
            # two-sided quotient: error is quadratic in the vector errors
            value = float(left @ B @ right)
        else:
            left = None
    else:
        left = None
    return PerronData(max(value, 0.0), right, left, True, iterations)


def spectral_radius(B, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> PerronData:
    """Spectral radius and Perron vectors of a nonnegative square matrix.

    Reducible input is split into strongly connected components and rho(B) is
    the largest radius among the irreducible diagonal blocks. On each block,
    primitive matrices first try plain L1-normalised power iteration. For
    other blocks, or when that converges too slowly (a subdominant eigenvalue
    near ``-rho``), the iteration runs on ``B + c*I`` with ``c`` a Gelfand
    estimate of rho; for nonnegative B this shift makes rho + c strictly
    dominant even when B is periodic. If the iteration still fails to
    converge the value falls back to the Gelfand extrapolation and
    ``converged`` is False.

    Perron vectors of reducible input need not be unique or positive; they
    are returned when a bounded shifted iteration settles, otherwise None.
    """
    B = _square(B)
    if tol <= 0:
        raise ValueError("tol must be positive")
    if (B < 0).any():
        raise ValueError("spectral_radius requires a nonnegative matrix")
    n = B.shape[0]
    if not B.any() or _is_nilpotent(B):
        return PerronData(0.0, None, None, True, 0)

    ncomp, labels = connected_components(csr_matrix(B != 0), directed=True, connection="strong")
    if ncomp == 1:
        return _irreducible_radius(B, tol, max_iter)

    value, converged, iterations = 0.0, True, 0
    for c in range(ncomp):
        idx = np.flatnonzero(labels == c)
        block = B[np.ix_(idx, idx)]
        if not block.any():
            continue
        part = _irreducible_radius(block, tol, max_iter)
        iterations += part.iterations
        converged &= part.converged
        value = max(value, part.value)

    shift = value
    budget = min(max_iter, REDUCIBLE_VECTOR_BUDGET)
    I = np.eye(n)
    _, right, ok_r, it_r = _power_iterate(B + shift * I, shift, tol, budget)
    _, left, ok_l, it_l = _power_iterate(B.T + shift * I, shift, tol, budget)
    iterations += max(it_r, it_l)
    right = right if ok_r else None
    left = left if ok_l and right is not None else None
    if left is not None:
        overlap = float(left @ right)
        left = left / overlap if overlap > 1e-14 else None
    return PerronData(value, right, left, converged, iterations)


def solve_linear(M, B) -> np.ndarray:
    """Solve ``M @ X = B`` by LU with partial pivoting.

    Raises SingularMatrixError when a pivot falls below 1e-14 in magnitude.
    """
    M = _square(M, "coefficient matrix")
    B = np.asarray(B, dtype=float)
    if B.shape[0] != M.shape[0]:
        raise ValueError(f"right-hand side has {B.shape[0]} rows, expected {M.shape[0]}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(M, check_finite=True)
    if np.abs(np.diag(lu)).min() < PIVOT_TOL:
        raise SingularMatrixError("matrix is singular to working precision")
    return scipy.linalg.lu_solve((lu, piv), B)
