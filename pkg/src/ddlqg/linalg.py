"""Small linear-algebra helpers shared by the model-based and data-driven code.

All pseudo-inverses go through the same truncation rule: singular values at
or below ``RCOND * sigma_max * max(shape)`` are treated as zero.
"""

import numpy as np

from .errors import IllPosedCostError, InsufficientDataError, ShapeError, ValidationError

RCOND = 1e-10
PSD_CLAMP = 1e-10
PD_FLOOR = 1e-12


def as_matrix(value, name, shape=None):
    """Coerce scalars, vectors and nested lists to a 2-D float array."""
    arr = np.atleast_2d(np.asarray(value, dtype=float))
    if arr.ndim != 2:
        raise ShapeError(name, f"expected a matrix, got array with ndim={arr.ndim}")
    if shape is not None and arr.shape != tuple(shape):
        raise ShapeError(name, f"expected shape {tuple(shape)}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name}: contains non-finite entries")
    return arr


def truncation_threshold(s, shape):
    if len(s) == 0:
        return 0.0
    return RCOND * s[0] * max(shape)


def pinv(A):
    """Truncated-spectrum Moore-Penrose pseudo-inverse.

    Returns:
        (A_pinv, singular_values) with singular values in descending order.
    """
    A = np.asarray(A, dtype=float)
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    keep = s > truncation_threshold(s, A.shape)
    inv_s = np.zeros_like(s)
    inv_s[keep] = 1.0 / s[keep]
    return (Vt.T * inv_s) @ U.T, s


def right_solve(Y, Z, what="data matrix"):
    """Compute ``Y @ pinv(Z)`` for a wide ``Z`` that must have full row rank.

    The pseudo-inverse is never formed explicitly, which matters when ``Z``
    has many columns.

    Returns:
        (Y Z^+, sigma_min(Z))

    Raises:
        InsufficientDataError: when ``Z`` has fewer columns than rows or its
            smallest singular value falls below the truncation threshold.
    """
    Z = np.asarray(Z, dtype=float)
    r, N = Z.shape
    if N < r:
        raise InsufficientDataError(
            f"{what} has {r} rows but only {N} columns; need N >= {r} for full row rank",
            sigma_min=0.0, required_N=r)
    U, s, Vt = np.linalg.svd(Z, full_matrices=False)
    if s[-1] <= truncation_threshold(s, Z.shape):
        raise InsufficientDataError(
            f"{what} is rank deficient (sigma_min={s[-1]:.3e}); "
            f"collect more (or more exciting) trajectories, N >= {r} required",
            sigma_min=float(s[-1]), required_N=r)
    return ((Y @ Vt.T) / s) @ U.T, float(s[-1])


def symmetrize(S):
    return 0.5 * (S + S.T)


def check_psd(S, name, tol=PSD_CLAMP):
    if S.shape[0] != S.shape[1]:
        raise ShapeError(name, f"must be square, got {S.shape}")
    if not np.allclose(S, S.T, atol=tol, rtol=0.0):
        raise ValidationError(f"{name}: not symmetric")
    lam = np.linalg.eigvalsh(symmetrize(S))
    if lam[0] < -tol:
        raise ValidationError(f"{name}: not positive semidefinite (min eigenvalue {lam[0]:.3e})")


def check_pd(S, name, floor=PD_FLOOR):
    if S.shape[0] != S.shape[1]:
        raise ShapeError(name, f"must be square, got {S.shape}")
    if not np.allclose(S, S.T, atol=PSD_CLAMP, rtol=0.0):
        raise ValidationError(f"{name}: not symmetric")
    lam = np.linalg.eigvalsh(symmetrize(S))
    if lam[0] <= floor:
        raise ValidationError(f"{name}: not positive definite (min eigenvalue {lam[0]:.3e})")


def psd_sqrt(S, name="covariance"):
    """Symmetric square root of a PSD matrix.

    Eigenvalues in ``[-1e-10, 0)`` are roundoff and clamped to zero; anything
    more negative is rejected.
    """
    lam, V = np.linalg.eigh(symmetrize(S))
    if lam[0] < -PSD_CLAMP:
        raise ValidationError(f"{name}: not positive semidefinite (min eigenvalue {lam[0]:.3e})")
    lam = np.clip(lam, 0.0, None)
    return (V * np.sqrt(lam)) @ V.T


def inv_sqrt_pd(P, name="P"):
    """Symmetric inverse square root of a positive definite matrix.

    Raises:
        IllPosedCostError: if the smallest eigenvalue is below 1e-12 times
            the largest.
    """
    lam, V = np.linalg.eigh(symmetrize(P))
    if lam[-1] <= 0 or lam[0] < PD_FLOOR * lam[-1]:
        raise IllPosedCostError(
            f"{name} is not positive definite: eigenvalues in [{lam[0]:.3e}, {lam[-1]:.3e}]")
    return (V / np.sqrt(lam)) @ V.T
