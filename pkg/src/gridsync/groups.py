"""Group arithmetic for Z2, U(1) and O(m).

Z2 elements are signs, U(1) elements are angles in ``[0, 2*pi)`` and O(m)
elements are orthogonal matrices.  "Raw" (not necessarily group-valued)
quantities produced by averaging use the natural linear embedding of each
group: real scalars for Z2, complex scalars for U(1) and real matrices for
O(m).  Matrix forms (1x1, 2x2 rotations, m x m) are only materialized when a
Frobenius metric needs them.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Union

import numpy as np

TWO_PI = 2.0 * np.pi

# Orthogonality tolerances for O(m) payloads.
ORTH_EXACT_TOL = 1e-8
ORTH_REPAIR_TOL = 1e-6
# Re-orthonormalize long O(m) products every this many factors.
REORTH_EVERY = 32


class Variant(str, Enum):
    Z2 = "z2"
    U1 = "u1"
    ORTH = "orth"


def polar(M: np.ndarray) -> np.ndarray:
    """Frobenius-nearest orthogonal matrix ``U V^T`` (works on stacks)."""
    U, _, Vt = np.linalg.svd(M)
    return U @ Vt


def rotation(angle) -> np.ndarray:
    a = np.asarray(angle, dtype=float)
    c, s = np.cos(a), np.sin(a)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


def _orth_defect(Q: np.ndarray) -> float:
    m = Q.shape[-1]
    return float(np.linalg.norm(Q.T @ Q - np.eye(m)))


@dataclass(frozen=True, eq=False)
class GroupElement:
    variant: Variant
    value: Union[int, float, np.ndarray]

    def __post_init__(self):
        v = Variant(self.variant)
        object.__setattr__(self, "variant", v)
        if v is Variant.Z2:
            if self.value not in (1, -1):
                raise ValueError(f"Z2 payload must be +1 or -1, got {self.value!r}")
            object.__setattr__(self, "value", int(self.value))
        elif v is Variant.U1:
            a = float(self.value)
            if not np.isfinite(a):
                raise ValueError("U1 angle must be finite")
            object.__setattr__(self, "value", a % TWO_PI)
        else:
            Q = np.array(self.value, dtype=float)
            if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or Q.shape[0] < 1:
                raise ValueError(f"O(m) payload must be square, got shape {Q.shape}")
            defect = _orth_defect(Q)
            if defect > ORTH_REPAIR_TOL:
                raise ValueError(f"matrix is not orthogonal (|Q^T Q - I|_F = {defect:.3g})")
            if defect > ORTH_EXACT_TOL:
                Q = polar(Q)
            Q.setflags(write=False)
            object.__setattr__(self, "value", Q)

    @property
    def m(self) -> int:
        if self.variant is Variant.Z2:
            return 1
        if self.variant is Variant.U1:
            return 2
        return self.value.shape[0]

    def matrix(self) -> np.ndarray:
        return as_matrix(self)

    def __eq__(self, other):
        if not isinstance(other, GroupElement) or other.variant is not self.variant:
            return NotImplemented
        if self.variant is Variant.ORTH:
            return self.value.shape == other.value.shape and np.array_equal(self.value, other.value)
        return self.value == other.value

    def __repr__(self):
        if self.variant is Variant.ORTH:
            return f"GroupElement(orth, m={self.m})"
        return f"GroupElement({self.variant.value}, {self.value!r})"


def z2(sign: int) -> GroupElement:
    return GroupElement(Variant.Z2, sign)


def u1(angle: float) -> GroupElement:
    return GroupElement(Variant.U1, angle)


def orth(Q) -> GroupElement:
    return GroupElement(Variant.ORTH, Q)


def identity(variant: Variant | str, m: int = 1) -> GroupElement:
    variant = Variant(variant)
    if variant is Variant.Z2:
        return z2(1)
    if variant is Variant.U1:
        return u1(0.0)
    return orth(np.eye(m))


def _check_same(a: GroupElement, b: GroupElement) -> None:
    if a.variant is not b.variant:
        raise ValueError(f"variant mismatch: {a.variant.value} vs {b.variant.value}")
    if a.variant is Variant.ORTH and a.m != b.m:
        raise ValueError(f"dimension mismatch: O({a.m}) vs O({b.m})")


def compose(a: GroupElement, b: GroupElement) -> GroupElement:
    _check_same(a, b)
    if a.variant is Variant.Z2:
        return z2(a.value * b.value)
    if a.variant is Variant.U1:
        return u1(a.value + b.value)
    return orth(polar(a.value @ b.value))


def invert(a: GroupElement) -> GroupElement:
    if a.variant is Variant.Z2:
        return a
    if a.variant is Variant.U1:
        return u1(-a.value)
    return orth(a.value.T)


def as_matrix(a) -> np.ndarray:
    """Matrix form of a group element or of a raw value (scalar / complex / matrix)."""
    if isinstance(a, GroupElement):
        if a.variant is Variant.Z2:
            return np.array([[float(a.value)]])
        if a.variant is Variant.U1:
            return rotation(a.value)
        return np.array(a.value)
    x = np.asarray(a)
    if x.ndim == 0:
        if np.iscomplexobj(x):
            z = complex(x)
            return np.array([[z.real, -z.imag], [z.imag, z.real]])
        return np.array([[float(x)]])
    return x.astype(float)


def haar_array(variant: Variant | str, m: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """``size`` i.i.d. Haar payloads as a numpy array (signs, angles or matrices)."""
    variant = Variant(variant)
    if variant is Variant.Z2:
        return (2 * rng.integers(0, 2, size=size) - 1).astype(np.int8)
    if variant is Variant.U1:
        return rng.uniform(0.0, TWO_PI, size=size)
    if m < 1:
        raise ValueError(f"O(m) requires m >= 1, got {m}")
    G = rng.standard_normal((size, m, m))
    Q, R = np.linalg.qr(G)
    # sign-correct so the law is Haar rather than QR-convention dependent
    d = np.sign(np.diagonal(R, axis1=-2, axis2=-1))
    d[d == 0] = 1.0
    return Q * d[:, None, :]


def haar_sample(variant: Variant | str, m: int, rng: np.random.Generator) -> GroupElement:
    variant = Variant(variant)
    payload = haar_array(variant, m, 1, rng)[0]
    if variant is Variant.Z2:
        return z2(int(payload))
    if variant is Variant.U1:
        return u1(float(payload))
    return orth(payload)


def is_degenerate(x, tol: float = 1e-12) -> bool:
    """True when the raw value has a (near) zero singular value, so its projection is ambiguous."""
    M = as_matrix(x)
    s = np.linalg.svd(M, compute_uv=False)
    return bool(s[-1] <= tol * max(1.0, s[0]))


def project_to_group(x, variant: Variant | str) -> GroupElement:
    """Frobenius projection of a raw value onto the group.

    Z2: sign of the scalar, with 0 mapped to +1.  U1: angle of the rotation
    component (for a 2x2 matrix ``M`` this is ``atan2(M10 - M01, M00 + M11)``;
    a complex scalar gives its argument; 0 maps to angle 0).  O(m): ``U V^T``
    from the SVD, accepting whatever singular vectors LAPACK returns when a
    singular value vanishes.
    """
    variant = Variant(variant)
    if isinstance(x, GroupElement):
        if x.variant is not variant:
            raise ValueError(f"variant mismatch: {x.variant.value} vs {variant.value}")
        return x
    arr = np.asarray(x)
    if not np.all(np.isfinite(arr)):
        raise ValueError("cannot project a matrix with non-finite entries")
    if variant is Variant.Z2:
        if arr.size != 1:
            raise ValueError("Z2 projection expects a scalar or 1x1 matrix")
        v = float(np.real(arr.reshape(-1)[0]))
        return z2(-1 if v < 0 else 1)
    if variant is Variant.U1:
        if arr.size == 1:
            z = complex(arr.reshape(-1)[0])
            return u1(0.0 if z == 0 else float(np.angle(z)))
        if arr.shape != (2, 2):
            raise ValueError("U1 projection expects a complex scalar or 2x2 matrix")
        c = arr[0, 0] + arr[1, 1]
        s = arr[1, 0] - arr[0, 1]
        return u1(0.0 if c == 0 and s == 0 else float(np.arctan2(s, c)))
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"O(m) projection expects a square matrix, got shape {arr.shape}")
    return orth(polar(arr.astype(float)))


def frobenius_misalignment(a: GroupElement, t, b: GroupElement) -> float:
    """``|a t b^{-1} - I|_F^2`` with ``t`` a group element or a raw value."""
    A = as_matrix(a)
    T = as_matrix(t)
    B = as_matrix(b)
    if not (A.shape == T.shape == B.shape):
        raise ValueError(f"dimension mismatch: {A.shape}, {T.shape}, {B.shape}")
    R = A @ T @ B.T - np.eye(A.shape[0])
    return float(np.sum(R * R))


# -- array helpers used by the estimators ------------------------------------

def raw_misalignment(variant: Variant, a, t, b) -> np.ndarray:
    """Vectorized ``|a t b^{-1} - I|_F^2`` over leading batch axes.

    ``a``, ``b`` are group payload arrays (signs, angles, matrices) and ``t``
    raw values in the linear embedding of the group.
    """
    variant = Variant(variant)
    if variant is Variant.Z2:
        return (np.asarray(a) * np.asarray(t) * np.asarray(b) - 1.0) ** 2
    if variant is Variant.U1:
        z = np.exp(1j * np.asarray(a)) * np.asarray(t) * np.exp(-1j * np.asarray(b))
        return 2.0 * np.abs(z - 1.0) ** 2
    A = np.asarray(a)
    R = A @ np.asarray(t) @ np.swapaxes(np.asarray(b), -1, -2)
    R = R - np.eye(A.shape[-1])
    return np.sum(R * R, axis=(-2, -1))


def aligned(variant: Variant, a, t, b) -> np.ndarray:
    """``a t b^{-1}`` in the raw embedding (vectorized)."""
    variant = Variant(variant)
    if variant is Variant.Z2:
        return np.asarray(a) * np.asarray(t) * np.asarray(b)
    if variant is Variant.U1:
        return np.exp(1j * np.asarray(a)) * np.asarray(t) * np.exp(-1j * np.asarray(b))
    return np.asarray(a) @ np.asarray(t) @ np.swapaxes(np.asarray(b), -1, -2)


def embed(variant: Variant, payload) -> np.ndarray:
    """Group payloads to the raw linear embedding (float signs, unit complex, matrices)."""
    variant = Variant(variant)
    if variant is Variant.Z2:
        return np.asarray(payload, dtype=float)
    if variant is Variant.U1:
        return np.exp(1j * np.asarray(payload))
    return np.asarray(payload, dtype=float)


def project_raw_array(variant: Variant, t) -> np.ndarray:
    """Vectorized projection of raw values back to group payloads."""
    variant = Variant(variant)
    t = np.asarray(t)
    if variant is Variant.Z2:
        return np.where(np.real(t) < 0, -1, 1).astype(np.int8)
    if variant is Variant.U1:
        return np.where(t == 0, 0.0, np.angle(t)) % TWO_PI
    return polar(t)
