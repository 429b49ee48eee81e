"""Quaternion algebra on plain numpy arrays.

A quaternion ``q = w + x*i + y*j + z*k`` is stored as a length-4 array
``(w, x, y, z)``; arrays of quaternions stack this along the last axis, so
every function here broadcasts over leading axes.  Vectors in R^3 are
identified with pure imaginary quaternions, ``(x, y, z) -> (0, x, y, z)``.

Vectorization convention (used by every matrix assembly in the package):
``block_embed(q)`` is the real 4x4 matrix of *left* multiplication by ``q``,
acting on the column ``(w, x, y, z)^T``, i.e.
``block_embed(q) @ vec(p) == vec(q * p)``.  Its first column is
``(w, x, y, z)^T`` and it is a ring homomorphism,
``block_embed(q * p) == block_embed(q) @ block_embed(p)``.
"""

import numpy as np

from .errors import ZeroQuaternion

ONE = np.array([1.0, 0.0, 0.0, 0.0])
I = np.array([0.0, 1.0, 0.0, 0.0])
J = np.array([0.0, 0.0, 1.0, 0.0])
K = np.array([0.0, 0.0, 0.0, 1.0])


def quat(w=0.0, x=0.0, y=0.0, z=0.0):
    """Build a single quaternion array from components."""
    return np.array([w, x, y, z], dtype=float)


def from_vector(v):
    """Embed 3-vectors as pure imaginary quaternions (leading axes kept)."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (4,))
    out[..., 1:] = v
    return out


def to_vector(q):
    """Imaginary part of a quaternion as a 3-vector."""
    return np.asarray(q, dtype=float)[..., 1:]


def qmul(a, b):
    """Hamilton product of two quaternion arrays (broadcasting).

    Follows ``i*i = j*j = k*k = -1`` and ``i*j = k``, ``j*k = i``,
    ``k*i = j``; the product is non-commutative.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def qconj(q):
    """Quaternion conjugate (negated imaginary part)."""
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def qnorm(q):
    """Euclidean norm |q|."""
    return np.linalg.norm(np.asarray(q, dtype=float), axis=-1)


def qinv(q):
    """Multiplicative inverse, conj(q) / |q|^2."""
    q = np.asarray(q, dtype=float)
    n2 = np.sum(q * q, axis=-1, keepdims=True)
    if np.any(n2 == 0.0):
        raise ZeroQuaternion("cannot invert a zero quaternion")
    return qconj(q) / n2


def rotate_vector(q, v):
    """Scale-rotate a 3-vector by a quaternion.

    Applies ``R_q(v) = conj(q) * v * q`` and returns the imaginary part;
    lengths scale by ``|q|^2``.  With this sandwich order composition
    satisfies ``R_{q1*q2} = R_{q2} o R_{q1}``, and a unit
    ``q = cos(t/2) + sin(t/2)*u`` turns vectors by the angle ``t``
    *clockwise* about the axis ``u`` (right-hand rule about ``-u``).
    """
    return to_vector(qmul(qmul(qconj(q), from_vector(v)), q))


def block_embed(q):
    """Real 4x4 block matrix of left multiplication by ``q``.

    Returns an array of shape ``q.shape[:-1] + (4, 4)`` satisfying
    ``block_embed(q) @ vec(p) = vec(q * p)`` under the (w, x, y, z)
    column convention documented in the module docstring.
    """
    q = np.asarray(q, dtype=float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    rows = [
        np.stack([w, -x, -y, -z], axis=-1),
        np.stack([x, w, -z, y], axis=-1),
        np.stack([y, z, w, -x], axis=-1),
        np.stack([z, -y, x, w], axis=-1),
    ]
    return np.stack(rows, axis=-2)


def axis_angle_decompose(q):
    """Split ``q`` into (scale, angle, unit axis).

    The factorization is ``q = sqrt(scale) * (cos(angle/2) +
    sin(angle/2) * axis)`` with ``scale = |q|^2`` and
    ``angle = 2*arccos(w/|q|) in [0, 2*pi]``.  When the imaginary part
    vanishes the axis is fixed to ``(0, 0, 1)`` for determinism.

    Raises
    ------
    ZeroQuaternion
        If ``q == 0``.
    """
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n == 0.0:
        raise ZeroQuaternion("cannot decompose the zero quaternion")
    unit = q / n
    angle = 2.0 * np.arccos(np.clip(unit[0], -1.0, 1.0))
    im = unit[1:]
    im_norm = np.linalg.norm(im)
    if im_norm < 1e-15:
        axis = np.array([0.0, 0.0, 1.0])
    else:
        axis = im / im_norm
    return n * n, angle, axis
