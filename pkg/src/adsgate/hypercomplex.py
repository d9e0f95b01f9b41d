"""Quaternion and other 4-component hypercomplex algebras.

Quaternions are stored as float64 arrays whose last axis has length 4,
ordered (a, b, c, d) for a + b i + c j + d k. A colour image becomes a
"QuatImage" of shape (H, W, 4) with a pure quaternion 0 + r i + g j + b k
at every pixel.
"""

import numpy as np

HAMILTON = "hamilton"
REDUCED_BIQUATERNION = "reduced_biquaternion"
DOUBLE_COMPLEX = "double_complex"
HCA4 = "hca4"
ALGEBRAS = (HAMILTON, REDUCED_BIQUATERNION, DOUBLE_COMPLEX, HCA4)

PURE_TOL = 1e-9


class PhaseError(ValueError):
    """Raised when the phase of a zero quaternion is requested."""


def quat(a=0.0, b=0.0, c=0.0, d=0.0) -> np.ndarray:
    q = np.array([a, b, c, d], dtype=np.float64)
    if not np.all(np.isfinite(q)):
        raise ValueError("quaternion components must be finite")
    return q


def _as_quat(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q.shape[-1:] != (4,):
        raise ValueError(f"expected trailing axis of length 4, got shape {q.shape}")
    return q


def quat_add(p, q) -> np.ndarray:
    return _as_quat(p) + _as_quat(q)


def quat_conj(q) -> np.ndarray:
    q = _as_quat(q)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_norm(q):
    """Euclidean norm sqrt(a^2 + b^2 + c^2 + d^2) over the last axis."""
    q = _as_quat(q)
    return np.sqrt(np.sum(q * q, axis=-1))


def quat_scale(lam, q) -> np.ndarray:
    if not np.isfinite(lam):
        raise ValueError("scale factor must be finite")
    return float(lam) * _as_quat(q)


def hyper_mul(p, q, algebra: str = HAMILTON) -> np.ndarray:
    """Product p (x) q in one of the four algebras with three imaginary units.

    Written out component by component. `algebra_matrix` gives the same
    product in matrix form and is kept separate so that one can check the
    other.
    """
    p = _as_quat(p)
    q = _as_quat(q)
    p0, p1, p2, p3 = np.moveaxis(p, -1, 0)
    a, b, c, d = np.moveaxis(q, -1, 0)
    if algebra == HAMILTON:
        out = (
            p0 * a - p1 * b - p2 * c - p3 * d,
            p0 * b + p1 * a + p2 * d - p3 * c,
            p0 * c - p1 * d + p2 * a + p3 * b,
            p0 * d + p1 * c - p2 * b + p3 * a,
        )
    elif algebra == REDUCED_BIQUATERNION:
        out = (
            a * p0 - b * p1 + c * p2 - d * p3,
            b * p0 + a * p1 + d * p2 + c * p3,
            c * p0 - d * p1 + a * p2 - b * p3,
            d * p0 + c * p1 + b * p2 + a * p3,
        )
    elif algebra == DOUBLE_COMPLEX:
        out = (
            a * p0 + b * p1 - c * p2 - d * p3,
            b * p0 + a * p1 - d * p2 - c * p3,
            c * p0 + d * p1 + a * p2 - b * p3,
            d * p0 + c * p1 + b * p2 + a * p3,
        )
    elif algebra == HCA4:
        out = (
            a * p0 - b * p1 - c * p2 + d * p3,
            b * p0 + a * p1 - d * p2 + c * p3,
            c * p0 + d * p1 + a * p2 - b * p3,
            d * p0 - c * p1 - b * p2 + a * p3,
        )
    else:
        raise ValueError(f"unknown algebra {algebra!r}")
    return np.stack(out, axis=-1)


def algebra_matrix(y, algebra: str = HAMILTON) -> np.ndarray:
    """4x4 matrix M(y) with x (x) y = M(y) @ x.

    The Hamilton matrix reproduces the component expansion, so i (x) j = k.
    """
    a, b, c, d = _as_quat(y)
    if algebra == HAMILTON:
        rows = [[a, -b, -c, -d], [b, a, d, -c], [c, -d, a, b], [d, c, -b, a]]
    elif algebra == REDUCED_BIQUATERNION:
        rows = [[a, -b, c, -d], [b, a, d, c], [c, -d, a, -b], [d, c, b, a]]
    elif algebra == DOUBLE_COMPLEX:
        rows = [[a, b, -c, -d], [b, a, -d, -c], [c, d, a, -b], [d, c, b, a]]
    elif algebra == HCA4:
        rows = [[a, -b, -c, d], [b, a, -d, c], [c, d, a, -b], [d, -c, -b, a]]
    else:
        raise ValueError(f"unknown algebra {algebra!r}")
    return np.array(rows, dtype=np.float64)


def image_to_quat(img) -> np.ndarray:
    """(H, W, 3) image to (H, W, 4) pure-quaternion image, (r,g,b) -> (0,r,g,b)."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected an H x W x 3 image, got shape {img.shape}")
    out = np.zeros(img.shape[:2] + (4,))
    out[..., 1:] = img
    return out


def quat_to_image(qimg, tol: float = PURE_TOL) -> np.ndarray:
    qimg = _as_quat(qimg)
    if qimg.ndim != 3:
        raise ValueError(f"expected an H x W x 4 quaternion image, got shape {qimg.shape}")
    worst = np.max(np.abs(qimg[..., 0])) if qimg.size else 0.0
    if worst > tol:
        raise ValueError(f"non-pure pixel: |scalar part| = {worst:g} > {tol:g}")
    return qimg[..., 1:].copy()


def _unit(q):
    q = _as_quat(q)
    mag = quat_norm(q)
    if np.any(mag == 0):
        raise PhaseError("phase is undefined for the zero quaternion")
    return mag, q / mag[..., None]


def phase_decompose(q):
    """Magnitude and the three phase angles (phi, theta, psi).

    The angles come from the unit quaternion (a, b, c, d) = q/|q| through

        n_phi   = 2(cd + ab),  d_phi   = a^2 - b^2 + c^2 - d^2
        n_theta = 2(bd + ac),  d_theta = a^2 + b^2 - c^2 - d^2
        n_psi   = 2(bc + ad)

    phi = atan2(n_phi, d_phi), theta = atan2(n_theta, d_theta) and
    psi = arcsin(clip(n_psi, -1, 1)). These angles do not invert
    exp(i phi) exp(j theta) exp(k psi); see `phase_factorize` for angles
    that do.

    Returns
    -------
    magnitude, phi, theta, psi : arrays with the leading shape of `q`
    """
    mag, u = _unit(q)
    a, b, c, d = np.moveaxis(u, -1, 0)
    phi = np.arctan2(2 * (c * d + a * b), a * a - b * b + c * c - d * d)
    theta = np.arctan2(2 * (b * d + a * c), a * a + b * b - c * c - d * d)
    psi = np.arcsin(np.clip(2 * (b * c + a * d), -1.0, 1.0))
    return mag, phi, theta, psi


def quat_exp(axis: int, angle) -> np.ndarray:
    """exp(u angle) = cos(angle) + u sin(angle) for u = i, j, k (axis 1, 2, 3)."""
    angle = np.asarray(angle, dtype=np.float64)
    out = np.zeros(angle.shape + (4,))
    out[..., 0] = np.cos(angle)
    out[..., axis] = np.sin(angle)
    return out


def phase_compose(mag, phi, theta, psi, order: str = "ijk") -> np.ndarray:
    """|q| times the product of exp(i phi), exp(j theta), exp(k psi) in `order`."""
    angles = {"i": (1, phi), "j": (2, theta), "k": (3, psi)}
    mag = np.asarray(mag, dtype=np.float64)
    out = np.zeros(mag.shape + (4,))
    out[..., 0] = 1.0
    for name in order:
        axis, ang = angles[name]
        out = hyper_mul(out, quat_exp(axis, ang))
    return mag[..., None] * out


def phase_factorize(q):
    """Angles with q = |q| exp(i phi) exp(k psi) exp(j theta) exactly.

    This is the classical quaternion phase: half angles, the arcsin angle
    in the middle factor, and phi moved by pi when the raw angles land on
    -q instead of q. Ranges: phi in [-pi, pi], theta in [-pi/2, pi/2],
    psi in [-pi/4, pi/4].
    """
    mag, u = _unit(q)
    a, b, c, d = np.moveaxis(u, -1, 0)
    phi = 0.5 * np.arctan2(2 * (c * d + a * b), a * a - b * b + c * c - d * d)
    theta = 0.5 * np.arctan2(2 * (b * d + a * c), a * a + b * b - c * c - d * d)
    psi = -0.5 * np.arcsin(np.clip(2 * (b * c - a * d), -1.0, 1.0))
    rec = phase_compose(np.ones_like(mag), phi, theta, psi, order="ikj")
    flip = np.sum(np.abs(rec - u), axis=-1) > np.sum(np.abs(rec + u), axis=-1)
    phi = np.where(flip, np.where(phi > 0, phi - np.pi, phi + np.pi), phi)
    return mag, phi, theta, psi


def quat_image_op(x, y, op: str) -> np.ndarray:
    """Pixelwise operation on two quaternion images of equal shape.

    op is one of "add", "pointwise_mul" (componentwise real product),
    "hamilton" (Hamilton product x (x) y) and "conj_left" (the conjugate
    image x*; y only takes part in the shape check).
    """
    x = _as_quat(x)
    y = _as_quat(y)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    if op == "add":
        return x + y
    if op == "pointwise_mul":
        return x * y
    if op == "hamilton":
        return hyper_mul(x, y, HAMILTON)
    if op == "conj_left":
        return quat_conj(x)
    raise ValueError(f"unknown quaternion image op {op!r}")
