"""The product-of-circles manifold behind constant-envelope precoding.

A feasible transmit vector x in C^Nt has every entry on the circle of
radius 1/sqrt(Nt) (total transmit power fixed to 1). Tangent vectors z at
x satisfy Re{z * conj(x)} = 0 elementwise. All functions broadcast over
leading batch dimensions: x has shape (..., Nt), channels (..., Nu, Nt).

Gradient convention: the objective treats x and conj(x) as independent
(Wirtinger), so the "Euclidean gradient" returned here is
-2 H^H (s - Hx) = 2 * d f / d conj(x). With that convention the true
directional derivative of f along a perturbation v is Re{grad^H v};
finite-difference checks in the tests rely on exactly this bookkeeping.
"""

from dataclasses import dataclass

import numpy as np

from .numerics import DimensionMismatchError, matvec


class DegenerateRetractionError(ArithmeticError):
    """x + v has an entry with magnitude too small to normalize."""


# Entries with |x_n + v_n| below this keep the previous phase of x_n
# instead of dividing; below HARD_ZERO the retraction is refused.
PHASE_KEEP_THRESHOLD = 1e-12
HARD_ZERO = 1e-300


@dataclass
class MuiObjective:
    """Multiuser-interference energy f(x) = ||Hx - s||^2 for fixed (H, s)."""

    H: np.ndarray  # (..., Nu, Nt)
    s: np.ndarray  # (..., Nu)

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=np.complex128)
        self.s = np.asarray(self.s, dtype=np.complex128)
        if self.H.shape[-2] != self.s.shape[-1]:
            raise DimensionMismatchError(
                f"H has {self.H.shape[-2]} rows but s has length {self.s.shape[-1]}"
            )

    @property
    def nt(self):
        return self.H.shape[-1]

    @property
    def nu(self):
        return self.H.shape[-2]

    def value(self, x):
        """MUI energy ||Hx - s||^2, always >= 0."""
        r = matvec(self.H, x) - self.s
        return np.sum(np.abs(r) ** 2, axis=-1)

    def residual(self, x):
        """Hx - s."""
        return matvec(self.H, x) - self.s

    def euclidean_grad(self, x):
        """-2 H^H (s - Hx)."""
        r = self.s - matvec(self.H, x)
        return -2.0 * np.einsum("...un,...u->...n", np.conj(self.H), r)

    def riemannian_grad(self, x):
        """Euclidean gradient projected onto the tangent space at x."""
        return project_to_tangent(x, self.euclidean_grad(x))


def circle_radius(nt):
    return 1.0 / np.sqrt(nt)


def modulus_deviation(x):
    """max_n | |x_n| - 1/sqrt(Nt) |, the distance from feasibility."""
    nt = x.shape[-1]
    return np.max(np.abs(np.abs(x) - circle_radius(nt)))


def assert_on_manifold(x, tol=1e-9):
    dev = modulus_deviation(x)
    if dev >= tol:
        raise ValueError(f"point off manifold: modulus deviation {dev:.3e} >= {tol:.0e}")


def project_to_tangent(x, z):
    """Project z onto the tangent space at x: z - Nt * Re{z o x*} o x."""
    x = np.asarray(x)
    z = np.asarray(z)
    if x.shape[-1] != z.shape[-1]:
        raise DimensionMismatchError(
            f"project_to_tangent: lengths {x.shape[-1]} and {z.shape[-1]} differ"
        )
    nt = x.shape[-1]
    return z - nt * np.real(z * np.conj(x)) * x


def tangency_residual(x, z):
    """max_n |Re{z_n x_n*}|; zero for exact tangent vectors."""
    return np.max(np.abs(np.real(z * np.conj(x))))


def retract(x, v):
    """Map x + v back onto the manifold by per-entry normalization.

    Entries of x + v whose magnitude falls in [1e-300, 1e-12] keep the
    previous phase of x (the step direction is numerically ambiguous
    there); magnitudes below 1e-300 raise DegenerateRetractionError.
    """
    x = np.asarray(x)
    v = np.asarray(v)
    if x.shape[-1] != v.shape[-1]:
        raise DimensionMismatchError(
            f"retract: lengths {x.shape[-1]} and {v.shape[-1]} differ"
        )
    nt = x.shape[-1]
    y = x + v
    mag = np.abs(y)
    if np.any(mag < HARD_ZERO):
        raise DegenerateRetractionError("retraction hit an (almost) exactly zero entry")
    tiny = mag < PHASE_KEEP_THRESHOLD
    if np.any(tiny):
        # x is on the manifold, so x * sqrt(Nt) is a unit phase.
        unit = np.where(tiny, x * np.sqrt(nt), y / np.where(tiny, 1.0, mag))
    else:
        unit = y / mag
    return unit * circle_radius(nt)


def random_point(nt, rng, batch_shape=()):
    """Uniformly random phases on the manifold."""
    phases = rng.uniform(0.0, 2.0 * np.pi, tuple(batch_shape) + (nt,))
    return np.exp(1j * phases) * circle_radius(nt)
