"""Complex-arithmetic kernels and seeded random streams.

All vectors/matrices are numpy arrays of dtype complex128. The thin
wrappers here exist to give the rest of the package a single place for
dimension checking and for the reproducible RNG policy.
"""

import numpy as np


class DimensionMismatchError(ValueError):
    """Operands have incompatible shapes."""


class EmptyRequestError(ValueError):
    """A draw of zero samples was requested."""


class SeededRng:
    """PCG64 random stream, fully determined by its seed.

    Identical seeds produce bitwise-identical draw sequences on every
    platform numpy supports. Child streams for parallel workers come from
    ``spawn``, which uses numpy's SeedSequence spawning so children are
    independent and themselves reproducible.
    """

    def __init__(self, seed):
        if isinstance(seed, np.random.SeedSequence):
            self.seed_sequence = seed
        else:
            self.seed_sequence = np.random.SeedSequence(int(seed))
        self.generator = np.random.Generator(np.random.PCG64(self.seed_sequence))

    def spawn(self, n):
        """Derive `n` independent child streams."""
        return [SeededRng(ss) for ss in self.seed_sequence.spawn(n)]

    def standard_normal(self, shape):
        return self.generator.standard_normal(shape)

    def uniform(self, low, high, shape=None):
        return self.generator.uniform(low, high, shape)

    def integers(self, low, high, shape=None):
        return self.generator.integers(low, high, shape)

    def permutation(self, n):
        return self.generator.permutation(n)


def matvec(H, x):
    """Matrix-vector product Hx with explicit dimension checking.

    Supports leading batch dimensions on both operands.
    """
    H = np.asarray(H)
    x = np.asarray(x)
    if H.shape[-1] != x.shape[-1]:
        raise DimensionMismatchError(
            f"matvec: H has {H.shape[-1]} columns but x has length {x.shape[-1]}"
        )
    return np.einsum("...un,...n->...u", H, x)


def hadamard(a, b):
    """Elementwise product of two equal-length vectors."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimensionMismatchError(
            f"hadamard: shapes {a.shape} and {b.shape} differ"
        )
    return a * b


def standard_complex_gaussian(rng, n):
    """n i.i.d. samples of a circularly-symmetric complex Gaussian.

    Real and imaginary parts each have variance 1/2, so E|z|^2 = 1.
    `n` may be an int or a shape tuple.
    """
    shape = (n,) if np.isscalar(n) else tuple(n)
    if int(np.prod(shape)) == 0:
        raise EmptyRequestError("requested zero complex Gaussian samples")
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (re + 1j * im) / np.sqrt(2.0)
