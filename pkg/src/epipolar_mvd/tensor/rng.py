"""Deterministic, platform-independent random streams.

Bits come from numpy's Philox-4x64 counter-based generator keyed by
``(stream << 64) | seed``. Uniform doubles are Philox's 53-bit conversion,
and normal variates use the Box-Muller transform on pairs of uniforms:

    z0 = sqrt(-2 ln(1 - u1)) * cos(2 pi u2)
    z1 = sqrt(-2 ln(1 - u1)) * sin(2 pi u2)

so the same ``(seed, stream)`` yields the same values on every platform and
numpy version that ships Philox.
"""

import numpy as np

from .core import Tensor

_SEED_MASK = (1 << 64) - 1


class DeterministicRng:
    """Seeded random stream with uniform, normal and integer draws."""

    def __init__(self, seed: int = 0, stream: int = 0):
        """
        Initialize the stream.

        Args:
            seed: 64-bit unsigned seed
            stream: Independent sub-stream selector (see ``fork``)
        """
        self.seed = int(seed) & _SEED_MASK
        self.stream = int(stream) & _SEED_MASK
        key = (self.stream << 64) | self.seed
        self._generator = np.random.Generator(np.random.Philox(key=key))

    def fork(self, stream: int) -> "DeterministicRng":
        """Return an independent stream with the same seed."""
        return DeterministicRng(self.seed, stream)

    def uniform(self, shape: tuple[int, ...] | int, low: float = 0.0, high: float = 1.0) -> Tensor:
        """Uniform doubles in ``[low, high)``."""
        return low + (high - low) * self._generator.random(shape)

    def normal(self, shape: tuple[int, ...] | int) -> Tensor:
        """Standard normal variates via Box-Muller."""
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        count = int(np.prod(shape, dtype=np.int64))
        pairs = (count + 1) // 2
        u1 = self._generator.random(pairs)
        u2 = self._generator.random(pairs)
        radius = np.sqrt(-2.0 * np.log1p(-u1))
        angle = 2.0 * np.pi * u2
        values = np.empty(2 * pairs)
        values[0::2] = radius * np.cos(angle)
        values[1::2] = radius * np.sin(angle)
        return values[:count].reshape(shape)

    def integers(self, low: int, high: int, size: int | None = None):
        """Integers in ``[low, high)``."""
        return self._generator.integers(low, high, size=size)

    def choice(self, count: int, size: int) -> list[int]:
        """``size`` distinct indices from ``range(count)`` in random order."""
        return [int(i) for i in self._generator.permutation(count)[:size]]

    def __repr__(self) -> str:
        return f"DeterministicRng(seed={self.seed}, stream={self.stream})"
