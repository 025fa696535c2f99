"""Counter-based deterministic random numbers.

Every stochastic choice in the package draws from a named sub-stream of a
single 64-bit seed. A draw at counter ``i`` of stream ``name`` is

    value = mix64(key(seed, name) + (i + 1) * GOLDEN)

with ``mix64`` the splitmix64 finalizer, so streams are stateless functions
of (seed, name, counter): adding draws to one stream never perturbs another,
and replaying a seed reproduces every choice bit-exactly.
"""

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_INV_2_53 = 1.0 / float(1 << 53)


def _mix64(x: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer, vectorized over uint64
    z = x
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _fnv1a(name: str) -> np.uint64:
    h = np.uint64(0xCBF29CE484222325)
    for b in name.encode("utf-8"):
        h = (h ^ np.uint64(b)) * np.uint64(0x100000001B3)
    return h


class Stream:
    """One named sub-stream with a monotonically advancing counter."""

    def __init__(self, seed: int, name: str):
        self.name = name
        self._key = _mix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) * _GOLDEN ^ _fnv1a(name))
        self._counter = np.uint64(0)

    def _raw(self, count: int) -> np.ndarray:
        idx = self._counter + (np.arange(1, count + 1, dtype=np.uint64))
        self._counter = self._counter + np.uint64(count)
        return _mix64(self._key + idx * _GOLDEN)

    def uniform(self, shape=None) -> np.ndarray:
        """Uniform float64 in [0, 1)."""
        if shape is None:
            return float(self.uniform((1,))[0])
        count = int(np.prod(shape)) if np.ndim(shape) or isinstance(shape, (tuple, list)) else int(shape)
        out = (self._raw(count) >> np.uint64(11)).astype(np.float64) * _INV_2_53
        return out.reshape(shape)

    def normal(self, shape=None) -> np.ndarray:
        """Standard normal via Box-Muller."""
        if shape is None:
            return float(self.normal((1,))[0])
        count = int(np.prod(shape))
        pairs = (count + 1) // 2
        u1 = ((self._raw(pairs) >> np.uint64(11)).astype(np.float64) + 1.0) * _INV_2_53
        u2 = (self._raw(pairs) >> np.uint64(11)).astype(np.float64) * _INV_2_53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:count]
        return z.reshape(shape)

    def bernoulli(self, p: float, shape) -> np.ndarray:
        return self.uniform(shape) < p

    def integers(self, low: int, high: int, shape=None) -> np.ndarray:
        """Integers in [low, high)."""
        u = self.uniform(shape if shape is not None else (1,))
        out = (low + np.floor(u * (high - low))).astype(np.int64)
        out = np.minimum(out, high - 1)
        return out if shape is not None else int(out[0])

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self.uniform((n,)), kind="stable").astype(np.int64)

    def choice_without_replacement(self, n: int, k: int) -> np.ndarray:
        if k > n:
            raise ValueError(f"cannot draw {k} from {n} without replacement")
        return self.permutation(n)[:k]


class Rng:
    """Root generator handing out named sub-streams."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: dict[str, Stream] = {}

    def stream(self, name: str) -> Stream:
        if name not in self._streams:
            self._streams[name] = Stream(self.seed, name)
        return self._streams[name]
