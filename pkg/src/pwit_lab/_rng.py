"""Counter-based SplitMix64 streams keyed by 128-bit hashes.

Every PWIT vertex owns a stream whose key is a chained hash of the master
seed and the vertex path, so a neighborhood can be regenerated at any time
without storing generator state. The scalar functions run inside numba
kernels; :class:`HashStream` is the vectorized numpy view of the same
sequence and plugs into the samplers wherever a numpy ``Generator`` is
accepted.
"""
import numpy as np

from ._backend import njit, quiet_uint64

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_G1 = np.uint64(0xFF51AFD7ED558CCD)
_G2 = np.uint64(0xC4CEB9FE1A85EC53)
_LANE0 = np.uint64(0x243F6A8885A308D3)
_LANE1 = np.uint64(0x13198A2E03707344)
_CHILD0 = np.uint64(0xA4093822299F31D0)
_CHILD1 = np.uint64(0x082EFA98EC4E6C89)
_ALT = np.uint64(0xAAAAAAAAAAAAAAAA)
_ONE = np.uint64(1)
_S1 = np.uint64(1)
_S12 = np.uint64(12)
_S27 = np.uint64(27)
_S30 = np.uint64(30)
_S31 = np.uint64(31)
_S33 = np.uint64(33)
_INV52 = 1.0 / 4503599627370496.0
_MASK64 = (1 << 64) - 1


@njit
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit
def _mix_gamma(z):
    z = (z ^ (z >> _S33)) * _G1
    z = (z ^ (z >> _S33)) * _G2
    z = (z ^ (z >> _S33)) | _ONE
    # reject weak increments with few bit transitions
    t = z ^ (z >> _S1)
    bits = 0
    while t:
        t &= t - _ONE
        bits += 1
    if bits < 24:
        z ^= _ALT
    return z


@njit
def child_key(k0, k1, index):
    """Key of child ``index`` given the parent key lanes."""
    i = np.uint64(index)
    return mix64(k0 ^ mix64(i ^ _CHILD0)), mix64(k1 ^ mix64(i ^ _CHILD1))


@njit
def stream_gamma(k1):
    return _mix_gamma(k1)


@njit
def next_uniform(st):
    """Uniform on the open interval (0, 1); ``st = [state, gamma]``.

    52 bits plus one half keeps every value exactly representable, so the
    result lies in [2^-53, 1 - 2^-53].
    """
    st[0] = st[0] + st[1]
    z = mix64(st[0])
    return (np.float64(z >> _S12) + 0.5) * _INV52


@njit
def next_exponential(st):
    return -np.log(next_uniform(st))


def _lanes(pair):
    # compiled helpers hand back python ints; keep lanes as uint64 scalars
    return np.uint64(pair[0]), np.uint64(pair[1])


def root_key(seed):
    """Two 64-bit key lanes for an integer seed (any size, hashed in 64-bit words)."""
    seed = int(seed)
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    words = []
    while True:
        words.append(seed & _MASK64)
        seed >>= 64
        if not seed:
            break
    with quiet_uint64():
        k0, k1 = _LANE0, _LANE1
        for w in words:
            k0, k1 = _lanes(child_key.py_func(k0, k1, np.uint64(w)))
    return np.uint64(k0), np.uint64(k1)


def derive_key(seed, *path):
    """Key for ``seed`` followed by a sequence of nonnegative integers."""
    with quiet_uint64():
        k0, k1 = root_key(seed)
        for p in path:
            k0, k1 = _lanes(child_key.py_func(k0, k1, np.uint64(p)))
    return np.uint64(k0), np.uint64(k1)


def stream_state(k0, k1):
    """Fresh ``[state, gamma]`` array for the stream with the given key."""
    with quiet_uint64():
        return np.array([k0, stream_gamma.py_func(np.uint64(k1))], dtype=np.uint64)


class HashStream:
    """Vectorized numpy view of a keyed SplitMix64 stream.

    Produces exactly the sequence the scalar kernels draw, so a PWIT
    neighborhood can be recomputed in numpy for cross-checks. Supports the
    subset of the ``numpy.random.Generator`` API the samplers use.
    """

    def __init__(self, k0, k1=None):
        if k1 is None:
            k0, k1 = root_key(k0)
        self._st = stream_state(np.uint64(k0), np.uint64(k1))

    @classmethod
    def from_seed(cls, seed, *path):
        return cls(*derive_key(seed, *path))

    def _u64(self, size):
        steps = np.arange(1, size + 1, dtype=np.uint64)
        z = self._st[0] + self._st[1] * steps
        self._st[0] = z[-1] if size else self._st[0]
        z = (z ^ (z >> _S30)) * _M1
        z = (z ^ (z >> _S27)) * _M2
        return z ^ (z >> _S31)

    def random(self, size=None):
        n = 1 if size is None else int(size)
        u = ((self._u64(n) >> _S12).astype(np.float64) + 0.5) * _INV52
        return float(u[0]) if size is None else u

    def standard_exponential(self, size=None):
        u = self.random(size)
        return -np.log(u)

    def state(self):
        return self._st.copy()
