"""SplitMix64 generator, scalar and vectorised over independent streams.

Constants are the ones published with the reference generator:

    state += 0x9E3779B97F4A7C15
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    z ^= z >> 31

Doubles are formed from the top 53 bits.
"""

import numpy as np

GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
MASK64 = (1 << 64) - 1

_GAMMA = np.uint64(GAMMA)
_MIX1 = np.uint64(MIX1)
_MIX2 = np.uint64(MIX2)
_S30, _S27, _S31, _S11 = (np.uint64(s) for s in (30, 27, 31, 11))


def mix64(z):
    """SplitMix64 output function on a python int."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def _mix_array(z):
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


class SplitMix64:
    """Single SplitMix64 stream."""

    def __init__(self, seed):
        self.state = int(seed) & MASK64

    def next_u64(self):
        self.state = (self.state + GAMMA) & MASK64
        return mix64(self.state)

    def random(self):
        return (self.next_u64() >> 11) * 2.0**-53

    def split(self, index):
        """Child stream for ``index``; seed is ``mix64(mix64(state) XOR index)``."""
        return SplitMix64(mix64(mix64(self.state) ^ (int(index) & MASK64)))

    def u64_array(self, n):
        """Next ``n`` outputs of this stream, in order."""
        steps = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            states = np.uint64(self.state) + steps * _GAMMA
            out = _mix_array(states)
        self.state = (self.state + n * GAMMA) & MASK64
        return out

    def random_array(self, n):
        return (self.u64_array(n) >> _S11).astype(np.float64) * 2.0**-53


class StreamBank:
    """Many independent SplitMix64 streams advanced in lock-step.

    Stream ``k`` is seeded with ``mix64(mix64(seed) ^ k)``, so the outputs
    of one stream do not depend on how many others are in the bank.  The
    seed is mixed first; with a bare ``seed ^ k`` nearby seeds would share
    the same set of streams in a different order.
    """

    def __init__(self, seed, count):
        seed = mix64(int(seed))
        self.states = np.array(
            [mix64(seed ^ k) for k in range(count)], dtype=np.uint64
        )

    def __len__(self):
        return self.states.shape[0]

    def random(self):
        with np.errstate(over="ignore"):
            self.states = self.states + _GAMMA
            out = _mix_array(self.states)
        return (out >> _S11).astype(np.float64) * 2.0**-53
