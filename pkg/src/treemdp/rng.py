"""Seeded xoshiro256** generator with SplitMix64 state expansion.

numpy ships no xoshiro bit generator, and experiment outputs are meant to be
reproducible from a seed independently of numpy's PCG64 stream, so the
generator is spelled out here. The algorithms follow the public-domain
reference code by Blackman and Vigna.
"""

_MASK = (1 << 64) - 1


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & _MASK


def splitmix64(state):
    """Advance a SplitMix64 state; return ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


class Xoshiro256:
    """xoshiro256** seeded by four successive SplitMix64 outputs.

    ``random()`` maps the top 53 bits of each output to [0, 1);
    ``policy()`` takes the top 2 bits, giving a uniform integer in {0,..,3}.
    """

    def __init__(self, seed=0, state=None):
        if state is not None:
            self.s = [int(v) & _MASK for v in state]
        else:
            sm = int(seed) & _MASK
            self.s = []
            for _ in range(4):
                sm, out = splitmix64(sm)
                self.s.append(out)
        if not any(self.s):
            raise ValueError("xoshiro state must not be all zero")

    def next_u64(self):
        s0, s1, s2, s3 = self.s
        result = (_rotl((s1 * 5) & _MASK, 7) * 9) & _MASK
        t = (s1 << 17) & _MASK
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self.s = [s0, s1, s2, s3]
        return result

    def random(self):
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def policy(self):
        return self.next_u64() >> 62
