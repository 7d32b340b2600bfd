"""Modulus-chain construction: primes congruent to 1 mod 2N, found by scan."""

from __future__ import annotations

import gmpy2

from ...errors import ParamsError


def ntt_primes(bits: int, two_n: int, count: int, exclude=()) -> list[int]:
    """Largest `count` primes below 2**bits that are 1 mod two_n."""
    found: list[int] = []
    top = 1 << bits
    floor = 1 << (bits - 1)
    q = (top - 1 - 1) // two_n * two_n + 1  # largest candidate < 2**bits
    exclude = set(exclude)
    while len(found) < count:
        if q <= floor:
            raise ParamsError(f"no {count} usable {bits}-bit primes for step {two_n}")
        if q not in exclude and gmpy2.is_prime(q):
            found.append(q)
        q -= two_n
    return found


def default_chain(ring_dim: int, scale_bits: int, depth: int) -> tuple[int, ...]:
    """One ~60-bit base prime plus `depth` rescale primes near 2**scale_bits."""
    if not 20 <= scale_bits <= 59:
        raise ParamsError(f"scale_bits must be in [20, 59], got {scale_bits}")
    two_n = 2 * ring_dim
    base = ntt_primes(60, two_n, 1)
    rest = ntt_primes(scale_bits, two_n, depth, exclude=base)
    return tuple(base + rest)
