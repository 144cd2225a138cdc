"""The b-bit KID space with the XOR metric.

Node identifiers (KIDs) are unsigned integers of exactly ``b`` bits.  The
distance between two KIDs is their bitwise XOR interpreted as an integer.
Two facts about this metric drive everything else in the package:

* for a fixed center ``v`` the map ``u -> u ^ v`` is a bijection on
  ``[0, 2^b)``, so distances from ``v`` to distinct KIDs are distinct and
  ranking by distance is tie-free;
* the ball ``{u : u ^ v < q}`` contains exactly ``q`` KIDs, and it splits
  into at most ``popcount(q) <= b`` dyadically aligned blocks.  Each block
  is a contiguous KID range, so ball membership against a sorted KID array
  resolves with O(b) binary searches instead of an O(N) scan.
"""

from __future__ import annotations

from typing import NamedTuple

MIN_BITS = 8
MAX_BITS = 128


class AlignedBlock(NamedTuple):
    """A dyadically aligned KID range [start, start + length)."""

    start: int
    length: int  # power of two; start is a multiple of length

    @property
    def stop(self) -> int:
        return self.start + self.length

    def __contains__(self, kid: int) -> bool:
        return self.start <= kid < self.stop


def check_bits(b: int) -> int:
    if not MIN_BITS <= b <= MAX_BITS:
        raise ValueError(f"bit width must be in [{MIN_BITS}, {MAX_BITS}], got {b}")
    return b


def check_kid(value: int, b: int) -> int:
    if not 0 <= value < (1 << b):
        raise ValueError(f"KID {value:#x} out of range for {b}-bit space")
    return value


def xor_distance(a: int, b: int) -> int:
    """XOR metric distance between two KIDs of the same bit width."""
    return a ^ b


def count_within(v: int, q: int, b: int) -> int:
    """Number of KIDs u with xor_distance(u, v) < q.

    The XOR metric makes this exactly q for any center, because
    ``u -> u ^ v`` is a bijection and maps the ball onto ``[0, q)``.
    Exposed as a checked primitive so tests can assert the identity
    instead of assuming it.
    """
    check_bits(b)
    check_kid(v, b)
    if not 0 <= q <= (1 << b):
        raise ValueError(f"radius {q} out of range for {b}-bit space")
    return q


def xor_ball_blocks(v: int, q: int, b: int) -> list[AlignedBlock]:
    """Decompose the ball {u : u ^ v < q} into disjoint aligned blocks.

    One block per set bit of q: distances sharing the prefix of q above
    bit i, with bit i cleared, form an aligned 2^i range of distances,
    and XOR with v maps it onto an aligned 2^i range of KIDs.  Blocks
    are returned in decreasing size order; their union is exactly the
    ball and the total length is q.
    """
    check_bits(b)
    check_kid(v, b)
    if not 0 <= q <= (1 << b):
        raise ValueError(f"radius {q} out of range for {b}-bit space")
    if q == 1 << b:
        return [AlignedBlock(0, 1 << b)]
    blocks = []
    for i in reversed(range(b)):
        if q >> i & 1:
            prefix = (q >> (i + 1)) << (i + 1)  # distance bits above i
            start = ((v ^ prefix) >> i) << i
            blocks.append(AlignedBlock(start, 1 << i))
    return blocks


def kid_from_digest(digest: bytes, b: int) -> int:
    """Truncate a hash digest to a KID: the b most significant bits, big-endian."""
    check_bits(b)
    nbytes = (b + 7) // 8
    if len(digest) < nbytes:
        raise ValueError(f"digest too short: need {nbytes} bytes for {b} bits, got {len(digest)}")
    return int.from_bytes(digest[:nbytes], "big") >> (8 * nbytes - b)


def block_bit_pattern(q: int, b: int) -> list[tuple[int, int]]:
    """Center-independent part of xor_ball_blocks: (distance prefix, shift) pairs.

    For a fixed radius the decomposition depends on the center only through
    ``start = ((v ^ prefix) >> shift) << shift``; precomputing the pairs lets
    batch spot selection vectorize over many centers.
    """
    check_bits(b)
    if not 0 <= q < (1 << b):
        raise ValueError(f"radius {q} out of range for pattern decomposition")
    return [
        ((q >> (i + 1)) << (i + 1), i)
        for i in reversed(range(b))
        if q >> i & 1
    ]


def shared_prefix_len(a: int, b_kid: int, b: int) -> int:
    """Length of the common leading-bit prefix of two b-bit KIDs."""
    d = a ^ b_kid
    if d == 0:
        return b
    return b - d.bit_length()
