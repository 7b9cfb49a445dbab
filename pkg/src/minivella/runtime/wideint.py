"""Checked fixed-width integer arithmetic.

Values travel as plain Python ints; every operation checks the exact result
against the range of its (signed, width) type and raises instead of
wrapping. Widths up to 64 bits are computed directly; 128- and 256-bit
operands go through 64-bit limb routines (carry propagation, schoolbook
multiplication, shift-subtract long division).
"""

from __future__ import annotations

from minivella.runtime.errors import DivByZero, Overflow

LIMB_BITS = 64
LIMB_MASK = (1 << LIMB_BITS) - 1


def type_name(signed: bool, width: int) -> str:
    return f"{'Int' if signed else 'Uint'}{width}"


def int_range(signed: bool, width: int) -> tuple:
    if signed:
        return -(1 << (width - 1)), (1 << (width - 1)) - 1
    return 0, (1 << width) - 1


# -- limb primitives (little-endian lists of 64-bit digits)

def to_limbs(mag: int, n: int) -> list:
    out = []
    for _ in range(n):
        out.append(mag & LIMB_MASK)
        mag >>= LIMB_BITS
    if mag:
        raise ValueError("magnitude does not fit")
    return out


def from_limbs(limbs) -> int:
    v = 0
    for d in reversed(limbs):
        v = (v << LIMB_BITS) | d
    return v


def limbs_cmp(a, b) -> int:
    n = max(len(a), len(b))
    for i in range(n - 1, -1, -1):
        x = a[i] if i < len(a) else 0
        y = b[i] if i < len(b) else 0
        if x != y:
            return 1 if x > y else -1
    return 0


def limbs_add(a, b) -> list:
    n = max(len(a), len(b))
    out, carry = [], 0
    for i in range(n):
        s = (a[i] if i < len(a) else 0) + (b[i] if i < len(b) else 0) + carry
        out.append(s & LIMB_MASK)
        carry = s >> LIMB_BITS
    out.append(carry)
    return out


def limbs_sub(a, b) -> list:
    """a - b for a >= b."""
    out, borrow = [], 0
    for i in range(len(a)):
        d = a[i] - (b[i] if i < len(b) else 0) - borrow
        if d < 0:
            d += 1 << LIMB_BITS
            borrow = 1
        else:
            borrow = 0
        out.append(d)
    if borrow:
        raise ValueError("negative limb subtraction")
    return out


def limbs_mul(a, b) -> list:
    out = [0] * (len(a) + len(b))
    for i, x in enumerate(a):
        if not x:
            continue
        carry = 0
        for j, y in enumerate(b):
            t = out[i + j] + x * y + carry
            out[i + j] = t & LIMB_MASK
            carry = t >> LIMB_BITS
        k = i + len(b)
        while carry:
            t = out[k] + carry
            out[k] = t & LIMB_MASK
            carry = t >> LIMB_BITS
            k += 1
    return out


def _shl1(limbs, bit):
    carry = bit
    for i in range(len(limbs)):
        v = (limbs[i] << 1) | carry
        limbs[i] = v & LIMB_MASK
        carry = v >> LIMB_BITS
    return carry


def limbs_divmod(a, b) -> tuple:
    """Binary long division; b must be non-zero."""
    n = len(a)
    q = [0] * n
    r = [0] * (len(b) + 1)
    for i in range(n * LIMB_BITS - 1, -1, -1):
        _shl1(r, (a[i // LIMB_BITS] >> (i % LIMB_BITS)) & 1)
        if limbs_cmp(r, b) >= 0:
            r = limbs_sub(r, b)
            q[i // LIMB_BITS] |= 1 << (i % LIMB_BITS)
    return q, r


# -- checked operations

def _check(v: int, signed: bool, width: int, op: str) -> int:
    lo, hi = int_range(signed, width)
    if v < lo or v > hi:
        raise Overflow(f"integer overflow in {op} ({type_name(signed, width)})")
    return v


def _trunc_divmod(a: int, b: int) -> tuple:
    q = abs(a) // abs(b)
    if (a < 0) != (b < 0):
        q = -q
    return q, a - b * q


def _small(op, signed, width, a, b):
    if op == "add":
        return _check(a + b, signed, width, op)
    if op == "sub":
        return _check(a - b, signed, width, op)
    if op == "mul":
        return _check(a * b, signed, width, op)
    if b == 0:
        raise DivByZero(f"division by zero in {op} ({type_name(signed, width)})")
    q, r = _trunc_divmod(a, b)
    return _check(q if op == "div" else r, signed, width, op)


def _wide(op, signed, width, a, b):
    n = width // LIMB_BITS
    am, bm = to_limbs(abs(a), n), to_limbs(abs(b), n)
    an, bn = a < 0, b < 0
    if op in ("add", "sub"):
        if op == "sub":
            bn = not bn if b != 0 else False
        if an == bn:
            mag, neg = limbs_add(am, bm), an
        elif limbs_cmp(am, bm) >= 0:
            mag, neg = limbs_sub(am, bm), an
        else:
            mag, neg = limbs_sub(bm, am), bn
    elif op == "mul":
        mag, neg = limbs_mul(am, bm), an != bn
    else:
        if not any(bm):
            raise DivByZero(f"division by zero in {op} ({type_name(signed, width)})")
        q, r = limbs_divmod(am, bm)
        mag, neg = (q, an != bn) if op == "div" else (r, an)
    if not any(mag):
        neg = False
    # range check on the magnitude, in limbs
    if neg:
        limit = to_limbs(1 << (width - 1), n + 1) if signed else [0]
    else:
        limit = to_limbs((1 << (width - 1)) - 1 if signed else (1 << width) - 1, n + 1)
    if limbs_cmp(mag, limit) > 0:
        raise Overflow(f"integer overflow in {op} ({type_name(signed, width)})")
    v = from_limbs(mag)
    return -v if neg else v


def arith(op: str, signed: bool, width: int, a: int, b: int) -> int:
    """Checked ``op`` in {add, sub, mul, div, rem}; raises Overflow/DivByZero."""
    if width <= 64:
        return _small(op, signed, width, a, b)
    return _wide(op, signed, width, a, b)


def in_range(v: int, signed: bool, width: int) -> bool:
    lo, hi = int_range(signed, width)
    return lo <= v <= hi


def to_le_bytes(v: int, signed: bool, width: int) -> bytes:
    return v.to_bytes(width // 8, "little", signed=signed)


def from_le_bytes(b: bytes, signed: bool) -> int:
    return int.from_bytes(b, "little", signed=signed)
