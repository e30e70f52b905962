"""Canonical sets of packet headers as boolean functions over header bits.

A header layout partitions a fixed-width bit string into named fields.
Formulas denote subsets of the 2**total_bits possible headers and are kept
canonical in a per-layout store (reduced ordered BDDs with hash-consing), so
equality and emptiness tests on handles are O(1).

Variable order is field-major in layout declaration order, most-significant
bit first within a field.  Headers are plain ints: variable i is bit
(total_bits - 1 - i) of the header value, so enumeration order is ascending.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field


class PktsetError(ValueError):
    """Base error for layout/formula misuse."""


class UnknownFieldError(PktsetError):
    pass


class RangeError(PktsetError):
    """A value range does not fit its field, or is otherwise malformed."""


class StoreMismatchError(PktsetError):
    """Two formulas from different stores were combined."""


@dataclass(frozen=True)
class HeaderLayout:
    """Ordered (name, width) field declarations for a packet header."""

    fields: tuple[tuple[str, int], ...]

    def __post_init__(self):
        if not self.fields:
            raise PktsetError("layout needs at least one field")
        names = [n for n, _ in self.fields]
        if len(set(names)) != len(names):
            raise PktsetError("duplicate field names in layout")
        for name, width in self.fields:
            if width < 1:
                raise PktsetError(f"field {name!r} has non-positive width")

    @property
    def total_bits(self) -> int:
        return sum(w for _, w in self.fields)

    @property
    def field_count(self) -> int:
        return len(self.fields)

    @property
    def max_field_bits(self) -> int:
        return max(w for _, w in self.fields)

    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.fields)

    def index(self, name: str) -> int:
        for i, (n, _) in enumerate(self.fields):
            if n == name:
                return i
        raise UnknownFieldError(f"unknown field {name!r}")

    def width(self, name: str) -> int:
        return self.fields[self.index(name)][1]

    def offset(self, name: str) -> int:
        """First variable index of the field (MSB of the field)."""
        off = 0
        for n, w in self.fields:
            if n == name:
                return off
            off += w
        raise UnknownFieldError(f"unknown field {name!r}")

    def field_vars(self, name: str) -> range:
        off = self.offset(name)
        return range(off, off + self.width(name))

    def extract_value(self, header: int, name: str) -> int:
        """Field value inside a concrete header int."""
        off, w = self.offset(name), self.width(name)
        return (header >> (self.total_bits - off - w)) & ((1 << w) - 1)

    def with_value(self, header: int, name: str, value: int) -> int:
        off, w = self.offset(name), self.width(name)
        if not 0 <= value < (1 << w):
            raise RangeError(f"value {value} does not fit field {name!r}")
        shift = self.total_bits - off - w
        mask = ((1 << w) - 1) << shift
        return (header & ~mask) | (value << shift)


def _normalize_ranges(ranges) -> tuple[tuple[int, int], ...]:
    rs = sorted((int(lo), int(hi)) for lo, hi in ranges)
    for lo, hi in rs:
        if lo < 0 or hi < lo:
            raise RangeError(f"malformed range [{lo}, {hi}]")
    merged: list[tuple[int, int]] = []
    for lo, hi in rs:
        if merged and lo <= merged[-1][1] + 1:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    return tuple(merged)


@dataclass(frozen=True)
class FieldValueSet:
    """Union of inclusive integer ranges of one field, optionally negated."""

    field: str
    ranges: tuple[tuple[int, int], ...]
    negated: bool = False

    def __post_init__(self):
        object.__setattr__(self, "ranges", _normalize_ranges(self.ranges))

    def contains(self, value: int) -> bool:
        inside = any(lo <= value <= hi for lo, hi in self.ranges)
        return inside != self.negated

    def values(self):
        for lo, hi in self.ranges:
            yield from range(lo, hi + 1)


_TERMINAL = -1  # sentinel var for the two terminal nodes


class FormulaStore:
    """Canonical boolean-function store bound to one header layout.

    Handles from different stores must never be mixed; a store is not
    thread-safe and is meant to be confined to one analysis at a time.
    """

    def __init__(self, layout: HeaderLayout):
        self.layout = layout
        self.nbits = layout.total_bits
        # node 0 = false, node 1 = true
        self._var = [self.nbits, self.nbits]
        self._lo = [0, 1]
        self._hi = [0, 1]
        self._uniq: dict[tuple[int, int, int], int] = {}
        self._and_cache: dict[tuple[int, int], int] = {}
        self._or_cache: dict[tuple[int, int], int] = {}
        self._not_cache: dict[int, int] = {}
        self._quant_cache: dict[tuple[int, frozenset[int]], int] = {}
        self._atom_cache: dict[tuple, int] = {}
        self.false = Formula(self, 0)
        self.true = Formula(self, 1)

    # -- node construction ------------------------------------------------

    def _mk(self, var: int, lo: int, hi: int) -> int:
        if lo == hi:
            return lo
        key = (var, lo, hi)
        n = self._uniq.get(key)
        if n is None:
            n = len(self._var)
            self._var.append(var)
            self._lo.append(lo)
            self._hi.append(hi)
            self._uniq[key] = n
        return n

    def _and(self, a: int, b: int) -> int:
        if a == 0 or b == 0:
            return 0
        if a == 1:
            return b
        if b == 1 or a == b:
            return a
        key = (a, b) if a < b else (b, a)
        r = self._and_cache.get(key)
        if r is None:
            va, vb = self._var[a], self._var[b]
            v = min(va, vb)
            la, ha = (self._lo[a], self._hi[a]) if va == v else (a, a)
            lb, hb = (self._lo[b], self._hi[b]) if vb == v else (b, b)
            r = self._mk(v, self._and(la, lb), self._and(ha, hb))
            self._and_cache[key] = r
        return r

    def _or(self, a: int, b: int) -> int:
        if a == 1 or b == 1:
            return 1
        if a == 0:
            return b
        if b == 0 or a == b:
            return a
        key = (a, b) if a < b else (b, a)
        r = self._or_cache.get(key)
        if r is None:
            va, vb = self._var[a], self._var[b]
            v = min(va, vb)
            la, ha = (self._lo[a], self._hi[a]) if va == v else (a, a)
            lb, hb = (self._lo[b], self._hi[b]) if vb == v else (b, b)
            r = self._mk(v, self._or(la, lb), self._or(ha, hb))
            self._or_cache[key] = r
        return r

    def _not(self, a: int) -> int:
        if a < 2:
            return 1 - a
        r = self._not_cache.get(a)
        if r is None:
            r = self._mk(self._var[a], self._not(self._lo[a]), self._not(self._hi[a]))
            self._not_cache[a] = r
            self._not_cache[r] = a
        return r

    def _exists(self, a: int, vars_fs: frozenset[int], vmax: int) -> int:
        if a < 2:
            return a
        v = self._var[a]
        if v > vmax:
            return a
        key = (a, vars_fs)
        r = self._quant_cache.get(key)
        if r is None:
            lo = self._exists(self._lo[a], vars_fs, vmax)
            hi = self._exists(self._hi[a], vars_fs, vmax)
            if v in vars_fs:
                r = self._or(lo, hi)
            else:
                r = self._mk(v, lo, hi)
            self._quant_cache[key] = r
        return r

    def _exists_vars(self, a: int, variables) -> int:
        fs = frozenset(variables)
        if not fs:
            return a
        return self._exists(a, fs, max(fs))

    # -- range atoms -------------------------------------------------------

    def _bits_ge(self, off: int, w: int, value: int) -> int:
        node = 1
        for i in range(w - 1, -1, -1):
            bit = (value >> (w - 1 - i)) & 1
            var = off + i
            if bit:
                node = self._mk(var, 0, node)
            else:
                node = self._mk(var, node, 1)
        return node

    def _bits_le(self, off: int, w: int, value: int) -> int:
        node = 1
        for i in range(w - 1, -1, -1):
            bit = (value >> (w - 1 - i)) & 1
            var = off + i
            if bit:
                node = self._mk(var, 1, node)
            else:
                node = self._mk(var, node, 0)
        return node

    def atom(self, fvs: FieldValueSet) -> Formula:
        """Formula holding exactly when the field value lies in (or outside,
        if negated) the range union."""
        off = self.layout.offset(fvs.field)
        w = self.layout.width(fvs.field)
        limit = (1 << w) - 1
        key = (fvs.field, fvs.ranges, fvs.negated)
        node = self._atom_cache.get(key)
        if node is None:
            node = 0
            for lo, hi in fvs.ranges:
                if hi > limit:
                    raise RangeError(
                        f"range [{lo}, {hi}] exceeds {w}-bit field {fvs.field!r}"
                    )
                node = self._or(node, self._and(self._bits_ge(off, w, lo),
                                                self._bits_le(off, w, hi)))
            if fvs.negated:
                node = self._not(node)
            self._atom_cache[key] = node
        return Formula(self, node)

    # -- stats --------------------------------------------------------------

    def node_count(self) -> int:
        return len(self._var)


class Formula:
    """Immutable handle into a FormulaStore; denotes a set of headers.

    Combine with ``&``, ``|``, ``~``.  Equality is semantic (canonical store),
    and mixing handles from different stores raises StoreMismatchError.
    """

    __slots__ = ("store", "node")

    def __init__(self, store: FormulaStore, node: int):
        self.store = store
        self.node = node

    def _peer(self, other: "Formula") -> int:
        if not isinstance(other, Formula):
            raise TypeError(f"expected Formula, got {type(other).__name__}")
        if other.store is not self.store:
            raise StoreMismatchError("formulas belong to different stores/layouts")
        return other.node

    def __and__(self, other: "Formula") -> "Formula":
        return Formula(self.store, self.store._and(self.node, self._peer(other)))

    def __or__(self, other: "Formula") -> "Formula":
        return Formula(self.store, self.store._or(self.node, self._peer(other)))

    def __invert__(self) -> "Formula":
        return Formula(self.store, self.store._not(self.node))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Formula):
            return NotImplemented
        return other.store is self.store and self.node == other.node

    def __hash__(self) -> int:
        return hash((id(self.store), self.node))

    def __repr__(self) -> str:
        if self.node == 0:
            return "<Formula false>"
        if self.node == 1:
            return "<Formula true>"
        return f"<Formula node={self.node} count={self.count()}>"

    def is_empty(self) -> bool:
        return self.node == 0

    def equals(self, other: "Formula") -> bool:
        return self.node == self._peer(other)

    def implies(self, other: "Formula") -> bool:
        return (self & ~other).is_empty()

    # -- field operations ---------------------------------------------------

    def exists_field(self, field: str) -> "Formula":
        """Existentially quantify the field's bits; result is independent of it."""
        node = self.store._exists_vars(self.node, self.store.layout.field_vars(field))
        return Formula(self.store, node)

    def extract_field(self, field: str) -> "Formula":
        """Project onto one field: the set of that field's values occurring in
        the denotation, all other fields unconstrained."""
        keep = set(self.store.layout.field_vars(field))
        drop = [v for v in range(self.store.nbits) if v not in keep]
        return Formula(self.store, self.store._exists_vars(self.node, drop))

    def overwrite_field(self, field: str, values: FieldValueSet) -> "Formula":
        """Replace the field with a fresh value drawn from ``values``.

        Exact relational overwrite: the new value is independent of the old.
        """
        if values.negated or not values.ranges:
            raise RangeError("overwrite needs a non-negated, non-empty value set")
        if values.field != field:
            values = FieldValueSet(field, values.ranges, values.negated)
        return self.exists_field(field) & self.store.atom(values)

    def copy_field_from(self, src: "Formula", field: str) -> "Formula":
        """Overwrite the field with ``src``'s projected value set for it;
        all other fields of ``self`` are undisturbed."""
        self._peer(src)
        return self.exists_field(field) & src.extract_field(field)

    # -- concretization -----------------------------------------------------

    def enumerate(self, limit: int) -> list[int]:
        """Up to ``limit`` satisfying headers, ascending."""
        if limit < 1:
            raise PktsetError("enumeration limit must be >= 1")
        store = self.store
        n = store.nbits
        out: list[int] = []

        def rec(node: int, var: int, prefix: int):
            if len(out) >= limit or node == 0:
                return
            if var == n:
                out.append(prefix)
                return
            if node != 1 and store._var[node] == var:
                rec(store._lo[node], var + 1, prefix << 1)
                rec(store._hi[node], var + 1, (prefix << 1) | 1)
            else:
                rec(node, var + 1, prefix << 1)
                rec(node, var + 1, (prefix << 1) | 1)

        rec(self.node, 0, 0)
        return out

    def count(self) -> int:
        """Number of satisfying headers."""
        store = self.store
        memo: dict[int, int] = {0: 0, 1: 1}

        def rec(node: int) -> int:
            r = memo.get(node)
            if r is None:
                v = store._var[node]
                lo, hi = store._lo[node], store._hi[node]
                r = (rec(lo) << (store._var[lo] - v - 1)) + (
                    rec(hi) << (store._var[hi] - v - 1)
                )
                memo[node] = r
            return r

        top = store._var[self.node] if self.node > 1 else store.nbits
        return rec(self.node) << top

    def field_ranges(self, field: str) -> tuple[tuple[int, int], ...]:
        """The projected field value set as merged inclusive ranges."""
        store = self.store
        proj = self.extract_field(field).node
        off = store.layout.offset(field)
        w = store.layout.width(field)
        memo: dict[tuple[int, int], tuple[tuple[int, int], ...]] = {}

        def merged(parts: list[tuple[int, int]]) -> tuple[tuple[int, int], ...]:
            out: list[tuple[int, int]] = []
            for lo, hi in parts:
                if out and lo <= out[-1][1] + 1:
                    out[-1] = (out[-1][0], hi)
                else:
                    out.append((lo, hi))
            return tuple(out)

        def rec(node: int, i: int) -> tuple[tuple[int, int], ...]:
            # intervals over the field's suffix bits [i, w)
            if node == 0:
                return ()
            size = 1 << (w - i)
            if node == 1 or store._var[node] >= off + w:
                return ((0, size - 1),)
            key = (node, i)
            r = memo.get(key)
            if r is None:
                half = size >> 1
                if store._var[node] == off + i:
                    left = rec(store._lo[node], i + 1)
                    right = rec(store._hi[node], i + 1)
                else:  # free bit inside the field: same subtree twice
                    left = right = rec(node, i + 1)
                r = merged(list(left) + [(lo + half, hi + half) for lo, hi in right])
                memo[key] = r
            return r

        return rec(proj, 0)

    def is_field_product(self) -> bool:
        """True when the formula equals the conjunction of its per-field
        projections (no cross-field correlation)."""
        prod = self.store.true
        for name, _ in self.store.layout.fields:
            prod = prod & self.extract_field(name)
        return prod == self
