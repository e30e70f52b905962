"""Worklist fixpoint propagation with pluggable abstract lattices.

Three variants share one propagation loop:

* ``v1`` — one relational formula per node (current header forms).
* ``v2`` — sets of (curr, orig, nated) packets tracking pre-NAT originals;
  values are normalized by merging packets that share (orig, nated), OR-ing
  their curr formulas.  Keying on the NAT mask as well as orig keeps guard
  reduction correct for merged packets.
* ``ia`` — independent-attribute: one formula per field, cross-field
  correlation dropped, guard negation handled exactly only for single-field
  guards and approximated as true otherwise.

Propagation: the origin zone emits its departure value once; whenever a
firewall's value grows it is re-queued and pushed through each of its links;
zones record arrivals but never re-emit.  The lattice is finite (fixed header
width), so the fixpoint is reached without widening.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field as dc_field

from .netmodel import Guard, Network, guard_to_formula, reduce_guard, zone_departure_formula
from .pktset import Formula
from .xfer import (
    AbstractPacket,
    DropLedger,
    VectorPacket,
    filter_table_tf,
    link_tf,
    nat_packet,
    nat_table_tf,
    update_original,
)


class EngineError(RuntimeError):
    pass


class IterationCeilingExceeded(EngineError):
    """The worklist ran past its configured ceiling; the run is aborted."""


@dataclass(frozen=True)
class AbstractValue:
    """A set of abstract packets at a node; the empty set is bottom."""

    packets: tuple = ()

    def is_bottom(self) -> bool:
        return not self.packets


BOTTOM = AbstractValue()


# --------------------------------------------------------------- lattices

class _Lattice:
    variant = "?"

    def __init__(self, net: Network):
        self.net = net
        self.store = net.store
        self.layout = net.layout

    def guard_formula(self, guard: Guard) -> Formula:
        return guard_to_formula(guard, self.store)

    def _field_nated(self, name: str, mask: int) -> bool:
        return bool((mask >> self.layout.index(name)) & 1)

    # value-level helpers shared by v1/ia (singleton values)

    def join_values(self, a: AbstractValue, b: AbstractValue) -> AbstractValue:
        return self.join([*a.packets, *b.packets])

    def curr_of(self, p) -> Formula:
        return p.curr

    def orig_of(self, p) -> Formula | None:
        return getattr(p, "orig", None)

    def nated_of(self, p) -> int:
        return getattr(p, "nated", 0)


class V1Lattice(_Lattice):
    """Single relational formula over the whole header."""

    variant = "v1"

    def initial(self, zone_name: str) -> list[AbstractPacket]:
        return [AbstractPacket(zone_departure_formula(self.net, zone_name))]

    def refine_match(self, p: AbstractPacket, guard: Guard):
        c = p.curr & self.guard_formula(guard)
        return None if c.is_empty() else AbstractPacket(c)

    def refine_unmatch(self, p: AbstractPacket, guard: Guard):
        c = p.curr & ~self.guard_formula(guard)
        return [] if c.is_empty() else [AbstractPacket(c)]

    def apply_nat(self, p: AbstractPacket, rule) -> AbstractPacket:
        return AbstractPacket(p.curr.overwrite_field(rule.nat_field, rule.action))

    def ledger_form(self, p: AbstractPacket) -> Formula:
        return p.curr

    def join(self, packets) -> AbstractValue:
        acc = self.store.false
        for p in packets:
            acc = acc | p.curr
        return BOTTOM if acc.is_empty() else AbstractValue((AbstractPacket(acc),))

    def value_equals(self, a: AbstractValue, b: AbstractValue) -> bool:
        if a.is_bottom() or b.is_bottom():
            return a.is_bottom() and b.is_bottom()
        return a.packets[0].curr == b.packets[0].curr


class V2Lattice(_Lattice):
    """curr/orig/nated packets with the keyed optimized join.

    Guard refinements touch orig only through atoms on fields that have not
    been NATed yet (those agree between curr and orig).  On the unmatched
    side a guard mixing NATed and un-NATed fields is decomposed into
    first-failing-atom pieces: negating only the un-NATed residue of such a
    guard into a single orig would either drop true originals or merge
    branches whose originals differ, losing the per-packet pair guarantee.
    """

    variant = "v2"

    def initial(self, zone_name: str) -> list[AbstractPacket]:
        f = zone_departure_formula(self.net, zone_name)
        return [AbstractPacket(f, f, 0)]

    def refine_match(self, p: AbstractPacket, guard: Guard):
        c = p.curr & self.guard_formula(guard)
        if c.is_empty():
            return None
        reduced = reduce_guard(guard, p.nated, self.layout)
        o = p.orig & self.guard_formula(reduced)
        return AbstractPacket(c, o, p.nated)

    def refine_unmatch(self, p: AbstractPacket, guard: Guard):
        gf = self.guard_formula(guard)
        if (p.curr & ~gf).is_empty():
            return []
        reduced = reduce_guard(guard, p.nated, self.layout)
        if len(reduced.atoms) == len(guard.atoms):
            # no atom touches a NATed field: the negation holds on orig too
            return [AbstractPacket(p.curr & ~gf, p.orig & ~gf, p.nated)]
        if not reduced.atoms:
            # guard only constrains NATed fields: says nothing about orig
            return [AbstractPacket(p.curr & ~gf, p.orig, p.nated)]
        pieces = []
        prefix_c, prefix_o = p.curr, p.orig
        for name, fvs in guard.atoms:
            atom = self.store.atom(fvs)
            nated = self._field_nated(name, p.nated)
            c = prefix_c & ~atom
            if not c.is_empty():
                o = prefix_o if nated else prefix_o & ~atom
                pieces.append(AbstractPacket(c, o, p.nated))
            prefix_c = prefix_c & atom
            if not nated:
                prefix_o = prefix_o & atom
        return pieces

    def apply_nat(self, p: AbstractPacket, rule) -> AbstractPacket:
        name = rule.nat_field
        bit = 1 << self.layout.index(name)
        p1 = update_original(p, rule, self.layout) if not p.nated & bit else p
        p2 = nat_packet(p1, rule)
        return AbstractPacket(p2.curr, p2.orig, p.nated | bit)

    def ledger_form(self, p: AbstractPacket) -> Formula:
        return p.orig

    def join(self, packets) -> AbstractValue:
        groups: dict[tuple[int, int], Formula] = {}
        for p in packets:
            key = (p.orig.node, p.nated)
            cur = groups.get(key)
            groups[key] = p.curr if cur is None else cur | p.curr
        merged = [
            AbstractPacket(curr, Formula(self.store, okey), nated)
            for (okey, nated), curr in sorted(groups.items())
        ]
        return AbstractValue(tuple(merged))

    def value_equals(self, a: AbstractValue, b: AbstractValue) -> bool:
        def keyed(v):
            return {(p.orig.node, p.nated): p.curr.node for p in v.packets}

        return keyed(a) == keyed(b)


class IALattice(_Lattice):
    """Per-field formula vector; sound over-approximation of v1."""

    variant = "ia"

    def initial(self, zone_name: str) -> list[VectorPacket]:
        zone = self.net.zone(zone_name)
        vec = []
        for name, _ in self.layout.fields:
            if name == "s":
                vec.append(self.store.atom(zone.addr))
            elif name == "sp" and zone.ports is not None:
                vec.append(self.store.atom(zone.ports))
            else:
                vec.append(self.store.true)
        return [VectorPacket(tuple(vec))]

    def curr_of(self, p: VectorPacket) -> Formula:
        prod = self.store.true
        for f in p.vec:
            prod = prod & f
        return prod

    def refine_match(self, p: VectorPacket, guard: Guard):
        vec = list(p.vec)
        for name, fvs in guard.atoms:
            i = self.layout.index(name)
            vec[i] = vec[i] & self.store.atom(fvs)
            if vec[i].is_empty():
                return None
        return VectorPacket(tuple(vec))

    def refine_unmatch(self, p: VectorPacket, guard: Guard):
        if guard.is_true():
            return []
        if len(guard.atoms) == 1:
            name, fvs = guard.atoms[0]
            i = self.layout.index(name)
            vec = list(p.vec)
            vec[i] = vec[i] & ~self.store.atom(fvs)
            return [] if vec[i].is_empty() else [VectorPacket(tuple(vec))]
        # negation of a multi-field guard is approximated as true
        return [p]

    def apply_nat(self, p: VectorPacket, rule) -> VectorPacket:
        vec = list(p.vec)
        vec[self.layout.index(rule.nat_field)] = self.store.atom(rule.action)
        return VectorPacket(tuple(vec))

    def ledger_form(self, p: VectorPacket) -> Formula:
        return self.curr_of(p)

    def join(self, packets) -> AbstractValue:
        packets = list(packets)
        if not packets:
            return BOTTOM
        vec = list(packets[0].vec)
        for p in packets[1:]:
            vec = [a | b for a, b in zip(vec, p.vec)]
        return AbstractValue((VectorPacket(tuple(vec)),))

    def value_equals(self, a: AbstractValue, b: AbstractValue) -> bool:
        if a.is_bottom() or b.is_bottom():
            return a.is_bottom() and b.is_bottom()
        return a.packets[0].vec == b.packets[0].vec


_LATTICES = {"v1": V1Lattice, "v2": V2Lattice, "ia": IALattice}

VARIANTS = tuple(_LATTICES)


def get_lattice(variant: str, net: Network):
    try:
        return _LATTICES[variant.lower()](net)
    except KeyError:
        raise EngineError(f"unknown analysis variant {variant!r}") from None


# --------------------------------------------------------------- results

@dataclass
class AnalysisStats:
    iterations: int = 0
    joins: int = 0
    wall_time_s: float = 0.0


@dataclass
class AnalysisResult:
    net: Network
    origin: str
    variant: str
    facts: dict[str, AbstractValue]
    ledger: DropLedger
    stats: AnalysisStats
    misdelivered: dict[str, Formula] = dc_field(default_factory=dict)
    no_route: dict[str, Formula] = dc_field(default_factory=dict)


def default_iteration_ceiling(net: Network) -> int:
    return 10 * max(1, len(net.links)) * (1 << min(net.layout.total_bits, 20))


def join(a: AbstractValue, b: AbstractValue, lattice) -> AbstractValue:
    return lattice.join_values(a, b)


def value_equals(a: AbstractValue, b: AbstractValue, lattice) -> bool:
    return lattice.value_equals(a, b)


def analyze(
    net: Network,
    origin: str,
    variant: str = "v2",
    *,
    worklist: str = "fifo",
    max_iterations: int | None = None,
    observer=None,
    _initial=None,
) -> AnalysisResult:
    """Run the propagation to fixpoint from ``origin`` and collect per-node
    values, the drop ledger, and diagnostics.

    ``worklist`` selects the queue discipline ("fifo" or "lifo"); the
    fixpoint is the same either way.  ``observer(node, old, new)`` is called
    on every accepted value update (used by monotonicity tests).
    """
    if not net.is_zone(origin):
        raise EngineError(f"origin {origin!r} is not a zone of the network")
    if worklist not in ("fifo", "lifo"):
        raise EngineError(f"unknown worklist discipline {worklist!r}")
    lattice = get_lattice(variant, net)
    ceiling = max_iterations if max_iterations is not None else default_iteration_ceiling(net)
    started = time.perf_counter()

    facts: dict[str, AbstractValue] = {n: BOTTOM for n in net.node_names()}
    ledger = DropLedger(net.store)
    stats = AnalysisStats()

    initial_packets = lattice.initial(origin) if _initial is None else list(_initial)
    facts[origin] = lattice.join(initial_packets)
    stats.joins += 1

    arrivals: dict[str, Formula] = {z.name: net.store.false for z in net.zones}
    queue: deque[str] = deque([origin])
    queued = {origin}
    while queue:
        stats.iterations += 1
        if stats.iterations > ceiling:
            raise IterationCeilingExceeded(
                f"no fixpoint within {ceiling} node expansions "
                f"(origin {origin!r}, variant {variant!r})"
            )
        m = queue.popleft() if worklist == "fifo" else queue.pop()
        queued.discard(m)
        for own_iface, _, peer in net.out_links(m):
            out = link_tf(net, m, own_iface, facts[m].packets, ledger, lattice)
            if not out:
                continue
            if net.is_zone(peer):
                for p in out:
                    arrivals[peer] = arrivals[peer] | lattice.curr_of(p)
            new_value = lattice.join([*facts[peer].packets, *out])
            stats.joins += 1
            if lattice.value_equals(facts[peer], new_value):
                continue
            if observer is not None:
                observer(peer, facts[peer], new_value)
            facts[peer] = new_value
            # zones record arrivals but never re-emit
            if not net.is_zone(peer) and peer not in queued:
                queue.append(peer)
                queued.add(peer)

    stats.wall_time_s = time.perf_counter() - started
    return AnalysisResult(
        net, origin, lattice.variant, facts, ledger, stats,
        misdelivered=_misdelivery(net, arrivals),
        no_route=_no_route(net, lattice, facts),
    )


def _misdelivery(net: Network, arrivals: dict[str, Formula]) -> dict[str, Formula]:
    """Arrivals at a zone whose destination lies outside the zone's addresses.

    Assumption-checking diagnostic: such packets stay in the zone's value but
    are surfaced here instead of being silently intersected away.  The
    origin's own departure value is not an arrival.
    """
    out: dict[str, Formula] = {}
    for zone in net.zones:
        bad = arrivals[zone.name] & ~net.zone_dst_atom(zone)
        if not bad.is_empty():
            out[zone.name] = bad
    return out


def _no_route(net: Network, lattice, facts) -> dict[str, Formula]:
    """Packets that clear a firewall's tables but match no routing guard."""
    out: dict[str, Formula] = {}
    for fw in net.firewalls:
        value = facts[fw.name]
        if value.is_bottom():
            continue
        s = nat_table_tf(fw.dnat, value.packets, lattice)
        s = filter_table_tf(fw.filter, s, None, lattice)
        s = nat_table_tf(fw.snat, s, lattice)
        if not s:
            continue
        survivors = net.store.false
        for p in s:
            survivors = survivors | lattice.curr_of(p)
        routed = net.store.false
        for _, guard in fw.routing:
            routed = routed | guard_to_formula(guard, net.store)
        leftover = survivors & ~routed
        if not leftover.is_empty():
            out[fw.name] = leftover
    return out
