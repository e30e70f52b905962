from __future__ import annotations

import pytest

from pktflow.engine import analyze
from pktflow.gen import fixture_text, random_network
from pktflow.netmodel import load_network, network_from_config, parse_value_set
from pktflow.oracle import simulate
from pktflow.policy import (
    PolicyError,
    generate_test_packets,
    infer_policy,
    overlap_report,
)


@pytest.fixture
def fig3():
    return load_network(fixture_text("fig3.json"))


@pytest.fixture
def small3():
    return load_network(fixture_text("fig3-small.json"))


def atom(net, field, text):
    return net.store.atom(parse_value_set(text, field, net.layout.width(field)))


def all_headers(net, formula):
    return set(formula.enumerate(1 << net.layout.total_bits))


# ------------------------------------------------------------- fig3 policy

def test_fig3_accept_formula(fig3):
    summary = infer_policy(fig3, "Z1")
    expected = atom(fig3, "s", "10.192.29.1-255") & ~(
        atom(fig3, "d", "10.192.29.1-255")
        | atom(fig3, "d", "209.85.153.85")
        | atom(fig3, "d", "202.65.23.2")
    )
    assert summary.accept == expected


def test_fig3_reject_formula(fig3):
    summary = infer_policy(fig3, "Z1")
    expected = atom(fig3, "s", "10.192.29.1-255") & (
        atom(fig3, "d", "202.65.23.2") | atom(fig3, "d", "209.85.153.85")
    )
    assert summary.reject == expected


def test_fig3_overlap_empty(fig3):
    summary = infer_policy(fig3, "Z1")
    assert summary.overlap.is_empty()
    assert overlap_report(summary) == []


def test_accept_is_union_of_other_zones_origs(small3):
    summary = infer_policy(small3, "Z1")
    recomputed = small3.store.false
    for z in small3.zones:
        if z.name == "Z1":
            continue
        for p in summary.result.facts[z.name].packets:
            recomputed = recomputed | p.orig
    assert summary.accept == recomputed


def test_reject_matches_oracle_drops(small3):
    summary = infer_policy(small3, "Z1")
    sim = simulate(small3, "Z1")
    dropped = set()
    for origs in sim.per_rule_dropped.values():
        dropped |= origs
    assert all_headers(small3, summary.reject) == dropped


def test_policy_requires_v2(small3):
    res = analyze(small3, "Z1", "v1")
    with pytest.raises(PolicyError):
        infer_policy(small3, "Z1", result=res)


def test_policy_origin_mismatch(small3):
    res = analyze(small3, "Z2", "v2")
    with pytest.raises(PolicyError):
        infer_policy(small3, "Z1", result=res)


ACCEPT_ALL_NET = {
    "layout": [{"name": "s", "width": 3}, {"name": "d", "width": 3}],
    "zones": [
        {"name": "A", "interface": "a", "addr": "0-3"},
        {"name": "B", "interface": "b", "addr": "4-7"},
    ],
    "firewalls": [
        {
            "name": "F",
            "interfaces": ["fa", "fb"],
            "filter": [{"guard": {}, "action": "ACCEPT"}],
            "routing": {"fb": {"d": "4-7"}, "fa": {"d": "0-3"}},
        }
    ],
    "links": [["a", "fa"], ["b", "fb"]],
}


def test_default_accept_net_has_empty_reject():
    net = network_from_config(ACCEPT_ALL_NET)
    summary = infer_policy(net, "A")
    assert summary.reject.is_empty()
    assert summary.overlap.is_empty()


# nondeterministic routing: the same packets reach zone B on one interface
# and a dropping firewall on the other
OVERLAP_NET = {
    "layout": [{"name": "s", "width": 3}, {"name": "d", "width": 3}],
    "zones": [
        {"name": "A", "interface": "a", "addr": "0-3"},
        {"name": "B", "interface": "b", "addr": "4-7"},
    ],
    "firewalls": [
        {
            "name": "F1",
            "interfaces": ["f1a", "f1b", "f1x"],
            "filter": [{"guard": {}, "action": "ACCEPT"}],
            "routing": {"f1b": {"d": "4-7"}, "f1x": {"d": "4-7"}},
        },
        {
            "name": "F2",
            "interfaces": ["f2x"],
            "filter": [{"id": 1, "guard": {}, "action": "DROP"}],
            "routing": {},
        },
    ],
    "links": [["a", "f1a"], ["b", "f1b"], ["f1x", "f2x"]],
}


def test_nondeterministic_routing_overlap():
    net = network_from_config(OVERLAP_NET)
    summary = infer_policy(net, "A")
    expected = atom(net, "s", "0-3") & atom(net, "d", "4-7")
    assert summary.accept == expected
    assert summary.reject == expected
    assert summary.overlap == expected

    report = overlap_report(summary)
    assert dict(report)["s"] == ((0, 3),)
    assert dict(report)["d"] == ((4, 7),)

    sim = simulate(net, "A")
    dropped = set().union(*sim.per_rule_dropped.values())
    delivered = sim.origs("B")
    assert all_headers(net, summary.overlap) == dropped & delivered


def test_overlap_empty_when_reject_empty():
    net = network_from_config(ACCEPT_ALL_NET)
    summary = infer_policy(net, "A")
    assert overlap_report(summary) == []


# ------------------------------------------------------------- test packets

def test_fig3_witnesses(fig3):
    witnesses = generate_test_packets(fig3, "Z1", 2)
    zones = {w.zone for w in witnesses}
    assert "Z2" in zones and "Z4" in zones and "Z3" not in zones and "Z1" not in zones
    layout = fig3.layout
    for w in witnesses:
        if w.zone == "Z2":
            assert 0x0AC01D01 <= layout.extract_value(w.orig, "s") <= 0x0AC01DFF
            assert 0xCA432206 <= layout.extract_value(w.curr, "s") <= 0xCA43220A
            # destination survives un-NATed
            assert layout.extract_value(w.curr, "d") == layout.extract_value(w.orig, "d")


def test_witnesses_deterministic(fig3):
    a = generate_test_packets(fig3, "Z1", 3)
    b = generate_test_packets(fig3, "Z1", 3)
    assert a == b


def test_per_pair_exhausts_without_repeats(small3):
    res = analyze(small3, "Z1", "v2")
    witnesses = generate_test_packets(small3, "Z1", 10_000, result=res)
    by_zone_packet: dict[str, list] = {}
    for w in witnesses:
        by_zone_packet.setdefault(w.zone, []).append(w)
    for z in small3.zones:
        if z.name == "Z1":
            continue
        expected = sum(p.orig.count() for p in res.facts[z.name].packets)
        got = by_zone_packet.get(z.name, [])
        assert len(got) == expected
        assert len({(w.orig, w.curr) for w in got}) == len(got)


def test_per_pair_validation(small3):
    with pytest.raises(PolicyError):
        generate_test_packets(small3, "Z1", 0)


@pytest.mark.parametrize("fixture", ["fig1-small.json", "fig3-small.json"])
def test_witnesses_are_oracle_realizable(fixture):
    net = load_network(fixture_text(fixture))
    sim = simulate(net, "Z1")
    for w in generate_test_packets(net, "Z1", 4):
        assert (w.curr, w.orig) in sim.pairs(w.zone), w


@pytest.mark.parametrize("seed", range(5000, 5015))
def test_witnesses_realizable_on_random_nets(seed):
    cfg, origin = random_network(seed)
    net = network_from_config(cfg)
    sim = simulate(net, origin)
    for w in generate_test_packets(net, origin, 3):
        assert (w.curr, w.orig) in sim.pairs(w.zone), (seed, w)
