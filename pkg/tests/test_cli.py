from __future__ import annotations

import json

import pytest

from helpers import bracket_to_formula, facts_line, packet_text_to_formulas
from pktflow.cli import main
from pktflow.engine import analyze, get_lattice
from pktflow.gen import fixture_path, fixture_text
from pktflow.netmodel import load_network, network_from_config, parse_value_set
from pktflow.render import (
    format_field_data,
    format_field_display,
    formula_fields,
    packet_to_text,
    render_value,
    value_to_text,
)

FIG3 = str(fixture_path("fig3.json"))
FIG3_SMALL = str(fixture_path("fig3-small.json"))
FIG1 = str(fixture_path("fig1.json"))


@pytest.fixture
def fig3():
    return load_network(fixture_text("fig3.json"))


def atom(net, field, text):
    return net.store.atom(parse_value_set(text, field, net.layout.width(field)))


# ------------------------------------------------------------- formatting

def test_format_field_display_forms():
    assert format_field_display(((0, 15),), 4) == "true"
    assert format_field_display((), 4) == "false"
    assert format_field_display(((3, 3),), 4) == "3"
    assert format_field_display(((1, 2), (5, 5)), 4) == "{1-2, 5}"
    # complement shorter than three positive ranges
    assert format_field_display(((0, 2), (4, 9), (11, 15)), 4) == "!{3, 10}"


def test_format_field_data_parses_back():
    for ranges, width in [
        (((0, 15),), 4),
        (((3, 3),), 4),
        (((1, 2), (5, 5)), 4),
        (((0, 2), (4, 9), (11, 15)), 4),
        (((0x0AC01D01, 0x0AC01DFF),), 32),
    ]:
        text = format_field_data(ranges, width)
        assert parse_value_set(text, "s", width).ranges == ranges or (
            parse_value_set(text, "s", width).negated
        )


def test_dotted_display(fig3):
    f = atom(fig3, "s", "202.67.34.6-10")
    sets, exact = formula_fields(f, fig3.layout)
    assert format_field_display(sets["s"], 32) == "202.67.34.6-10"
    assert format_field_display(sets["d"], 32) == "true"
    assert exact == {"s": True, "d": True}


def test_value_to_text_fig3(fig3):
    res = analyze(fig3, "Z1", "v2")
    assert (
        value_to_text(res.facts["Z2"], "v2", fig3)
        == "<[202.67.34.6-10 : 10.192.28.1-255] [10.192.29.1-255 : 10.192.28.1-255]>"
    )
    assert value_to_text(res.facts["Z3"], "v2", fig3) == "(unreachable)"


def test_relational_value_gets_approx_flags():
    # one packet whose unmatched guard couples s and d
    cfg = {
        "layout": [{"name": "s", "width": 3}, {"name": "d", "width": 3}],
        "zones": [
            {"name": "A", "interface": "a", "addr": "0-3"},
            {"name": "B", "interface": "b", "addr": "4-7"},
        ],
        "firewalls": [
            {
                "name": "F",
                "interfaces": ["fa", "fb"],
                "filter": [
                    {"guard": {"s": "1-2", "d": "5-6"}, "action": "DROP"},
                    {"guard": {}, "action": "ACCEPT"},
                ],
                "routing": {"fb": {"d": "4-7"}},
            }
        ],
        "links": [["a", "fa"], ["b", "fb"]],
    }
    net = network_from_config(cfg)
    res = analyze(net, "A", "v1")
    (rp,) = render_value(res.facts["B"], "v1", net)
    assert rp.curr_exact == {"s": False, "d": False}
    assert "(approx: s, d)" in packet_to_text(rp, net.layout)


@pytest.mark.parametrize("fixture", ["fig1.json", "fig3.json", "fig3-small.json"])
@pytest.mark.parametrize("variant", ["v1", "v2", "ia"])
def test_fully_exact_rendering_reparses_to_original(fixture, variant):
    """When every field is flagged exact, the rendered per-field product is
    the formula, not an approximation of it."""
    net = load_network(fixture_text(fixture))
    res = analyze(net, "Z1", variant)
    lat = get_lattice(variant, net)
    layout = net.layout

    def rebuild(sets):
        f = net.store.true
        for name, width in layout.fields:
            text = format_field_data(sets[name], width)
            f = f & net.store.atom(parse_value_set(text, name, width))
        return f

    for node in net.node_names():
        packets = res.facts[node].packets
        currs = {lat.curr_of(p) for p in packets}
        origs = {lat.orig_of(p) for p in packets}
        for rendered in render_value(res.facts[node], variant, net):
            if all(rendered.curr_exact.values()):
                assert rebuild(rendered.curr) in currs, (fixture, variant, node)
            if rendered.orig is not None and all(rendered.orig_exact.values()):
                assert rebuild(rendered.orig) in origs, (fixture, variant, node)


def test_rendering_orders_packets_deterministically(fig3):
    lat = get_lattice("v2", fig3)
    p1 = lat.initial("Z1")[0]
    p2 = lat.initial("Z2")[0]
    v_ab = lat.join([p1, p2])
    v_ba = lat.join([p2, p1])
    assert render_value(v_ab, "v2", fig3) == render_value(v_ba, "v2", fig3)


# ------------------------------------------------------------- CLI commands

def test_validate_ok(capsys):
    assert main(["validate", "--network", FIG3]) == 0
    out = capsys.readouterr().out
    assert out.startswith("OK: 4 zones, 2 firewalls, 7 rules, 5 links")


def test_validate_bad_config(tmp_path, capsys):
    cfg = json.loads(fixture_text("fig3.json"))
    cfg["firewalls"][0]["filter"] = cfg["firewalls"][0]["filter"][:-1]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(cfg))
    assert main(["validate", "--network", str(bad)]) == 2
    assert "missing default rule" in capsys.readouterr().err


def test_unknown_flag_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["analyze", "--network", FIG3, "--origin", "Z1", "--bogus"])
    assert exc.value.code == 2


def test_missing_file_exits_2(capsys):
    assert main(["validate", "--network", "/nonexistent.json"]) == 2
    assert "error" in capsys.readouterr().err


def test_analyze_text_matches_published_block(fig3, capsys):
    assert main(["analyze", "--network", FIG3, "--origin", "Z1", "--variant", "v2"]) == 0
    out = capsys.readouterr().out
    assert facts_line(out, "Z3") == "(unreachable)"
    curr, orig = packet_text_to_formulas(facts_line(out, "Z2"), fig3)
    assert curr == atom(fig3, "s", "202.67.34.6-10") & atom(fig3, "d", "10.192.28.1-255")
    assert orig == atom(fig3, "s", "10.192.29.1-255") & atom(fig3, "d", "10.192.28.1-255")
    assert "dropped(1) = [10.192.29.1-255 : 209.85.153.85]" in out
    assert "dropped(5) = [10.192.29.1-255 : 202.65.23.2]" in out


def test_analyze_output_byte_stable(capsys):
    main(["analyze", "--network", FIG3, "--origin", "Z1"])
    first = capsys.readouterr().out
    main(["analyze", "--network", FIG3, "--origin", "Z1"])
    second = capsys.readouterr().out
    assert first == second
    main(["analyze", "--network", FIG1, "--origin", "Z1"])
    third = capsys.readouterr().out
    main(["analyze", "--network", FIG1, "--origin", "Z1"])
    assert third == capsys.readouterr().out


def test_analyze_json_roundtrips_membership(fig3, capsys):
    assert main(["analyze", "--network", FIG3, "--origin", "Z1", "--format", "json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["schema"] == "pktflow-analysis-1"
    assert doc["variant"] == "v2" and doc["origin"] == "Z1"
    assert doc["facts"]["Z3"] == []
    res = analyze(fig3, "Z1", "v2")
    layout = fig3.layout
    for node in ("Z2", "Z4"):
        (entry,) = doc["facts"][node]
        assert all(entry["curr_exact"].values())
        rebuilt = fig3.store.true
        for name, width in layout.fields:
            rebuilt = rebuilt & fig3.store.atom(
                parse_value_set(entry["curr"][name], name, width)
            )
        assert rebuilt == res.facts[node].packets[0].curr
        assert entry["nated"] == ["s"]
    assert doc["ledger"]["1"] == {"s": "10.192.29.1-255", "d": "209.85.153.85"}


def test_analyze_misdelivery_exits_1(tmp_path, capsys):
    cfg = {
        "layout": [{"name": "s", "width": 3}, {"name": "d", "width": 3}],
        "zones": [
            {"name": "A", "interface": "a", "addr": "0-3"},
            {"name": "B", "interface": "b", "addr": "4-5"},
        ],
        "firewalls": [
            {
                "name": "F",
                "interfaces": ["fa", "fb"],
                "filter": [{"guard": {}, "action": "ACCEPT"}],
                "routing": {"fb": {"d": "4-7"}},
            }
        ],
        "links": [["a", "fa"], ["b", "fb"]],
    }
    path = tmp_path / "mis.json"
    path.write_text(json.dumps(cfg))
    assert main(["analyze", "--network", str(path), "--origin", "A"]) == 1
    assert "misdelivered(B)" in capsys.readouterr().out


def test_policy_text_and_exit(capsys):
    assert main(["policy", "--network", FIG3, "--zone", "Z1"]) == 0
    out = capsys.readouterr().out
    assert "accept(Z1) = [10.192.29.1-255 : !{10.192.29.1-255, 202.65.23.2, 209.85.153.85}]" in out
    assert "reject(Z1) = [10.192.29.1-255 : {202.65.23.2, 209.85.153.85}]" in out
    assert "overlap(Z1) = (empty)" in out
    assert main(["policy", "--network", FIG3, "--zone", "Z1", "--strict"]) == 0


def test_policy_strict_flags_overlap(tmp_path, capsys):
    cfg = {
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
    path = tmp_path / "overlap.json"
    path.write_text(json.dumps(cfg))
    assert main(["policy", "--network", str(path), "--zone", "A"]) == 0
    assert main(["policy", "--network", str(path), "--zone", "A", "--strict"]) == 1
    out = capsys.readouterr().out
    assert "overlap(A) = [0-3 : 4-7]" in out


def test_policy_json(capsys):
    assert main(["policy", "--network", FIG3, "--zone", "Z1", "--format", "json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["schema"] == "pktflow-policy-1"
    assert doc["overlap"] is None
    assert doc["reject"]["d"] == "202.65.23.2,209.85.153.85"


def test_check_fixture_equal(capsys):
    assert main(["check", "--network", FIG3_SMALL, "--origin", "Z1", "--variant", "v1"]) == 0
    out = capsys.readouterr().out
    assert "EQUAL at all 6 nodes" in out


def test_check_ia_sound(capsys):
    assert main(["check", "--network", FIG3_SMALL, "--origin", "Z1", "--variant", "ia"]) == 0
    out = capsys.readouterr().out
    assert "SOUND at all 6 nodes" in out
    assert "Z4: SUPERSET" in out


def test_check_requires_origin(capsys):
    assert main(["check", "--network", FIG3_SMALL]) == 2


def test_check_width_guard(capsys):
    assert main(["check", "--network", FIG3, "--origin", "Z1"]) == 2
    assert "guard" in capsys.readouterr().err


def test_check_trials(capsys):
    assert main(["check", "--trials", "5", "--seed", "1000", "--variant", "v2"]) == 0
    assert "5 trials (v2): all OK" in capsys.readouterr().out


def test_check_json(capsys):
    assert main([
        "check", "--network", FIG3_SMALL, "--origin", "Z1",
        "--variant", "v2", "--format", "json",
    ]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["ok"] is True
    assert {n["status"] for n in doc["nodes"]} == {"equal"}


def test_testgen_text(capsys):
    assert main(["testgen", "--network", FIG3, "--origin", "Z1"]) == 0
    out = capsys.readouterr().out
    assert "Z2: orig=[10.192.29.1 : 10.192.28.1] arrival=[202.67.34.6 : 10.192.28.1]" in out
    assert "Z3:" not in out
    main(["testgen", "--network", FIG3, "--origin", "Z1"])
    assert out == capsys.readouterr().out


def test_testgen_json(capsys):
    assert main([
        "testgen", "--network", FIG3, "--origin", "Z1", "--per-pair", "2",
        "--format", "json",
    ]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["schema"] == "pktflow-testgen-1"
    zones = {w["zone"] for w in doc["witnesses"]}
    assert zones == {"Z2", "Z4"}


def test_testgen_rejects_other_variants(capsys):
    assert main([
        "testgen", "--network", FIG3, "--origin", "Z1", "--variant", "v1",
    ]) == 2


def test_out_file(tmp_path, capsys):
    path = tmp_path / "out.txt"
    assert main(["analyze", "--network", FIG3, "--origin", "Z1", "--out", str(path)]) == 0
    assert capsys.readouterr().out == ""
    assert "facts(Z2)" in path.read_text()
