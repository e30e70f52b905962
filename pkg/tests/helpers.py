"""Shared test utilities: display-format parsing and concrete table oracles."""

from __future__ import annotations

from pktflow.netmodel import DROP, Guard, Network, parse_value_set
from pktflow.pktset import Formula


def display_to_grammar(text: str) -> str:
    """Convert the CLI's display value-set form back to the config grammar."""
    text = text.strip()
    if text == "true":
        return "*"
    neg = text.startswith("!")
    if neg:
        text = text[1:]
    if text.startswith("{") and text.endswith("}"):
        text = text[1:-1]
    text = ",".join(part.strip() for part in text.split(","))
    return ("!" if neg else "") + text


def bracket_to_formula(bracket: str, net: Network) -> Formula:
    """Parse one display bracket group '[a : b : ...]' into a formula."""
    body = bracket.strip()
    assert body.startswith("[") and body.endswith("]"), bracket
    parts = body[1:-1].split(" : ")
    layout = net.layout
    assert len(parts) == layout.field_count, bracket
    f = net.store.true
    for (name, width), part in zip(layout.fields, parts):
        f = f & net.store.atom(parse_value_set(display_to_grammar(part), name, width))
    return f


def packet_text_to_formulas(text: str, net: Network) -> list[Formula]:
    """Parse '<[..] [..]>' into [curr, orig] (or [curr]) formulas."""
    body = text.strip()
    assert body.startswith("<") and body.endswith(">"), text
    groups = []
    depth = 0
    start = None
    for i, ch in enumerate(body):
        if ch == "[":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "]":
            depth -= 1
            if depth == 0:
                groups.append(body[start : i + 1])
    return [bracket_to_formula(g, net) for g in groups]


def facts_line(output: str, node: str) -> str:
    for line in output.splitlines():
        if line.startswith(f"facts({node}) = "):
            return line.split(" = ", 1)[1]
    raise AssertionError(f"no facts line for {node}")


# ---------------------------------------------------------- concrete tables

def concrete_filter(rules, layout, header: int) -> bool:
    """First-match filter semantics on one concrete header."""
    for r in rules:
        if r.guard.matches(layout, header):
            return r.action != DROP
    return True


def concrete_nat(rules, layout, header: int) -> list[int]:
    """First-match NAT semantics: all possible rewrites of one header."""
    for r in rules:
        if r.guard.matches(layout, header):
            return [layout.with_value(header, r.nat_field, v) for v in r.action.values()]
    return [header]


def guard_of(layout, **atoms) -> Guard:
    """Build a Guard from field=value-set-string keyword arguments."""
    parsed = tuple(
        (name, parse_value_set(text, name, layout.width(name)))
        for name, text in atoms.items()
    )
    return Guard(tuple(sorted(parsed, key=lambda a: layout.index(a[0]))))
