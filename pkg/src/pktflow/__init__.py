"""Static packet-flow analysis for IP networks.

Computes, per network node, a symbolic description of every packet that can
reach it from an origin zone (through NAT rewrites and routing cycles),
tracks pre-NAT original forms, infers per-zone accept/reject policies, and
can certify itself against an exhaustive concrete simulator at small header
widths.
"""

from .engine import AbstractValue, AnalysisResult, analyze
from .netmodel import (
    ConfigError,
    Network,
    load_network,
    load_network_file,
    network_from_config,
    network_to_config,
)
from .oracle import compare, concretize, simulate
from .pktset import FieldValueSet, Formula, FormulaStore, HeaderLayout
from .policy import PolicySummary, generate_test_packets, infer_policy

__version__ = "0.1.0"

__all__ = [
    "AbstractValue",
    "AnalysisResult",
    "ConfigError",
    "FieldValueSet",
    "Formula",
    "FormulaStore",
    "HeaderLayout",
    "Network",
    "PolicySummary",
    "analyze",
    "compare",
    "concretize",
    "generate_test_packets",
    "infer_policy",
    "load_network",
    "load_network_file",
    "network_from_config",
    "network_to_config",
    "simulate",
]
