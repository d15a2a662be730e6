import json
import sys
from pathlib import Path

import pytest

from protonet.analyzer import analyze
from protonet.policy import AccessControlList, AnalysisContext, Manifest, templates_from_json
from protonet.wire import parse_protocol

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).parent / "fixtures"
PROTOCOLS = FIXTURES / "protocols"
SCENARIOS = FIXTURES / "scenarios"
GOLDEN = FIXTURES / "golden"
CONFIG = FIXTURES / "config"

SCENARIO_NAMES = ("pta", "pay-grant", "pay-refuse", "missing-protocol", "creditcard-reject")


def load_protocol(name):
    return parse_protocol((PROTOCOLS / f"{name}.protocol.json").read_bytes())


def load_config(name):
    return json.loads((CONFIG / name).read_text())


@pytest.fixture
def pta():
    return load_protocol("pta")


@pytest.fixture
def manifest():
    return Manifest.from_json(load_config("manifest.json"))


@pytest.fixture
def permissive_ctx(manifest):
    return AnalysisContext(manifest, AccessControlList.from_json(load_config("acl-permissive.json")))


@pytest.fixture
def analyze_with(manifest):
    def run(net, acl=None, templates=None, author="*"):
        ctx = AnalysisContext(
            manifest,
            AccessControlList.from_json(acl or {}),
            tuple(templates_from_json(templates or [])),
            author,
        )
        return analyze(net, ctx)

    return run
