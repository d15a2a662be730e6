import json

import pytest
from hypothesis import given, settings, strategies as st

from conftest import load_config, load_protocol
from oracles import enumerate_shapes, oracle_unsafe, shape_to_net
from protonet.analyzer import (
    MarkKind, analyze, check_privacy, check_semantics, check_templates, detect_loops, merge_marks,
    propagate_safety, guarantee, unsafe,
)
from protonet.model import ActionSpec, Place, RecvSpec, SendSpec, Transition, chain, make_net
from protonet.policy import (
    AccessControlList, ActionPattern, ActionTemplate, AnalysisContext, Manifest, RecvPattern, SendPattern,
)
from protonet.predicates import parse_pred

SHAPES = list(enumerate_shapes())


def act(tid, kind, name, label=None):
    return Transition(tid, None, ActionSpec(label or f"A{tid[1:]}", kind, name))


def kinds(marks):
    return {n: m.kind.value for n, m in marks.items()}


# -- check_semantics ----------------------------------------------------------

def linear(*transitions, peers=()):
    n = len(transitions)
    places = [f"P{i}" for i in range(n + 1)]
    nodes = [x for pair in zip(places, [t.id for t in transitions]) for x in pair] + [places[-1]]
    return make_net(peers=peers, places=places, transitions=transitions, arcs=chain(*nodes), finals=[places[-1]])


def test_semantics_known_function(manifest):
    assert check_semantics(linear(act("T1", "execute", "Makechoice")), manifest) == {}


def test_semantics_unknown_and_mismatch(manifest):
    marks = check_semantics(linear(act("T1", "execute", "Nonexistent")), Manifest())
    assert marks["T1"].reason == "unknown function"
    marks = check_semantics(linear(act("T1", "read", "Makechoice")), manifest)
    assert marks["T1"].reason == "kind mismatch"
    marks = check_semantics(linear(act("T1", "execute", "CreditCard")), manifest)
    assert marks["T1"].reason == "kind mismatch"


def test_semantics_dependents(manifest):
    from protonet.model import ResultsOf
    net = linear(
        act("T1", "execute", "Nope"),
        Transition("T2", parse_pred("(> (result A1) 3)")),
        Transition("T3", None, SendSpec("S3", "Inform", "*", ResultsOf("A1"))),
    )
    marks = check_semantics(net, manifest)
    assert kinds(marks) == {"T1": "unsafe", "T2": "unsafe", "T3": "unsafe"}
    assert marks["T3"].reason == "references unsafe node"


# -- detect_loops -------------------------------------------------------------

def test_loops():
    acyclic = linear(Transition("T1"))
    assert detect_loops(acyclic) == {}
    spin = make_net(places=["P0", "P1", "P2"], transitions=["T0", "T1", "T2"],
                    arcs=chain("P0", "T0", "P1", "T1", "P1") + chain("P1", "T2", "P2"), finals=["P2"])
    assert set(detect_loops(spin)) == {"P1", "T1"}
    assert detect_loops(spin)["T1"].reason == "unbounded loop"
    gated = make_net(
        peers=["Peer"],
        places=["P0", "P1", Place("P2", RecvSpec("R1", "Ping", "Peer")), "P3"],
        transitions=["T0", "T1", "T2", "T3"],
        arcs=chain("P0", "T0", "P1", "T1", "P2", "T2", "P1") + chain("P1", "T3", "P3"), finals=["P3"])
    assert detect_loops(gated) == {}
    guarded = make_net(places=["P0", "P1", "P2"],
                       transitions=["T0", Transition("T1", parse_pred("(== 1 1)")), "T2"],
                       arcs=chain("P0", "T0", "P1", "T1", "P1") + chain("P1", "T2", "P2"), finals=["P2"])
    assert detect_loops(guarded) == {}


def bounded_firings(net, start, limit):
    """How many times the token game can fire without any message input, capped at *limit*."""
    marking = {start: 1}
    fired = 0
    while fired < limit:
        enabled = [t.id for t in net.transitions
                   if net.pred[t.id] and all(marking.get(p, 0) for p in net.pred[t.id])
                   and not any(net.place_map[p].is_recv for p in net.succ[t.id])]
        loop = [t for t in enabled if t == "T1"]
        if not loop:
            break
        for p in net.pred["T1"]:
            marking[p] -= 1
        for p in net.succ["T1"]:
            marking[p] = marking.get(p, 0) + 1
        fired += 1
    return fired


def test_loop_oracle():
    spin = make_net(places=["P0", "P1", "P2"], transitions=["T0", "T1", "T2"],
                    arcs=chain("P0", "T0", "P1", "T1", "P1") + chain("P1", "T2", "P2"), finals=["P2"])
    assert bounded_firings(spin, "P1", 1000) == 1000
    gated = make_net(
        peers=["Peer"], places=["P0", "P1", Place("P2", RecvSpec("R1", "Ping", "Peer")), "P3"],
        transitions=["T0", "T1", "T2", "T3"],
        arcs=chain("P0", "T0", "P1", "T1", "P2", "T2", "P1") + chain("P1", "T3", "P3"), finals=["P3"])
    assert bounded_firings(gated, "P1", 1000) == 0


# -- check_privacy ------------------------------------------------------------

def test_privacy():
    net = linear(act("T1", "read", "DriversLicense"))
    assert check_privacy(net, AccessControlList(), "bob")["T1"].reason == "privacy"
    net = linear(act("T1", "execute", "Makechoice"))
    acl = AccessControlList.from_json({"*": {"Makechoice": ["execute"]}})
    assert check_privacy(net, acl, "bob") == {}
    net = linear(act("T1", "write", "CreditCard"))
    acl = AccessControlList.from_json({"bob": {"CreditCard": ["read"]}})
    assert "T1" in check_privacy(net, acl, "bob")


def test_default_deny():
    net = linear(act("T1", "execute", "f"), act("T2", "read", "v"), act("T3", "write", "v"))
    assert set(check_privacy(net, AccessControlList(), "anyone")) == {"T1", "T2", "T3"}


# -- check_templates ----------------------------------------------------------

PAY = ActionPattern("execute", "Pay")
WANT = SendPattern("WantToBuyItem")
DELIVERY = RecvPattern("Delivery", "Shop")


def shop_net(with_want=True, delivery_branches=2):
    """WantToBuyItem -> Pay -> (Delivery on 0, 1 or 2 of the two branches) -> finals."""
    places = ["P0", "P1", "P2", "P5", "P6"]
    d = Place("P3", RecvSpec("R1", "Delivery", "Shop"))
    d2 = Place("P4", RecvSpec("R2", "Delivery", "Shop")) if delivery_branches == 2 else "P4"
    if delivery_branches == 0:
        d = "P3"
    first = Transition("T1", None, SendSpec("S1", "WantToBuyItem", "Shop")) if with_want else "T1"
    return make_net(
        peers=["Shop"], places=places + [d, d2],
        transitions=[first, act("T2", "execute", "Pay"), Transition("T3", parse_pred('(== 1 1)')),
                     Transition("T4", parse_pred('(!= 1 1)')), "T5", "T6"],
        arcs=chain("P0", "T1", "P1", "T2", "P2") + chain("P2", "T3", "P3", "T5", "P5")
        + chain("P2", "T4", "P4", "T6", "P6"),
        finals=["P5", "P6"],
    )


def test_templates_satisfied():
    tpl = ActionTemplate(PAY, past=(WANT,), future=(DELIVERY,))
    assert check_templates(shop_net(), [tpl]) == {}


def test_templates_missing_past():
    tpl = ActionTemplate(PAY, past=(WANT,), future=(DELIVERY,))
    marks = check_templates(shop_net(with_want=False), [tpl])
    assert marks["T2"].kind is MarkKind.UNSAFE and marks["T2"].reason == "missing past precondition"


def test_templates_guarantee_on_one_branch():
    tpl = ActionTemplate(PAY, past=(WANT,), future=(DELIVERY,))
    marks = check_templates(shop_net(delivery_branches=1), [tpl])
    assert marks["T2"].kind is MarkKind.GUARANTEE and marks["T2"].obligations == (DELIVERY,)


def test_templates_missing_future_send():
    tpl = ActionTemplate(PAY, future=(SendPattern("Thanks"),))
    assert check_templates(shop_net(), [tpl])["T2"].reason == "missing future precondition"


def test_templates_flexible():
    before = ActionTemplate(PAY, flexible=(WANT,))
    assert check_templates(shop_net(), [before]) == {}
    after = ActionTemplate(PAY, flexible=(DELIVERY,))
    assert check_templates(shop_net(), [after]) == {}
    missing = ActionTemplate(PAY, flexible=(DELIVERY,))
    assert check_templates(shop_net(delivery_branches=0), [missing])["T2"].kind is MarkKind.GUARANTEE


def test_template_sets_disjoint():
    from protonet.errors import ConfigError
    with pytest.raises(ConfigError):
        ActionTemplate(PAY, past=(WANT,), future=(WANT,))


def test_templates_json_round_trip():
    data = load_config("templates-creditcard.json")
    from protonet.policy import templates_from_json
    tpls = templates_from_json(data)
    assert [t.to_json() for t in tpls] == [
        {**d, "flexible": d.get("flexible", [])} for d in data
    ]


# -- propagate_safety ---------------------------------------------------------

def test_propagation_linear():
    net = linear(Transition("T1"), Transition("T2"))
    marks = propagate_safety(net, {"P2": unsafe("seed")})
    assert all(m.kind is MarkKind.UNSAFE for m in marks.values())
    assert marks["T2"].reason == "leads to unsafe P2"
    assert marks["P1"].reason == "no safe continuation"


def test_propagation_choice():
    net = make_net(places=["P0", "P1", "P2", "P3", "P4"], transitions=["T1", "T2", "T3", "T4"],
                   arcs=chain("P0", "T1", "P1", "T3", "P3") + chain("P0", "T2", "P2", "T4", "P4"),
                   finals=["P3", "P4"])
    marks = kinds(propagate_safety(net, {"T1": unsafe("seed")}))
    assert marks == {"P0": "safe", "T1": "unsafe", "P1": "unusable", "T3": "unusable", "P3": "unusable",
                     "T2": "safe", "P2": "safe", "T4": "safe", "P4": "safe"}


def test_propagation_empty_base():
    net = load_protocol("pta")
    assert {m.kind for m in propagate_safety(net, {}).values()} == {MarkKind.SAFE}


def test_guarantee_survives_and_unsafe_overrides():
    net = linear(Transition("T1"), Transition("T2"))
    p = RecvPattern("Delivery")
    marks = propagate_safety(net, merge_marks({"T1": guarantee(p)}))
    assert marks["T1"].kind is MarkKind.GUARANTEE
    marks = propagate_safety(net, merge_marks({"T1": guarantee(p)}, {"T1": unsafe("privacy")}))
    assert marks["T1"].kind is MarkKind.UNSAFE


def test_merge_unions_obligations():
    a, b = RecvPattern("A"), RecvPattern("B")
    merged = merge_marks({"T1": guarantee(a)}, {"T1": guarantee(b, a)})
    assert merged["T1"].obligations == (a, b)


def test_recv_place_without_feeders_is_exempt():
    net = make_net(
        peers=["Peer"], places=["P0", Place("P1", RecvSpec("R1", "Go", "Peer")), "P2", "P3"],
        transitions=["T1", "T2"], arcs=[("P0", "T1"), ("P1", "T1"), ("T1", "P2"), ("P0", "T2"), ("T2", "P3")],
        finals=["P2", "P3"])
    marks = propagate_safety(net, {})
    assert marks["P1"].kind is MarkKind.SAFE


def test_join_counterexample_documents_scope():
    """With a synchronising transition the local rules are stricter than the token game.

    P0 offers Ta or Tb (a choice). Ta marks p, Tb marks q, and t needs both
    p and q, so t can never fire. The rules still condemn p, because its
    only outgoing transition t is unsafe, while no run from p ever reaches t.
    The equivalence property is therefore stated over join-free nets.
    """
    net = make_net(places=["P0", "p", "q", "P9"], transitions=["Ta", "Tb", "t"],
                   arcs=[("P0", "Ta"), ("Ta", "p"), ("P0", "Tb"), ("Tb", "q"), ("p", "t"), ("q", "t"), ("t", "P9")],
                   finals=["P9"])
    marks = propagate_safety(net, {"t": unsafe("seed")})
    assert marks["p"].kind is MarkKind.UNSAFE
    assert "p" not in oracle_unsafe(net, {"t"})


@settings(max_examples=200, deadline=None)
@given(st.integers(0, len(SHAPES) - 1), st.sets(st.integers(0, 7)), st.sets(st.integers(0, 7)))
def test_propagation_is_monotone(idx, seed_a, seed_b):
    net = shape_to_net(SHAPES[idx])
    ids = sorted(net.node_ids)
    small = {ids[i] for i in seed_a if i < len(ids)}
    big = small | {ids[i] for i in seed_b if i < len(ids)}

    def flagged(seed):
        marks = propagate_safety(net, {n: unsafe("seed") for n in seed})
        return {n for n, m in marks.items() if m.condemned}, {n for n, m in marks.items() if m.kind is MarkKind.UNSAFE}

    fa, ua = flagged(small)
    fb, ub = flagged(big)
    assert ua <= ub and fa <= fb


# -- analyze ------------------------------------------------------------------

def test_analyze_pta_accepted(pta, permissive_ctx):
    report = analyze(pta, permissive_ctx)
    assert report.verdict.accepted
    assert {m.kind for m in report.marks.values()} == {MarkKind.SAFE}
    assert analyze(pta, permissive_ctx).to_json() == report.to_json()  # idempotent


def test_analyze_structural_short_circuit(permissive_ctx):
    report = analyze(load_protocol("final-outgoing"), permissive_ctx)
    assert report.verdict.to_json() == {"status": "rejected", "reason": "structural"}
    assert report.violations and not report.marks


def test_analyze_initial_unsafe():
    report = analyze(load_protocol("rule-initial-unsafe"), AnalysisContext())
    assert report.verdict.reason == "initial unsafe"


def test_pay_without_delivery(analyze_with):
    flexible = [{"target": {"kind": "action", "type": "execute", "act": "Pay"},
                 "flexible": [{"kind": "recv", "performative": "Delivery", "sender": "Shop"}]}]
    acl = {"*": {"Pay": ["execute"]}}
    from protonet.policy import Manifest
    branching = shop_net(delivery_branches=0)
    ctx_manifest = Manifest(frozenset({"Pay"}))
    from protonet.policy import templates_from_json
    ctx = AnalysisContext(ctx_manifest, AccessControlList.from_json(acl), tuple(templates_from_json(flexible)))
    report = analyze(branching, ctx)
    assert report.verdict.accepted
    assert report.obligations == (("T2", DELIVERY),)
    # the same requirement as a plain unsafe condition in a linear net reaches the initial place
    strict = [{"target": {"kind": "action", "type": "execute", "act": "Pay"},
               "future": [{"kind": "send", "performative": "Delivery", "receiver": "*"}]}]
    line = linear(act("T1", "execute", "Pay"))
    ctx = AnalysisContext(ctx_manifest, AccessControlList.from_json(acl), tuple(templates_from_json(strict)))
    assert analyze(line, ctx).verdict.reason == "initial unsafe"


def test_report_json_shape(pta, permissive_ctx):
    data = json.loads(analyze(pta, permissive_ctx).render())
    assert set(data) == {"marks", "verdict", "obligations", "violations"}
    assert data["marks"]["T2"] == {"mark": "safe"}
