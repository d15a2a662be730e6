"""Directed-graph helpers over successor maps (``dict[node, list[node]]``)."""

from __future__ import annotations

from collections.abc import Iterable, Mapping


def reachable(succ: Mapping[str, Iterable[str]], roots: Iterable[str]) -> set[str]:
    seen: set[str] = set()
    stack = list(roots)
    while stack:
        n = stack.pop()
        if n in seen:
            continue
        seen.add(n)
        stack.extend(succ.get(n, ()))
    return seen


def invert(succ: Mapping[str, Iterable[str]]) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {n: [] for n in succ}
    for a in sorted(succ):
        for b in succ[a]:
            out.setdefault(b, []).append(a)
    return out


def strongly_connected_components(succ: Mapping[str, Iterable[str]]) -> list[list[str]]:
    """Tarjan's algorithm, iterative. Components come out in reverse topological order."""
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    comps: list[list[str]] = []
    counter = 0

    for root in sorted(succ):
        if root in index:
            continue
        work = [(root, iter(sorted(succ.get(root, ()))))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            node, it = work[-1]
            advanced = False
            for nxt in it:
                if nxt not in index:
                    index[nxt] = low[nxt] = counter
                    counter += 1
                    stack.append(nxt)
                    on_stack.add(nxt)
                    work.append((nxt, iter(sorted(succ.get(nxt, ())))))
                    advanced = True
                    break
                if nxt in on_stack:
                    low[node] = min(low[node], index[nxt])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == node:
                        break
                comps.append(sorted(comp))
    return comps


def nodes_on_cycles(succ: Mapping[str, Iterable[str]]) -> set[str]:
    out: set[str] = set()
    for comp in strongly_connected_components(succ):
        if len(comp) > 1 or comp[0] in succ.get(comp[0], ()):
            out.update(comp)
    return out


def _reverse_postorder(succ: Mapping[str, Iterable[str]], entry: str) -> list[str]:
    order: list[str] = []
    seen = {entry}
    work = [(entry, iter(succ.get(entry, ())))]
    while work:
        node, it = work[-1]
        for nxt in it:
            if nxt not in seen:
                seen.add(nxt)
                work.append((nxt, iter(succ.get(nxt, ()))))
                break
        else:
            work.pop()
            order.append(node)
    order.reverse()
    return order


def immediate_dominators(succ: Mapping[str, Iterable[str]], entry: str) -> dict[str, str]:
    """Immediate dominators of every node reachable from *entry*.

    Cooper, Harvey & Kennedy's iterative scheme over reverse postorder.
    ``idom[entry] == entry``.
    """
    rpo = _reverse_postorder(succ, entry)
    pos = {n: i for i, n in enumerate(rpo)}
    preds: dict[str, list[str]] = {n: [] for n in rpo}
    for a in rpo:
        for b in succ.get(a, ()):
            if b in pos:
                preds[b].append(a)

    idom: dict[str, str] = {entry: entry}

    def intersect(a: str, b: str) -> str:
        while a != b:
            while pos[a] > pos[b]:
                a = idom[a]
            while pos[b] > pos[a]:
                b = idom[b]
        return a

    changed = True
    while changed:
        changed = False
        for n in rpo[1:]:
            new = None
            for p in preds[n]:
                if p in idom:
                    new = p if new is None else intersect(p, new)
            if new is not None and idom.get(n) != new:
                idom[n] = new
                changed = True
    return idom


def dominators(succ: Mapping[str, Iterable[str]], entry: str) -> dict[str, set[str]]:
    """Full dominator sets (each node dominates itself)."""
    idom = immediate_dominators(succ, entry)
    return {n: _dom_chain(idom, n) for n in idom}


def _dom_chain(idom: dict[str, str], n: str) -> set[str]:
    doms = {n}
    while idom[n] != n:
        n = idom[n]
        doms.add(n)
    return doms


_SUPER = "\x00group"


def group_dominates(
    succ: Mapping[str, Iterable[str]], entry: str, target: str, group: set[str]
) -> bool:
    """True when every path from *entry* to *target* meets a node of *group*.

    The group (minus *target*) is contracted into one super node and the
    question becomes whether that node dominates *target*. Vacuously true
    if *target* is unreachable.
    """
    group = set(group) - {target}
    if not group:
        return target not in reachable(succ, [entry])

    def rename(n: str) -> str:
        return _SUPER if n in group else n

    contracted: dict[str, list[str]] = {}
    for a, bs in succ.items():
        ra = rename(a)
        lst = contracted.setdefault(ra, [])
        for b in bs:
            rb = rename(b)
            if rb != ra and rb not in lst:
                lst.append(rb)
    idom = immediate_dominators(contracted, rename(entry))
    if target not in idom:
        return True
    return _SUPER in _dom_chain(idom, target)
