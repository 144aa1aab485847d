"""Shared fixtures-in-code: random data generators and independent oracles.

The oracles here deliberately re-derive expected results by brute force
(full scans, cross products, naive chaining, BFS) so the tested code paths
never check themselves.
"""

from __future__ import annotations

import itertools
import random
import re
from decimal import Decimal

from knowspace import vocab
from knowspace.rdf import (
    ANY,
    BlankNode,
    Graph,
    IriRef,
    Literal,
    Triple,
    TriplePattern,
    Variable,
)

# characters chosen to exercise every mandatory escape plus unicode planes
LITERAL_CHARS = (
    "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"
    " \"\\\n\r\t'#<>.&^^@:_-"
    "éß中文Ж\U0001F600\U0001F9EA\x01\x1f\x7f"
)
LANGS = ["en", "en-US", "de", "pt-br", "zh-hans-cn"]
DATATYPES = [
    vocab.XSD_INTEGER,
    vocab.XSD_DECIMAL,
    vocab.XSD_DOUBLE,
    IriRef("http://www.w3.org/2001/XMLSchema#string"),
]


def _fresh_iri(rng: random.Random) -> IriRef:
    host = rng.choice(["ex.org", "data.example", "ks.test"])
    path = "/".join(
        "".join(rng.choices("abcdefghij0123456789", k=rng.randint(1, 6)))
        for _ in range(rng.randint(1, 3))
    )
    return IriRef(f"http://{host}/{path}")


def _fresh_literal(rng: random.Random) -> Literal:
    text = "".join(rng.choices(LITERAL_CHARS, k=rng.randint(0, 12)))
    kind = rng.random()
    if kind < 0.5:
        return Literal(text)
    if kind < 0.75:
        return Literal(text, language=rng.choice(LANGS))
    return Literal(text, datatype=rng.choice(DATATYPES))


def _fresh_bnode(rng: random.Random) -> BlankNode:
    return BlankNode("b" + "".join(rng.choices("abcdef0123456789", k=6)))


# sampling pre-built pools keeps graph generation cheap; the pools are built
# once from a fixed seed so tests stay deterministic
_POOL_RNG = random.Random(0x5EED)
_IRI_POOL = [_fresh_iri(_POOL_RNG) for _ in range(2000)]
_LITERAL_POOL = [_fresh_literal(_POOL_RNG) for _ in range(3000)]
_BNODE_POOL = [_fresh_bnode(_POOL_RNG) for _ in range(400)]


def random_iri(rng: random.Random) -> IriRef:
    return rng.choice(_IRI_POOL)


def random_literal(rng: random.Random) -> Literal:
    return rng.choice(_LITERAL_POOL)


def random_bnode(rng: random.Random) -> BlankNode:
    return rng.choice(_BNODE_POOL)


def random_subject(rng: random.Random, allow_bnodes: bool = True):
    if allow_bnodes and rng.random() < 0.15:
        return random_bnode(rng)
    return random_iri(rng)


def random_object(rng: random.Random, allow_bnodes: bool = True):
    r = rng.random()
    if r < 0.4:
        return random_literal(rng)
    if allow_bnodes and r < 0.55:
        return random_bnode(rng)
    return random_iri(rng)


def random_triple(rng: random.Random, allow_bnodes: bool = True) -> Triple:
    return Triple(
        random_subject(rng, allow_bnodes),
        random_iri(rng),
        random_object(rng, allow_bnodes),
    )


def random_graph(rng: random.Random, max_triples: int = 200, allow_bnodes: bool = True) -> Graph:
    return Graph(
        random_triple(rng, allow_bnodes) for _ in range(rng.randint(0, max_triples))
    )


def random_pattern(rng: random.Random, g: Graph) -> TriplePattern:
    """A pattern mixing wildcards with terms drawn from the graph (so matches
    are likely) and fresh terms (so misses happen too)."""
    triples = list(g) or [random_triple(rng)]
    anchor = rng.choice(triples)

    def position(value, fresh):
        r = rng.random()
        if r < 0.4:
            return ANY
        if r < 0.8:
            return value
        return fresh(rng)

    subject = position(anchor.subject, random_iri)
    predicate = position(anchor.predicate, random_iri)
    obj = position(anchor.object, lambda r: random_object(r, allow_bnodes=False))
    return TriplePattern(subject, predicate, obj)


# -- independent oracles ----------------------------------------------------


def oracle_match(g, pattern: TriplePattern) -> set[Triple]:
    """Full-scan position-wise filter, independent of Graph.match."""
    out = set()
    for t in g:
        binding = {}
        ok = True
        for pat, val in (
            (pattern.subject, t.subject),
            (pattern.predicate, t.predicate),
            (pattern.object, t.object),
        ):
            if pat is ANY:
                continue
            if isinstance(pat, Variable):
                if pat.name in binding and binding[pat.name] != val:
                    ok = False
                    break
                binding[pat.name] = val
            elif pat != val:
                ok = False
                break
        if ok:
            out.add(t)
    return out


def naive_chain(base: set[Triple], rules) -> set[Triple]:
    """Naive (non-semi-naive) forward chaining to a fixpoint; derived only."""
    known = set(base)
    while True:
        new = set()
        for rule in rules:
            for combo in itertools.product(known, repeat=len(rule.body)):
                binding = {}
                ok = True
                for pat, t in zip(rule.body, combo):
                    for pos, val in zip(
                        pat.positions(), (t.subject, t.predicate, t.object)
                    ):
                        if pos is ANY:
                            continue
                        if isinstance(pos, Variable):
                            if pos.name in binding and binding[pos.name] != val:
                                ok = False
                                break
                            binding[pos.name] = val
                        elif pos != val:
                            ok = False
                            break
                    if not ok:
                        break
                if not ok:
                    continue
                head = []
                for pos in rule.head.positions():
                    head.append(binding[pos.name] if isinstance(pos, Variable) else pos)
                if not isinstance(head[0], (IriRef, BlankNode)):
                    continue
                if not isinstance(head[1], IriRef):
                    continue
                candidate = Triple(head[0], head[1], head[2])
                if candidate not in known:
                    new.add(candidate)
        if not new:
            return known - set(base)
        known |= new


def bfs_reachable(edges: dict, start) -> set:
    """Nodes reachable from start via one or more edges."""
    seen = set()
    frontier = list(edges.get(start, ()))
    while frontier:
        node = frontier.pop()
        if node in seen:
            continue
        seen.add(node)
        frontier.extend(edges.get(node, ()))
    return seen


_DECIMAL_RE = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


def _oracle_lexical(term) -> str:
    if isinstance(term, Literal):
        return term.lexical
    if isinstance(term, IriRef):
        return term.value
    return term.label


def oracle_compare(op: str, left, right) -> bool:
    lt, rt = _oracle_lexical(left), _oracle_lexical(right)
    if _DECIMAL_RE.match(lt.strip()) and _DECIMAL_RE.match(rt.strip()):
        lv, rv = Decimal(lt.strip()), Decimal(rt.strip())
    else:
        lv, rv = lt, rt
    return {
        "=": lv == rv,
        "!=": lv != rv,
        "<": lv < rv,
        "<=": lv <= rv,
        ">": lv > rv,
        ">=": lv >= rv,
    }[op]


def oracle_evaluate(q, g: Graph):
    """Cross-product evaluator: per-pattern full scans, then every candidate
    combination checked for consistent bindings, then filters/projection."""
    from knowspace.query import ComparisonFilter, RegexFilter
    from knowspace.rdf import term_text

    def loose(p):
        # concrete positions only; variables handled during combination
        return TriplePattern(
            p.subject if not isinstance(p.subject, Variable) else ANY,
            p.predicate if not isinstance(p.predicate, Variable) else ANY,
            p.object if not isinstance(p.object, Variable) else ANY,
        )

    candidates = [sorted(oracle_match(g, loose(p)), key=term_sort_key) for p in q.patterns]
    solutions = []
    for combo in itertools.product(*candidates):
        binding = {}
        ok = True
        for pat, t in zip(q.patterns, combo):
            for pos, val in zip(pat.positions(), (t.subject, t.predicate, t.object)):
                if isinstance(pos, Variable):
                    if pos.name in binding and binding[pos.name] != val:
                        ok = False
                        break
                    binding[pos.name] = val
            if not ok:
                break
        if ok:
            solutions.append(binding)
    kept = []
    for b in solutions:
        passed = True
        for f in q.filters:
            if isinstance(f, RegexFilter):
                flags = re.IGNORECASE if f.ignore_case else 0
                if re.search(f.pattern, _oracle_lexical(b[f.var]), flags) is None:
                    passed = False
                    break
            elif isinstance(f, ComparisonFilter):
                rhs = b[f.rhs.name] if isinstance(f.rhs, Variable) else f.rhs
                if not oracle_compare(f.op, b[f.var], rhs):
                    passed = False
                    break
        if passed:
            kept.append(b)
    if q.projection is not None:
        proj = list(q.projection)
    else:
        proj = []
        for p in q.patterns:
            for pos in p.positions():
                if isinstance(pos, Variable) and pos.name not in proj:
                    proj.append(pos.name)
    rows = [tuple(b[v] for v in proj) for b in kept]
    rows.sort(key=lambda row: tuple(term_text(t) for t in row))
    if q.distinct:
        rows = [row for row, _ in itertools.groupby(rows)]
    start = q.offset or 0
    end = None if q.limit is None else start + q.limit
    return proj, rows[start:end]


def term_sort_key(t: Triple):
    from knowspace.rdf import term_text

    return (term_text(t.subject), term_text(t.predicate), term_text(t.object))


def naive_text_search(g, terms: list[str]) -> set[IriRef]:
    """Scan every literal; a subject matches when each term appears as a
    whole lowercased token in some literal of that subject."""
    from knowspace.inference import tokenize

    found = None
    for term in terms:
        matching = set()
        for t in g:
            if isinstance(t.subject, IriRef) and isinstance(t.object, Literal):
                if term.lower() in tokenize(t.object.lexical):
                    matching.add(t.subject)
        found = matching if found is None else (found & matching)
    return found or set()


def oracle_effective_aces(resource, parent_of: dict, aces_at: dict):
    """Path-walk oracle over explicit parent/ACE maps: nearest node (starting
    at the resource) with any ACEs contributes its full set."""
    node = resource
    while node is not None:
        if aces_at.get(node):
            return set(aces_at[node])
        node = parent_of.get(node)
    return set()
