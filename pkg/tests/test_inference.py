import random

import pytest

from helpers import bfs_reachable, naive_chain, naive_text_search, random_graph, random_triple
from knowspace import vocab
from knowspace.contexts import MemoryContext
from knowspace.inference import (
    FullTextContext,
    GeoContext,
    GeoVocabulary,
    Rule,
    RuleContext,
    RuleError,
    fixpoint,
    geo_within,
    parse_rules,
    tokenize,
)
from knowspace.operations import (
    IterateOp,
    MetadataMatchOp,
    MetadataWriteOp,
    TextSearchOp,
)
from knowspace.rdf import (
    ANY,
    MATCH_ALL,
    Graph,
    IriRef,
    Literal,
    Triple,
    TriplePattern,
    Variable,
)

EX = "http://ex.org/"
D, A = vocab.PROV_DERIVED_FROM, vocab.PROV_HAS_ANCESTOR
X, Y, Z = Variable("x"), Variable("y"), Variable("z")

PROVENANCE_RULES = [
    Rule((TriplePattern(X, D, Y),), TriplePattern(X, A, Y)),
    Rule((TriplePattern(X, A, Y), TriplePattern(Y, A, Z)), TriplePattern(X, A, Z)),
]


def iri(name):
    return IriRef(EX + name)


def node(i):
    return iri(f"n/{i}")


def ancestry_oracle(edges: set[Triple]) -> set[Triple]:
    adjacency: dict = {}
    for t in edges:
        adjacency.setdefault(t.subject, []).append(t.object)
    derived = set()
    for start in adjacency:
        for reached in bfs_reachable(adjacency, start):
            derived.add(Triple(start, A, reached))
    return derived - edges  # a stored D-edge never re-counts as derived A


class TestRuleValidation:
    def test_unsafe_head_variable_rejected_at_construction(self):
        with pytest.raises(RuleError):
            Rule((TriplePattern(X, D, Y),), TriplePattern(X, A, Z))

    def test_head_predicate_must_be_concrete(self):
        with pytest.raises(RuleError):
            Rule((TriplePattern(X, D, Y),), TriplePattern(X, Y, X))

    def test_empty_body_rejected(self):
        with pytest.raises(RuleError):
            Rule((), TriplePattern(X, A, X))


class TestRuleParsing:
    def test_provenance_pair(self):
        text = (
            "# transitive ancestry\n"
            f"?x <{D.value}> ?y -> ?x <{A.value}> ?y\n"
            f"?x <{A.value}> ?y & ?y <{A.value}> ?z -> ?x <{A.value}> ?z\n"
        )
        assert parse_rules(text) == PROVENANCE_RULES

    def test_literals_in_rules(self):
        rules = parse_rules(f'?x <{EX}status> "published" -> ?x <{EX}visible> "yes"')
        assert rules[0].head.object == Literal("yes")

    def test_malformed_rule_reports_line(self):
        with pytest.raises(RuleError) as exc:
            parse_rules("\n?x <http://ex.org/p> ?y\n")
        assert "line 2" in str(exc.value)


class TestFixpoint:
    def test_two_step_chain(self):
        base = {Triple(node("b"), D, node("a")), Triple(node("c"), D, node("b"))}
        derived = fixpoint(base, PROVENANCE_RULES)
        assert derived == {
            Triple(node("b"), A, node("a")),
            Triple(node("c"), A, node("b")),
            Triple(node("c"), A, node("a")),
        }

    def test_empty_base(self):
        assert fixpoint(set(), PROVENANCE_RULES) == set()

    def test_cycle_terminates_with_self_ancestry(self):
        base = {Triple(node("a"), D, node("b")), Triple(node("b"), D, node("a"))}
        derived = fixpoint(base, PROVENANCE_RULES)
        assert Triple(node("a"), A, node("a")) in derived
        assert Triple(node("b"), A, node("b")) in derived
        assert derived == ancestry_oracle(base)

    def test_matches_bfs_oracle_on_random_digraphs(self):
        rng = random.Random(99)
        for _ in range(40):
            nodes = [node(i) for i in range(rng.randint(2, 25))]
            edges = {
                Triple(rng.choice(nodes), D, rng.choice(nodes))
                for _ in range(rng.randint(1, 80))
            }
            assert fixpoint(edges, PROVENANCE_RULES) == ancestry_oracle(edges)

    def test_idempotence(self):
        rng = random.Random(5)
        nodes = [node(i) for i in range(10)]
        base = {Triple(rng.choice(nodes), D, rng.choice(nodes)) for _ in range(30)}
        derived = fixpoint(base, PROVENANCE_RULES)
        assert fixpoint(base | derived, PROVENANCE_RULES) <= derived

    def test_monotonicity(self):
        rng = random.Random(6)
        nodes = [node(i) for i in range(8)]
        base = {Triple(rng.choice(nodes), D, rng.choice(nodes)) for _ in range(15)}
        bigger = base | {Triple(rng.choice(nodes), D, rng.choice(nodes)) for _ in range(10)}
        smaller_closure = fixpoint(base, PROVENANCE_RULES)
        bigger_closure = fixpoint(bigger, PROVENANCE_RULES)
        assert smaller_closure <= bigger_closure | bigger

    def _random_rules(self, rng):
        predicates = [iri(f"p/{i}") for i in range(4)]
        variables = [X, Y, Z]
        rules = []
        for _ in range(rng.randint(1, 5)):
            body = []
            used = []
            for _ in range(rng.randint(1, 2)):
                s, o = rng.choice(variables), rng.choice(variables)
                body.append(TriplePattern(s, rng.choice(predicates), o))
                used += [s, o]
            head = TriplePattern(rng.choice(used), rng.choice(predicates), rng.choice(used))
            rules.append(Rule(tuple(body), head))
        return rules

    def test_sound_and_complete_against_naive_chaining(self):
        rng = random.Random(123)
        nodes = [node(i) for i in range(6)]
        predicates = [iri(f"p/{i}") for i in range(4)]
        for _ in range(15):
            rules = self._random_rules(rng)
            base = {
                Triple(rng.choice(nodes), rng.choice(predicates), rng.choice(nodes))
                for _ in range(rng.randint(0, 40))
            }
            assert fixpoint(base, rules) == naive_chain(base, rules)


class TestRuleContext:
    def _stack(self, base_triples=()):
        inner = MemoryContext(base_triples)
        return inner, RuleContext(inner, PROVENANCE_RULES)

    def test_ancestry_query(self):
        base = {Triple(node("b"), D, node("a")), Triple(node("c"), D, node("b"))}
        _, ctx = self._stack(base)
        op = ctx.perform(MetadataMatchOp(TriplePattern(node("c"), A, ANY)))
        assert op.results == {Triple(node("c"), A, node("b")), Triple(node("c"), A, node("a"))}

    def test_underived_predicate_equals_inner_match(self):
        base = {Triple(node("b"), D, node("a")), Triple(node("b"), iri("title"), Literal("t"))}
        inner, ctx = self._stack(base)
        pattern = TriplePattern(ANY, iri("title"), ANY)
        assert ctx.perform(MetadataMatchOp(pattern)).results == inner.perform(
            MetadataMatchOp(pattern)
        ).results

    def test_write_invalidation_recomputes(self):
        _, ctx = self._stack({Triple(node("b"), D, node("a"))})
        before = ctx.perform(MetadataMatchOp(TriplePattern(ANY, A, ANY))).results
        assert before == {Triple(node("b"), A, node("a"))}
        ctx.perform(MetadataWriteOp(assertions={Triple(node("c"), D, node("b"))}))
        after = ctx.perform(MetadataMatchOp(TriplePattern(ANY, A, ANY))).results
        base = {Triple(node("b"), D, node("a")), Triple(node("c"), D, node("b"))}
        assert after == fixpoint(base, PROVENANCE_RULES) == ancestry_oracle(base)

    def test_write_transparency(self):
        rng = random.Random(8)
        direct = MemoryContext()
        inner, wrapped = self._stack()
        for _ in range(50):
            assertions = {random_triple(rng, allow_bnodes=False)}
            direct.perform(MetadataWriteOp(assertions=assertions))
            wrapped.perform(MetadataWriteOp(assertions=assertions))
        assert inner.perform(MetadataMatchOp(MATCH_ALL)).results == direct.perform(
            MetadataMatchOp(MATCH_ALL)
        ).results

    def test_derived_excluded_from_iterate_and_optional_in_match(self):
        base = {Triple(node("b"), D, node("a"))}
        _, ctx = self._stack(base)
        stored_only = ctx.perform(MetadataMatchOp(MATCH_ALL, include_derived=False))
        assert stored_only.results == base
        iterated = set(ctx.perform(IterateOp()).stream())
        assert iterated == base
        full = ctx.perform(MetadataMatchOp(MATCH_ALL))
        assert full.results == base | {Triple(node("b"), A, node("a"))}

    def test_derived_never_written_to_inner(self):
        inner, ctx = self._stack({Triple(node("b"), D, node("a"))})
        ctx.perform(MetadataMatchOp(MATCH_ALL))
        assert inner.perform(MetadataMatchOp(MATCH_ALL)).results == {
            Triple(node("b"), D, node("a"))
        }


class TestGeoWithin:
    def test_point_inside(self):
        assert geo_within(40.1, -88.2, 39, -89, 41, -87)

    def test_boundary_inclusive(self):
        assert geo_within(39, -89, 39, -89, 41, -87)
        assert geo_within(41, -87, 39, -89, 41, -87)

    def test_dateline_wrap(self):
        assert geo_within(65, 175, 60, 170, 70, -170)
        assert geo_within(65, -175, 60, 170, 70, -170)
        assert not geo_within(65, 0, 60, 170, 70, -170)

    def test_outside(self):
        assert not geo_within(50, -88, 39, -89, 41, -87)


GEO = GeoVocabulary()


def point(name, lat, lon):
    subject = iri(name)
    return {
        Triple(subject, GEO.point_lat, Literal(str(lat))),
        Triple(subject, GEO.point_lon, Literal(str(lon))),
    }


def box(name, min_lat, min_lon, max_lat, max_lon):
    subject = iri(name)
    return {
        Triple(subject, GEO.box_min_lat, Literal(str(min_lat))),
        Triple(subject, GEO.box_min_lon, Literal(str(min_lon))),
        Triple(subject, GEO.box_max_lat, Literal(str(max_lat))),
        Triple(subject, GEO.box_max_lon, Literal(str(max_lon))),
    }


class TestGeoContext:
    def test_derives_within(self):
        base = point("s1", 40.1, -88.2) | box("area", 39, -89, 41, -87)
        ctx = GeoContext(MemoryContext(base))
        op = ctx.perform(MetadataMatchOp(TriplePattern(ANY, GEO.within, ANY)))
        assert op.results == {Triple(iri("s1"), GEO.within, iri("area"))}

    def test_skips_invalid_coordinates_without_failing(self):
        base = point("good", 10, 10) | box("area", 0, 0, 20, 20)
        bad = iri("bad")
        base |= {
            Triple(bad, GEO.point_lat, Literal("95")),  # out of range
            Triple(bad, GEO.point_lon, Literal("10")),
            Triple(iri("worse"), GEO.point_lat, Literal("not-a-number")),
            Triple(iri("worse"), GEO.point_lon, Literal("5")),
        }
        ctx = GeoContext(MemoryContext(base))
        op = ctx.perform(MetadataMatchOp(TriplePattern(ANY, GEO.within, ANY)))
        assert op.succeeded
        assert op.results == {Triple(iri("good"), GEO.within, iri("area"))}

    def test_typed_numeric_literals_accepted(self):
        subject = iri("typed")
        base = {
            Triple(subject, GEO.point_lat, Literal("40.0", datatype=vocab.XSD_DECIMAL)),
            Triple(subject, GEO.point_lon, Literal("-88.0", datatype=vocab.XSD_DOUBLE)),
        } | box("area", 39, -89, 41, -87)
        ctx = GeoContext(MemoryContext(base))
        op = ctx.perform(MetadataMatchOp(TriplePattern(ANY, GEO.within, ANY)))
        assert op.results == {Triple(subject, GEO.within, iri("area"))}

    def test_random_layout_equals_pairwise_scan(self):
        rng = random.Random(314)
        for _ in range(20):
            base = set()
            points = {}
            boxes = {}
            for i in range(rng.randint(0, 10)):
                lat = round(rng.uniform(-90, 90), 3)
                lon = round(rng.uniform(-180, 180), 3)
                points[iri(f"pt/{i}")] = (lat, lon)
                base |= point(f"pt/{i}", lat, lon)
            for i in range(rng.randint(0, 6)):
                lo_lat, hi_lat = sorted((round(rng.uniform(-90, 90), 3), round(rng.uniform(-90, 90), 3)))
                lon1 = round(rng.uniform(-180, 180), 3)
                lon2 = round(rng.uniform(-180, 180), 3)
                if rng.random() < 0.5:
                    lon1, lon2 = min(lon1, lon2), max(lon1, lon2)  # plain interval
                boxes[iri(f"bx/{i}")] = (lo_lat, lon1, hi_lat, lon2)
                base |= box(f"bx/{i}", lo_lat, lon1, hi_lat, lon2)
            ctx = GeoContext(MemoryContext(base))
            got = ctx.perform(MetadataMatchOp(TriplePattern(ANY, GEO.within, ANY))).results
            expected = {
                Triple(p, GEO.within, b)
                for p, (lat, lon) in points.items()
                for b, (mnla, mnlo, mxla, mxlo) in boxes.items()
                if geo_within(lat, lon, mnla, mnlo, mxla, mxlo)
            }
            assert got == expected


class TestTokenize:
    def test_splits_on_non_alphanumerics_and_lowercases(self):
        assert tokenize("Urban Run-off; Analysis_2024!") == ["urban", "run", "off", "analysis", "2024"]

    def test_empty(self):
        assert tokenize("...") == []


class TestFullTextContext:
    def test_search_examples(self):
        ctx = FullTextContext(MemoryContext())
        ctx.perform(
            MetadataWriteOp(assertions={Triple(iri("d1"), iri("title"), Literal("Urban Runoff Analysis"))})
        )
        assert ctx.perform(TextSearchOp(["runoff"])).results == {iri("d1")}
        assert ctx.perform(TextSearchOp(["zzz"])).results == set()
        assert ctx.perform(TextSearchOp(["urban", "analysis"])).results == {iri("d1")}
        assert ctx.perform(TextSearchOp(["urban", "missing"])).results == set()

    def test_bulk_index_covers_preexisting_statements(self):
        inner = MemoryContext({Triple(iri("d2"), iri("title"), Literal("sensor telemetry"))})
        ctx = FullTextContext(inner)
        assert ctx.perform(TextSearchOp(["telemetry"])).results == {iri("d2")}

    def test_retraction_unindexes(self):
        t = Triple(iri("d1"), iri("title"), Literal("hydrology report"))
        ctx = FullTextContext(MemoryContext())
        ctx.perform(MetadataWriteOp(assertions={t}))
        assert ctx.perform(TextSearchOp(["hydrology"])).results == {iri("d1")}
        ctx.perform(MetadataWriteOp(retractions={t}))
        assert ctx.perform(TextSearchOp(["hydrology"])).results == set()

    def test_shared_token_across_literals_survives_partial_retraction(self):
        t1 = Triple(iri("d1"), iri("title"), Literal("water quality"))
        t2 = Triple(iri("d1"), iri("note"), Literal("water level"))
        ctx = FullTextContext(MemoryContext())
        ctx.perform(MetadataWriteOp(assertions={t1, t2}))
        ctx.perform(MetadataWriteOp(retractions={t1}))
        assert ctx.perform(TextSearchOp(["water"])).results == {iri("d1")}
        assert ctx.perform(TextSearchOp(["quality"])).results == set()

    def test_random_queries_equal_naive_scan(self):
        rng = random.Random(2718)
        words = ["urban", "runoff", "sensor", "storm", "rain", "delta", "gauge", "flow"]
        ctx = FullTextContext(MemoryContext())
        stored = set()
        for _ in range(120):
            subject = iri(f"doc/{rng.randint(0, 20)}")
            text = " ".join(rng.choices(words, k=rng.randint(1, 5)))
            t = Triple(subject, iri("p"), Literal(text))
            ctx.perform(MetadataWriteOp(assertions={t}))
            stored.add(t)
            if rng.random() < 0.2 and stored:
                victim = rng.choice(sorted(stored, key=repr))
                ctx.perform(MetadataWriteOp(retractions={victim}))
                stored.discard(victim)
        for _ in range(60):
            terms = rng.sample(words, k=rng.randint(1, 3))
            got = ctx.perform(TextSearchOp(terms)).results
            assert got == naive_text_search(stored, terms)


class TestCrossDomainScenario:
    """People who wrote papers about data from sensors within a given area,
    answered by composing geospatial derivation with transitive ancestry."""

    WROTE = IriRef(EX + "wrote")

    def fixture(self):
        triples = set()
        triples |= point("sensor/1", 40.1, -88.2)   # inside box/urbana
        triples |= point("sensor/2", 10.0, 20.0)    # far away
        triples |= point("sensor/3", 65.0, 175.0)   # inside dateline box
        triples |= box("box/urbana", 39, -89, 41, -87)
        triples |= box("box/bering", 60, 170, 70, -170)
        chain = [
            ("data/d1", "sensor/1"), ("inter/i1", "data/d1"), ("paper/p1", "inter/i1"),
            ("data/d2", "sensor/2"), ("paper/p2", "data/d2"),
            ("data/d3", "sensor/3"), ("paper/p3", "data/d3"),
        ]
        triples |= {Triple(iri(c), D, iri(p)) for c, p in chain}
        triples |= {
            Triple(iri("people/alice"), self.WROTE, iri("paper/p1")),
            Triple(iri("people/bob"), self.WROTE, iri("paper/p2")),
            Triple(iri("people/carol"), self.WROTE, iri("paper/p3")),
        }
        triples.add(Triple(iri("paper/p1"), iri("title"), Literal("Urban Runoff Analysis")))
        return triples

    def stack(self):
        return RuleContext(GeoContext(MemoryContext(self.fixture())), PROVENANCE_RULES)

    def _authors_for_area(self, ctx, area):
        from knowspace.query import evaluate, parse_query

        q = parse_query(
            f"SELECT DISTINCT ?person WHERE {{"
            f" ?person <{self.WROTE.value}> ?paper ."
            f" ?paper <{A.value}> ?source ."
            f" ?source <{GEO.within.value}> <{EX}{area}> }}"
        )
        return {row["person"] for row in evaluate(q, ctx).rows}

    def test_authors_near_urbana(self):
        assert self._authors_for_area(self.stack(), "box/urbana") == {iri("people/alice")}

    def test_authors_across_dateline(self):
        assert self._authors_for_area(self.stack(), "box/bering") == {iri("people/carol")}
