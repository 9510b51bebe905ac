"""Rule mining against a brute-force oracle, plus rule file round-trips."""

import numpy as np
import pytest

from kbcomplete import (DataError, MinedRule, ParseError, PathFormula, RuleSet,
                        TripleStore, load_rules, mine_rules, relational_vector,
                        save_rules)

from helpers import brute_mine, mined_bodies, random_store


@pytest.fixture
def composition_kb():
    """r3 holds exactly for pairs connected by an r1 then an r2 step."""
    triples = []
    for i in range(5):
        triples += [(f"a{i}", "r1", f"m{i}"), (f"m{i}", "r2", f"b{i}"),
                    (f"a{i}", "r3", f"b{i}")]
    store, _ = TripleStore.from_labeled(train=triples)
    return store


class TestMining:
    def test_planted_composition(self, composition_kb):
        store = composition_kb
        rules = mine_rules(store, min_head_coverage=0.5)
        r1, r2, r3 = (store.relations.id(x) for x in ("r1", "r2", "r3"))
        target = PathFormula((r1, r2), ("+", "+"))
        matches = [m for m in rules.rules_for(r3) if m.formula == target]
        assert len(matches) == 1
        assert matches[0].coverage == 1.0
        assert matches[0].support == 5 and matches[0].head_count == 5

    def test_isolated_triples_mine_nothing(self):
        store, _ = TripleStore.from_labeled(
            train=[("a", "r1", "b"), ("c", "r2", "d"), ("e", "r3", "f")])
        rules = mine_rules(store)
        assert rules.total_features() == 0
        for r in range(store.n_relations):
            assert rules.rules_for(r) == ()

    def test_planted_inverse(self):
        triples = []
        for i in range(4):
            triples += [(f"x{i}", "r1", f"y{i}"), (f"y{i}", "r2", f"x{i}")]
        store, _ = TripleStore.from_labeled(train=triples)
        rules = mine_rules(store, min_head_coverage=0.9)
        r1, r2 = store.relations.id("r1"), store.relations.id("r2")
        target = PathFormula((r1,), ("-",))
        matches = [m for m in rules.rules_for(r2) if m.formula == target]
        assert len(matches) == 1
        assert matches[0].coverage == 1.0

    def test_trivial_forward_self_rule_excluded(self, composition_kb):
        store = composition_kb
        rules = mine_rules(store, min_head_coverage=1e-9)
        for r in range(store.n_relations):
            assert PathFormula((r,), ("+",)) not in rules.formulas_for(r)

    @pytest.mark.parametrize("seed", range(6))
    def test_matches_brute_force_exactly(self, seed):
        rng = np.random.default_rng(seed)
        store = random_store(rng, n_entities=9, n_relations=3,
                             n_train=int(rng.integers(20, 90)))
        for min_cov, min_sup in ((0.01, 1), (0.3, 1), (0.8, 2)):
            assert (mined_bodies(store, min_cov, min_sup)
                    == brute_mine(store, min_cov, min_sup))

    def test_support_one_relations_drop_below_threshold(self):
        store, _ = TripleStore.from_labeled(
            train=[("a", "r1", "b"), ("b", "r1", "c"), ("a", "r2", "c")])
        rules = mine_rules(store, min_head_support=2)
        r2 = store.relations.id("r2")
        assert rules.rules_for(r2) == ()

    def test_threshold_monotonicity(self):
        rng = np.random.default_rng(11)
        store = random_store(rng, n_entities=8, n_relations=3, n_train=60)
        thresholds = (0.01, 0.1, 0.25, 0.5, 0.9)
        sets = [set()] * 0
        sets = []
        for th in thresholds:
            rules = mine_rules(store, min_head_coverage=th)
            sets.append({(r, f) for r in rules.relations
                         for f in rules.formulas_for(r)})
        for low, high in zip(sets, sets[1:]):
            assert high <= low

    def test_ordering_deterministic_and_by_coverage(self):
        rng = np.random.default_rng(13)
        store = random_store(rng, n_entities=8, n_relations=3, n_train=70)
        a = mine_rules(store)
        b = mine_rules(store)
        assert a == b
        for r in a.relations:
            covs = [m.coverage for m in a.rules_for(r)]
            assert covs == sorted(covs, reverse=True)

    def test_threads_do_not_change_result(self):
        rng = np.random.default_rng(17)
        store = random_store(rng, n_entities=8, n_relations=3, n_train=60)
        assert mine_rules(store) == mine_rules(store, threads=4)

    def test_argument_validation(self, composition_kb):
        with pytest.raises(ValueError):
            mine_rules(composition_kb, min_head_coverage=0.0)
        with pytest.raises(ValueError):
            mine_rules(composition_kb, min_head_support=0)
        with pytest.raises(ValueError):
            mine_rules(composition_kb, max_body_len=3)


class TestRelationalVector:
    def test_empty_feature_list_gives_zero_length(self, composition_kb):
        rules = RuleSet({})
        vec = relational_vector(composition_kb, rules, 0, 0, 1)
        assert vec.shape == (0,)

    def test_planted_path_vector(self, composition_kb):
        store = composition_kb
        rules = mine_rules(store, min_head_coverage=0.5)
        r1, r2, r3 = (store.relations.id(x) for x in ("r1", "r2", "r3"))
        target = PathFormula((r1, r2), ("+", "+"))
        idx = rules.formulas_for(r3).index(target)
        a0, b0 = store.entities.id("a0"), store.entities.id("b0")
        b1 = store.entities.id("b1")
        assert relational_vector(store, rules, r3, a0, b0)[idx] == 1.0
        # a0 has no two-step path to b1
        assert relational_vector(store, rules, r3, a0, b1)[idx] == 0.0

    def test_unknown_entity_rejected(self, composition_kb):
        rules = mine_rules(composition_kb)
        with pytest.raises(DataError):
            relational_vector(composition_kb, rules, 0, 0, 10_000)

    def test_pure_function(self, composition_kb):
        store = composition_kb
        rules = mine_rules(store, min_head_coverage=0.2)
        r3 = store.relations.id("r3")
        a0, b0 = store.entities.id("a0"), store.entities.id("b0")
        first = relational_vector(store, rules, r3, a0, b0)
        for _ in range(5):
            assert np.array_equal(relational_vector(store, rules, r3, a0, b0),
                                  first)

    def test_own_edge_never_read(self):
        """Self-probe exclusion: dropping (h,r,t) leaves its features unchanged."""
        triples = [("h", "r", "t"), ("t", "r", "h"), ("h", "q", "t")]
        with_edge, _ = TripleStore.from_labeled(train=triples)
        without, _ = TripleStore.from_labeled(train=triples[1:])
        r = with_edge.relations.id("r")
        q = with_edge.relations.id("q")
        rules = RuleSet({r: [MinedRule(PathFormula((r,), ("+",))),
                             MinedRule(PathFormula((r,), ("-",))),
                             MinedRule(PathFormula((q,), ("+",)))]})
        h, t = with_edge.entities.id("h"), with_edge.entities.id("t")
        va = relational_vector(with_edge, rules, r, h, t)
        vb = relational_vector(without, rules, r, h, t)
        assert np.array_equal(va, vb)
        assert va.tolist() == [0.0, 1.0, 1.0]  # forward self-probe masked


class TestRuleFiles:
    def build_rules(self, store):
        r1, r2 = store.relations.id("r1"), store.relations.id("r2")
        return RuleSet({
            r1: [MinedRule(PathFormula((r2,), ("-",)), 0.75, 3, 4),
                 MinedRule(PathFormula((r2, r1), ("+", "-")), 0.5, 2, 4)],
            r2: [MinedRule(PathFormula((r1,), ("+",)), 1.0 / 3.0, 1, 3)],
        })

    def test_round_trip_identity(self, tmp_path):
        store, _ = TripleStore.from_labeled(
            train=[("a", "r1", "b"), ("a", "r2", "b")])
        rules = self.build_rules(store)
        path = tmp_path / "rules.tsv"
        save_rules(rules, store.relations, path)
        assert load_rules(path, store.relations) == rules

    def test_curated_file_without_stats(self, tmp_path):
        """External rule files carry only head relation and body (14 rules)."""
        labels = [f"rel{i}" for i in range(7)]
        store, _ = TripleStore.from_labeled(
            train=[("a", lab, "b") for lab in labels])
        lines = []
        for i in range(7):
            lines.append(f"rel{i}\trel{(i + 1) % 7}+")
            lines.append(f"rel{i}\trel{(i + 2) % 7}-,rel{(i + 3) % 7}+")
        path = tmp_path / "curated.tsv"
        path.write_text("\n".join(lines) + "\n")
        rules = load_rules(path, store.relations)
        assert rules.total_features() == 14
        assert all(m.coverage is None for r in rules.relations
                   for m in rules.rules_for(r))

    def test_unknown_relation_label_named_in_error(self, tmp_path):
        store, _ = TripleStore.from_labeled(train=[("a", "r1", "b")])
        path = tmp_path / "bad.tsv"
        path.write_text("r1\tmystery+\n")
        with pytest.raises(ParseError) as exc:
            load_rules(path, store.relations)
        assert "mystery" in str(exc.value)

    def test_malformed_line_reports_number(self, tmp_path):
        store, _ = TripleStore.from_labeled(train=[("a", "r1", "b")])
        path = tmp_path / "bad.tsv"
        path.write_text("r1\tr1-\nr1\n")
        with pytest.raises(ParseError) as exc:
            load_rules(path, store.relations)
        assert exc.value.lineno == 2

    def test_mined_rules_survive_round_trip(self, tmp_path, composition_kb=None):
        rng = np.random.default_rng(23)
        store = random_store(rng, n_entities=8, n_relations=3, n_train=50)
        rules = mine_rules(store, min_head_coverage=0.05)
        path = tmp_path / "mined.tsv"
        save_rules(rules, store.relations, path)
        assert load_rules(path, store.relations) == rules
