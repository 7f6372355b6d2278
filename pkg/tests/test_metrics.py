import pytest
from hypothesis import given, strategies as st

from radgraphgen.graph import make_graph
from radgraphgen.metrics import (
    PRF,
    bleu1,
    chexpert_label_f1,
    entity_micro_prf,
    graph_report,
    lcs_length,
    relation_micro_prf,
    rouge_l,
    tokenize,
)

from strategies import graphs

ATEL, EFF, PLEURAL = 0, 1, 2
DP, UN = "definitely_present", "uncertain"


def counts(prf: PRF):
    return prf.tp, prf.fp, prf.fn


class TestEntityExamples:
    def test_extra_prediction(self):
        prf = entity_micro_prf([make_graph([(ATEL, DP), (EFF, DP)])], [make_graph([(ATEL, DP)])])
        assert counts(prf) == (1, 1, 0)
        assert (prf.precision, prf.recall) == (0.5, 1.0)
        assert prf.f1 == pytest.approx(2 / 3, abs=1e-15)

    def test_identical(self):
        g = make_graph([(ATEL, DP), (EFF, UN)])
        prf = entity_micro_prf([g], [g])
        assert (prf.precision, prf.recall, prf.f1) == (1.0, 1.0, 1.0)

    def test_empty_prediction(self):
        prf = entity_micro_prf([make_graph([])], [make_graph([(ATEL, DP)])])
        assert counts(prf) == (0, 0, 1)
        assert (prf.precision, prf.recall, prf.f1) == (0.0, 0.0, 0.0)


def eff_at_pleural(head_unc=DP):
    return make_graph([(EFF, head_unc), (PLEURAL, DP)], [(0, 1, "located_at")])


class TestRelationExamples:
    def test_same_triple(self):
        assert relation_micro_prf([eff_at_pleural()], [eff_at_pleural()]).f1 == 1.0

    def test_head_uncertainty_differs(self):
        prf = relation_micro_prf([eff_at_pleural(UN)], [eff_at_pleural()])
        assert counts(prf) == (0, 1, 1)

    def test_class_only_ignores_uncertainty(self):
        prf = relation_micro_prf([eff_at_pleural(UN)], [eff_at_pleural()], class_only=True)
        assert counts(prf) == (1, 0, 0)

    def test_duplicate_prediction(self):
        dup = make_graph(
            [(EFF, DP), (PLEURAL, DP), (EFF, DP)], [(0, 1, "located_at"), (2, 1, "located_at")]
        )
        prf = relation_micro_prf([dup], [eff_at_pleural()])
        assert counts(prf) == (1, 1, 0)


def test_both_empty_corpus_is_perfect():
    prf = entity_micro_prf([make_graph([])], [make_graph([])])
    assert prf.f1 == 1.0 and not prf.undefined


def test_micro_pools_counts_before_rates():
    pred = [make_graph([(ATEL, DP)]), make_graph([(EFF, DP)] * 3)]
    gt = [make_graph([(ATEL, DP)]), make_graph([(EFF, DP), (ATEL, DP)])]
    prf = entity_micro_prf(pred, gt)
    assert counts(prf) == (2, 2, 1)


def test_length_mismatch():
    with pytest.raises(ValueError):
        entity_micro_prf([make_graph([])], [])


@given(st.lists(graphs(), min_size=1, max_size=6))
def test_self_scoring_is_perfect(corpus):
    report = graph_report(corpus, corpus)
    assert report["entity"]["f1"] == 1.0 and report["relation"]["f1"] == 1.0


@given(graphs(), graphs())
def test_f1_bounds_and_symmetry(a, b):
    ab, ba = entity_micro_prf([a], [b]), entity_micro_prf([b], [a])
    assert 0.0 <= ab.f1 <= 1.0
    assert ab.f1 == pytest.approx(ba.f1)
    assert (ab.precision, ab.recall) == pytest.approx((ba.recall, ba.precision))


class TestText:
    def test_tokenize(self):
        assert tokenize("There is no Atelectasis.") == ["there", "is", "no", "atelectasis"]

    def test_bleu(self):
        assert bleu1("the cat sat", "the cat sat") == 1.0
        assert bleu1("the cat", "the cat sat") == pytest.approx(0.6065306597, abs=1e-9)
        assert bleu1("a b", "c d") == 0.0
        assert bleu1("", "c d") == 0.0

    def test_bleu_clipping(self):
        assert bleu1("the the the", "the cat sat") == pytest.approx(1 / 3)

    def test_rouge(self):
        assert rouge_l("the cat sat", "the cat sat") == 1.0
        assert rouge_l("the cat sat", "the cat") == pytest.approx(0.8, abs=1e-15)
        assert rouge_l("a b", "c d") == 0.0
        assert rouge_l("", "") == 0.0

    @given(st.lists(st.sampled_from("abc"), max_size=7), st.lists(st.sampled_from("abc"), max_size=7))
    def test_lcs_against_brute_force(self, a, b):
        from itertools import combinations

        def subseqs(s):
            return {tuple(s[i] for i in idx) for r in range(len(s) + 1) for idx in combinations(range(len(s)), r)}

        assert lcs_length(a, b) == max(len(x) for x in subseqs(a) & subseqs(b))


class TestChexpert:
    def test_worked_example(self):
        pred = [{"PE": True}, {"PE": True}, {"PE": False}]
        gt = [{"PE": True}, {"PE": False}, {"PE": False}]
        prf = chexpert_label_f1(pred, gt)["PE"]
        assert counts(prf) == (1, 1, 0)
        assert prf.f1 == pytest.approx(2 / 3)

    def test_all_correct(self):
        labels = [{"A": True, "B": False}, {"A": False, "B": True}]
        out = chexpert_label_f1(labels, labels)
        assert out["A"].f1 == out["B"].f1 == 1.0

    def test_all_negative_prediction_flagged(self):
        prf = chexpert_label_f1([{"A": False}] * 2, [{"A": True}, {"A": False}])["A"]
        assert prf.f1 == 0.0 and prf.undefined

    def test_label_set_mismatch(self):
        with pytest.raises(ValueError, match="label-set"):
            chexpert_label_f1([{"A": True}], [{"B": True}])
