"""Shared hypothesis strategies."""
from hypothesis import strategies as st

from radgraphgen.graph import RelationType, Uncertainty, make_graph


@st.composite
def graphs(draw, num_classes: int = 12, max_entities: int = 8):
    n = draw(st.integers(0, max_entities))
    ents = [
        (draw(st.integers(0, num_classes - 1)), draw(st.sampled_from(list(Uncertainty))))
        for _ in range(n)
    ]
    rels = set()
    if n >= 2:
        triples = st.tuples(
            st.integers(0, n - 1), st.integers(0, n - 1), st.sampled_from(list(RelationType))
        ).filter(lambda t: t[0] != t[1])
        rels = draw(st.sets(triples, max_size=2 * n))
    return make_graph(ents, sorted(rels, key=lambda t: (t[0], t[1], t[2].index)))
