import hypothesis.strategies as st
import pytest
from hypothesis import settings

from vtc_eval.core import LABELS, Annotation, Entry, Timeline, TimeSpan

settings.register_profile("default", max_examples=100, deadline=None)
settings.load_profile("default")

MS = 1_000_000


@st.composite
def spans(draw, max_ms=20_000):
    a = draw(st.integers(0, max_ms - 1))
    b = draw(st.integers(a + 1, max_ms))
    return TimeSpan(a * MS, b * MS)


@st.composite
def annotations(draw, recording_id="rec", max_entries=12, max_ms=20_000):
    items = draw(
        st.lists(st.tuples(spans(max_ms), st.sampled_from(LABELS)), max_size=max_entries)
    )
    return Annotation(recording_id, tuple(Entry(s, l) for s, l in items))


@st.composite
def timelines(draw, max_spans=6, max_ms=20_000):
    return Timeline(tuple(draw(st.lists(spans(max_ms), max_size=max_spans))))


@pytest.fixture
def eval_0_20():
    return {"rec": Timeline.from_seconds([(0, 20)])}
