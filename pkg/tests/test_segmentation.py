from __future__ import annotations

import random

from crossling.segmentation import SENTENCE, SEPARATOR, Segment, RuleBasedSplitter, segment

LATIN_SENTENCES = [
    "The reservoir stores water for the dry season.",
    "Bees navigate by the angle of the sun!",
    "Is the bridge load-bearing?",
    "Mortar cures slowly in cold weather.",
    "Dr. Alvarez approved the plan.",
    "It costs approx. nine euros per kilo.",
]
CJK_SENTENCES = ["热带气旋在八月穿越了加勒比海。", "它快速向西移动并逐渐减弱。"]
DEVANAGARI_SENTENCES = ["नदी पहाड़ों से निकलती है।", "वर्षा ऋतु में जल स्तर बढ़ता है।"]
BULLET_MARKERS = ["- ", "* ", "1. ", "2. ", "12. "]


def build_document(rng: random.Random) -> str:
    """Random document mixing paragraphs, bullet lists, blank lines, scripts."""
    blocks: list[str] = []
    for _ in range(rng.randint(1, 6)):
        kind = rng.choice(["para", "bullets", "blank", "mixed"])
        if kind == "para":
            pool = rng.choice([LATIN_SENTENCES, CJK_SENTENCES, DEVANAGARI_SENTENCES])
            blocks.append(" ".join(rng.sample(pool, k=min(len(pool), rng.randint(1, 3)))))
        elif kind == "bullets":
            lines = [
                rng.choice(BULLET_MARKERS) + rng.choice(LATIN_SENTENCES + CJK_SENTENCES)
                for _ in range(rng.randint(1, 4))
            ]
            blocks.append("\n".join(lines))
        elif kind == "blank":
            blocks.append("")
        else:
            blocks.append(
                rng.choice(LATIN_SENTENCES)
                + "\n\n"
                + rng.choice(BULLET_MARKERS)
                + rng.choice(DEVANAGARI_SENTENCES)
            )
    doc = "\n\n".join(blocks)
    if rng.random() < 0.3:
        doc += "\n"
    if rng.random() < 0.2:
        doc = "  " + doc
    return doc


def corpus(n: int, seed: int = 20240501) -> list[str]:
    rng = random.Random(seed)
    return [build_document(rng) for _ in range(n)]


def assert_invariants(text: str) -> None:
    st = segment(text)
    assert st.text == text, f"lossless violated for {text!r}"
    for left, right in zip(st.segments, st.segments[1:]):
        assert not (left.kind == SEPARATOR and right.kind == SEPARATOR), (
            f"adjacent separators for {text!r}"
        )
    for seg in st.segments:
        assert seg.text, "empty segment emitted"
        if seg.kind == SENTENCE:
            assert "\n" not in seg.text and "\r" not in seg.text


def test_two_sentence_split():
    st = segment("Hello world. How are you?")
    assert [(s.kind, s.text) for s in st.segments] == [
        (SENTENCE, "Hello world."),
        (SEPARATOR, " "),
        (SENTENCE, "How are you?"),
    ]


def test_bullet_list_preserved_as_separators():
    st = segment("Intro:\n\n- item one\n- item two")
    assert [(s.kind, s.text) for s in st.segments] == [
        (SENTENCE, "Intro:"),
        (SEPARATOR, "\n\n- "),
        (SENTENCE, "item one"),
        (SEPARATOR, "\n- "),
        (SENTENCE, "item two"),
    ]


def test_empty_text_gives_empty_segments():
    assert segment("").segments == ()


def test_abbreviations_do_not_split():
    st = segment("Dr. Smith arrived. He left.")
    assert [s.text for s in st.sentences()] == ["Dr. Smith arrived.", "He left."]


def test_single_initials_do_not_split():
    st = segment("Work by J. Doe. Nothing else.")
    assert [s.text for s in st.sentences()] == ["Work by J. Doe.", "Nothing else."]


def test_lowercase_after_period_does_not_split():
    st = segment("See version 2.1 notes. also see the appendix")
    texts = [s.text for s in st.sentences()]
    assert texts == ["See version 2.1 notes. also see the appendix"]


def test_numbered_list_markers_are_separators():
    st = segment("1. First item\n2. Second item")
    assert st.sentences()[0].text == "First item"
    assert st.sentences()[1].text == "Second item"
    assert st.separators()[0].text == "1. "


def test_whole_text_without_boundary_is_one_sentence():
    text = "a single line without terminal punctuation"
    st = segment(text)
    assert [s.text for s in st.sentences()] == [text]


def test_worst_case_separator_only_text():
    st = segment("\n\n  \n")
    assert len(st.segments) == 1
    assert st.segments[0].kind == SEPARATOR
    assert st.text == "\n\n  \n"


def test_replace_sentences_identity_roundtrip():
    text = "First point. Second point!\n\n- third\n- fourth"
    st = segment(text)
    assert st.replace_sentences([s.text for s in st.sentences()]) == text


def test_replace_sentences_size_mismatch_rejected():
    st = segment("One. Two.")
    try:
        st.replace_sentences(["only one"])
    except ValueError:
        pass
    else:
        raise AssertionError("expected ValueError for mismatched replacement count")


def test_splitter_protocol_pluggable():
    class WholeTextSplitter:
        def segment(self, text):
            from crossling.segmentation import SegmentedText

            if not text:
                return SegmentedText(())
            return SegmentedText((Segment(SENTENCE, text),))

    st = segment("A. B. C.", splitter=WholeTextSplitter())
    assert len(st.sentences()) == 1


def test_property_corpus_invariants():
    for doc in corpus(200):
        assert_invariants(doc)


def test_rule_based_splitter_is_deterministic():
    splitter = RuleBasedSplitter()
    for doc in corpus(25, seed=7):
        assert splitter.segment(doc) == splitter.segment(doc)
