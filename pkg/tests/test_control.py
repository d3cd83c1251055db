import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gradectl import control, textstats
from gradectl.control import ControlError, ControlVector
from gradectl.corpus import ParsedSentence, make_lexicon
from gradectl.synthetic import synthetic_parse

FREQ = make_lexicon("frequency_rank", {"the": 1, "cat": 50, "sat": 300, "feline": 9000, "mat": 800})

SOURCE = ("Paracho, the \"guitar capital of Mexico,\" makes nearly 1 million classical guitars a year, "
          "many exported to the United States.")
GRADE5 = ("Paracho is known as the \"guitar capital of Mexico.\" The town makes nearly 1 million "
          "classical guitars a year, with many exported to the United States.")
GRADE3 = ("Paracho is known as the \"guitar capital of Mexico.\" The town makes many guitars and "
          "sells some in the United States.")


def chain(record_id, side, n_words, depth):
    """Parse whose depth is exactly ``depth``: a chain plus leaves on the root."""
    heads = [0] + [i for i in range(1, depth)] + [1] * (n_words - depth)
    return ParsedSentence(record_id, side, tuple((f"w{i}", h) for i, h in enumerate(heads)))


grid_floats = st.floats(min_value=-1.0, max_value=3.0, allow_nan=False)


class TestComputeControls:
    def test_identity(self):
        p = synthetic_parse("The cat sat on the mat.", "r", "source")
        v = control.compute_controls("The cat sat on the mat.", "The cat sat on the mat.", FREQ,
                                     (p, p.__class__("r", "reference", p.tokens)))
        assert v == ControlVector(1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0)

    def test_word_ratio(self):
        src = "a b c d e f g h i j."
        tgt = "a b c d e f g h."
        v = control.compute_controls(src, tgt, FREQ, include_dtd=False)
        assert v.w == pytest.approx(0.8)

    def test_char_ratio_definition(self):
        src, tgt = "The feline sat on the mat.", "The cat sat."
        v = control.compute_controls(src, tgt, FREQ, include_dtd=False)
        assert v.c == pytest.approx(textstats.text_stats(tgt).n_chars / textstats.text_stats(src).n_chars,
                                    abs=1e-12)

    def test_dtd_is_source_over_target(self):
        v = control.compute_controls(SOURCE, GRADE5, FREQ, (chain("r", "source", 20, 6),
                                                            chain("r", "reference", 26, 4)))
        assert v.dtd == pytest.approx(1.5)

    def test_example_direction(self):
        # the grade-5 rewrite keeps more words than the grade-3 one
        w5 = control.compute_controls(SOURCE, GRADE5, FREQ, include_dtd=False).w
        w3 = control.compute_controls(SOURCE, GRADE3, FREQ, include_dtd=False).w
        assert w5 == pytest.approx(26 / 20) and w3 == pytest.approx(21 / 20)
        assert w5 > w3

    def test_directions(self):
        src, tgt = "a b c d.", "a b."
        ts = control.compute_controls(src, tgt, FREQ, include_dtd=False, ratio_direction="target_over_source")
        st_ = control.compute_controls(src, tgt, FREQ, include_dtd=False, ratio_direction="source_over_target")
        assert ts.w == 0.5 and st_.w == 2.0

    def test_missing_parse(self):
        with pytest.raises(ControlError):
            control.compute_controls("a b.", "a.", FREQ)

    @pytest.mark.parametrize("src, tgt", [("a b.", ""), ("a b.", "..."), ("   ", "a.")])
    def test_degenerate_pairs(self, src, tgt):
        with pytest.raises(ControlError):
            control.compute_controls(src, tgt, FREQ, include_dtd=False)

    def test_optional_tokens(self):
        v = control.compute_controls("the cat sat.", "the cat.", FREQ, include_dtd=False)
        assert v.cc == 1.0
        assert v.rl == pytest.approx(textstats.replace_levenshtein_similarity("the cat sat.", "the cat."))
        bare = control.compute_controls("the cat sat.", "the cat.", FREQ, include_dtd=False, include_optional=False)
        assert bare.rl is None and bare.cc is None


class TestQuantize:
    @pytest.mark.parametrize("x, q", [(0.83, 0.85), (2.75, 2.0), (1.0, 1.0), (-0.2, 0.05), (0.825, 0.85),
                                      (0.0, 0.05), (1.974, 1.95)])
    def test_values(self, x, q):
        assert control.quantize_value(x) == q

    def test_non_finite(self):
        with pytest.raises(ControlError):
            control.quantize_value(math.nan)

    @given(grid_floats)
    def test_idempotent_and_close(self, x):
        q = control.quantize_value(x)
        assert control.quantize_value(q) == q
        assert control.is_on_grid(q)
        clamped = min(max(x, 0.05), 2.0)
        assert abs(q - clamped) <= 0.025 + 1e-9

    def test_grid(self):
        grid = control.grid_values()
        assert len(grid) == 40 and grid[0] == 0.05 and grid[-1] == 2.0

    def test_optional_fields_kept(self):
        q = control.quantize(ControlVector(0.81, 1, 1, 1, 1, rl=0.333, cc=None))
        assert q.rl == 0.35 and q.cc is None


class TestPrefix:
    def test_ones(self):
        assert control.format_control_prefix(ControlVector.ones(), "Hi.") == \
            "W_1.00 C_1.00 L_1.00 WR_1.00 DTD_1.00 Hi."

    def test_begins_with_w(self):
        text = control.format_control_prefix(ControlVector(0.8, 1, 1, 1, 1), "x")
        assert text.startswith("W_0.80 ")

    def test_unquantized(self):
        with pytest.raises(ControlError):
            control.format_control_prefix(ControlVector(0.831, 1, 1, 1, 1), "x")

    @given(st.lists(grid_floats, min_size=5, max_size=5), st.text(max_size=30))
    def test_round_trip(self, values, source):
        v = control.quantize(ControlVector.from_primary(values))
        parsed, rest = control.parse_control_prefix(control.format_control_prefix(v, source))
        assert parsed == v and rest == source

    @pytest.mark.parametrize("sg, tg, src, out", [(8, 5, "Hi.", "SG_8 TG_5 Hi."), (1, 13, "x", "SG_1 TG_13 x")])
    def test_grade_prefix(self, sg, tg, src, out):
        assert control.format_grade_prefix(sg, tg, src) == out
        assert control.parse_grade_prefix(out) == (sg, tg, src)

    @pytest.mark.parametrize("sg, tg", [(0, 5), (5, 14), (True, 3)])
    def test_grade_prefix_range(self, sg, tg):
        with pytest.raises(ControlError):
            control.format_grade_prefix(sg, tg, "x")

    def test_strip_prefix(self):
        assert control.strip_prefix("SG_3 TG_2 Hello.") == "Hello."
        assert control.strip_prefix("W_1.00 C_1.00 L_1.00 WR_1.00 DTD_1.00 Hello.") == "Hello."
        assert control.strip_prefix("Hello.") == "Hello."


class TestAvgGradeTable:
    def test_mean(self):
        table = control.build_avg_grade_table([(8, 5, ControlVector(0.8, 1, 1, 1, 1)),
                                               (8, 5, ControlVector(1.0, 1, 1, 1, 1))])
        assert table.lookup(8, 5).w == pytest.approx(0.9)
        assert table.count(8, 5) == 2

    def test_single_record(self):
        v = ControlVector(0.7, 0.6, 0.5, 0.9, 1.5)
        assert control.build_avg_grade_table([(3, 2, v)]).lookup(3, 2) == v

    def test_fallback_to_global_mean(self):
        table = control.build_avg_grade_table([(8, 5, ControlVector(0.5, 1, 1, 1, 1)),
                                               (6, 2, ControlVector(1.0, 1, 1, 1, 1))])
        assert table.lookup(12, 1).w == pytest.approx(0.75)
        assert table.count(12, 1) == 0

    def test_empty(self):
        with pytest.raises(ControlError):
            control.build_avg_grade_table([])

    def test_save_load(self, tmp_path):
        rng = np.random.default_rng(0)
        items = [(int(rng.integers(1, 14)), int(rng.integers(1, 14)), ControlVector.from_primary(rng.uniform(0, 2, 5)))
                 for _ in range(30)]
        table = control.build_avg_grade_table(items)
        table.save(tmp_path / "t.json")
        assert control.AvgGradeTable.load(tmp_path / "t.json") == table


class TestControlsIO:
    def test_round_trip(self, tmp_path):
        rows = [("a", ControlVector(0.8, 0.7, 0.6, 0.5, 1.25, 0.9, 0.8)), ("b", ControlVector.ones())]
        assert control.write_controls(rows, tmp_path / "c.jsonl") == 2
        assert control.read_controls(tmp_path / "c.jsonl") == dict(rows)
