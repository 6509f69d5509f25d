"""Accuracy report arithmetic, checked against hand counts."""

import numpy as np
import pytest

from vqalite.data import CATEGORIES, SceneSpec, Sample
from vqalite.metrics import COLUMNS, MetricReport, PairIntegrityError, compute_report


def make_sample(sid, pair_id, member, category):
    return Sample(
        id=sid,
        pair_id=pair_id,
        member=member,
        category=category,
        question_tokens=["q"],
        answer="yes",
        scene=SceneSpec(objects=[], seed=0),
    )


def fixture_with_pattern(patterns):
    """patterns: {category: [(bool, bool), ...]} -> (samples, correct)."""
    samples, correct = [], {}
    sid = 0
    pid = 0
    for category in CATEGORIES:
        for ok_a, ok_b in patterns[category]:
            samples.append(make_sample(sid, pid, "A", category))
            correct[sid] = ok_a
            samples.append(make_sample(sid + 1, pid, "B", category))
            correct[sid + 1] = ok_b
            sid += 2
            pid += 1
    return samples, correct


class TestHandComputedFixture:
    # 4 pairs per category with a known correctness pattern; every cell
    # below is worked out by hand from the pattern
    PATTERNS = {
        "number": [(True, True), (True, False), (False, True), (False, False)],
        "count": [(True, True), (True, True), (True, False), (False, False)],
        "other": [(True, True), (True, True), (True, True), (True, False)],
    }

    def test_exact_report(self):
        samples, correct = fixture_with_pattern(self.PATTERNS)
        report = compute_report(samples, correct)
        assert report.number_s == 4 / 8
        assert report.number_p == 1 / 4
        assert report.count_s == 5 / 8
        assert report.count_p == 2 / 4
        assert report.other == 7 / 8
        assert report.other_p == 3 / 4
        assert report.all_s == 16 / 24
        assert report.all_p == 6 / 12

    def test_pair_never_exceeds_single(self):
        samples, correct = fixture_with_pattern(self.PATTERNS)
        r = compute_report(samples, correct)
        assert r.number_p <= r.number_s
        assert r.count_p <= r.count_s
        assert r.other_p <= r.other
        assert r.all_p <= r.all_s


class TestReportProperties:
    def test_all_correct_and_all_wrong(self):
        patterns = {c: [(True, True)] * 3 for c in CATEGORIES}
        samples, correct = fixture_with_pattern(patterns)
        assert compute_report(samples, correct).values() == (1.0,) * len(COLUMNS)
        assert compute_report(samples, {k: False for k in correct}).values() == (0.0,) * len(COLUMNS)

    def test_pair_bound_holds_on_random_patterns(self):
        rng = np.random.default_rng(123)
        for _ in range(25):
            patterns = {
                c: [tuple(rng.random(2) < 0.6) for _ in range(rng.integers(1, 6))]
                for c in CATEGORIES
            }
            samples, correct = fixture_with_pattern(patterns)
            r = compute_report(samples, correct)
            for pair_col, single_col in (
                ("number_p", "number_s"),
                ("count_p", "count_s"),
                ("other_p", "other"),
                ("all_p", "all_s"),
            ):
                assert getattr(r, pair_col) <= getattr(r, single_col) + 1e-12

    def test_constant_answer_scores_zero_pairs(self):
        # every pair is answer-discriminating, so exactly one member of a
        # pair can agree with a constant prediction
        patterns = {c: [(True, False), (False, True)] for c in CATEGORIES}
        samples, correct = fixture_with_pattern(patterns)
        r = compute_report(samples, correct)
        assert r.all_s == 0.5
        assert r.all_p == 0.0

    def test_incomplete_pair_rejected(self):
        samples, correct = fixture_with_pattern({c: [(True, True)] for c in CATEGORIES})
        samples.pop()
        with pytest.raises(PairIntegrityError, match="pair 2"):
            compute_report(samples, correct)


class TestPresentation:
    def report(self):
        return MetricReport(
            number_s=0.5,
            number_p=0.25,
            count_s=0.625,
            count_p=0.5,
            other=0.875,
            other_p=0.75,
            all_s=16 / 24,
            all_p=0.5,
        )

    def test_values_follow_column_order(self):
        assert self.report().values() == (0.5, 0.25, 0.625, 0.5, 0.875, 16 / 24, 0.5)

    def test_table_shows_percentages(self):
        text = self.report().table(label="val")
        lines = text.splitlines()
        assert lines[0] == "val"
        assert "number (s)" in lines[1] and "all (p)" in lines[1]
        assert "50.00" in lines[2] and "87.50" in lines[2]

    def test_csv_round_trips_values(self):
        text = self.report().csv()
        header, row = text.strip().splitlines()
        assert len(header.split(",")) == len(COLUMNS)
        got = [float(x) for x in row.split(",")]
        assert got == [pytest.approx(100.0 * v, abs=5e-5) for v in self.report().values()]

    def test_to_dict_keeps_other_pair_column(self):
        d = self.report().to_dict()
        assert d["other_p"] == 0.75
        assert set(COLUMNS) <= set(d)
