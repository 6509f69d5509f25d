"""Fine-grained accuracy report: per-category single and pair scores.

Single accuracy is the fraction of samples answered correctly within a
category. Pair accuracy counts a pair only when BOTH members are
correct, so it can never exceed the single score. The "all" cells pool
every category.
"""

from dataclasses import dataclass

COLUMNS = (
    "number_s",
    "number_p",
    "count_s",
    "count_p",
    "other",
    "all_s",
    "all_p",
)

HEADERS = ("number (s)", "number (p)", "count (s)", "count (p)", "Other", "all (s)", "all (p)")


@dataclass
class MetricReport:
    number_s: float
    number_p: float
    count_s: float
    count_p: float
    other: float
    other_p: float
    all_s: float
    all_p: float

    def values(self):
        return tuple(getattr(self, c) for c in COLUMNS)

    def table(self, label="accuracy"):
        """Aligned two-row text table matching the column order above."""
        width = max(len(h) for h in HEADERS) + 2
        head = "".join(h.rjust(width) for h in HEADERS)
        row = "".join(f"{100.0 * v:.2f}".rjust(width) for v in self.values())
        return f"{label}\n{head}\n{row}"

    def csv(self):
        lines = [",".join(HEADERS)]
        lines.append(",".join(f"{100.0 * v:.4f}" for v in self.values()))
        return "\n".join(lines) + "\n"

    def to_dict(self):
        d = {c: getattr(self, c) for c in COLUMNS}
        d["other_p"] = self.other_p
        return d


class PairIntegrityError(ValueError):
    """A pair is missing a member, so pair accuracy is undefined."""


def compute_report(samples, correct):
    """Build a MetricReport from samples and a per-sample correctness map.

    ``correct`` maps sample id -> bool. Every pair must appear with
    exactly two members.
    """
    by_pair = {}
    for s in samples:
        by_pair.setdefault(s.pair_id, []).append(s)
    for pid, members in by_pair.items():
        if len(members) != 2:
            raise PairIntegrityError(
                f"pair {pid} has {len(members)} member(s); expected exactly 2"
            )

    def single(cat=None):
        hits = total = 0
        for s in samples:
            if cat is None or s.category == cat:
                total += 1
                hits += bool(correct[s.id])
        return hits / total if total else 0.0

    def paired(cat=None):
        hits = total = 0
        for pid, members in by_pair.items():
            if cat is None or members[0].category == cat:
                total += 1
                hits += all(correct[m.id] for m in members)
        return hits / total if total else 0.0

    return MetricReport(
        number_s=single("number"),
        number_p=paired("number"),
        count_s=single("count"),
        count_p=paired("count"),
        other=single("other"),
        other_p=paired("other"),
        all_s=single(),
        all_p=paired(),
    )
