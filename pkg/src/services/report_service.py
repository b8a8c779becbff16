"""Tab-separated result tables and key=value summaries."""

import math
from pathlib import Path
from typing import Any, Iterable, List, Mapping, Optional, Sequence

from src.adoption.evaluation import Decomposition, EvalReport
from src.adoption.model import FitResult


def _num(value: Optional[float]) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "NA"
    return f"{value:.10g}"


class ReportService:
    """Writes run outputs under one directory; every table starts with a
    ``#``-prefixed header row."""

    def __init__(self, out_dir: str | Path):
        self.out_dir = Path(out_dir)

    def _table(
        self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]
    ) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        with path.open("w", encoding="utf-8", newline="\n") as f:
            f.write("# " + "\t".join(header) + "\n")
            for row in rows:
                f.write("\t".join(str(x) for x in row) + "\n")
        return path

    def write_summary(self, name: str, values: Mapping[str, Any]) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        with path.open("w", encoding="utf-8", newline="\n") as f:
            for key, value in values.items():
                if isinstance(value, float) or value is None:
                    value = _num(value)
                f.write(f"{key}={value}\n")
        return path

    def write_trace(self, result: FitResult) -> Path:
        return self._table(
            "trace.tsv",
            ["sweep", "loglik"],
            ((k, f"{ll:.17g}") for k, ll in enumerate(result.trace)),
        )

    def write_recall(self, reports: Sequence[EvalReport]) -> List[Path]:
        if not reports:
            return []
        xs = reports[0].x_values
        recall_cols = [f"recall@{X}" for X in xs]
        written = [
            self._table(
                "recall.tsv",
                ["model", *recall_cols],
                ([r.model_tag, *(_num(r.recall_at[X]) for X in xs)] for r in reports),
            ),
            self._table(
                "recall_std.tsv",
                ["model", *recall_cols],
                ([r.model_tag, *(_num(r.recall_std[X]) for X in xs)] for r in reports),
            ),
            self._table(
                "recall_per_user.tsv",
                ["model", "user", "activity", *recall_cols],
                (
                    [r.model_tag, s.user, _num(s.activity), *map(_num, s.recalls)]
                    for r in reports
                    for s in r.per_user.values()
                ),
            ),
        ]
        buckets = [b for r in reports for b in r.activity_buckets]
        if buckets:
            written.append(
                self._table(
                    "activity_buckets.tsv",
                    ["model", "bucket", "n_users", "mean", "std"],
                    (
                        [b.model, b.label, b.n_users, _num(b.mean), _num(b.std)]
                        for b in buckets
                    ),
                )
            )
        return written

    def write_decomposition(self, decomposition: Decomposition) -> Path:
        return self._table(
            "decomposition.tsv",
            ["item_id", "cascade_size", "E_V", "E_I", "E_P"],
            (
                [
                    d.item_id,
                    d.cascade_size,
                    _num(d.expected_visibility),
                    _num(d.expected_fitness),
                    _num(d.expected_relevance),
                ]
                for d in decomposition.items
            ),
        )
