"""
Evaluation Module

This module aggregates experiment records into gap statistics, paired
Wilcoxon signed-rank tests between strategies, hallucination rates and
per-iteration trajectories, and writes the report tables and plots.
"""

import itertools
import json
import logging
import math
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure
from scipy.stats import norm, rankdata

from .errors import InputError
from .orchestrator import STRATEGIES, ExperimentRecord
from .solution_model import gap_percent

logger = logging.getLogger(__name__)

EXACT_MAX_PAIRS = 20
FLOAT_FORMAT = "%.12g"
STRATEGY_LABELS = {
    "zero_shot": "Zero-shot",
    "multi_agent_1": "Multi-Agent 1",
    "multi_agent_2": "Multi-Agent 2",
}
STRATEGY_COLORS = {
    "zero_shot": "#7f7f7f",
    "multi_agent_1": "#1f77b4",
    "multi_agent_2": "#d62728",
}


@dataclass(frozen=True)
class GapSummary:
    """Gap statistics of one (problem size, m, strategy) group, over valid records only."""

    problem_size: int
    m: int
    strategy: str
    mean_gap: Optional[float]
    std_gap: Optional[float]
    valid_count: int
    total_count: int

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass(frozen=True)
class PairedTestResult:
    """
    Outcome of a two-sided paired Wilcoxon signed-rank test.

    Attributes:
        p_value: Two-sided p in [0, 1]; None when no test was performed
        n_pairs: Number of non-zero differences used
        statistic: W = min(W+, W-)
        method: exact, normal-approximation, degenerate (all differences zero) or skipped (no pairs)
    """

    p_value: Optional[float]
    n_pairs: int
    statistic: Optional[float]
    method: str

    @property
    def performed(self) -> bool:
        return self.p_value is not None

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class PairingResult:
    """Instances where both strategies are valid, plus the excluded ones with a reason."""

    pairs: List[Tuple[str, float, float]] = field(default_factory=list)
    excluded: List[Tuple[str, str]] = field(default_factory=list)

    @property
    def first(self) -> List[float]:
        return [a for _, a, _ in self.pairs]

    @property
    def second(self) -> List[float]:
        return [b for _, _, b in self.pairs]

    def excluded_counts(self) -> Dict[str, int]:
        return dict(sorted(Counter(reason for _, reason in self.excluded).items()))


@dataclass(frozen=True)
class PairedComparison:
    """A paired test between strategies x and y on one (problem size, m) cell."""

    problem_size: int
    m: int
    x: str
    y: str
    instances: int
    excluded: Dict[str, int]
    result: PairedTestResult

    def to_dict(self) -> Dict:
        return {
            "problem_size": self.problem_size,
            "m": self.m,
            "x": self.x,
            "y": self.y,
            "instances": self.instances,
            "excluded": self.excluded,
            **self.result.to_dict(),
        }


def _final_distance(record: ExperimentRecord) -> Optional[float]:
    return record.final_distance if record.status == "complete" else None


def pair_filter(a: Sequence[ExperimentRecord], b: Sequence[ExperimentRecord]) -> PairingResult:
    """
    Pair the final distances of two strategies per instance.

    Only instances where both strategies produced a valid final route are
    paired; every other instance is listed in excluded with its reason.

    Raises:
        InputError: when a and b do not cover the same instance ids
    """
    by_id_a = _index_by_instance(a)
    by_id_b = _index_by_instance(b)
    if set(by_id_a) != set(by_id_b):
        only_a = sorted(set(by_id_a) - set(by_id_b))
        only_b = sorted(set(by_id_b) - set(by_id_a))
        raise InputError(f"Record sets cover different instances (only first: {only_a}, only second: {only_b})")

    result = PairingResult()
    for instance_id in sorted(by_id_a):
        da = _final_distance(by_id_a[instance_id])
        db = _final_distance(by_id_b[instance_id])
        if da is not None and db is not None:
            result.pairs.append((instance_id, da, db))
        elif da is None and db is None:
            result.excluded.append((instance_id, "both_invalid"))
        elif da is None:
            result.excluded.append((instance_id, "first_invalid"))
        else:
            result.excluded.append((instance_id, "second_invalid"))
    return result


def _index_by_instance(records: Sequence[ExperimentRecord]) -> Dict[str, ExperimentRecord]:
    index = {}
    for record in records:
        if record.instance_id in index:
            raise InputError(f"Duplicate record for instance {record.instance_id}")
        index[record.instance_id] = record
    return index


def record_gap(record: ExperimentRecord, reference_distance: Optional[float] = None) -> Optional[float]:
    """Gap of a record's final distance, None for hallucinated or failed runs."""
    distance = _final_distance(record)
    if distance is None:
        return None
    reference = reference_distance if reference_distance is not None else record.reference_distance
    if reference is None:
        raise InputError(f"No reference distance for {record.instance_id} (m={record.m})")
    return gap_percent(distance, reference)


def _mean_std(values: Sequence[float]) -> Tuple[Optional[float], Optional[float]]:
    if not values:
        return None, None
    ordered = np.sort(np.asarray(values, dtype=float))
    mean = float(np.mean(ordered))
    std = float(np.std(ordered, ddof=1)) if len(ordered) > 1 else None
    return mean, std


def summarize_gaps(records: Iterable[ExperimentRecord],
                   reference_distances: Optional[Mapping[Tuple[str, int], float]] = None) -> List[GapSummary]:
    """
    Mean and sample standard deviation of defined gaps per (problem size, m, strategy).

    Args:
        records: Experiment records
        reference_distances: Optional (instance_id, m) -> reference distance;
            records carry their own reference otherwise

    Returns:
        GapSummary list ordered by problem size, m and strategy
    """
    groups: Dict[Tuple[int, int, str], List[Optional[float]]] = defaultdict(list)
    for record in records:
        reference = (reference_distances or {}).get((record.instance_id, record.m))
        groups[(record.problem_size, record.m, record.strategy)].append(record_gap(record, reference))

    summaries = []
    for (size, m, strategy) in sorted(groups, key=lambda key: (key[0], key[1], _strategy_order(key[2]))):
        gaps = groups[(size, m, strategy)]
        defined = [g for g in gaps if g is not None]
        mean, std = _mean_std(defined)
        summaries.append(GapSummary(size, m, strategy, mean, std, len(defined), len(gaps)))
    return summaries


def _strategy_order(strategy: str) -> Tuple[int, str]:
    return (STRATEGIES.index(strategy) if strategy in STRATEGIES else len(STRATEGIES), strategy)


def _exact_lower_tail(doubled_ranks: Sequence[int], threshold: int) -> float:
    """P(T+ <= threshold) under the null, T+ counted in doubled-rank units."""
    total = sum(doubled_ranks)
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for r in doubled_ranks:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:total + 1 - r]
        counts = counts + shifted
    return float(counts[:threshold + 1].sum()) / 2.0 ** len(doubled_ranks)


def wilcoxon_signed_rank(x: Sequence[float], y: Sequence[float]) -> PairedTestResult:
    """
    Two-sided paired Wilcoxon signed-rank test on d = x - y.

    Zero differences are dropped and tied |d| get mid-ranks. With at most 20
    non-zero differences the p-value comes from the exact null distribution
    of the signed-rank sum; beyond that from the normal approximation with
    tie-corrected variance and continuity correction.

    Raises:
        InputError: for empty or unequal-length inputs
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size == 0:
        raise InputError(f"Paired samples need equal non-zero lengths, got {x.shape} and {y.shape}")

    d = x - y
    d = d[d != 0]
    n = int(d.size)
    if n == 0:
        return PairedTestResult(p_value=None, n_pairs=0, statistic=None, method="degenerate")

    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    statistic = min(w_plus, w_minus)

    if n <= EXACT_MAX_PAIRS:
        doubled = [int(round(2 * r)) for r in ranks]
        p = 2.0 * _exact_lower_tail(doubled, int(round(2 * statistic)))
        method = "exact"
    else:
        mean = n * (n + 1) / 4.0
        _, tie_sizes = np.unique(ranks, return_counts=True)
        variance = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(tie_sizes ** 3 - tie_sizes)) / 48.0
        z = (statistic - mean + 0.5) / math.sqrt(variance)
        p = 2.0 * float(norm.cdf(z))
        method = "normal-approximation"
    return PairedTestResult(p_value=min(1.0, max(0.0, p)), n_pairs=n, statistic=statistic, method=method)


def _group_records(records: Iterable[ExperimentRecord]) -> Dict[Tuple[int, int], Dict[str, List[ExperimentRecord]]]:
    cells: Dict[Tuple[int, int], Dict[str, List[ExperimentRecord]]] = defaultdict(lambda: defaultdict(list))
    for record in records:
        cells[(record.problem_size, record.m)][record.strategy].append(record)
    return cells


def strategy_pairs(strategies: Iterable[str]) -> List[Tuple[str, str]]:
    """Every pair of strategies present; zero_shot is always the x side."""
    ordered = sorted(set(strategies), key=_strategy_order)
    return list(itertools.combinations(ordered, 2))


def paired_tests(records: Iterable[ExperimentRecord]) -> List[PairedComparison]:
    """Wilcoxon test for every strategy pair on every (problem size, m) cell."""
    comparisons = []
    cells = _group_records(records)
    for (size, m) in sorted(cells):
        by_strategy = cells[(size, m)]
        for x, y in strategy_pairs(by_strategy):
            pairing = pair_filter(by_strategy[x], by_strategy[y])
            if pairing.pairs:
                result = wilcoxon_signed_rank(pairing.first, pairing.second)
            else:
                result = PairedTestResult(p_value=None, n_pairs=0, statistic=None, method="skipped")
            comparisons.append(PairedComparison(
                problem_size=size, m=m, x=x, y=y,
                instances=len(pairing.pairs) + len(pairing.excluded),
                excluded=pairing.excluded_counts(),
                result=result,
            ))
    return comparisons


def trajectory(record: ExperimentRecord) -> List[Optional[float]]:
    """Distance of the selected candidate per iteration; None where it was hallucinated."""
    return [it.selected_candidate.distance if it.candidates else None for it in record.iterations]


def hallucination_rates(records: Iterable[ExperimentRecord]) -> List[Dict]:
    """Share of invalid initializer outputs, invalid candidates and missing finals per group."""
    groups: Dict[Tuple[int, int, str], List[ExperimentRecord]] = defaultdict(list)
    for record in records:
        groups[(record.problem_size, record.m, record.strategy)].append(record)

    rows = []
    for key in sorted(groups, key=lambda k: (k[0], k[1], _strategy_order(k[2]))):
        group = groups[key]
        initial = [r.iterations[0].candidates[0] for r in group if r.iterations and r.iterations[0].candidates]
        candidates = [c for r in group for _, _, c in r.candidates()]
        rows.append({
            "problem_size": key[0],
            "m": key[1],
            "strategy": key[2],
            "records": len(group),
            "initializer_invalid_rate": _share(initial),
            "candidate_invalid_rate": _share(candidates),
            "final_invalid_rate": sum(1 for r in group if _final_distance(r) is None) / len(group),
            "failed_runs": sum(1 for r in group if r.status != "complete"),
        })
    return rows


def _share(candidates) -> Optional[float]:
    if not candidates:
        return None
    return sum(1 for c in candidates if not c.valid) / len(candidates)


def gap_reductions(summaries: Sequence[GapSummary], records: Optional[Iterable[ExperimentRecord]] = None,
                   baseline: str = "zero_shot") -> List[Dict]:
    """
    Mean-gap reduction of every strategy against the baseline per (problem size, m).

    reduction is baseline mean gap minus strategy mean gap over all valid
    records; paired_reduction uses only instances valid under both.
    """
    by_key = {(s.problem_size, s.m, s.strategy): s for s in summaries}
    cells = _group_records(records) if records is not None else {}
    rows = []
    for (size, m, strategy), summary in sorted(by_key.items(), key=lambda kv: (kv[0][0], kv[0][1], _strategy_order(kv[0][2]))):
        base = by_key.get((size, m, baseline))
        if strategy == baseline or base is None:
            continue
        reduction = None
        if base.mean_gap is not None and summary.mean_gap is not None:
            reduction = base.mean_gap - summary.mean_gap
        paired = None
        cell = cells.get((size, m))
        if cell and baseline in cell and strategy in cell:
            pairing = pair_filter(cell[baseline], cell[strategy])
            base_records = _index_by_instance(cell[baseline])
            other_records = _index_by_instance(cell[strategy])
            diffs = [record_gap(base_records[i]) - record_gap(other_records[i]) for i, _, _ in pairing.pairs]
            paired = float(np.mean(np.sort(diffs))) if diffs else None
        rows.append({"problem_size": size, "m": m, "strategy": strategy, "baseline": baseline,
                     "reduction": reduction, "paired_reduction": paired})
    return rows


# Report emission

def _new_figure(width: float = 6.4, height: float = 4.8) -> Figure:
    figure = Figure(figsize=(width, height), dpi=100)
    FigureCanvasAgg(figure)
    return figure


def _save(figure: Figure, path: Path):
    figure.savefig(path, format="png", metadata={"Software": None})


def _plot_metric(summaries: Sequence[GapSummary], m: int, metric: str, ylabel: str, path: Path):
    figure = _new_figure()
    axes = figure.add_subplot(1, 1, 1)
    rows = [s for s in summaries if s.m == m]
    for strategy in sorted({s.strategy for s in rows}, key=_strategy_order):
        points = sorted((s.problem_size, getattr(s, metric)) for s in rows if s.strategy == strategy)
        sizes = [p[0] for p in points]
        values = [np.nan if p[1] is None else p[1] for p in points]
        axes.plot(sizes, values, marker="o", label=STRATEGY_LABELS.get(strategy, strategy),
                  color=STRATEGY_COLORS.get(strategy))
    axes.set_xlabel("Problem size")
    axes.set_ylabel(ylabel)
    axes.set_title(f"m = {m}")
    axes.grid(True, alpha=0.3)
    axes.legend()
    _save(figure, path)


def _plot_reductions(rows: Sequence[Dict], path: Path):
    ms = sorted({row["m"] for row in rows})
    figure = _new_figure(4.8 * max(1, len(ms)), 4.8)
    for position, m in enumerate(ms, start=1):
        axes = figure.add_subplot(1, len(ms), position)
        cell_rows = [row for row in rows if row["m"] == m]
        sizes = sorted({row["problem_size"] for row in cell_rows})
        strategies = sorted({row["strategy"] for row in cell_rows}, key=_strategy_order)
        width = 0.8 / max(1, len(strategies))
        for i, strategy in enumerate(strategies):
            values = []
            for size in sizes:
                match = [r["reduction"] for r in cell_rows if r["problem_size"] == size and r["strategy"] == strategy]
                values.append(np.nan if not match or match[0] is None else match[0])
            offsets = [k + (i - (len(strategies) - 1) / 2) * width for k in range(len(sizes))]
            axes.bar(offsets, values, width=width, label=STRATEGY_LABELS.get(strategy, strategy),
                     color=STRATEGY_COLORS.get(strategy))
        axes.set_xticks(list(range(len(sizes))))
        axes.set_xticklabels([str(s) for s in sizes])
        axes.axhline(0.0, color="black", linewidth=0.8)
        axes.set_xlabel("Problem size")
        axes.set_ylabel("Mean gap reduction (%)")
        axes.set_title(f"m = {m}")
        axes.legend()
    _save(figure, path)


def _format_p(result: PairedTestResult) -> str:
    if result.method in ("skipped", "degenerate"):
        return result.method
    return f"{result.p_value:.6g}"


def wilcoxon_table(comparisons: Sequence[PairedComparison], x: str, y: str) -> pd.DataFrame:
    """p-value and pair-count table: one row per problem size, columns per m in ascending order."""
    rows = [{"problem_size": c.problem_size, "m": c.m, "p": _format_p(c.result), "pairs": c.result.n_pairs}
            for c in comparisons if c.x == x and c.y == y]
    frame = pd.DataFrame(rows)
    table = frame.pivot(index="problem_size", columns="m", values=["p", "pairs"])
    ms = sorted(frame["m"].unique())
    table = table[[(value, m) for m in ms for value in ("p", "pairs")]]
    table.columns = [f"m={m} {'p-value' if value == 'p' else 'pairs'}" for value, m in table.columns]
    return table.sort_index()


def emit_report(summaries: Sequence[GapSummary], tests: Sequence[PairedComparison], out_dir: Path,
                records: Optional[Sequence[ExperimentRecord]] = None) -> Dict[str, Path]:
    """
    Write report tables and plots.

    Args:
        summaries: Gap summaries
        tests: Paired comparisons (may be empty when only one strategy ran)
        out_dir: Report directory
        records: Records for hallucination rates, trajectories and paired reductions

    Returns:
        Mapping of artefact name to written path
    """
    if not summaries:
        raise InputError("Nothing to report: no gap summaries")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: Dict[str, Path] = {}

    gap_frame = pd.DataFrame([s.to_dict() for s in summaries])
    written["gap_summary"] = out_dir / "gap_summary.csv"
    gap_frame.to_csv(written["gap_summary"], index=False, float_format=FLOAT_FORMAT, lineterminator="\n")

    for x, y in sorted({(c.x, c.y) for c in tests}, key=lambda p: (_strategy_order(p[0]), _strategy_order(p[1]))):
        name = f"wilcoxon_{x}_vs_{y}"
        written[name] = out_dir / f"{name}.csv"
        wilcoxon_table(tests, x, y).to_csv(written[name], lineterminator="\n")

    reductions = gap_reductions(summaries, records)
    if reductions:
        written["gap_reduction"] = out_dir / "gap_reduction.csv"
        pd.DataFrame(reductions).to_csv(written["gap_reduction"], index=False, float_format=FLOAT_FORMAT,
                                        lineterminator="\n")
        written["gap_reduction_plot"] = out_dir / "gap_reduction.png"
        _plot_reductions(reductions, written["gap_reduction_plot"])

    for m in sorted({s.m for s in summaries}):
        written[f"gap_mean_m{m}"] = out_dir / f"gap_mean_m{m}.png"
        _plot_metric(summaries, m, "mean_gap", "Mean gap (%)", written[f"gap_mean_m{m}"])
        written[f"gap_std_m{m}"] = out_dir / f"gap_std_m{m}.png"
        _plot_metric(summaries, m, "std_gap", "Gap standard deviation (%)", written[f"gap_std_m{m}"])

    if records is not None:
        written["hallucination_rates"] = out_dir / "hallucination_rates.csv"
        pd.DataFrame(hallucination_rates(records)).to_csv(
            written["hallucination_rates"], index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        written["trajectories"] = out_dir / "trajectories.csv"
        _trajectory_frame(records).to_csv(written["trajectories"], index=False, float_format=FLOAT_FORMAT,
                                          lineterminator="\n")

    summary = {
        "gap_summaries": [s.to_dict() for s in summaries],
        "paired_tests": [c.to_dict() for c in tests],
        "gap_reductions": reductions,
        "metadata": {
            "zero_differences": "dropped",
            "ties": "mid-ranks",
            "exact_max_pairs": EXACT_MAX_PAIRS,
            "alternative": "two-sided",
            "std": "sample (n-1)",
            "gap_reference": "harness reference solver (savings + guided local search)",
        },
    }
    if all(s.valid_count == 0 for s in summaries):
        summary["notice"] = "no valid records"
    written["summary"] = out_dir / "summary.json"
    with open(written["summary"], "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")

    logger.info("Report written to %s (%d files)", out_dir, len(written))
    return written


def _trajectory_frame(records: Sequence[ExperimentRecord]) -> pd.DataFrame:
    rows = []
    ordered = sorted(records, key=lambda r: (r.problem_size, r.m, _strategy_order(r.strategy), r.instance_id))
    for record in ordered:
        for iteration, distance in enumerate(trajectory(record)):
            rows.append({
                "instance_id": record.instance_id,
                "problem_size": record.problem_size,
                "m": record.m,
                "strategy": record.strategy,
                "iteration": iteration,
                "distance": distance,
            })
    return pd.DataFrame(rows, columns=["instance_id", "problem_size", "m", "strategy", "iteration", "distance"])


def build_report(records: Sequence[ExperimentRecord], out_dir: Path) -> Dict[str, Path]:
    """Summaries, paired tests and report files for a set of records."""
    summaries = summarize_gaps(records)
    return emit_report(summaries, paired_tests(records), out_dir, records)
