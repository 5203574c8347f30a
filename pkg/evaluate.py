"""
End-to-end evaluation over the depth/size case suite.

Every case is synthesized, processed and matched; each resulting estimate is
paired with the ground-truth bar nearest to its apex column, and the
per-bar results are reduced to depth and size accuracies plus a size
confusion matrix.
"""

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import pandas as pd

from config import RunConfig, load_config
from core import REBAR_CATALOG, GprBarError, RebarPlacement
from logger import current_settings, get_logger, setup_worker_logger
from match import RebarEstimate, estimate_all
from pipeline import run_scan
from simulate import CaseSpec, CaseSuite, synthesize_bscan
from theory import HyperbolaDatabase
from utils import format_elapsed

logger = get_logger(__name__)

UNMATCHED = 'none'


class EvaluationError(GprBarError):
    """Base exception for suite evaluation."""
    pass


class ConfigMismatch(EvaluationError):
    """Exception raised when scans and database use different calibrations."""
    pass


@dataclass(frozen=True)
class BarResult:
    """One ground-truth bar and the estimate assigned to it."""

    case_id: int
    bar_index: int
    truth: RebarPlacement
    estimate: RebarEstimate

    @property
    def depth_correct(self) -> bool:
        # estimates live on the database depth grid
        return round(self.estimate.depth, 9) == round(self.truth.depth, 9)

    @property
    def size_correct(self) -> bool:
        return self.estimate.size.designation == self.truth.size.designation

    @property
    def size_correct_pm1(self) -> bool:
        return abs(self.estimate.size.ordinal - self.truth.size.ordinal) <= 1

    def to_dict(self) -> Dict[str, Any]:
        return {
            'case_id': self.case_id,
            'bar_index': self.bar_index,
            'truth_depth': self.truth.depth,
            'truth_size': self.truth.size.designation,
            'truth_x0': self.truth.x0,
            'estimate': self.estimate.to_dict(),
            'score': self.estimate.score,
            'depth_correct': self.depth_correct,
            'size_correct': self.size_correct,
            'size_correct_pm1': self.size_correct_pm1,
        }


@dataclass(frozen=True)
class BarFailure:
    """A ground-truth bar without an estimate."""

    case_id: int
    bar_index: int
    truth: RebarPlacement
    reason: str

    def to_dict(self) -> Dict[str, Any]:
        return {
            'case_id': self.case_id,
            'bar_index': self.bar_index,
            'truth_depth': self.truth.depth,
            'truth_size': self.truth.size.designation,
            'reason': self.reason,
        }


@dataclass(frozen=True)
class CaseOutcome:
    """Results of one case, before reduction."""

    case_id: int
    results: Tuple[BarResult, ...] = ()
    failures: Tuple[BarFailure, ...] = ()
    warnings: Tuple[str, ...] = ()


@dataclass(frozen=True)
class EvaluationReport:
    """
    Accuracy summary of a suite run.

    Accuracies are fractions of all truth bars (failures count as wrong)
    and are None when the suite holds no bars. The confusion matrix has one
    row per catalog size (truth) and one column per catalog size plus a
    'none' column for bars without an estimate.
    """

    per_rebar: Tuple[BarResult, ...]
    failures: Tuple[BarFailure, ...]
    warnings: Tuple[str, ...]
    confusion: pd.DataFrame
    depth_accuracy: Optional[float]
    size_accuracy: Optional[float]
    size_accuracy_pm1: Optional[float]
    n_cases: int = 0
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def n_bars(self) -> int:
        return len(self.per_rebar) + len(self.failures)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'n_cases': self.n_cases,
            'n_bars': self.n_bars,
            'depth_accuracy': self.depth_accuracy,
            'size_accuracy': self.size_accuracy,
            'size_accuracy_pm1': self.size_accuracy_pm1,
            'confusion': {
                'sizes': list(self.confusion.index),
                'columns': list(self.confusion.columns),
                'counts': self.confusion.to_numpy().tolist(),
            },
            'per_rebar': [result.to_dict() for result in self.per_rebar],
            'failures': [failure.to_dict() for failure in self.failures],
            'warnings': list(self.warnings),
            'metadata': dict(self.metadata),
        }


def assign_estimates(estimates: Sequence[RebarEstimate], truths: Sequence[RebarPlacement],
                     dx: float, assign_radius: int) -> Tuple[Dict[int, int], List[int]]:
    """
    Greedy one-to-one pairing of estimates and bars by apex column.

    Pairs are taken in order of increasing column distance (ties by bar
    index, then estimate index) and only within assign_radius columns.

    Returns:
        Tuple of ({bar index: estimate index}, unassigned estimate indices)
    """
    pairs = []
    for j, truth in enumerate(truths):
        truth_col = truth.x0 / dx
        for i, estimate in enumerate(estimates):
            distance = abs(estimate.apex_col - truth_col)
            if distance <= assign_radius:
                pairs.append((distance, j, i))
    pairs.sort()

    assigned: Dict[int, int] = {}
    used = set()
    for _, j, i in pairs:
        if j in assigned or i in used:
            continue
        assigned[j] = i
        used.add(i)
    leftover = [i for i in range(len(estimates)) if i not in used]
    return assigned, leftover


def run_case(case: CaseSpec, db: HyperbolaDatabase, config: RunConfig) -> CaseOutcome:
    """
    Synthesize, process and match one case.

    Any pipeline error turns every bar of the case into a failure record.
    """
    truths = case.scene.placements
    start_time = time.monotonic()
    try:
        scan, _ = synthesize_bscan(case.scene)
        processed = run_scan(scan, config, seed=case.scene.seed)
        matched = estimate_all(processed.outlines, db, config.distance_mode, config.min_outline_points)
    except GprBarError as e:
        logger.error(f"Case {case.case_id} failed: {e}")
        failures = tuple(
            BarFailure(case.case_id, j, truth, f"case failed: {type(e).__name__}: {e}")
            for j, truth in enumerate(truths)
        )
        return CaseOutcome(case.case_id, failures=failures)

    warnings = [
        f"case {case.case_id}: dropped label {d.label} ({d.n_points} columns, {d.reason})"
        for d in processed.dropped
    ]
    estimates = [estimate for _, estimate in matched]
    assigned, leftover = assign_estimates(estimates, truths, case.scene.config.dx, config.assign_radius)
    for i in leftover:
        warnings.append(
            f"case {case.case_id}: outline at column {estimates[i].apex_col} matches no bar"
        )

    results = []
    failures = []
    for j, truth in enumerate(truths):
        if j in assigned:
            results.append(BarResult(case.case_id, j, truth, estimates[assigned[j]]))
        else:
            logger.warning(f"Case {case.case_id}: bar {j} at x0={truth.x0:.3f} m has no outline")
            failures.append(BarFailure(
                case.case_id, j, truth, f"no outline within {config.assign_radius} columns"
            ))

    logger.debug(
        f"Case {case.case_id}: {len(results)}/{len(truths)} bars estimated in "
        f"{format_elapsed(time.monotonic() - start_time)}"
    )
    return CaseOutcome(case.case_id, tuple(results), tuple(failures), tuple(warnings))


def _run_case_job(args: Tuple[CaseSpec, HyperbolaDatabase, RunConfig]) -> CaseOutcome:
    return run_case(*args)


def confusion_matrix(results: Sequence[BarResult], failures: Sequence[BarFailure] = ()) -> pd.DataFrame:
    """Truth size x estimated size counts over the full catalog."""
    sizes = [size.designation for size in REBAR_CATALOG]
    truth = [r.truth.size.designation for r in results] + [f.truth.size.designation for f in failures]
    estimated = [r.estimate.size.designation for r in results] + [UNMATCHED] * len(failures)
    columns = sizes + [UNMATCHED]
    if not truth:
        return pd.DataFrame(0, index=pd.Index(sizes, name='truth'),
                            columns=pd.Index(columns, name='estimate'))
    table = pd.crosstab(pd.Series(truth, name='truth'), pd.Series(estimated, name='estimate'))
    table = table.reindex(index=sizes, columns=columns, fill_value=0).astype(int)
    table.index.name = 'truth'
    table.columns.name = 'estimate'
    return table


def summarize(outcomes: Sequence[CaseOutcome], metadata: Optional[Dict[str, Any]] = None) -> EvaluationReport:
    """Reduce case outcomes into a report, ordered by case id."""
    outcomes = sorted(outcomes, key=lambda o: o.case_id)
    results = tuple(r for o in outcomes for r in sorted(o.results, key=lambda r: r.bar_index))
    failures = tuple(f for o in outcomes for f in sorted(o.failures, key=lambda f: f.bar_index))
    warnings = tuple(w for o in outcomes for w in o.warnings)

    n_bars = len(results) + len(failures)
    if n_bars:
        depth_accuracy = sum(r.depth_correct for r in results) / n_bars
        size_accuracy = sum(r.size_correct for r in results) / n_bars
        size_accuracy_pm1 = sum(r.size_correct_pm1 for r in results) / n_bars
    else:
        depth_accuracy = size_accuracy = size_accuracy_pm1 = None

    return EvaluationReport(
        per_rebar=results,
        failures=failures,
        warnings=warnings,
        confusion=confusion_matrix(results, failures),
        depth_accuracy=depth_accuracy,
        size_accuracy=size_accuracy,
        size_accuracy_pm1=size_accuracy_pm1,
        n_cases=len(outcomes),
        metadata=dict(metadata or {}),
    )


def uncovered_truths(suite: CaseSuite, db: HyperbolaDatabase) -> List[str]:
    """Truth (depth, size) pairs the database has no entry for, as "0.100 m #7"."""
    depths = {round(depth, 9) for depth in db.depths}
    sizes = {size.designation for size in db.sizes}
    missing = set()
    for case in suite.cases:
        for truth in case.scene.placements:
            if round(truth.depth, 9) not in depths or truth.size.designation not in sizes:
                missing.add((truth.depth, truth.size.ordinal, truth.size.designation))
    return [f"{depth:.3f} m {designation}" for depth, _, designation in sorted(missing)]


def run_suite(suite: CaseSuite, db: HyperbolaDatabase, config: Optional[RunConfig] = None,
              jobs: Optional[int] = None) -> EvaluationReport:
    """
    Run every case of the suite end to end.

    Args:
        suite: Cases to run
        db: Theoretical hyperbola database
        config: Pipeline parameters (defaults to the loaded configuration)
        jobs: Worker processes (defaults to config.jobs)

    Returns:
        EvaluationReport, identical for identical inputs

    Raises:
        ConfigMismatch: If any case's calibration differs from the database's
    """
    config = config or load_config()
    jobs = config.jobs if jobs is None else jobs
    for case in suite.cases:
        if not db.matches_config(case.scene.config):
            raise ConfigMismatch(
                f"Case {case.case_id} calibration does not match the hyperbola database"
            )
    uncovered = uncovered_truths(suite, db)
    if uncovered:
        logger.warning(
            f"{len(uncovered)} truth depth/size pair(s) absent from the database, "
            f"those bars cannot be estimated exactly: {', '.join(uncovered)}"
        )

    start_time = time.monotonic()
    logger.info(f"Evaluating {len(suite)} cases ({suite.n_bars} bars) with {jobs} job(s)")

    work = [(case, db, config) for case in suite.cases]
    if jobs > 1 and len(work) > 1:
        level, _ = current_settings()
        with ProcessPoolExecutor(max_workers=jobs, initializer=setup_worker_logger,
                                 initargs=(level,)) as executor:
            outcomes = list(executor.map(_run_case_job, work))
    else:
        outcomes = [_run_case_job(item) for item in work]

    report = summarize(outcomes, metadata={
        'distance_mode': config.distance_mode,
        'outline_mode': config.outline_mode,
        'noise_sigma': suite.cases[0].scene.noise_sigma if suite.cases else config.noise_sigma,
        'database_entries': len(db),
    })

    def pct(value: Optional[float]) -> str:
        return 'n/a' if value is None else f"{value:.2%}"

    logger.info(
        f"Evaluation finished in {format_elapsed(time.monotonic() - start_time)}: "
        f"depth {pct(report.depth_accuracy)}, size {pct(report.size_accuracy)}, "
        f"size +/-1 {pct(report.size_accuracy_pm1)}, {len(report.failures)} failures"
    )
    return report


def summary_frame(report: EvaluationReport) -> pd.DataFrame:
    """Per-case table (bars, correct depths and sizes) for console output."""
    rows = []
    for result in report.per_rebar:
        rows.append({
            'case_id': result.case_id,
            'depth': result.truth.depth,
            'size': result.truth.size.designation,
            'estimated': 1,
            'depth_ok': int(result.depth_correct),
            'size_ok': int(result.size_correct),
            'size_pm1_ok': int(result.size_correct_pm1),
        })
    for failure in report.failures:
        rows.append({
            'case_id': failure.case_id,
            'depth': failure.truth.depth,
            'size': failure.truth.size.designation,
            'estimated': 0,
            'depth_ok': 0,
            'size_ok': 0,
            'size_pm1_ok': 0,
        })
    columns = ['case_id', 'depth', 'size', 'bars', 'estimated', 'depth_ok', 'size_ok', 'size_pm1_ok']
    if not rows:
        return pd.DataFrame(columns=columns)
    frame = pd.DataFrame(rows)
    grouped = frame.groupby(['case_id', 'depth', 'size'], sort=True).agg(
        bars=('estimated', 'size'),
        estimated=('estimated', 'sum'),
        depth_ok=('depth_ok', 'sum'),
        size_ok=('size_ok', 'sum'),
        size_pm1_ok=('size_pm1_ok', 'sum'),
    ).reset_index()
    return grouped[columns]
