"""
Driving metrics: route completion (RC), infraction score (IS) and driving score (DS)
Per-route results, multi-route aggregation and the tab-separated route report
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Union
import io
import logging
import numpy as np
import pandas as pd

from .config import EVALUATION, EvalConfig, INFRACTION_KINDS
from .errors import ContractError, DataIOError

logger = logging.getLogger(__name__)


@dataclass
class RouteResult:
    """Per-route record of completion, infractions and derived scores"""
    rc: float
    is_: float
    ds: float
    events: List = field(default_factory=list)
    route_id: int = 0
    seed: int = 0
    distance_m: float = 0.0
    duration_s: float = 0.0

    @property
    def event_counts(self) -> Dict[str, int]:
        counts = {kind: 0 for kind in INFRACTION_KINDS}
        for event in self.events:
            counts[event.kind] += 1
        return counts


def compute_metrics(events: Sequence, completed_fraction: float,
                    penalties: Optional[Mapping[str, float]] = None, is_floor: float = 0.0) -> RouteResult:
    """
    Score one route

    Args:
        events: Infraction events (anything with a .kind)
        completed_fraction: Share of the route completed, in [0, 1]
        penalties: Multiplicative penalty per infraction kind
        is_floor: Lower clamp for the infraction score

    Returns:
        RouteResult with rc = 100 * fraction, is = product of penalties, ds = rc * is
    """
    if not 0.0 <= completed_fraction <= 1.0:
        raise ContractError(f"completed_fraction must lie in [0, 1], got {completed_fraction}")
    penalties = EVALUATION.penalties if penalties is None else penalties
    infraction_score = 1.0
    for event in events:
        if event.kind not in penalties:
            raise ContractError(f"unknown infraction kind {event.kind!r}")
        infraction_score *= penalties[event.kind]
    infraction_score = max(infraction_score, is_floor)
    rc = 100.0 * completed_fraction
    return RouteResult(rc=rc, is_=infraction_score, ds=rc * infraction_score, events=list(events))


class MetricsCalculator:
    """Aggregates route results into the summary and report"""

    def __init__(self, config: EvalConfig = EVALUATION):
        self.config = config

    def score(self, events: Sequence, completed_fraction: float) -> RouteResult:
        return compute_metrics(events, completed_fraction, self.config.penalties, self.config.is_floor)

    def aggregate(self, results: Sequence[RouteResult]) -> Dict[str, float]:
        """
        Mean RC, IS and DS over routes plus infraction counts per km driven

        DS is the mean of the per-route products, not the product of means.
        """
        if not results:
            return {"routes": 0, "RC": 0.0, "IS": 0.0, "DS": 0.0, "km": 0.0}
        km = sum(r.distance_m for r in results) / 1000.0
        summary = {
            "routes": len(results),
            "RC": float(np.mean([r.rc for r in results])),
            "IS": float(np.mean([r.is_ for r in results])),
            "DS": float(np.mean([r.ds for r in results])),
            "km": km,
        }
        for kind in INFRACTION_KINDS:
            count = sum(r.event_counts[kind] for r in results)
            summary[f"{kind}/km"] = count / km if km > 0 else 0.0
        return summary

    def to_frame(self, results: Sequence[RouteResult]) -> pd.DataFrame:
        rows = []
        for r in results:
            rows.append({
                "route_id": r.route_id,
                "seed": r.seed,
                "RC": r.rc,
                "IS": r.is_,
                "DS": r.ds,
                "events": ";".join(str(e) for e in r.events) or "-",
            })
        return pd.DataFrame(rows, columns=["route_id", "seed", "RC", "IS", "DS", "events"])

    def format_report(self, results: Sequence[RouteResult]) -> str:
        """One tab-separated line per route (full float precision) followed by the aggregate line"""
        table = self.to_frame(results).to_csv(sep="\t", index=False, float_format="%.17g", lineterminator="\n")
        summary = self.aggregate(results)
        fields = ["aggregate"] + [f"{key}={value:.6f}" if isinstance(value, float) else f"{key}={value}"
                                  for key, value in summary.items()]
        return table + "\t".join(fields) + "\n"

    def write_report(self, results: Sequence[RouteResult], path: Union[str, Path]) -> Path:
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(self.format_report(results))
        except OSError as exc:
            raise DataIOError(f"cannot write report {path}: {exc}") from None
        logger.info(f"Route report written to {path}")
        return path


def read_report(path: Union[str, Path]) -> pd.DataFrame:
    """Load the per-route rows of a report (the aggregate line is dropped)"""
    path = Path(path)
    if not path.is_file():
        raise DataIOError(f"report not found: {path}")
    lines = [line for line in path.read_text().splitlines() if not line.startswith("aggregate")]
    return pd.read_csv(io.StringIO("\n".join(lines)), sep="\t", dtype={"events": str}, float_precision="round_trip")
