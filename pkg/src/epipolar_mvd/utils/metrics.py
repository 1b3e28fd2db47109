"""Timing and verdict collection for checks, gradient checks and training runs."""

import json
import math
import time
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path


@dataclass
class StageMetrics:
    """Metrics for a single unit of work (one check, one training step, one command)."""

    name: str
    group: str
    start_time: float
    end_time: float | None = None
    success: bool = False
    error: str | None = None
    residual: float | None = None
    threshold: float | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def duration(self) -> float:
        """Calculate duration in seconds."""
        if self.end_time is None:
            return 0.0
        return self.end_time - self.start_time

    def to_dict(self, include_timing: bool = True) -> dict:
        """Convert metrics to dictionary (timing fields omitted for reproducible reports)."""
        data = {
            "name": self.name,
            "group": self.group,
            "success": self.success,
            "error": self.error,
            "residual": _json_float(self.residual),
            "threshold": self.threshold,
            "metadata": self.metadata,
        }
        if include_timing:
            data["start_time"] = datetime.fromtimestamp(self.start_time).isoformat()
            data["end_time"] = (
                datetime.fromtimestamp(self.end_time).isoformat() if self.end_time else None
            )
            data["duration"] = self.duration
        return data


def _json_float(value: float | None) -> float | str | None:
    # JSON has no NaN/Inf literals
    if value is None or math.isfinite(value):
        return value
    return str(value)


class MetricsCollector:
    """Collects and summarises stage metrics."""

    def __init__(self):
        """Initialize metrics collector."""
        self.metrics: list[StageMetrics] = []
        self.session_start = time.time()

    def start_stage(self, name: str, group: str) -> StageMetrics:
        """Start tracking a new stage."""
        metric = StageMetrics(name=name, group=group, start_time=time.time())
        self.metrics.append(metric)
        return metric

    def end_stage(
        self,
        metric: StageMetrics,
        success: bool = True,
        error: str | None = None,
        residual: float | None = None,
        threshold: float | None = None,
        metadata: dict | None = None,
    ):
        """End tracking a stage and record results."""
        metric.end_time = time.time()
        metric.success = success
        metric.error = error
        metric.residual = residual
        metric.threshold = threshold
        if metadata:
            metric.metadata.update(metadata)

    @property
    def all_passed(self) -> bool:
        """True when every recorded stage succeeded."""
        return all(m.success for m in self.metrics)

    def get_summary(self, include_timing: bool = True) -> dict:
        """Get summary statistics of all metrics."""
        total = len(self.metrics)
        passed = sum(1 for m in self.metrics if m.success)

        group_stats: dict[str, dict] = {}
        for metric in self.metrics:
            stats = group_stats.setdefault(
                metric.group, {"total": 0, "passed": 0, "max_residual": None}
            )
            stats["total"] += 1
            stats["passed"] += 1 if metric.success else 0
            if include_timing:
                stats["total_duration"] = stats.get("total_duration", 0.0) + metric.duration
            if metric.residual is not None and math.isfinite(metric.residual):
                current = stats["max_residual"]
                stats["max_residual"] = (
                    metric.residual if current is None else max(current, metric.residual)
                )

        summary = {
            "total": total,
            "passed": passed,
            "failed": total - passed,
            "success_rate": passed / total if total > 0 else 0,
            "group_statistics": group_stats,
        }
        if include_timing:
            summary["session_duration"] = time.time() - self.session_start
            summary["total_duration"] = sum(m.duration for m in self.metrics if m.end_time)
        return summary

    def to_dict(self, include_timing: bool = True) -> dict:
        """Summary plus every stage, ready for JSON."""
        return {
            "summary": self.get_summary(include_timing),
            "metrics": [m.to_dict(include_timing) for m in self.metrics],
        }

    def export_to_file(self, filepath: Path, include_timing: bool = True):
        """Export metrics to a JSON file."""
        filepath.parent.mkdir(parents=True, exist_ok=True)
        with open(filepath, "w") as f:
            json.dump(self.to_dict(include_timing), f, indent=2)
