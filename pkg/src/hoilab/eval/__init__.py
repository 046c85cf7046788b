"""Plausibility metrics (Phys. ratio, penetration, smoothness) and reports."""
from .metrics import (MetricReport, MetricError, evaluate, phys_ratio, penetration,
                      frame_penetration, smoothness, object_accelerations, REPORT_FORMAT_VERSION,
                      DEFAULT_THRESHOLD)

__all__ = ["MetricReport", "MetricError", "evaluate", "phys_ratio", "penetration",
           "frame_penetration", "smoothness", "object_accelerations", "REPORT_FORMAT_VERSION",
           "DEFAULT_THRESHOLD"]
