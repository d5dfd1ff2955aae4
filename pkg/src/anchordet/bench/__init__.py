"""Benchmarks, ablations and figure-data dumps."""

from .ablation import ABLATION_HEADER, AblationCell, CellResult, default_cells, find_cell, run_ablation
from .dumps import (
    HIST_EDGES,
    SLOT_HEADER,
    LocalityStat,
    confident_counts,
    dump_pattern_histograms,
    dump_prediction_slots,
    histogram_mean,
    locality_statistic,
    pattern_histograms,
    prediction_slots,
)
from .memory import MEMORY_HEADER, MemoryRow, bench_memory
from .spec import BenchSpec

__all__ = [
    "ABLATION_HEADER", "AblationCell", "BenchSpec", "CellResult", "HIST_EDGES", "LocalityStat",
    "MEMORY_HEADER", "MemoryRow", "SLOT_HEADER", "bench_memory", "confident_counts", "default_cells",
    "dump_pattern_histograms", "dump_prediction_slots", "find_cell", "histogram_mean",
    "locality_statistic", "pattern_histograms", "prediction_slots", "run_ablation",
]
