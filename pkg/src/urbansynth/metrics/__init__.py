from .segmentation import ClassMetrics, SegmentationResult, confusion_and_seg_metrics, confusion_matrix
from .calibration import ashrae_verdict, cvrmse, nmbe, ASHRAE_NMBE_LIMIT, ASHRAE_CVRMSE_LIMIT
from .reconstruct import reconstruct_energy, tile_totals
from .report import CalibrationReport, evaluate_maps, render_report_table, save_confusion_figure

__all__ = [
    "ClassMetrics",
    "SegmentationResult",
    "confusion_and_seg_metrics",
    "confusion_matrix",
    "ashrae_verdict",
    "cvrmse",
    "nmbe",
    "ASHRAE_NMBE_LIMIT",
    "ASHRAE_CVRMSE_LIMIT",
    "reconstruct_energy",
    "tile_totals",
    "CalibrationReport",
    "evaluate_maps",
    "render_report_table",
    "save_confusion_figure",
]
