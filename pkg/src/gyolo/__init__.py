"""CPU inference, analytic profiling and evaluation for the YOLOv11 and
G-YOLOv11 detector families."""

from .arch import ArchGraph, Model, build, export_arch, make_graph, parse_arch
from .analysis import ComparisonReport, ProfileReport, compare, profile
from .infer import BenchReport, bench, decode_dfl, letterbox, nms, run
from .metrics import Detection, MetricsReport, TruthBox, curves, evaluate
from .weights import WeightContainer, init_random, load, save

__all__ = [
    "ArchGraph", "Model", "build", "export_arch", "make_graph", "parse_arch",
    "ComparisonReport", "ProfileReport", "compare", "profile",
    "BenchReport", "bench", "decode_dfl", "letterbox", "nms", "run",
    "Detection", "MetricsReport", "TruthBox", "curves", "evaluate",
    "WeightContainer", "init_random", "load", "save",
]

__version__ = "0.1.0"
