"""Listwise rank aggregation for crowdsourced full-rank annotations."""

__version__ = "0.1.0"

from .em import EmConfig, FitResult, fit  # noqa: E402
from .model import Annotation, AnnotationSet, ConfusionMatrix, ModelState, Problem, validate  # noqa: E402
from .perm import Permutation, decode, encode, pos_distance, tau  # noqa: E402
from .synth import SynthConfig, gen_dataset  # noqa: E402

__all__ = [
    "Annotation",
    "AnnotationSet",
    "ConfusionMatrix",
    "EmConfig",
    "FitResult",
    "ModelState",
    "Permutation",
    "Problem",
    "SynthConfig",
    "decode",
    "encode",
    "fit",
    "gen_dataset",
    "pos_distance",
    "tau",
    "validate",
]
