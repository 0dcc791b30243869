from .io import (COHORTS, DatasetInfo, MultiSequenceCase, available_cohorts, dataset_fingerprint,
                 load_case, load_cohort, load_dataset_info, write_case, write_dataset)
from .preprocess import Prepared, augment, flip_lr, preprocess
from .synth import ClassSignature, SynthSpec, synth_generate

__all__ = [
    "COHORTS", "DatasetInfo", "MultiSequenceCase", "available_cohorts", "dataset_fingerprint",
    "load_case", "load_cohort", "load_dataset_info", "write_case", "write_dataset",
    "Prepared", "augment", "flip_lr", "preprocess",
    "ClassSignature", "SynthSpec", "synth_generate",
]
