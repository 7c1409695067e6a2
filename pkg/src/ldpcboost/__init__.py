"""Weighted min-sum LDPC decoding with staged training on decoder failures.

The package covers the full workflow: QC-LDPC code construction, BPSK
channel sampling, quantized weighted decoding (a compiled Monte-Carlo
path and a trace-recording reference path), gradient-based weight
training, failure collection with importance-sampling style augmentation,
FER evaluation, and a command line front end.
"""

from .codes import (CodeModelError, Protograph, TannerGraph, bundled_code_path,
                    load_code, parse_alist, parse_base_matrix)
from .channel import ChannelSpec, LlrFrame, sample_frame, sample_llr_batch, spawn_stream
from .quantize import Quantizer
from .weights import Stage, WeightSet
from .decoder import (DecodeTrace, classify_checks, cn_update_minsum,
                      cn_update_sumproduct, decode, output_llr, vn_update)
from .fastsim import FastResult, run_decoder
from .training import (AdamState, EpochRow, LossSpec, ScheduleSpec, backward,
                       loss_and_grad, train)
from .pipeline import (DatasetError, TransferError, UcDataset, augment,
                       collect_failures, extend_with_stage, transfer_init)
from .evaluate import (ComplexityReport, ErrorHistogram, FerPoint,
                       complexity_report, error_histogram, estimate_fer,
                       fer_curve, test_fer, wilson_interval)
from .config import ConfigError, ExperimentConfig

__version__ = "0.1.0"

__all__ = [
    "CodeModelError", "Protograph", "TannerGraph", "bundled_code_path",
    "load_code", "parse_alist", "parse_base_matrix",
    "ChannelSpec", "LlrFrame", "sample_frame", "sample_llr_batch", "spawn_stream",
    "Quantizer", "Stage", "WeightSet",
    "DecodeTrace", "classify_checks", "cn_update_minsum", "cn_update_sumproduct",
    "decode", "output_llr", "vn_update",
    "FastResult", "run_decoder",
    "AdamState", "EpochRow", "LossSpec", "ScheduleSpec", "backward",
    "loss_and_grad", "train",
    "DatasetError", "TransferError", "UcDataset", "augment",
    "collect_failures", "extend_with_stage", "transfer_init",
    "ComplexityReport", "ErrorHistogram", "FerPoint", "complexity_report",
    "error_histogram", "estimate_fer", "fer_curve", "test_fer", "wilson_interval",
    "ConfigError", "ExperimentConfig",
]
