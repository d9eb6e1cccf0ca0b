"""Continuous separation pipeline: chunking, stitching, training and evaluation."""

from .losses import pit_loss
from .metrics import best_assignment, si_sdr, snr
from .model import MODES, SeparationModel
from .schedule import ChunkSchedule, extract_window, make_schedule, seconds_to_frames
from .separate import SeparationResult, evaluate, separate, separate_spectrogram
from .stitch import IDENTITY, SWAP, StitchState, choose_permutation, compose, stitch

__all__ = [
    "pit_loss", "best_assignment", "si_sdr", "snr", "MODES", "SeparationModel",
    "ChunkSchedule", "extract_window", "make_schedule", "seconds_to_frames",
    "SeparationResult", "evaluate", "separate", "separate_spectrogram",
    "IDENTITY", "SWAP", "StitchState", "choose_permutation", "compose", "stitch",
]
