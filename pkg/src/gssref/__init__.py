"""Guided source separation with reference microphone selection for distributed arrays."""

from ._validation import InvalidInputError, NoActivityError
from .beamformer import SoudenMVDR, ban_gain, estimate_covariances, post_mask, souden_mvdr
from .evaluation import BatchReport, SceneResult, compute_ielr, emit_report, load_report, run_comparison
from .gss import GuidedCACGMM, activity_from_segments, cacgmm_em
from .pipeline import GSSEnhancer, PipelineConfig, process_mixture, render_output, select_reference
from .refmic import (ReferenceSelector, SelectionScores, estimated_snr, log_normalized_lp,
                     normalized_lp, select_by_lp, select_by_snr, select_combined)
from .scene import RoomSpec, SceneTruth, batch_scenes, generate_scene, iter_scenes, make_rir, render_scene
from .stft import StftConfig, analyze, synthesize
from .wpe import WPE, wpe_filter

__version__ = "0.1.0"

__all__ = [
    "BatchReport", "GSSEnhancer", "GuidedCACGMM", "InvalidInputError", "NoActivityError",
    "PipelineConfig", "ReferenceSelector", "RoomSpec", "SceneResult", "SceneTruth",
    "SelectionScores", "SoudenMVDR", "StftConfig", "WPE", "activity_from_segments", "analyze",
    "ban_gain", "batch_scenes", "cacgmm_em", "compute_ielr", "emit_report", "estimate_covariances",
    "estimated_snr", "generate_scene", "iter_scenes", "load_report", "log_normalized_lp",
    "make_rir", "normalized_lp", "post_mask", "process_mixture", "render_output", "render_scene",
    "run_comparison", "select_by_lp", "select_by_snr", "select_combined", "select_reference",
    "souden_mvdr", "synthesize", "wpe_filter",
]
