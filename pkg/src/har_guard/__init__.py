"""Defense framework for LLM-based human activity recognition over IMU signals."""

from .agent import Defender, DefenseOutcome, bootstrap_hub
from .attacks import AttackId, AttackSpec, Category, apply_attack, attack_pair
from .automaton import AhoCorasick
from .backends import HttpBackend, MockBackend, ReplayBackend, make_backend
from .consistency import ConsistencyReport, check_consistency
from .dtw import dtw_distance, fastdtw_distance
from .embedding import HashedNgramEmbedder, cosine, embed
from .errors import (BackendError, ConfigurationError, DataError, DispatchError, HarGuardError, ParameterError,
                     PlanError, SchemaError)
from .evaluation import CampaignConfig, HazardMatrix, TrialRecord, compute_metrics, run_campaign
from .imu import ImuWindow, SignalFeatures, export_csv, extract_features, ingest_csv, synth_window
from .memory import MemoryEntry, MemoryHub
from .planning import DefensePlan, DefenseStep, StepId, Threat, plan
from .prompts import Prompt, PromptSegment, Style, assemble_prompt, describe, prompt_for_window, render
from .reasoner import ReasonerConfig, robust_infer
from .sanitizer import LexicalFilter, hub_sanitize, mad_normalize, sanitize_signal

__version__ = "0.1.0"
