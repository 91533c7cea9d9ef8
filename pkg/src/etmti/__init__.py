"""Simulator and closed-form toolkit for two-phase missing-tag identification with unknown tags."""
from .analysis import AnalysisError, plan, predict_phase1_time, predict_phase2_time, sweep_beta_b
from .baseline import run_aloha_baseline
from .ebud import run_phase1
from .model import Population, ScenarioParams, TagRecord, generate_population, hash_slot
from .tsmti import RoundReport, run_phase2

__version__ = "0.1.0"
