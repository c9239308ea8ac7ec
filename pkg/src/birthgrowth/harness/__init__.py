"""Config-driven experiments that check identities against oracles."""

from .checks import CHECKS, Context, IdentityReport, run_check
from .config import ExperimentConfig, load, validate
