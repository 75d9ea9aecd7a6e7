# Batch command-line front door
from src.cli.commands import COMMANDS, run_check, run_fit, run_loglik, run_simulate

__all__ = ["COMMANDS", "run_simulate", "run_fit", "run_loglik", "run_check"]
