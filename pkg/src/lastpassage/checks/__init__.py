"""Monte Carlo verification of last passage and maximum identities."""
from .registry import list_checks, run_all, run_check
from .report import CheckReport, Part, reports_to_csv, reports_to_json

__all__ = ["list_checks", "run_check", "run_all", "CheckReport", "Part", "reports_to_json", "reports_to_csv"]
