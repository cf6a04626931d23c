"""Config-driven study runner and CSV persistence."""
from .config import ExperimentConfig, config_from_dict, parse_config
from .results import ResultTable, read_csv, write_csv
from .studies import run_study

__all__ = ["ExperimentConfig", "ResultTable", "config_from_dict", "parse_config", "read_csv", "run_study", "write_csv"]
