from .runner import BenchConfig, run_bench
from .stats import compute_stats

__all__ = ["BenchConfig", "compute_stats", "run_bench"]
