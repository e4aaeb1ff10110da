"""msim: a desk-scale simulator for business-logic-rich microservice systems.

Identical workflows run under interchangeable transactional models (sagas
with semantic locks and compensations, or transactional causal consistency
with snapshot reads and commit-time merging) and interchangeable simulated
transports, with deterministic fault injection, span tracing, and a
contention benchmark.
"""

from .config import SimConfig
from .runtime import Simulator

__version__ = "0.1.0"

__all__ = ["SimConfig", "Simulator", "__version__"]
