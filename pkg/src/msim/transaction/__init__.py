from .base import LockRecord, UnitOfWork, UnitOfWorkService, UowStatus
from .causal import CausalUnitOfWorkService
from .saga import SagaUnitOfWorkService

__all__ = [
    "CausalUnitOfWorkService",
    "LockRecord",
    "SagaUnitOfWorkService",
    "UnitOfWork",
    "UnitOfWorkService",
    "UowStatus",
]
