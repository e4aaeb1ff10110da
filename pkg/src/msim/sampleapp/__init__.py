from .domain import (
    ANONYMOUS_TOKEN,
    IN_UPDATE_TOURNAMENT,
    CourseExecution,
    MemberRef,
    NotAStudent,
    Role,
    StudentNotEnrolled,
    Tournament,
    TournamentFull,
    User,
)
from .facade import SampleApp

__all__ = [
    "ANONYMOUS_TOKEN",
    "IN_UPDATE_TOURNAMENT",
    "CourseExecution",
    "MemberRef",
    "NotAStudent",
    "Role",
    "SampleApp",
    "StudentNotEnrolled",
    "Tournament",
    "TournamentFull",
    "User",
]
