import pytest

from msim import SimConfig, Simulator


@pytest.fixture
def make_sim():
    """Factory for simulators that are closed on test teardown."""
    created = []

    def factory(**overrides):
        overrides.setdefault("clock_mode", "virtual")
        sim = Simulator(SimConfig(**overrides))
        created.append(sim)
        return sim

    yield factory
    for sim in created:
        sim.close()


@pytest.fixture
def saga_sim(make_sim):
    return make_sim(transaction_model="saga")


@pytest.fixture
def causal_sim(make_sim):
    return make_sim(transaction_model="tcc", tcc_commit_store_ms=0.0)


def seed_basic(sim, students=2, capacity=10):
    """One execution, one tournament, and `students` enrolled users.

    Returns (execution_id, tournament_id, creator_id, [user ids]).
    """
    app = sim.app
    execution_id = app.create_execution("SE-101")
    creator_id = app.create_user("creator")
    app.enroll_student(execution_id, creator_id)
    user_ids = []
    for i in range(students):
        user_id = app.create_user(f"student-{i}")
        app.enroll_student(execution_id, user_id)
        user_ids.append(user_id)
    tournament_id = app.create_tournament(
        execution_id, creator_id, start_time=0, end_time=1000,
        max_participants=capacity)
    return execution_id, tournament_id, creator_id, user_ids
