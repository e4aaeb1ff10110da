import threading

import pytest

from msim import SimConfig, Simulator
from msim.errors import (
    AggregateNotInSnapshot,
    IncompatibleVersioningStrategy,
    MergeConflictUnresolvable,
)
from msim.sampleapp.domain import TournamentFull
from msim.transaction.base import UowStatus
from tests.conftest import seed_basic


def stage_participant(sim, uow, tournament_id, user_id, name="extra"):
    tournament = sim.transactions.aggregate_load(uow, tournament_id)
    from msim.sampleapp.domain import MemberRef

    tournament.participants[user_id] = MemberRef(user_id=user_id, name=name)
    sim.transactions.register_changed(uow, tournament)
    return tournament


# -- snapshots and loads ----------------------------------------------------------


def test_snapshot_fixed_at_creation(causal_sim):
    sim = causal_sim
    seed_basic(sim)
    horizon = sim.versioning.get_version_number()
    uow = sim.transactions.create_unit_of_work()
    assert uow.snapshot_version == horizon


def test_load_resolves_greatest_version_at_or_below_snapshot(causal_sim):
    # Oracle: brute-force max-<= filter over the committed chain.
    sim = causal_sim
    execution_id, tournament_id, _, user_ids = seed_basic(sim)
    uow = sim.transactions.create_unit_of_work()
    # two newer commits land after the snapshot
    sim.app.update_student_name(execution_id, user_ids[0], "newer-1")
    sim.app.update_student_name(execution_id, user_ids[0], "newer-2")

    chain_versions = sim.store.versions(execution_id)
    expected = max(v for v in chain_versions if v <= uow.snapshot_version)
    loaded = sim.transactions.aggregate_load(uow, execution_id)
    assert loaded.prev_version == expected
    assert loaded.students[user_ids[0]].name == "student-0"


def test_load_beyond_snapshot_raises(causal_sim):
    sim = causal_sim
    uow = sim.transactions.create_unit_of_work()  # snapshot before any commit
    execution_id, *_ = seed_basic(sim)
    with pytest.raises(AggregateNotInSnapshot):
        sim.transactions.aggregate_load(uow, execution_id)


def test_repeatable_read_despite_concurrent_commits(causal_sim):
    sim = causal_sim
    execution_id, tournament_id, _, user_ids = seed_basic(sim)
    uow = sim.transactions.create_unit_of_work()
    first = sim.transactions.aggregate_load(uow, execution_id)
    sim.app.update_student_name(execution_id, user_ids[0], "concurrent")
    second = sim.transactions.aggregate_load(uow, execution_id)
    assert first.domain_payload() == second.domain_payload()
    assert second.students[user_ids[0]].name == "student-0"


def test_staged_changes_invisible_until_commit(causal_sim):
    sim = causal_sim
    execution_id, tournament_id, _, user_ids = seed_basic(sim)
    versions_before = sim.store.versions(tournament_id)
    uow = sim.transactions.create_unit_of_work()
    stage_participant(sim, uow, tournament_id, user_ids[0])
    assert sim.store.versions(tournament_id) == versions_before
    reader = sim.transactions.create_unit_of_work()
    seen = sim.transactions.aggregate_load(reader, tournament_id)
    assert seen.participants == {}
    sim.transactions.commit(uow)


def test_latest_staged_copy_wins_within_uow(causal_sim):
    sim = causal_sim
    execution_id, tournament_id, _, user_ids = seed_basic(sim)
    uow = sim.transactions.create_unit_of_work()
    stage_participant(sim, uow, tournament_id, user_ids[0], name="first")
    second = stage_participant(sim, uow, tournament_id, user_ids[1], name="second")
    staged = uow.changed[tournament_id]
    assert staged is second
    assert set(staged.participants) == {user_ids[0], user_ids[1]}


def test_abort_discards_staged_state(causal_sim):
    sim = causal_sim
    execution_id, tournament_id, _, user_ids = seed_basic(sim)
    snapshot = {
        aggregate_id: sim.store.versions(aggregate_id)
        for aggregate_id in (execution_id, tournament_id)
    }
    uow = sim.transactions.create_unit_of_work()
    stage_participant(sim, uow, tournament_id, user_ids[0])
    sim.transactions.abort(uow)
    assert uow.status is UowStatus.ABORTED
    for aggregate_id, versions in snapshot.items():
        assert sim.store.versions(aggregate_id) == versions


# -- commit and merge ----------------------------------------------------------------


def test_commit_without_concurrency_needs_no_merge(causal_sim):
    sim = causal_sim
    execution_id, tournament_id, _, user_ids = seed_basic(sim)
    merges = []
    sim.transactions.commit_stage_hook = (
        lambda stage: merges.append(stage) if stage.startswith("commit:merged") else None
    )
    uow = sim.transactions.create_unit_of_work()
    stage_participant(sim, uow, tournament_id, user_ids[0])
    sim.transactions.commit(uow)
    assert merges == []
    latest = sim.store.latest(tournament_id)
    assert user_ids[0] in latest.participants


def test_concurrent_additions_merge_to_union(causal_sim):
    # Oracle: the union of the two sequential outcomes.
    sim = causal_sim
    execution_id, tournament_id, _, user_ids = seed_basic(sim)
    uow_a = sim.transactions.create_unit_of_work()
    uow_b = sim.transactions.create_unit_of_work()
    stage_participant(sim, uow_a, tournament_id, user_ids[0], name="p1")
    stage_participant(sim, uow_b, tournament_id, user_ids[1], name="p2")
    sim.transactions.commit(uow_a)
    sim.transactions.commit(uow_b)  # merges against uow_a's commit
    final = sim.store.latest(tournament_id)
    assert set(final.participants) == {user_ids[0], user_ids[1]}


def test_commit_version_shared_by_all_staged_aggregates(causal_sim):
    sim = causal_sim
    execution_id, tournament_id, _, user_ids = seed_basic(sim)
    uow = sim.transactions.create_unit_of_work()
    stage_participant(sim, uow, tournament_id, user_ids[0])
    execution = sim.transactions.aggregate_load(uow, execution_id)
    execution.students[user_ids[0]].name = "renamed"
    sim.transactions.register_changed(uow, execution)
    sim.transactions.commit(uow)
    assert (
        sim.store.latest(tournament_id).version
        == sim.store.latest(execution_id).version
    )


def test_atomic_visibility_by_snapshot(causal_sim):
    sim = causal_sim
    execution_id, tournament_id, _, user_ids = seed_basic(sim)
    before = sim.transactions.create_unit_of_work()
    uow = sim.transactions.create_unit_of_work()
    stage_participant(sim, uow, tournament_id, user_ids[0])
    execution = sim.transactions.aggregate_load(uow, execution_id)
    execution.students[user_ids[0]].name = "renamed"
    sim.transactions.register_changed(uow, execution)
    sim.transactions.commit(uow)
    after = sim.transactions.create_unit_of_work()

    # reader below the commit version sees none of the writes
    old_t = sim.transactions.aggregate_load(before, tournament_id)
    old_e = sim.transactions.aggregate_load(before, execution_id)
    assert old_t.participants == {}
    assert old_e.students[user_ids[0]].name == "student-0"
    # reader at or above sees all of them
    new_t = sim.transactions.aggregate_load(after, tournament_id)
    new_e = sim.transactions.aggregate_load(after, execution_id)
    assert user_ids[0] in new_t.participants
    assert new_e.students[user_ids[0]].name == "renamed"


def test_post_merge_invariant_failure_converts_to_abort(causal_sim):
    # Capacity 1 tournament: two staged additions merge to two participants,
    # the re-verification fails, and the reserved version is handed back.
    sim = causal_sim
    app = sim.app
    execution_id = app.create_execution("SE")
    creator = app.create_user("creator")
    app.enroll_student(execution_id, creator)
    u1, u2 = app.create_user("a"), app.create_user("b")
    app.enroll_student(execution_id, u1)
    app.enroll_student(execution_id, u2)
    tournament_id = app.create_tournament(execution_id, creator, 0, 100, 1)

    uow_a = sim.transactions.create_unit_of_work()
    uow_b = sim.transactions.create_unit_of_work()
    stage_participant(sim, uow_a, tournament_id, u1)
    stage_participant(sim, uow_b, tournament_id, u2)
    sim.transactions.commit(uow_a)
    counter_before = sim.versioning.get_version_number()
    with pytest.raises(TournamentFull):
        sim.transactions.commit(uow_b)
    assert uow_b.status is UowStatus.ABORTED
    assert sim.versioning.get_version_number() == counter_before
    assert set(sim.store.latest(tournament_id).participants) == {u1}


def test_unresolvable_merge_aborts(causal_sim):
    sim = causal_sim
    execution_id, tournament_id, _, user_ids = seed_basic(sim)
    uow_a = sim.transactions.create_unit_of_work()
    uow_b = sim.transactions.create_unit_of_work()
    t_a = sim.transactions.aggregate_load(uow_a, tournament_id)
    t_a.max_participants = 50
    sim.transactions.register_changed(uow_a, t_a)
    t_b = sim.transactions.aggregate_load(uow_b, tournament_id)
    t_b.max_participants = 60
    sim.transactions.register_changed(uow_b, t_b)
    sim.transactions.commit(uow_a)
    with pytest.raises(MergeConflictUnresolvable):
        sim.transactions.commit(uow_b)
    assert sim.store.latest(tournament_id).max_participants == 50


def test_no_lost_updates_under_concurrency(causal_sim):
    # Oracle: N concurrent merge-adds with unbounded retries must equal the
    # N-fold sequential result.
    sim = causal_sim
    sim.gateway.retry_policy = type(sim.gateway.retry_policy)(
        max_attempts=10_000, base_backoff_ms=1, multiplier=1.0)
    execution_id, tournament_id, _, user_ids = seed_basic(sim, students=8)
    errors = []

    def add(user_id):
        try:
            sim.app.add_participant(tournament_id, execution_id, user_id)
        except Exception as exc:  # pragma: no cover
            errors.append(exc)

    threads = [threading.Thread(target=add, args=(u,)) for u in user_ids]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert errors == []
    assert len(sim.store.latest(tournament_id).participants) == 8


def test_causal_requires_centralized_versioning():
    with pytest.raises(IncompatibleVersioningStrategy):
        Simulator(SimConfig(
            transaction_model="tcc", versioning_strategy="snowflake"))


def test_causal_allows_remote_centralized(make_sim):
    sim = make_sim(
        transaction_model="tcc",
        versioning_strategy="centralized-remote",
        tcc_commit_store_ms=0.0,
    )
    execution_id, tournament_id, _, user_ids = seed_basic(sim)
    sim.app.add_participant(tournament_id, execution_id, user_ids[0])
    assert len(sim.app.get_tournament(tournament_id)["participants"]) == 1
