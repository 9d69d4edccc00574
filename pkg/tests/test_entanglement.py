import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from entnet import PLATE_WIDTH, PairPool, Spin
from entnet.errors import (
    AlreadyFixed,
    MismatchedPlates,
    TriggerOnNonIonized,
    UnknownParticle,
)


def test_create_pair_contract():
    pool = PairPool(0)
    p1, p2 = pool.create_pair(ionize_first=True)
    assert pool.particle(p1).ionized
    assert not pool.particle(p2).ionized
    assert pool.particle(p1).spin is Spin.UNOBSERVED
    assert pool.particle(p2).spin is Spin.UNOBSERVED


def test_partner_relation_symmetric_irreflexive():
    pool = PairPool(0)
    p1, p2 = pool.create_pair(True)
    assert pool.partner(p1) == p2
    assert pool.partner(p2) == p1
    assert pool.partner(p1) != p1


def test_successive_pairs_have_distinct_ids():
    pool = PairPool(0)
    ids = [*pool.create_pair(True), *pool.create_pair(True)]
    assert len(set(ids)) == 4


def test_trigger_up_fixes_partner_down():
    pool = PairPool(0)
    p1, p2 = pool.create_pair(True)
    pool.trigger_spin(p1, Spin.UP)
    assert pool.particle(p1).spin is Spin.UP
    assert pool.particle(p2).spin is Spin.DOWN


def test_trigger_down_fixes_partner_up():
    pool = PairPool(0)
    p1, p2 = pool.create_pair(True)
    pool.trigger_spin(p1, Spin.DOWN)
    assert pool.particle(p1).spin is Spin.DOWN
    assert pool.particle(p2).spin is Spin.UP


def test_trigger_requires_ionized():
    pool = PairPool(0)
    _, p2 = pool.create_pair(True)
    with pytest.raises(TriggerOnNonIonized):
        pool.trigger_spin(p2, Spin.UP)


def test_trigger_requires_unobserved():
    pool = PairPool(0)
    p1, _ = pool.create_pair(True)
    pool.trigger_spin(p1, Spin.UP)
    with pytest.raises(AlreadyFixed):
        pool.trigger_spin(p1, Spin.DOWN)


def test_observe_after_trigger_is_opposite():
    pool = PairPool(0)
    p1, p2 = pool.create_pair(True)
    pool.trigger_spin(p1, Spin.UP)
    assert pool.observe(p2) is Spin.DOWN


def test_observe_is_idempotent():
    pool = PairPool(3)
    p1, _ = pool.create_pair(True)
    first = pool.observe(p1)
    assert pool.observe(p1) is first
    assert pool.observe(p1) is first


def test_observe_fixes_partner_opposite():
    pool = PairPool(5)
    p1, p2 = pool.create_pair(True)
    assert pool.observe(p1).opposite() is pool.observe(p2)


def test_observe_unknown_particle():
    pool = PairPool(0)
    with pytest.raises(UnknownParticle):
        pool.observe(123)


def test_observe_sequence_is_seed_deterministic():
    def draws(seed):
        pool = PairPool(seed)
        return [pool.observe(pool.create_pair(True)[0]) for _ in range(64)]

    assert draws(11) == draws(11)
    assert draws(11) != draws(12)  # astronomically unlikely to collide


def test_make_plate_pair_contract():
    pool = PairPool(0)
    tx, rx = pool.make_plate_pair()
    assert len(tx.particle_ids) == PLATE_WIDTH == len(rx.particle_ids)
    for i in range(PLATE_WIDTH):
        assert pool.partner(tx.particle_ids[i]) == rx.particle_ids[i]
        assert pool.particle(tx.particle_ids[i]).ionized
        assert not pool.particle(rx.particle_ids[i]).ionized
        assert pool.particle(tx.particle_ids[i]).spin is Spin.UNOBSERVED
        assert pool.particle(rx.particle_ids[i]).spin is Spin.UNOBSERVED


def test_reset_reprovisions_used_pairs():
    pool = PairPool(1)
    tx, rx = pool.make_plate_pair()
    for pid in tx.particle_ids:
        pool.trigger_spin(pid, Spin.UP)
    old_ids = list(tx.particle_ids)
    pool.reset_plate_pair(tx, rx)
    assert tx.particle_ids != old_ids
    assert all(pool.particle(pid).spin is Spin.UNOBSERVED for pid in tx.particle_ids)
    # the consumed pairs are gone for good
    with pytest.raises(UnknownParticle):
        pool.observe(old_ids[0])


def test_reset_increments_generation_on_both_plates():
    pool = PairPool(1)
    tx, rx = pool.make_plate_pair()
    pool.reset_plate_pair(tx, rx)
    assert tx.generation == 1 and rx.generation == 1


def test_reset_of_unused_plates_keeps_pairs():
    pool = PairPool(1)
    tx, rx = pool.make_plate_pair()
    before = list(tx.particle_ids)
    pool.reset_plate_pair(tx, rx)
    assert tx.particle_ids == before
    assert tx.generation == 1 and rx.generation == 1


def test_reset_rejects_mismatched_plates():
    pool = PairPool(1)
    tx1, rx1 = pool.make_plate_pair()
    tx2, rx2 = pool.make_plate_pair()
    with pytest.raises(MismatchedPlates):
        pool.reset_plate_pair(tx1, rx2)
    with pytest.raises(MismatchedPlates):
        pool.reset_plate_pair(rx1, tx1)


@given(st.lists(st.tuples(st.integers(0, 2), st.booleans()), max_size=40),
       st.integers(0, 2**32))
@settings(max_examples=60)
def test_fixed_spins_never_change(ops, seed):
    """Whatever the operation sequence, the first fixed value persists."""
    pool = PairPool(seed)
    p1, p2 = pool.create_pair(True)
    fixed: dict[int, Spin] = {}

    def snap():
        for pid in (p1, p2):
            spin = pool.particle(pid).spin
            if spin is not Spin.UNOBSERVED:
                assert fixed.setdefault(pid, spin) is spin

    for kind, first in ops:
        pid = p1 if first else p2
        try:
            if kind == 0:
                pool.observe(pid)
            elif kind == 1:
                pool.trigger_spin(pid, Spin.UP)
            else:
                pool.trigger_spin(pid, Spin.DOWN)
        except (AlreadyFixed, TriggerOnNonIonized):
            pass
        snap()


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 7)), max_size=60),
       st.integers(0, 2**32))
@settings(max_examples=60)
def test_anti_correlation_holds_after_any_sequence(ops, seed):
    """Exhaustive pool scan: doubly-fixed pairs are always opposite."""
    pool = PairPool(seed)
    pairs = [pool.create_pair(True) for _ in range(8)]
    for kind, which in ops:
        p1, p2 = pairs[which]
        try:
            if kind == 0:
                pool.observe(p1)
            elif kind == 1:
                pool.observe(p2)
            elif kind == 2:
                pool.trigger_spin(p1, Spin.UP)
            else:
                pool.trigger_spin(p1, Spin.DOWN)
        except (AlreadyFixed, TriggerOnNonIonized):
            pass
    for _, first, second in pool.pairs_snapshot():
        assert (first is Spin.UNOBSERVED) == (second is Spin.UNOBSERVED)
        if first is not Spin.UNOBSERVED:
            assert first.opposite() is second
