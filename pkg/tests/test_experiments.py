import csv
import dataclasses
import io
import statistics

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dstc import experiments as ex
from dstc.ei import DelayProfile
from dstc.errors import PreconditionError
from dstc.fabric import Fabric, MismatchModel


def fabric(seed=0, cv=0.2):
    return Fabric(MismatchModel(cv=cv, seed=seed))


@pytest.fixture(scope="module")
def b2():
    return ex.build_b2(fabric(0), 4)


# -- patterns ----------------------------------------------------------------------------


@given(seed=st.integers(0, 2**32), k=st.integers(0, 8))
def test_random_pattern_window(seed, k):
    p = ex.random_pattern(np.random.default_rng(seed), k, 1.0, 50.0)
    assert p.times[0] == 0.0 and p.k == k
    assert np.all((p.lateral >= -50.0) & (p.lateral <= -1.0))
    p.check_window(1.0, 50.0)


def test_degenerate_window():
    p = ex.random_pattern(np.random.default_rng(1), 4, 10.0, 10.0)
    assert p.times == (0.0, -10.0, -10.0, -10.0, -10.0)


def test_pattern_sequence_deterministic():
    a = [ex.random_pattern(np.random.default_rng(5), 4) for _ in range(3)]
    b = [ex.random_pattern(np.random.default_rng(5), 4) for _ in range(3)]
    assert a == b
    rng1, rng2 = np.random.default_rng(9), np.random.default_rng(9)
    batch = ex.random_lateral_times(rng1, 3, 4, 1.0, 50.0)
    seq = np.array([ex.random_pattern(rng2, 4).lateral for _ in range(3)])
    assert np.array_equal(batch, seq)


def test_pattern_validation():
    with pytest.raises(PreconditionError):
        ex.SpikePattern((1.0, -3.0))
    with pytest.raises(PreconditionError):
        ex.random_pattern(np.random.default_rng(0), 4, 0.0, 50.0)
    with pytest.raises(PreconditionError):
        ex.random_pattern(np.random.default_rng(0), 4, 20.0, 10.0)
    with pytest.raises(PreconditionError):
        ex.SpikePattern.from_lateral([-60.0]).check_window(1.0, 50.0)


# -- slot assignments ------------------------------------------------------------------------


def test_slot_assignment_validation():
    with pytest.raises(PreconditionError):
        ex.SlotAssignment(0, ((1, 2), (2, 3)))
    with pytest.raises(PreconditionError):
        ex.SlotAssignment(64, ((1, 2),))
    with pytest.raises(PreconditionError):
        ex.SlotAssignment.from_slots([1, 2])
    a = ex.SlotAssignment.from_slots([5, 1, 2, 9, 8])
    assert a.label() == "5 (1,2) (9,8)"
    assert a.slots == (5, 1, 2, 9, 8)


def test_resample_draws_nine_distinct_slots():
    fab = fabric(0)
    b = ex.build_b2(fab, 4)
    rng = np.random.default_rng(0)
    a1 = ex.resample_synapses(fab, b, rng)
    assert len(set(a1.slots)) == 9 == len(fab.entries(b.address))
    assert sorted(fab.entries(b.address)) == sorted(a1.slots)
    a2 = ex.resample_synapses(fab, b, rng)
    assert a1 != a2
    assert sorted(fab.entries(b.address)) == sorted(a2.slots)
    assert b.assignment == a2


def test_resampling_is_inert_without_mismatch():
    fab = fabric(0, cv=0.0)
    b = ex.build_b2(fab, 4)
    lat = ex.random_lateral_times(np.random.default_rng(3), 200, 4, 1.0, 50.0)
    before = ex.present(b.config(), lat)
    rng = np.random.default_rng(1)
    for _ in range(3):
        ex.resample_synapses(fab, b, rng)
        assert np.array_equal(ex.present(b.config(), lat), before)


def test_resample_checks_fabric(b2):
    with pytest.raises(PreconditionError):
        ex.resample_synapses(fabric(), b2, np.random.default_rng(0))


# -- presentation -------------------------------------------------------------------------


def test_state_isolation(b2):
    cfg = b2.config()
    pa, _ = ex.tuning_patterns(cfg)
    lat = ex.random_lateral_times(np.random.default_rng(0), 50, 4, 1.0, 50.0)
    lat = np.concatenate([lat, [pa.lateral]])
    twice = ex.present(cfg, np.concatenate([lat, lat]))
    assert np.array_equal(twice[: len(lat)], twice[len(lat):])
    single = np.array([ex.present(cfg, row[None])[0] for row in lat[:10]])
    assert np.array_equal(single, twice[:10])


def test_parallel_presentation_matches_serial(b2):
    cfg = b2.config()
    lat = ex.random_lateral_times(np.random.default_rng(2), 300, 4, 1.0, 50.0)
    serial = ex.present_parallel(cfg, lat, 0.05, 50.0, 100.0, workers=1, chunk=70)
    par = ex.present_parallel(cfg, lat, 0.05, 50.0, 100.0, workers=3, chunk=70)
    assert np.array_equal(serial, par)
    assert np.array_equal(serial, ex.present(cfg, lat))


def test_pattern_width_must_match(b2):
    with pytest.raises(PreconditionError):
        ex.present(b2.config(), np.zeros((2, 3)))


# -- receptive fields ------------------------------------------------------------------------


def _silenced(cfg):
    z = lambda p: dataclasses.replace(p, I_w=0.0)
    return dataclasses.replace(cfg, forward=z(cfg.forward), lateral=tuple((z(e), z(i)) for e, i in cfg.lateral))


def test_inert_neuron_has_empty_rf(b2):
    rf = ex.map_receptive_field(_silenced(b2.config()), 200, seed=0)
    assert rf.n_accepted == 0 and rf.n_trials == 200
    assert np.all(np.isnan(rf.medians()))
    rows = list(csv.reader(io.StringIO(ex.rf_report(rf))))
    assert rows[0] == ["channel", "q1", "median", "q3", "whisker_lo", "whisker_hi", "n_accepted"]
    assert rows[1:] == [[str(c), "", "", "", "", "", "0"] for c in range(5)]


def test_zero_patterns(b2):
    rf = ex.map_receptive_field(b2, 0)
    assert rf.n_accepted == 0 and rf.n_trials == 0
    with pytest.raises(PreconditionError):
        ex.map_receptive_field(b2, -1)


def test_single_accepted_pattern_degenerate_stats():
    rf = ex.ReceptiveField(np.array([[0.0, -4.0, -12.5, -30.0, -7.25]]), 10, 4)
    for ch, t in enumerate(rf.accepted[0]):
        st_ = rf.channel_stats(ch)
        assert st_["q1"] == st_["median"] == st_["q3"] == st_["whisker_lo"] == st_["whisker_hi"] == t


def test_rf_report_recomputes_from_accepted(b2):
    rf = ex.map_receptive_field(b2, 400, seed=1)
    assert rf.n_accepted > 3
    rows = list(csv.reader(io.StringIO(ex.rf_report(rf))))[1:]
    stored = list(csv.reader(io.StringIO(ex.accepted_csv(rf))))[1:]
    assert len(stored) == rf.n_accepted
    for ch, row in enumerate(rows):
        x = rf.accepted[:, ch].tolist()
        q1, med, q3 = statistics.quantiles(x, n=4, method="inclusive")
        want = [str(ch), *(f"{v:.3f}" for v in (q1, med, q3, min(x), max(x))), str(len(x))]
        assert row == want


def test_accepted_patterns_replay(b2):
    cfg = b2.config()
    rf = ex.map_receptive_field(cfg, 500, seed=2)
    assert rf.n_accepted > 0
    assert np.all(ex.present(cfg, rf.accepted[:, 1:]) >= 1)


def test_rf_is_deterministic_and_worker_independent(b2):
    a = ex.map_receptive_field(b2, 300, seed=4)
    b = ex.map_receptive_field(b2, 300, seed=4, workers=2)
    assert np.array_equal(a.accepted, b.accepted)


# -- feature tuning ------------------------------------------------------------------------


def test_tuning_patterns_follow_peaks(b2):
    cfg = b2.config()
    pa, pb = ex.tuning_patterns(cfg)
    peaks = [p.peak_time for p in cfg.profiles()]
    assert all(isinstance(p, DelayProfile) for p in cfg.profiles())
    assert np.allclose(pa.lateral, -np.array(peaks))
    assert np.array_equal(pb.lateral, np.roll(pa.lateral, 1))
    pa.check_window(1.0, 50.0)


def test_identical_patterns_never_succeed():
    fab = fabric(1)
    b = ex.build_b2(fab, 4)
    pa, _ = ex.tuning_patterns(b)
    out = ex.tune_feature(fab, b, pa, pa, n_configs=40, trials_per_pattern=3, seed=0)
    assert len(out) == 40
    assert not any(o.success for o in out)


def test_tuning_outcomes_are_valid_and_replay():
    fab = fabric(1)
    b = ex.build_b2(fab, 4)
    original = b.assignment
    pa, pb = ex.tuning_patterns(b)
    out = ex.tune_feature(fab, b, pa, pb, n_configs=40, trials_per_pattern=4, seed=1)
    wins = [o for o in out if o.success]
    assert wins, "seed 1 is known to contain successful configurations"
    for o in out:
        assert len(set(o.assignment.slots)) == 9
        assert len(o.counts_a) == len(o.counts_b) == 4
        assert o.success == (min(o.counts_a) >= 1 and max(o.counts_b) == 0)
    assert b.assignment == wins[0].assignment != original
    for o in wins:
        again = ex.replay(fab, b, o, pa, pb, 4)
        assert (again.counts_a, again.counts_b, again.success) == (o.counts_a, o.counts_b, True)


def test_tune_is_deterministic():
    results = []
    for workers in (1, 2):
        fab = fabric(2)
        b = ex.build_b2(fab, 4)
        pa, pb = ex.tuning_patterns(b)
        results.append(ex.tune_feature(fab, b, pa, pb, n_configs=20, trials_per_pattern=2, seed=7,
                                       workers=workers))
    assert results[0] == results[1]
    assert ex.tuning_csv(results[0]) == ex.tuning_csv(results[1])


def test_tune_preconditions(b2):
    pa, pb = ex.tuning_patterns(b2)
    with pytest.raises(PreconditionError):
        ex.tune_feature(b2.fabric, b2, pa, pb, n_configs=0)
    with pytest.raises(PreconditionError):
        ex.tune_feature(b2.fabric, b2, ex.SpikePattern((0.0, -3.0)), pb, n_configs=1)


def test_lenient_judgement():
    assert ex._judge([1, 1, 0], [0, 0, 0], strict=False)
    assert not ex._judge([1, 1, 0], [0, 0, 0], strict=True)


def test_tuning_csv_layout():
    o = ex.TuningOutcome(3, ex.SlotAssignment.from_slots([4, 1, 2]), (1, 2), (0, 0), True)
    rows = list(csv.reader(io.StringIO(ex.tuning_csv([o]))))
    assert rows == [["config", "forward_slot", "exc1_slot", "inh1_slot", "spikes_a", "spikes_b", "success"],
                    ["3", "4", "1", "2", "3", "0", "1"]]
    assert ex.successes_text([o]) == "3: 4 (1,2)\n"
