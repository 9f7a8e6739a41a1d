import csv
import io

import pytest
from hypothesis import given, strategies as st

from dstc.energy import (
    EnergyCostTable,
    EnergyLedger,
    OpKind,
    Variant,
    column_activation_energy,
    lateral_spike_energy,
    lateral_table_csv,
    ledger_accumulate,
    merge,
    scaling_csv,
)
from dstc.errors import PreconditionError


def test_default_costs():
    t = EnergyCostTable()
    assert [t.cost(op) for op in OpKind] == [883, 883, 6840, 360, 324]


def test_lateral_spike_sums():
    assert lateral_spike_energy(Variant.STC) == 883 + 883 + 6840 + 360 + 2 * 324 == 9614
    assert lateral_spike_energy("dSTC") == 2 * 324 == 648
    # rounded to nanojoules as printed
    assert round(lateral_spike_energy("STC") / 1000, 1) == 9.6
    assert round(lateral_spike_energy("dSTC") / 1000, 2) == 0.65


def test_zero_table():
    z = EnergyCostTable.zero()
    assert lateral_spike_energy("STC", z) == lateral_spike_energy("dSTC", z) == 0
    assert column_activation_energy("STC", 7, z) == 0


def test_column_activation_examples():
    assert column_activation_energy("STC", 0) == column_activation_energy("dSTC", 0)
    assert column_activation_energy("STC", 0) == 2 * 883 + 2 * 883 + 2 * 6840 + 324
    assert column_activation_energy("STC", 4) - column_activation_energy("dSTC", 4) == 4 * 8966 == 35864
    with pytest.raises(PreconditionError):
        column_activation_energy("STC", -1)


def test_costs_must_be_non_negative_integers():
    for bad in (-1, 1.5, True):
        with pytest.raises(PreconditionError):
            EnergyCostTable(spike_generation=bad)
    with pytest.raises(PreconditionError):
        EnergyCostTable.from_mapping({"photon": 3})
    assert EnergyCostTable.from_mapping({"intercore_routing": 1}).intercore_routing == 1


def test_ledger_accumulate_examples():
    led = ledger_accumulate(EnergyLedger(), OpKind.CAM_MATCH, 2)
    assert led.total_pj == 648
    assert ledger_accumulate(led, "intracore_broadcast", 0) == led
    with pytest.raises(PreconditionError):
        ledger_accumulate(led, "teleport", 1)
    with pytest.raises(PreconditionError):
        ledger_accumulate(led, OpKind.CAM_MATCH, -1)
    with pytest.raises(PreconditionError):
        ledger_accumulate(led, OpKind.CAM_MATCH, 0.5)


def test_ledger_csv():
    led = EnergyLedger().accumulate(OpKind.BROADCAST, 3).accumulate(OpKind.CAM_MATCH, 1)
    rows = list(csv.reader(io.StringIO(led.to_csv())))
    assert rows[0] == ["op", "count", "unit_cost_pJ", "subtotal_pJ"]
    assert ["intracore_broadcast", "3", "6840", "20520"] in rows
    assert rows[-1] == ["total", "", "", str(20520 + 324)]


def test_merging_needs_one_table():
    with pytest.raises(PreconditionError):
        EnergyLedger() + EnergyLedger(EnergyCostTable.zero())


def test_lateral_table_csv_contains_sums():
    rows = list(csv.reader(io.StringIO(lateral_table_csv())))
    assert ["STC", "sum", "", "", "9614"] in rows
    assert ["dSTC", "sum", "", "", "648"] in rows
    assert ["dSTC", "cam_match_pulse_extension", "2", "324", "648"] in rows


def test_scaling_csv():
    rows = list(csv.reader(io.StringIO(scaling_csv(range(3)))))
    assert rows[0] == ["k", "variant", "energy_pJ"]
    assert len(rows) == 1 + 3 * 2
    by = {(int(k), v): int(e) for k, v, e in rows[1:]}
    assert by[(2, "STC")] - by[(1, "STC")] == 9614
    assert by[(2, "dSTC")] - by[(1, "dSTC")] == 648


costs = st.builds(EnergyCostTable, *(st.integers(0, 10**6) for _ in OpKind))


@given(v=st.sampled_from(list(Variant)), k1=st.integers(0, 1000), k2=st.integers(0, 1000), table=costs)
def test_activation_energy_is_affine(v, k1, k2, table):
    diff = column_activation_energy(v, k2, table) - column_activation_energy(v, k1, table)
    assert diff == (k2 - k1) * lateral_spike_energy(v, table)


ops = st.lists(st.tuples(st.sampled_from(list(OpKind)), st.integers(0, 10**6)), max_size=12)


@given(a=ops, b=ops, table=costs)
def test_accumulation_commutes_and_total_is_exact(a, b, table):
    def fold(seq):
        led = EnergyLedger(table)
        for op, n in seq:
            led = ledger_accumulate(led, op, n)
        return led

    ab, ba = fold(a + b), fold(b + a)
    assert ab == ba
    assert ab == fold(a) + fold(b)
    assert ab.total_pj == sum(n * table.cost(op) for op, n in a + b)
    assert isinstance(ab.total_pj, int)
    assert merge([fold(a), fold(b)], table) == ab
