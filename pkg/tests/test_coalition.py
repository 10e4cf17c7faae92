import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _models import random_aligned_model, random_tariff, three_uniform_cdf, bisect
from storage_sharing import IndependentModel, Partition, Tariff, TransformModel, Uniform, join, sample
from storage_sharing.coalition import induced_game_nash, random_partition, stability_report
from storage_sharing.sharing import nash_equilibrium


def test_partition_validation():
    assert Partition.singletons(3).blocks == ((0,), (1,), (2,))
    assert Partition.grand(3).blocks == ((0, 1, 2),)
    with pytest.raises(ValueError):
        Partition(((0, 1), (1, 2)))
    with pytest.raises(ValueError):
        Partition(((0,), (2,)))
    with pytest.raises(ValueError):
        Partition(((0,), ()))


def test_random_partition_blocks():
    rng = np.random.default_rng(0)
    for _ in range(20):
        p = random_partition(6, 3, rng)
        assert len(p.blocks) == 3 and p.n == 6


def test_induced_game_capacities_are_block_sums():
    rng = np.random.default_rng(1)
    model = random_aligned_model(rng, 4)
    t = random_tariff(rng)
    s = sample(model, 100_000, seed=1)
    full = nash_equilibrium(t, s, check_alignment=False, verify=False)
    part = Partition(((0, 2), (1, 3)))
    block = induced_game_nash(t, s, part, verify=False)
    assert float(block.q) == float(full.q)
    for b, cap in zip(part.blocks, block.allocation.capacities):
        assert cap == pytest.approx(full.allocation.capacities[list(b)].sum(), abs=1e-10)


def test_induced_game_warns_on_misalignment():
    t = Tariff.from_spread(1.0, 0.3)
    s = sample(TransformModel(), 200_000, seed=2)
    with pytest.warns(RuntimeWarning, match="alignment"):
        induced_game_nash(t, s, Partition.singletons(2), verify=False)


def test_stability_of_aligned_models():
    rng = np.random.default_rng(3)
    for i in range(5):
        model = random_aligned_model(rng, 4)
        t = random_tariff(rng)
        s = sample(model, 50_000, seed=i)
        rep = stability_report(t, s, Partition(((0, 1), (2, 3))))
        assert rep.stable, rep.to_dict()


def test_stability_holds_even_without_alignment():
    # the tail event of the grand coalition is only ever compared with the
    # block's own optimal tail, which is optimal among events of that size
    t = Tariff.from_spread(1.0, 0.3)
    s = sample(TransformModel(), 100_000, seed=4)
    rep = stability_report(t, s, Partition.singletons(2))
    assert all(b.surplus >= -1e-12 for b in rep.blocks)


def test_grand_coalition_surplus_is_zero():
    t = Tariff(1.0, 0.0, 0.3)
    s = sample(IndependentModel((Uniform(), Uniform())), 10_000, seed=5)
    rep = stability_report(t, s, Partition.grand(2))
    assert rep.blocks[0].surplus == pytest.approx(0.0, abs=1e-12)


def test_join_irwin_hall():
    t = Tariff.from_spread(1.0, 0.7)
    s = sample(IndependentModel((Uniform(), Uniform())), 1_000_000, seed=6)
    out = join(t, s, Uniform(), seed=7)
    assert float(out.q_before) == pytest.approx(math.sqrt(0.6), abs=0.01)
    assert float(out.q_after) == pytest.approx(bisect(three_uniform_cdf, 1, 2, 0.3), abs=0.01)
    assert out.reallocation.size == 3
    assert np.allclose(out.payments, 0.7 * out.reallocation)


def test_join_requires_entrant():
    t = Tariff(1.0, 0.0, 0.3)
    s = sample(IndependentModel((Uniform(),)), 1000, seed=0)
    with pytest.raises(ValueError):
        join(t, s)
    with pytest.raises(ValueError):
        join(t, s, np.ones(5))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32))
def test_extensivity_on_shared_days(seed):
    # appending a non-negative column raises every order statistic
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    model = random_aligned_model(rng, n + 1)
    t = random_tariff(rng)
    full = sample(model, 5_000, seed=seed)
    out = join(t, full.select(range(n)), samples_after=full)
    assert float(out.q_after) >= float(out.q_before)


def test_join_to_dict_keys():
    t = Tariff(1.0, 0.0, 0.3)
    s = sample(IndependentModel((Uniform(), Uniform())), 20_000, seed=8)
    d = join(t, s, Uniform(0, 0.5), seed=1).to_dict()
    assert {"q_before", "q_after", "delta_capacity", "reallocation", "payments_per_day"} <= set(d)
