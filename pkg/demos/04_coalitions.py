"""Who gains when a coalition grows, and does any group want to leave?"""

# %%
import itertools

import numpy as np

from storage_sharing import (
    GaussianCopulaModel,
    IndependentModel,
    Partition,
    Tariff,
    TruncatedGaussian,
    Uniform,
    join,
    nash_equilibrium,
    sample,
    stability_report,
)

tariff = Tariff.from_spread(1.0, 0.7)  # gamma = 0.3

# %% a third uniform firm joins two: the pooled quantile moves from sqrt(0.6)
pair = sample(IndependentModel((Uniform(), Uniform())), 1_000_000, seed=15)
out = join(tariff, pair, Uniform(), seed=16)
print(f"Q before {out.q_before:.4f}, after {out.q_after:.4f}")
print("capacity changes (incumbents, entrant):", np.round(out.reallocation, 4))
print("incumbents worse off:", out.worse_off or "none")

# %% stability of every two-block split of a four-firm coalition
model = GaussianCopulaModel.one_factor(
    [TruncatedGaussian(8, 2), TruncatedGaussian(5, 1), TruncatedGaussian(12, 3), TruncatedGaussian(6, 1.5)],
    [0.7, 0.3, 0.6, 0.5],
)
tariff = Tariff(54.0, 21.5, 10.0)
samples = sample(model, 200_000, seed=3)
sol = nash_equilibrium(tariff, samples, verify=False)
print("\nalignment holds:", sol.alignment.aligned)
for r in range(1, 3):
    for block in itertools.combinations(range(4), r):
        if r == 2 and 0 not in block:
            continue  # already seen from the other side
        rest = tuple(k for k in range(4) if k not in block)
        rep = stability_report(tariff, samples, Partition((block, rest)), sol)
        gains = ", ".join(f"{b.block}: {b.surplus:.3f}" for b in rep.blocks)
        print(f"  split {block} | {rest}  stay-surplus {gains}")
