"""Compare linear trends over ordinal categories of two exposures.

Each exposure is cut into quintiles and every row is scored with the median
raw value of its quintile; the scores enter the model as one continuous
column per exposure, so the trend comparison reduces to the continuous case
(a single interaction coefficient, df = 1).
"""

import numpy as np

import dupcox as dc

config = dc.SimConfig(
    n_subjects=700,
    exposure_correlation=0.5,
    true_beta=(0.5, 0.2),
    covariate_effects=(0.3,),
    censoring_rate=0.3,
    n_strata=3,
    replicate_count=1,
    master_seed=20240903,
)
cohort = dc.simulate_cohort(config, 0)

# What the scoring does to one exposure column:
raw = cohort.exposure("A1")
categories, cuts = dc.categorize_quantiles(raw, k=5, name="A1")
scores = dc.trend_scores(categories, raw, k=5)
print("quintile cut points for A1:", np.round(cuts, 3))
print("median score per quintile: ",
      np.round(sorted(set(scores.tolist())), 3))
print()

spec = dc.ExposureSpec(kind="trend", source_columns=("A1", "A2"), n_levels=5)
report = dc.compare_exposures(cohort, spec)
print(dc.render_table(report))
