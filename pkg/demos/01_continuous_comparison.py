"""Compare two correlated continuous exposures against one outcome.

Simulates a cohort where two standardized scores are correlated (rho = 0.6)
but only the first drives the hazard, then runs the duplication-method
comparison: duplicate the cohort, tag copies with the exposure type, fit one
type-stratified Cox model with full type interactions and a cluster-robust
variance, and Wald-test the exposure-by-type interaction.

Also verifies, on this cohort, the key algebraic property of the approach:
the augmented fit reproduces the two separate single-exposure fits exactly,
only the variance model differs.
"""

import numpy as np

import dupcox as dc

config = dc.SimConfig(
    n_subjects=600,
    exposure_correlation=0.6,
    true_beta=(0.5, 0.0),       # only the first exposure drives the hazard
    covariate_effects=(0.3,),
    censoring_rate=0.3,
    n_strata=4,
    replicate_count=1,
    master_seed=20240901,
)
cohort = dc.simulate_cohort(config, 0)
spec = config.exposure_spec()

report = dc.compare_exposures(cohort, spec, scale="p10-p90")
print(dc.render_table(report))
print()

# The augmented interaction fit reproduces the separate per-exposure fits.
options = dc.FitOptions()
separate = [
    dc.fit(dc.single_exposure_design(cohort, spec, j), options, robust=False)
    for j in range(2)
]
main = report.fit.coefficient("Exposures")
interaction = report.fit.coefficient("Exposures:A_type2")
print("separate-fit coefficients:  ",
      np.round([f.coefficients[0] for f in separate], 6))
print("augmented main, main+inter: ",
      np.round([main, main + interaction], 6))
print(f"interaction coefficient {interaction:+.6f} equals the difference "
      f"{separate[1].coefficients[0] - separate[0].coefficients[0]:+.6f}")
