"""Power of the comparison test, and why overlapping CIs can still differ.

First sweeps the gap between the two true coefficients and shows the
rejection rate rising from the nominal 5%.  Then runs a high-correlation
scenario where the two per-exposure confidence intervals overlap in most
replicates, yet the comparison test rejects over 80% of the time: the test
uses the (large, positive) covariance between the two estimates, which the
eyeball comparison of intervals throws away.
"""

import dupcox as dc


def scenario(b1, b2, rho, n, seed, replicates=250):
    return dc.SimConfig(
        n_subjects=n,
        exposure_correlation=rho,
        true_beta=(b1, b2),
        covariate_effects=(0.3,),
        censoring_rate=0.3,
        n_strata=2,
        replicate_count=replicates,
        master_seed=seed,
    )


print("power versus the gap |b1 - b2| (n = 300, rho = 0.7):")
for delta in (0.0, 0.15, 0.30, 0.45):
    config = scenario(0.4 + delta, 0.4, rho=0.7, n=300, seed=606)
    run = dc.estimate_type1_error if delta == 0.0 else dc.estimate_power
    result = run(config, alpha=0.05)
    print(f"  gap {delta:.2f}: rejection rate {result.rejection_rate:.3f} "
          f"[{result.ci_lower:.3f}, {result.ci_upper:.3f}]")

print()
print("overlapping intervals, decisive test (n = 500, rho = 0.85):")
config = scenario(1.0, 0.25, rho=0.85, n=500, seed=707)
result = dc.estimate_power(config, alpha=0.05, include_naive=True)
print(f"  per-exposure 95% CIs overlap in {result.ci_overlap_fraction:.0%} "
      "of replicates")
print(f"  duplication-method rejection rate: {result.rejection_rate:.3f}")
print(f"  naive uncorrelated z-test rate:    {result.naive_rejection_rate:.3f}")
