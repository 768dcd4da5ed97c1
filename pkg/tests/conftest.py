import pytest

import dupcox as dc

# Four-subject cohort in the layout of the method's worked example: two
# dichotomous exposures, one event, one binary covariate, entry fixed at 0.
FOUR_ROW_CSV = """id,A,Aprime,Y,time,L1
1,1,1,1,20,1
2,0,1,0,19,1
3,1,1,0,17,0
4,0,0,0,21,0
"""


@pytest.fixture
def four_row_schema():
    return dc.Schema(
        id_column="id",
        exit_column="time",
        event_column="Y",
        exposure_columns=("A", "Aprime"),
        covariate_columns=("L1",),
    )


@pytest.fixture
def four_row_path(tmp_path):
    path = tmp_path / "cohort.csv"
    path.write_text(FOUR_ROW_CSV, encoding="utf-8")
    return path


@pytest.fixture
def four_row_dataset(four_row_path, four_row_schema):
    return dc.load_dataset(four_row_path, four_row_schema)


def simulated_cohort(seed=0, n=250, rho=0.6, betas=(0.5, 0.0), covs=(0.3,),
                     censoring=0.3, n_strata=3):
    """One synthetic cohort plus its continuous exposure spec."""
    config = dc.SimConfig(
        n_subjects=n,
        exposure_correlation=rho,
        true_beta=betas,
        covariate_effects=covs,
        censoring_rate=censoring,
        n_strata=n_strata,
        replicate_count=1,
        master_seed=seed,
    )
    return dc.simulate_cohort(config, 0), config.exposure_spec()
