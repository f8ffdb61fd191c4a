import numpy as np
import pytest

from vrident import reference as R
from vrident.metrics import sigmoid


def test_rank1_counts_match_rates():
    assert 20 / 183 == pytest.approx(0.1093, abs=5e-5)
    assert 79 / 183 == pytest.approx(0.4317, abs=5e-5)
    assert set(R.ONE_SESSION_30MIN_RANK1) == set(R.ONE_SESSION_30MIN_AUC)


def test_delay_line_one_week():
    # consistent with the rounded coefficients
    assert sigmoid(R.DELAY_INTERCEPT + R.DELAY_SLOPE) == pytest.approx(R.DELAY_AUC_AT[1], abs=5e-4)


def test_delay_line_rounding_gap():
    # the rounded coefficients do not reproduce the intercept and 7-week figures,
    # so the reported values must come from unrounded fits
    assert abs(sigmoid(R.DELAY_INTERCEPT) - R.DELAY_AUC_AT[0]) > 5e-4
    assert abs(sigmoid(R.DELAY_INTERCEPT + 7 * R.DELAY_SLOPE) - R.DELAY_AUC_AT[7]) > 5e-3


def test_table1_ordering():
    for k in range(3):
        assert R.TABLE1[("within", "short")][k] >= R.TABLE1[("between", "short")][k]
    assert np.all(np.array(list(R.TABLE1.values())) <= 1.0)
