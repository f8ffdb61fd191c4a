"""Figures reported for the original 8-week cohort (request-only data).

They are kept for side-by-side comparison in reports. Synthetic corpora are
not expected to reproduce them; acceptance relies on directional checks.
"""

# (split, test duration) -> (accuracy, multiclass AUC, 30-class accuracy)
TABLE1 = {
    ("between", "short"): (0.4918, 0.9340, 0.6819),
    ("between", "full"): (0.7760, 0.9831, 0.8709),
    ("within", "short"): (0.7170, 0.9871, 0.8700),
    ("within", "full"): (1.0000, 1.0000, 1.0000),
}

# logit multiclass AUC = intercept + slope * delay (weeks)
DELAY_INTERCEPT = 1.96
DELAY_SLOPE = -0.12
DELAY_AUC_AT = {0: 0.8774, 1: 0.8630, 7: 0.7444}

# one session, up to 30 minutes of training
ONE_SESSION_30MIN_AUC = {"between": 0.7765, "within": 0.9610}
ONE_SESSION_30MIN_RANK1 = {"between": (20, 183), "within": (79, 183)}
