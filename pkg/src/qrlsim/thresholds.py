"""Statistical acceptance thresholds, kept in one place.

Finite-sample checks of exact distributional statements need declared error
budgets: means get a 3-sigma margin, distribution comparisons a 4-sigma
multinomial bound, and named hypothesis tests (KS, chi-square) run at the
1 percent level.  Curve comparisons, which are made pointwise over many
epochs, use 2 sigma per point.
"""

SIGMA_MEAN = 3.0
SIGMA_DIST = 4.0
SIGMA_CURVE = 2.0
TEST_ALPHA = 0.01

#: exact history enumeration refuses above |rewarded|**J branches
HISTORY_BRANCH_LIMIT = 10**6
