"""Numerical tolerances shared across the package."""

# algebraic identities (hermiticity, unitarity, purity)
ATOL_ALGEBRAIC = 1e-12
# spectral checks (PSD-ness, eigenvalue ranges, trace normalization)
ATOL_SPECTRAL = 1e-10
# residuals of linear solves (duality identity)
ATOL_LINSOLVE = 1e-9

# relative singular value cutoff deciding numerical rank
RANK_RTOL = 1e-10
# frame superoperators with a larger condition number are rejected
MAX_CONDITION = 1e12
# condition barrier used inside weight searches
BARRIER_CONDITION = 1e10

# default probability floor for state-optimal duals
PROBABILITY_FLOOR = 1e-12
