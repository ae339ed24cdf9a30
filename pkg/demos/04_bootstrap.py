# # How noisy is the estimated total?
#
# Treat the fitted mixture as the truth, regenerate counts from it, refit,
# and look at the spread of the resulting totals.

import numpy as np

from deconv_ht import (
    CountVector,
    PopulationFrame,
    TruncatedGeometric,
    bootstrap_mse_term,
    build_kernel_matrix,
    default_grid,
    fit,
    mht_total,
)

kernel = TruncatedGeometric(4)
P = build_kernel_matrix(default_grid(kernel), kernel)
frame = PopulationFrame(N=50_000, I=5_000)

counts = CountVector([310, 95, 60, 35])
g_hat = fit(counts, P)
total = mht_total(g_hat, counts.total, frame)

res = bootstrap_mse_term(g_hat, counts.total, frame, P, K=200, seed=7)
print(f"estimated total {total:.0f}, bootstrap rmse {np.sqrt(res.mse):.0f} "
      f"({res.failures} failed refits out of {res.K})")
