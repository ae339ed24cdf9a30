# # Effort-count kernels
#
# A unit that answers on attempt j out of at most M0 tries has a truncated
# geometric distribution over j. Each column of the kernel matrix is that
# pmf for one value on the grid.

import numpy as np

from deconv_ht import TruncatedGeometric, build_kernel_matrix, default_grid, response_prob

np.set_printoptions(precision=4, suppress=True)

kernel = TruncatedGeometric(4)
grid = default_grid(kernel)
P = build_kernel_matrix(grid, kernel)
print(P.shape)  # 4 outcomes, 46 grid points

# A few columns: small per-attempt probabilities spread mass over later attempts.
for i in (0, 20, 45):
    print(f"p~={grid.points[i]:.2f}  p*={P.p_star[i]:.4f}  pmf={P.matrix[:, i]}")

# p* is the chance of answering at all within M0 attempts.
print(response_prob(np.array([0.1, 0.5, 0.9]), 4))

# The panel variant: Y = 1 + Binomial(3, p*), on a finer p* grid.
from deconv_ht import ShiftedBinomial

pb = build_kernel_matrix(default_grid(ShiftedBinomial(3)), ShiftedBinomial(3))
print(pb.shape, pb.matrix.sum(axis=0).min())
