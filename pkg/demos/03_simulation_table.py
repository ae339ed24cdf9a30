# # A slice of the simulation table
#
# Two groups (X=1, X=0) share a list of I units. Group 1 is harder to reach,
# so the responder share understates it. Compare the naive share, the
# deconvolution-based estimate and the oracle that knows every p*.
#
# Full runs use reps=1000; this uses 100 to finish in a few seconds.

from deconv_ht.simulate import run_table, table_configs

configs = table_configs(10_000, reps=100, seed=0, families=("2points", "unif", "norm"),
                        m0s=(4, 7), alphas=(0.2, 0.4))
rows = run_table(configs)

print(f"{'G0':8s}{'M0':>4s}{'alpha':>7s}{'M-NV':>9s}{'M-MHT':>9s}{'S-NV':>9s}{'S-MHT':>9s}{'S-OR':>9s}")
for r in rows:
    print(f"{r.family:8s}{r.M0:4d}{r.alpha:7.1f}{r.m_nv:9.4f}{r.m_mht:9.4f}{r.s_nv:9.4f}{r.s_mht:9.4f}{r.s_or:9.4f}")

# Set DECONV_HT_THREADS=0 to spread repetitions over all cores; results
# do not change with the worker count.
