"""Flop models: GCG-Alt does not depend on T, the dictionary baseline grows linearly."""

from covsense.baseline import flops_dcomp
from covsense.metrics import flops_gcg_alt

N_t, N_r, M = 64, 16, 32 * 4
for T in (20, 40, 80, 120):
    g = flops_gcg_alt(N_t, N_r, r_est=4, I_a=2, M=M)
    d = flops_dcomp(T, L_p=18, G_t=2 * N_t, G_r=2 * N_r, M=M)
    print(f"T={T:3d}: GCG-Alt {g:.3e}  dictionary OMP {d:.3e}  ratio {d / g:6.1f}")
