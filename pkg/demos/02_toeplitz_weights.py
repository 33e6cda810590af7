"""Toeplitz weight matrices: 2N-1 numbers describe an N x N Toeplitz-Hermitian block."""

import numpy as np

from covsense.channel import (AngularSpread, ArrayGeometry, ArrayKind, array_response, build_covariance,
                              geometry_pair, sample_scenario)
from covsense.structure import build_weight_matrix, permute, reduced_unknown, toeplitz_to_param

W = build_weight_matrix("ULA", 3)
print("ULA weight matrix for N=3 (rows index vec(T), columns the 5 parameters):")
print(W.matrix.astype(int))

g = ArrayGeometry(ArrayKind.ULA, 8)
a = array_response(g, np.deg2rad(25))
T = np.outer(a, a.conj())
p = toeplitz_to_param(T, "ULA")
print("parameters reproduce T:", np.allclose(p.weight.expand(p.a), T.ravel(order="F")))

# the whole permuted covariance is Gamma_u C Gamma_v^T with a small C
rng = np.random.default_rng(1)
tx, rx = geometry_pair("USPA", 16, 4)
sc = sample_scenario(rng, tx, rx, 2, 30, AngularSpread())
C = reduced_unknown(sc)
gu, gv = build_weight_matrix("USPA", 16), build_weight_matrix("USPA", 4)
Rp = permute(build_covariance(sc).R, 16, 4)
print(f"USPA 16x4: R_p is {Rp.shape}, the unknown C is {C.shape}")
print("relative error of Gamma_u C Gamma_v^T:",
      np.linalg.norm(gu.matrix @ C @ gv.matrix.T - Rp) / np.linalg.norm(Rp))
