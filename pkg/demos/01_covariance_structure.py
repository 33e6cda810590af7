"""Clustered channel covariance and its Kronecker-rearranged form.

A single cluster of 30 rays gives a covariance R whose rank (for 99 % of the
energy) grows with the angular spread, while the rearranged matrix R_p,
a sum of rank-one outer products, needs far fewer terms.
"""

import numpy as np

from covsense.channel import AngularSpread, build_covariance, geometry_pair, sample_scenario
from covsense.structure import permute, permuted_singular_values, rank_for_energy

rng = np.random.default_rng(0)
tx, rx = geometry_pair("ULA", 64, 16)

for K in (1, 2, 3, 4):
    sc = sample_scenario(rng, tx, rx, K, 30, AngularSpread())
    cov = build_covariance(sc)
    r_R = rank_for_energy(cov.singular_values, 0.99)
    r_p = rank_for_energy(permuted_singular_values(sc), 0.99)
    print(f"K={K}: rank of R for 99% energy = {r_R:3d}, rank of R_p = {r_p:3d}")

# the rearrangement turns a Kronecker product into an outer product of vecs
A = rng.standard_normal((3, 3))
B = rng.standard_normal((2, 2))
Rp = permute(np.kron(A, B), 3, 2)
print("permute(A kron B) == vec(A) vec(B)^T:",
      np.allclose(Rp, np.outer(A.ravel(order="F"), B.ravel(order="F"))))
