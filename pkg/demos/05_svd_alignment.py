"""Singular-vector alignment between two networks, and a 3x3 worked case.

R close to 1 means the permuted models share their singular directions;
independently initialized pairs sit near 0. The thresholded variant keeps
only directions whose singular value clears a fraction of the global top.
The worked 3x3 pair also illustrates the single-layer output bound: inputs
along the shared top right-singular direction produce nearly identical ReLU
outputs even though the weight matrices differ.
"""

import numpy as np

from permalign import analysis, nn, perm
from permalign.linalg import svd
from permalign.rng import stream


WA = np.array([[-0.398, -0.003, 0.210],
               [1.059, 0.303, 0.521],
               [0.609, -0.785, -0.235]])
WB = np.array([[-0.255, -0.319, -0.559],
               [1.031, -0.155, 0.484],
               [0.742, -0.114, -0.604]])


def r_metric_demo():
    dims = [6, 10, 10, 4]
    a = nn.init_model(dims, seed=0)
    ident = perm.identity_perm([10, 10])
    print("R(a, a, identity):", analysis.compute_R(a, a, ident, 0.0).r_value)
    b = nn.init_model(dims, seed=1)
    for gamma in (0.0, 0.3):
        rep = analysis.compute_R(a, b, ident, gamma)
        print(f"R(a, b, identity) at gamma={gamma}: {rep.r_value:+.4f} "
              f"(kept {rep.counts})")


def worked_example():
    ra, rb = svd(WA), svd(WB)
    print("singular values of Wa:", np.round(ra.s, 3))
    print("singular values of Wb:", np.round(rb.s, 3))
    dist = np.linalg.norm(WA - WB)
    print(f"||Wa - Wb||_F = {dist:.4f}")
    v1 = ra.v[:, 0]
    print("top right singular vector:", np.round(v1, 3))
    for k in (1.0, 5.0):
        z = k * v1
        diff = np.linalg.norm(np.maximum(WA @ z, 0) - np.maximum(WB @ z, 0))
        print(f"  k={k:4.1f}: ||relu(Wa z) - relu(Wb z)|| = {diff:.4f} "
              f"vs 2% of k*dist = {0.02 * k * dist:.4f}")
    samples = stream(3, 0).standard_normal((500, 3))
    bound = analysis.output_diff_bound(WA, WB, samples)
    print(f"random inputs: lhs {bound.lhs:.4f} <= rhs {bound.rhs:.4f}")


def main():
    r_metric_demo()
    print()
    worked_example()


if __name__ == "__main__":
    main()
