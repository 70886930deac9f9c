"""Hidden units of an MLP can be renamed without changing the function.

Builds a random ReLU network, shuffles every hidden layer with a random
permutation (rewiring the adjacent weight matrices to match), and checks the
outputs agree to machine precision. Also shows compose/invert round trips.
"""

import numpy as np

from permalign import nn, perm
from permalign.rng import stream


def main():
    dims = [6, 12, 12, 4]
    model = nn.init_model(dims, seed=0)
    pi = perm.random_perm([12, 12], seed=1)
    permuted = perm.apply_perm(pi, model)

    x = stream(2, 0).standard_normal((128, 6))
    out_a = nn.forward(model, x).zs[-1]
    out_b = nn.forward(permuted, x).zs[-1]
    print("max |f(x) - f_permuted(x)|:", np.max(np.abs(out_a - out_b)))

    rho = perm.random_perm([12, 12], seed=3)
    back = perm.apply_perm(perm.invert(pi), permuted)
    print("undo shuffle, weight mismatch:",
          max(np.max(np.abs(w1 - w2))
              for w1, w2 in zip(model.weights, back.weights)))

    both = perm.compose(rho, pi)  # apply pi first, then rho
    via_compose = perm.apply_perm(both, model)
    via_steps = perm.apply_perm(rho, perm.apply_perm(pi, model))
    print("compose == apply twice:",
          all(np.array_equal(w1, w2)
              for w1, w2 in zip(via_compose.weights, via_steps.weights)))


if __name__ == "__main__":
    main()
