"""Recovering a hidden permutation from weights alone.

Takes a model, scrambles its hidden units with a secret permutation, and asks
the two matchers to find the alignment between the original and the scrambled
copy. Weight matching needs only the parameters; activation matching needs a
batch of inputs. Both should drive the aligned L2 distance to zero.
"""

import numpy as np

from permalign import matching, nn, perm
from permalign.matching import MatchConfig
from permalign.rng import stream


def main():
    dims = [6, 8, 8, 3]
    a = nn.init_model(dims, seed=7)
    secret = perm.random_perm([8, 8], seed=99)
    b = perm.apply_perm(secret, a)
    print("distance after scrambling:", matching.l2_distance(a, b))

    rep = matching.wm_coordinate(a, b, MatchConfig(seed=0))
    print("weight matching:  l2 %.2e -> %.2e  (reduction %.1f%%)"
          % (rep.l2_before, rep.l2_after, 100 * rep.reduction_rate))
    print("  recovered == inverse of secret:",
          all(np.array_equal(p, q) for p, q in
              zip(rep.pi.per_layer, perm.invert(secret).per_layer)))

    x = stream(1, 0).standard_normal((256, 6))
    data = nn.EvalSet(inputs=x, labels=np.zeros(256, dtype=np.int64))
    rep2 = matching.activation_matching(a, b, data)
    print("activation matching:  l2 %.2e -> %.2e"
          % (rep2.l2_before, rep2.l2_after))


if __name__ == "__main__":
    main()
