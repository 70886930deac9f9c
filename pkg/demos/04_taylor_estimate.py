"""Predicting the barrier from endpoint curvature only.

The second-order estimate needs two gradients and two Hessian-vector products,
no interpolation sweep. On a quadratic loss it is exact; on a trained pair it
upper-bounds the true bump when the path stays in the convex-ish basin.
"""

import numpy as np

from permalign import analysis, data, nn
from permalign.rng import stream


def quadratic_case():
    # single layer, symmetric +-sqrt(d)*e_k inputs, zero targets:
    # mse loss becomes 0.5*||theta||^2, so the Hessian is the identity
    dim = 5
    eye = np.eye(dim) * np.sqrt(dim)
    ev = nn.EvalSet(inputs=np.vstack([eye, -eye]), loss_kind="mse",
                    targets=np.zeros((2 * dim, dim)))
    gen = stream(42, 0)
    mk = lambda: nn.ModelParams(weights=[gen.standard_normal((dim, dim))],
                                biases=[gen.standard_normal(dim)])
    qa, qb = mk(), mk()
    est = analysis.taylor_barrier(qa, qb, ev, grid_size=11)
    true = analysis.barrier(qa, qb, ev, grid_size=11)
    gap = max(abs(e - (l - (lam * true.losses[-1] + (1 - lam) * true.losses[0])))
              for lam, e, l in zip(est.lambdas, est.values, true.losses))
    print(f"quadratic: max |estimate - true gap| = {gap:.2e}  (exact)")


def trained_case():
    ds = data.make_synthetic("blobs", 900, 10, 3, seed=11)
    dims = [10, 16, 16, 3]
    a = nn.train(dims, nn.TrainConfig(epochs=25, batch_size=128, seed=1),
                 ds.train.inputs, ds.train.labels)
    b = nn.train(dims, nn.TrainConfig(epochs=25, batch_size=128, seed=2),
                 ds.train.inputs, ds.train.labels)
    est = analysis.taylor_barrier(a, b, ds.test)
    true = analysis.barrier(a, b, ds.test)
    print(f"trained pair: estimate at midpoint {est.midpoint_estimate:+.4f}, "
          f"true {true.midpoint_barrier:+.4f}")
    print(f"  mu norm check (should be ~1): {est.mu_norm_check:.6f}")


def main():
    quadratic_case()
    trained_case()


if __name__ == "__main__":
    main()
