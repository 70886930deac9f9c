"""Aligning two models to a third and measuring the leftover mismatch.

Models b and c are each matched to a, never to each other. The barrier on
the indirect bc pair tells whether "align everything to one reference" makes
the whole set mergeable; which matcher composes better depends on scale and
tuning, so both are reported side by side.
"""

from permalign import analysis, data, nn
from permalign.matching import MatchConfig


def main():
    ds = data.make_synthetic("blobs", 900, 10, 3, seed=11)
    dims = [10, 16, 16, 3]
    a, b, c = (
        nn.train(dims, nn.TrainConfig(epochs=25, batch_size=128, seed=s),
                 ds.train.inputs, ds.train.labels)
        for s in (1, 2, 3)
    )
    for method in ("wm", "ste"):
        cfg = None
        if method == "ste":
            cfg = MatchConfig(method="ste", outer_iters=4, inner_iters=30,
                              learning_rate=0.5, seed=0)
        rep = analysis.three_model_experiment(
            a, b, c, method, ds.test, match_cfg=cfg,
            landscape_resolution=9)
        bars = {k: v.midpoint_barrier for k, v in rep.barriers.items()}
        print(f"{method}: midpoint barriers "
              f"ab {bars['ab']:+.4f}  ac {bars['ac']:+.4f}  "
              f"bc (indirect) {bars['bc']:+.4f}")
        print(f"   R(0.3) on bc: {rep.r_values['bc@0.3'].r_value:+.4f}")


if __name__ == "__main__":
    main()
