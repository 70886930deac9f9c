"""ASCII rendering of the loss surface on the plane through three models.

The plane is spanned by orthonormalized differences (b - a, c - a); the grid
covers all three anchors with a margin. Darker characters mean higher loss.
"""

import numpy as np

from permalign import analysis, data, nn


SHADES = " .:-=+*#%@"


def main():
    ds = data.make_synthetic("blobs", 900, 10, 3, seed=11)
    dims = [10, 16, 16, 3]
    models = [
        nn.train(dims, nn.TrainConfig(epochs=25, batch_size=128, seed=s),
                 ds.train.inputs, ds.train.labels)
        for s in (1, 2, 3)
    ]
    grid = analysis.landscape(*models, ds.test, resolution=21)

    lo, hi = grid.losses.min(), grid.losses.max()
    scaled = (grid.losses - lo) / max(hi - lo, 1e-12)
    print(f"loss range [{lo:.3f}, {hi:.3f}], anchors at a, b, c:")
    anchor_cells = set()
    for (ax, ay) in grid.anchors:
        ix = int(round((ax - grid.xs[0]) / (grid.xs[1] - grid.xs[0])))
        iy = int(round((ay - grid.ys[0]) / (grid.ys[1] - grid.ys[0])))
        anchor_cells.add((iy, ix))
    for iy in range(len(grid.ys) - 1, -1, -1):
        row = ""
        for ix in range(len(grid.xs)):
            if (iy, ix) in anchor_cells:
                row += "O"
            else:
                row += SHADES[int(scaled[iy, ix] * (len(SHADES) - 1))]
        print(" ", row)
    print("anchor losses:", [round(float(v), 4) for v in grid.anchor_losses])


if __name__ == "__main__":
    main()
