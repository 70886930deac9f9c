"""permalign: permutation alignment and mode connectivity analysis for MLPs.

Submodules:
    linalg    dense SVD, assignment, Sinkhorn kernels
    nn        MLP parameters, training, gradients, Hessian-vector products
    perm      hidden-unit permutations
    matching  weight / activation / straight-through permutation search
    analysis  barriers, Taylor estimates, alignment metrics, landscapes
    convspec  circulant spectral treatment of periodic conv kernels
    data      dataset loading and synthetic generators
    cli       command line entry point
"""

__version__ = "0.1.0"
