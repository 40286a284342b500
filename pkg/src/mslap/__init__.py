"""Multiscale graph Laplacian learning.

Two semi-supervised classifiers built on a multiscale graph Laplacian
``sum_t c_t L_t ** p_t``:

* ``mmbo``: a multiclass MBO scheme (spectral diffusion, simplex projection,
  thresholding to simplex vertices).
* ``mml``: a soft-margin SVM on an RBF kernel warped by the Laplacian.
"""
from .data import Dataset, SplitSpec, generate_g50c, load_csv, load_libsvm, split_labeled
from .eigen import EigenPairs, lanczos_smallest, nystrom
from .graph import ScaleParams, build_multiscale_graph, laplacian, multiscale_laplacian
from .linalg import SparseMatrix

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "EigenPairs",
    "ScaleParams",
    "SparseMatrix",
    "SplitSpec",
    "build_multiscale_graph",
    "generate_g50c",
    "lanczos_smallest",
    "laplacian",
    "load_csv",
    "load_libsvm",
    "multiscale_laplacian",
    "nystrom",
    "split_labeled",
]
