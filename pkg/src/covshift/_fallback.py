"""Pure numpy implementations of the compiled kernel loops in ``_core``."""
import numpy as np
from scipy.spatial.distance import cdist

# rows per block in gaussian_expand; bounds the temporary at ~16 MB for q=1000
_BLOCK = 2048


def gaussian_gram(X, Y, sigma, num_threads=1):
    X = np.ascontiguousarray(X, dtype=np.float64)
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    if X.shape[0] == 0 or Y.shape[0] == 0:
        return np.empty((X.shape[0], Y.shape[0]))
    d2 = cdist(X, Y, "sqeuclidean")
    return np.exp(d2 * (-0.5 / (sigma * sigma)))


def gaussian_gram_sym(X, sigma, num_threads=1):
    K = gaussian_gram(X, X, sigma)
    # cdist is symmetric elementwise; the diagonal is forced to the exact value
    np.fill_diagonal(K, 1.0)
    return K


def gaussian_expand(X, A, w, sigma, num_threads=1):
    X = np.ascontiguousarray(X, dtype=np.float64)
    A = np.ascontiguousarray(A, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    out = np.zeros(X.shape[0])
    if X.shape[0] == 0 or A.shape[0] == 0:
        return out
    scale = -0.5 / (sigma * sigma)
    for start in range(0, X.shape[0], _BLOCK):
        block = cdist(X[start:start + _BLOCK], A, "sqeuclidean")
        np.multiply(block, scale, out=block)
        np.exp(block, out=block)
        out[start:start + _BLOCK] = block @ w
    return out
