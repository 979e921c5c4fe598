"""Pure-python (numpy) twin of the compiled assembly loops in ``_accel.pyx``.

Scatter-accumulation goes through ``np.bincount`` on flattened index pairs,
which is the fastest portable way to add several million weighted outer
products into a dense matrix without a compiled extension.  Only the upper
triangle (a <= b) is computed; the mirror image is added with the identical
value so the result is symmetric to the bit, matching the extension.
"""

import numpy as np


def power_pair_accumulate(A, x, y, w, psi, idx, coeff, expo):
    kw = coeff * w * np.abs(x - y) ** expo
    weighted_pair_accumulate(A, kw, psi, idx)


def weighted_pair_accumulate(A, kw, psi, idx):
    assert A.flags.c_contiguous
    nn = A.shape[0]
    m = psi.shape[1]
    flat = A.ravel()
    idx64 = idx.astype(np.int64)
    for a in range(m):
        wa = kw * psi[:, a]
        flat += np.bincount(idx64[:, a] * (nn + 1), weights=wa * psi[:, a],
                            minlength=nn * nn)
        for b in range(a + 1, m):
            v = wa * psi[:, b]
            flat += np.bincount(idx64[:, a] * nn + idx64[:, b], weights=v,
                                minlength=nn * nn)
            flat += np.bincount(idx64[:, b] * nn + idx64[:, a], weights=v,
                                minlength=nn * nn)
