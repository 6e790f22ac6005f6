# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled MLP hot-path kernels.

Matrix products go through BLAS dgemm (scipy's Cython bindings); activation,
loss and Adam arithmetic are fused C loops.  Semantics mirror
rewardlab._numpy_backend; rewardlab.backend picks whichever is available.
"""

import numpy as np

from libc.math cimport exp, isfinite, log1p, pow, sqrt
from libc.stdlib cimport free, malloc
from libc.string cimport memcpy
from scipy.linalg.cython_blas cimport dgemm

NAME = "compiled"


cdef inline double _sigmoid(double z) noexcept nogil:
    cdef double e
    if z >= 0.0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


cdef inline double _softplus(double z) noexcept nogil:
    # log(1 + e^z) without overflow on large |z|
    if z > 0.0:
        return z + log1p(exp(-z))
    return log1p(exp(z))


# Row-major GEMM wrappers.  BLAS is column-major, so the row-major product
# C = op(A) op(B) is issued as the column-major product C^T = op(B)^T op(A)^T.

cdef void _mm_nn(double* a, double* b, double* c, int m, int k, int n) noexcept nogil:
    # c[m,n] = a[m,k] @ b[k,n]
    cdef double one = 1.0, zero = 0.0
    cdef char cn = b'N'
    dgemm(&cn, &cn, &n, &m, &k, &one, b, &n, a, &k, &zero, c, &n)


cdef void _mm_nt(double* a, double* b, double* c, int m, int k, int n) noexcept nogil:
    # c[m,n] = a[m,k] @ b[n,k]^T
    cdef double one = 1.0, zero = 0.0
    cdef char cn = b'N', ct = b'T'
    dgemm(&ct, &cn, &n, &m, &k, &one, b, &k, a, &k, &zero, c, &n)


cdef void _mm_tn(double* a, double* b, double* c, int m, int k, int n) noexcept nogil:
    # c[m,n] = a[k,m]^T @ b[k,n]
    cdef double one = 1.0, zero = 0.0
    cdef char cn = b'N', ct = b'T'
    dgemm(&cn, &ct, &n, &m, &k, &one, b, &n, a, &m, &zero, c, &n)


cdef void _affine(double[:, ::1] inp, double[:, ::1] w, double[::1] b,
                  double[:, ::1] out, bint relu) noexcept nogil:
    cdef int n = <int> inp.shape[0], k = <int> inp.shape[1], m = <int> w.shape[1]
    cdef int i, j
    cdef double v
    _mm_nn(&inp[0, 0], &w[0, 0], &out[0, 0], n, k, m)
    for i in range(n):
        for j in range(m):
            v = out[i, j] + b[j]
            if relu and v < 0.0:
                v = 0.0
            out[i, j] = v


def forward(list weights, list biases, x):
    """Batch forward pass: ReLU trunk, sigmoid per head."""
    cur = np.ascontiguousarray(x, dtype=np.float64)
    cdef int n_layers = len(weights)
    cdef int layer, i, j
    cdef double[:, ::1] in_view, out_view
    for layer in range(n_layers):
        out = np.empty((cur.shape[0], weights[layer].shape[1]), dtype=np.float64)
        in_view = cur
        out_view = out
        _affine(in_view, weights[layer], biases[layer], out_view, layer < n_layers - 1)
        cur = out
    cdef double[:, ::1] probs = cur
    with nogil:
        for i in range(probs.shape[0]):
            for j in range(probs.shape[1]):
                probs[i, j] = _sigmoid(probs[i, j])
    return cur


def loss_and_grad(list weights, list biases, x, y, head_weights):
    """Fused forward/backward for one batch; returns (loss, grad_w, grad_b).

    loss = mean_i sum_h head_weights[h] * bce(z_ih, y_ih), cross-entropy
    evaluated from logits in softplus form.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    hw_arr = np.ascontiguousarray(head_weights, dtype=np.float64)
    cdef double[::1] hw = hw_arr
    cdef int n = x.shape[0]
    cdef int n_layers = len(weights)
    cdef int layer, i, j
    cdef double z, s, loss = 0.0
    cdef double inv_n = 1.0 / n

    acts = [x]
    cur = x
    cdef double[:, ::1] in_view, out_view
    for layer in range(n_layers - 1):
        out = np.empty((n, weights[layer].shape[1]), dtype=np.float64)
        in_view = cur
        out_view = out
        _affine(in_view, weights[layer], biases[layer], out_view, True)
        acts.append(out)
        cur = out

    # Head logits, overwritten in place with the batch-scaled error signal.
    delta_arr = np.empty((n, weights[n_layers - 1].shape[1]), dtype=np.float64)
    cdef double[:, ::1] delta = delta_arr
    in_view = cur
    _affine(in_view, weights[n_layers - 1], biases[n_layers - 1], delta, False)
    cdef double[:, ::1] ym = y
    with nogil:
        for i in range(n):
            for j in range(delta.shape[1]):
                z = delta[i, j]
                loss += hw[j] * (_softplus(z) - ym[i, j] * z)
                delta[i, j] = hw[j] * (_sigmoid(z) - ym[i, j]) * inv_n
    loss *= inv_n

    grad_w = [np.empty_like(wi) for wi in weights]
    grad_b = [np.empty_like(bi) for bi in biases]
    cdef double[:, ::1] act, gw, wv, prev
    cdef double[::1] gb
    delta_obj = delta_arr
    for layer in range(n_layers - 1, -1, -1):
        act = acts[layer]
        gw = grad_w[layer]
        gb = grad_b[layer]
        delta = delta_obj
        with nogil:
            _mm_tn(&act[0, 0], &delta[0, 0], &gw[0, 0],
                   <int> act.shape[1], n, <int> delta.shape[1])
            for j in range(delta.shape[1]):
                gb[j] = 0.0
            for i in range(n):
                for j in range(delta.shape[1]):
                    gb[j] += delta[i, j]
        if layer > 0:
            # Propagate through this layer's weights, then apply the ReLU
            # mask of the activation feeding it.
            prev_arr = np.empty((n, act.shape[1]), dtype=np.float64)
            prev = prev_arr
            wv = weights[layer]
            with nogil:
                _mm_nt(&delta[0, 0], &wv[0, 0], &prev[0, 0],
                       n, <int> delta.shape[1], <int> act.shape[1])
                for i in range(n):
                    for j in range(prev.shape[1]):
                        if act[i, j] <= 0.0:
                            prev[i, j] = 0.0
            delta_obj = prev_arr
    return loss, grad_w, grad_b


def adam_step(double[::1] param, double[::1] grad, double[::1] m, double[::1] v,
              long t, double lr, double beta1, double beta2, double eps):
    """In-place bias-corrected Adam update on flat parameter views."""
    cdef Py_ssize_t i
    cdef double c1 = 1.0 - pow(beta1, <double> t)
    cdef double c2 = 1.0 - pow(beta2, <double> t)
    cdef double g
    with nogil:
        for i in range(param.shape[0]):
            g = grad[i]
            m[i] = beta1 * m[i] + (1.0 - beta1) * g
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g
            param[i] -= lr * (m[i] / c1) / (sqrt(v[i] / c2) + eps)


cdef inline void _update_flat(double* p, double* g, double* m, double* v, long size,
                              bint use_adam, long t, double lr, double beta1,
                              double beta2, double eps) noexcept nogil:
    cdef long i
    cdef double c1, c2, gi
    if use_adam:
        c1 = 1.0 - pow(beta1, <double> t)
        c2 = 1.0 - pow(beta2, <double> t)
        for i in range(size):
            gi = g[i]
            m[i] = beta1 * m[i] + (1.0 - beta1) * gi
            v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi
            p[i] -= lr * (m[i] / c1) / (sqrt(v[i] / c2) + eps)
    else:
        for i in range(size):
            p[i] -= lr * g[i]


def train_epochs(list weights, list biases, x, y, head_weights,
                 long[:, ::1] perms, int batch_size,
                 double lr, double beta1, double beta2, double eps, bint use_adam):
    """All training epochs fused into one C loop: batch gather, forward,
    backward and parameter updates without per-step Python dispatch.

    Updates `weights`/`biases` in place.  Returns (abort_epoch, abort_step,
    last_loss); abort_epoch >= 0 flags a non-finite loss, with the update
    for that batch not applied.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    cdef double[:, ::1] xm = x
    cdef double[:, ::1] ym = y
    cdef double[::1] hw = np.ascontiguousarray(head_weights, dtype=np.float64)
    cdef int n = <int> xm.shape[0]
    cdef int d_in = <int> xm.shape[1]
    cdef int n_layers = len(weights)
    cdef int n_epochs = <int> perms.shape[0]
    cdef int n_heads = <int> ym.shape[1]

    # Scratch buffers (numpy arrays kept alive in lists; raw pointers below).
    acts, deltas, grads_w, grads_b, opt_m, opt_v = [], [], [], [], [], []
    cdef int l
    for l in range(n_layers):
        out_dim = weights[l].shape[1]
        acts.append(np.empty((batch_size, out_dim)))
        deltas.append(np.empty((batch_size, out_dim)))
        grads_w.append(np.empty_like(weights[l]))
        grads_b.append(np.empty_like(biases[l]))
        opt_m.append(np.zeros(weights[l].size + biases[l].size))
        opt_v.append(np.zeros(weights[l].size + biases[l].size))
    xb_arr = np.empty((batch_size, d_in))
    yb_arr = np.empty((batch_size, n_heads))
    cdef double[:, ::1] xb = xb_arr
    cdef double[:, ::1] yb = yb_arr

    cdef double** wp = <double**> malloc(6 * n_layers * sizeof(double*))
    cdef int* in_dims = <int*> malloc(2 * n_layers * sizeof(int))
    if wp == NULL or in_dims == NULL:
        free(wp)
        free(in_dims)
        raise MemoryError()
    cdef double** bp = wp + n_layers
    cdef double** ap = bp + n_layers
    cdef double** dp = ap + n_layers
    cdef double** gwp = dp + n_layers
    cdef double** gbp = gwp + n_layers
    cdef int* out_dims = in_dims + n_layers
    cdef double** mp = <double**> malloc(2 * n_layers * sizeof(double*))
    cdef double** vp = mp + n_layers if mp != NULL else NULL
    if mp == NULL:
        free(wp)
        free(in_dims)
        raise MemoryError()
    cdef double[:, ::1] tmp2
    cdef double[::1] tmp1
    for l in range(n_layers):
        tmp2 = weights[l]
        wp[l] = &tmp2[0, 0]
        tmp1 = biases[l]
        bp[l] = &tmp1[0]
        tmp2 = acts[l]
        ap[l] = &tmp2[0, 0]
        tmp2 = deltas[l]
        dp[l] = &tmp2[0, 0]
        tmp2 = grads_w[l]
        gwp[l] = &tmp2[0, 0]
        tmp1 = grads_b[l]
        gbp[l] = &tmp1[0]
        tmp1 = opt_m[l]
        mp[l] = &tmp1[0]
        tmp1 = opt_v[l]
        vp[l] = &tmp1[0]
        in_dims[l] = <int> weights[l].shape[0]
        out_dims[l] = <int> weights[l].shape[1]

    cdef int epoch, start, bs, i, j, row
    cdef long t_step = 0, wsize
    cdef int abort_epoch = -1, abort_step = -1
    cdef double z, v_out, loss, inv_bs
    cdef double last_loss = 0.0
    cdef double* prev
    cdef double* head
    cdef double* in_act
    cdef int prev_dim
    cdef bint done = False

    try:
        with nogil:
            for epoch in range(n_epochs):
                if done:
                    break
                start = 0
                while start < n:
                    bs = n - start if n - start < batch_size else batch_size
                    inv_bs = 1.0 / bs
                    for i in range(bs):
                        row = <int> perms[epoch, start + i]
                        memcpy(&xb[i, 0], &xm[row, 0], d_in * sizeof(double))
                        memcpy(&yb[i, 0], &ym[row, 0], n_heads * sizeof(double))

                    # forward: ReLU trunk, head logits into the last delta buffer
                    prev = &xb[0, 0]
                    prev_dim = d_in
                    for l in range(n_layers - 1):
                        _mm_nn(prev, wp[l], ap[l], bs, prev_dim, out_dims[l])
                        for i in range(bs):
                            for j in range(out_dims[l]):
                                v_out = ap[l][i * out_dims[l] + j] + bp[l][j]
                                ap[l][i * out_dims[l] + j] = v_out if v_out > 0.0 else 0.0
                        prev = ap[l]
                        prev_dim = out_dims[l]
                    head = dp[n_layers - 1]
                    _mm_nn(prev, wp[n_layers - 1], head, bs, prev_dim, n_heads)

                    loss = 0.0
                    for i in range(bs):
                        for j in range(n_heads):
                            z = head[i * n_heads + j] + bp[n_layers - 1][j]
                            loss += hw[j] * (_softplus(z) - yb[i, j] * z)
                            head[i * n_heads + j] = hw[j] * (_sigmoid(z) - yb[i, j]) * inv_bs
                    loss *= inv_bs
                    if not isfinite(loss):
                        abort_epoch = epoch
                        abort_step = <int> t_step
                        done = True
                        break
                    last_loss = loss

                    # backward
                    for l in range(n_layers - 1, -1, -1):
                        if l > 0:
                            in_act = ap[l - 1]
                        else:
                            in_act = &xb[0, 0]
                        _mm_tn(in_act, dp[l], gwp[l], in_dims[l], bs, out_dims[l])
                        for j in range(out_dims[l]):
                            gbp[l][j] = 0.0
                        for i in range(bs):
                            for j in range(out_dims[l]):
                                gbp[l][j] += dp[l][i * out_dims[l] + j]
                        if l > 0:
                            _mm_nt(dp[l], wp[l], dp[l - 1], bs, out_dims[l], in_dims[l])
                            for i in range(bs):
                                for j in range(in_dims[l]):
                                    if in_act[i * in_dims[l] + j] <= 0.0:
                                        dp[l - 1][i * in_dims[l] + j] = 0.0

                    t_step += 1
                    for l in range(n_layers):
                        wsize = <long> in_dims[l] * out_dims[l]
                        _update_flat(wp[l], gwp[l], mp[l], vp[l], wsize,
                                     use_adam, t_step, lr, beta1, beta2, eps)
                        _update_flat(bp[l], gbp[l], mp[l] + wsize, vp[l] + wsize,
                                     out_dims[l], use_adam, t_step, lr, beta1, beta2, eps)
                    start += batch_size
    finally:
        free(wp)
        free(in_dims)
        free(mp)

    return abort_epoch, abort_step, last_loss
