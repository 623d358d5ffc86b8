# cython: boundscheck=False, wraparound=False, cdivision=True
"""Fused cosine min-distance kernel backing greedy farthest traversal.

One pass per update: dot product against the new point, zero-norm rules,
clamp to [0, 2], and in-place minimum, with no intermediate arrays.  The
dot product uses four independent accumulators (a fixed summation order)
so the compiler can vectorize the reduction.
"""


cdef inline double _dot(const double* a, const double* b, Py_ssize_t d) noexcept nogil:
    cdef double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0
    cdef Py_ssize_t k = 0
    while k + 4 <= d:
        s0 += a[k] * b[k]
        s1 += a[k + 1] * b[k + 1]
        s2 += a[k + 2] * b[k + 2]
        s3 += a[k + 3] * b[k + 3]
        k += 4
    while k < d:
        s0 += a[k] * b[k]
        k += 1
    return (s0 + s1) + (s2 + s3)


def update_min_dist(double[:, ::1] pool, double[::1] norms,
                    double[::1] min_dist, Py_ssize_t new_index):
    """min_dist[i] <- min(min_dist[i], cosine_distance(pool[i], pool[new_index]))."""
    cdef Py_ssize_t n = pool.shape[0]
    cdef Py_ssize_t d = pool.shape[1]
    cdef Py_ssize_t i
    cdef double dist, ni
    cdef double nj = norms[new_index]
    cdef double eps = 1e-12
    cdef const double* base = &pool[0, 0]
    cdef const double* target = base + new_index * d
    with nogil:
        for i in range(n):
            ni = norms[i]
            if nj < eps:
                dist = 0.0 if ni < eps else 1.0
            elif ni < eps:
                dist = 1.0
            else:
                dist = 1.0 - _dot(base + i * d, target, d) / (ni * nj)
                if dist < 0.0:
                    dist = 0.0
                elif dist > 2.0:
                    dist = 2.0
            if dist < min_dist[i]:
                min_dist[i] = dist
