# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; semantics match ``gpa._kernels_py`` exactly."""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

BACKEND = "cython"

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL


cdef inline double _uniform_at(uint64_t key, uint64_t counter) nogil:
    cdef uint64_t z = key + (counter + 1) * GOLDEN
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    z = z ^ (z >> 31)
    return <double>(z >> 11) * (1.0 / 9007199254740992.0)


cdef inline int64_t _pick(double u, int64_t m) nogil:
    cdef int64_t j = <int64_t>(u * m)
    if j > m - 1:
        j = m - 1
    return j


def neighbor_sum(const int64_t[::1] offsets, const int64_t[::1] neighbors, x):
    cdef const double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = offsets.shape[0] - 1
    cdef Py_ssize_t d = xv.shape[1]
    out = np.zeros((n, d), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t v, e, k
    cdef int64_t u
    with nogil:
        for v in range(n):
            for e in range(offsets[v], offsets[v + 1]):
                u = neighbors[e]
                for k in range(d):
                    ov[v, k] += xv[u, k]
    return out


def segment_sum(x, const int64_t[::1] ids, Py_ssize_t num_segments):
    cdef const double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0]
    cdef Py_ssize_t d = xv.shape[1]
    out = np.zeros((num_segments, d), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t r, k
    cdef int64_t s
    with nogil:
        for r in range(n):
            s = ids[r]
            for k in range(d):
                ov[s, k] += xv[r, k]
    return out


def random_walk(const int64_t[::1] offsets, const int64_t[::1] neighbors,
                Py_ssize_t target, Py_ssize_t budget, key, counter):
    cdef uint64_t ukey = <uint64_t>key
    cdef uint64_t c = <uint64_t>counter
    cdef Py_ssize_t n = offsets.shape[0] - 1
    visited_arr = np.zeros(n, dtype=np.uint8)
    order_arr = np.empty(target, dtype=np.int64)
    cdef unsigned char[::1] visited = visited_arr
    cdef int64_t[::1] order = order_arr
    cdef Py_ssize_t count = 0, steps = 0, nfree, v
    cdef int64_t cur, lo, deg, j
    with nogil:
        cur = _pick(_uniform_at(ukey, c), n)
        c += 1
        visited[cur] = 1
        order[count] = cur
        count += 1
        while count < target:
            lo = offsets[cur]
            deg = offsets[cur + 1] - lo
            if deg == 0 or steps >= budget:
                nfree = n - count
                j = _pick(_uniform_at(ukey, c), nfree)
                c += 1
                for v in range(n):
                    if not visited[v]:
                        if j == 0:
                            cur = v
                            break
                        j -= 1
                visited[cur] = 1
                order[count] = cur
                count += 1
                steps = 0
                continue
            j = _pick(_uniform_at(ukey, c), deg)
            c += 1
            cur = neighbors[lo + j]
            steps += 1
            if not visited[cur]:
                visited[cur] = 1
                order[count] = cur
                count += 1
    return order_arr, int(c)
