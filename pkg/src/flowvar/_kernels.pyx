# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled simulation kernels; same contract and random-draw order as ``_kernels_py``."""

from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport log1p, INFINITY
from libc.stdint cimport int64_t
from libc.stdlib cimport malloc, free
from numpy.random cimport bitgen_t

from .errors import EventQueueOverflow, TourLengthExceeded

NAME = "cython"

cdef const char *CAPSULE_NAME = "BitGenerator"


cdef bitgen_t *_bitgen(object rng) except NULL:
    capsule = rng.bit_generator.capsule
    return <bitgen_t *> PyCapsule_GetPointer(capsule, CAPSULE_NAME)


cdef inline double _uniform(bitgen_t *bg) noexcept nogil:
    return bg.next_double(bg.state)


cdef double _draw(int64_t kind, const double[:] p, bitgen_t *bg) noexcept nogil:
    cdef int n, ph, i
    cdef double u, total, rate
    if kind == 1:
        return -log1p(-_uniform(bg)) / p[0]
    if kind == 2:
        rate = p[1]
        total = 0.0
        n = <int> p[0]
        for i in range(n):
            total += -log1p(-_uniform(bg)) / rate
        return total
    if kind == 3:
        n = <int> p[0]
        u = _uniform(bg)
        ph = n - 1
        for i in range(n):
            if u < p[1 + i]:
                ph = i
                break
        return -log1p(-_uniform(bg)) / p[1 + n + ph]
    return p[0]


cdef inline int _route(const double[:] cum_row, int K, bitgen_t *bg) noexcept nogil:
    cdef double u = _uniform(bg)
    cdef int j
    for j in range(K):
        if u < cum_row[j]:
            return j + 1
    return 0


cdef int _tour(int start, const double[:, :] cum, int K, bitgen_t **bgs,
               int64_t[:, :] counts, int64_t max_len) noexcept nogil:
    """Walk one tour; returns 0, or -1 when ``max_len`` is exceeded."""
    cdef int x = start
    cdef int dest
    cdef int64_t steps = 0
    while True:
        dest = _route(cum[x], K, bgs[x])
        counts[x, dest] += 1
        steps += 1
        if dest == 0:
            return 0
        if steps >= max_len:
            return -1
        x = dest - 1


def sample_tours(const double[:, :] route_cum, int start, Py_ssize_t n, rng,
                 int64_t max_len, int64_t[:, :, :] out):
    cdef int K = route_cum.shape[0]
    cdef bitgen_t *bg = _bitgen(rng)
    cdef bitgen_t **bgs = <bitgen_t **> malloc(K * sizeof(bitgen_t *))
    cdef Py_ssize_t t
    cdef int i, rc = 0
    for i in range(K):
        bgs[i] = bg
    try:
        with nogil:
            out[:, :, :] = 0
            for t in range(n):
                rc = _tour(start, route_cum, K, bgs, out[t], max_len)
                if rc != 0:
                    break
    finally:
        free(bgs)
    if rc != 0:
        raise TourLengthExceeded(max_len)


def zero_service(const double[:] grid, const int64_t[:] arr_kind, const double[:, :] arr_params,
                 const double[:, :] route_cum, arr_rngs, route_rngs, int64_t max_len,
                 int64_t[:, :, :] D_out, int64_t[:, :] A_out):
    cdef int K = route_cum.shape[0]
    cdef Py_ssize_t G = grid.shape[0]
    cdef bitgen_t **abg = <bitgen_t **> malloc(K * sizeof(bitgen_t *))
    cdef bitgen_t **rbg = <bitgen_t **> malloc(K * sizeof(bitgen_t *))
    cdef double *nxt = <double *> malloc(K * sizeof(double))
    cdef int64_t[:, :] D
    cdef int64_t[:] A
    cdef int k, i, best, rc = 0
    cdef Py_ssize_t g = 0
    cdef double t
    import numpy as np
    D_arr = np.zeros((K, K + 1), dtype=np.int64)
    A_arr = np.zeros(K, dtype=np.int64)
    D = D_arr
    A = A_arr
    try:
        for k in range(K):
            abg[k] = _bitgen(arr_rngs[k]) if arr_kind[k] != 0 else NULL
            rbg[k] = _bitgen(route_rngs[k])
        with nogil:
            for k in range(K):
                nxt[k] = _draw(arr_kind[k], arr_params[k], abg[k]) if arr_kind[k] != 0 else INFINITY
            while g < G:
                best = 0
                for i in range(1, K):
                    if nxt[i] < nxt[best]:
                        best = i
                t = nxt[best]
                while g < G and grid[g] < t:
                    D_out[g, :, :] = D
                    A_out[g, :] = A
                    g += 1
                if g == G:
                    break
                A[best] += 1
                rc = _tour(best, route_cum, K, rbg, D, max_len)
                if rc != 0:
                    break
                nxt[best] = t + _draw(arr_kind[best], arr_params[best], abg[best])
    finally:
        free(abg)
        free(rbg)
        free(nxt)
    if rc != 0:
        raise TourLengthExceeded(max_len)


# binary heap of (time, code) pairs ordered lexicographically

cdef inline bint _less(double ta, int64_t ca, double tb, int64_t cb) noexcept nogil:
    return ta < tb or (ta == tb and ca < cb)


cdef void _heap_push(double *ht, int64_t *hc, int *size, double t, int64_t c) noexcept nogil:
    cdef int pos = size[0]
    cdef int parent
    size[0] += 1
    while pos > 0:
        parent = (pos - 1) >> 1
        if _less(t, c, ht[parent], hc[parent]):
            ht[pos] = ht[parent]
            hc[pos] = hc[parent]
            pos = parent
        else:
            break
    ht[pos] = t
    hc[pos] = c


cdef void _heap_pop(double *ht, int64_t *hc, int *size) noexcept nogil:
    cdef int n = size[0] - 1
    cdef double t = ht[n]
    cdef int64_t c = hc[n]
    cdef int pos = 0
    cdef int child
    size[0] = n
    if n == 0:
        return
    while True:
        child = 2 * pos + 1
        if child >= n:
            break
        if child + 1 < n and _less(ht[child + 1], hc[child + 1], ht[child], hc[child]):
            child += 1
        if _less(ht[child], hc[child], t, c):
            ht[pos] = ht[child]
            hc[pos] = hc[child]
            pos = child
        else:
            break
    ht[pos] = t
    hc[pos] = c


cdef struct ServerState:
    int64_t serving
    double start
    double length
    double busy
    double work


cdef void _try_start(int s, double now, ServerState *srv, const int64_t[:, :] prio,
                     int64_t *waiting, const int64_t[:] svc_kind, const double[:, :] svc_params,
                     bitgen_t **sbg, double *ht, int64_t *hc, int *hsize) noexcept nogil:
    cdef int idx
    cdef int64_t q
    if srv[s].serving >= 0:
        return
    for idx in range(prio.shape[1]):
        q = prio[s, idx]
        if q < 0:
            return
        if waiting[q] > 0:
            waiting[q] -= 1
            srv[s].serving = q
            srv[s].start = now
            srv[s].length = _draw(svc_kind[q], svc_params[q], sbg[q])
            _heap_push(ht, hc, hsize, now + srv[s].length, q)
            return


def des_replication(const double[:] grid, const int64_t[:] arr_kind, const double[:, :] arr_params,
                    const int64_t[:] svc_kind, const double[:, :] svc_params,
                    const double[:, :] route_cum, const int64_t[:] server_of,
                    const int64_t[:, :] priority, arr_rngs, svc_rngs, route_rngs,
                    int64_t max_events,
                    int64_t[:, :, :] D_out, int64_t[:, :] A_out, int64_t[:, :] Q_out,
                    int64_t[:, :] S_out, double[:, :] busy_out, double[:, :] work_out,
                    double[:, :] elapsed_out, int64_t[:, :] serving_out):
    cdef int K = route_cum.shape[0]
    cdef int nserv = priority.shape[0]
    cdef Py_ssize_t G = grid.shape[0]
    cdef bitgen_t **abg = <bitgen_t **> malloc(K * sizeof(bitgen_t *))
    cdef bitgen_t **sbg = <bitgen_t **> malloc(K * sizeof(bitgen_t *))
    cdef bitgen_t **rbg = <bitgen_t **> malloc(K * sizeof(bitgen_t *))
    cdef int64_t *waiting = <int64_t *> malloc(K * sizeof(int64_t))
    cdef ServerState *srv = <ServerState *> malloc(nserv * sizeof(ServerState))
    cdef double *ht = <double *> malloc((2 * K + 1) * sizeof(double))
    cdef int64_t *hc = <int64_t *> malloc((2 * K + 1) * sizeof(int64_t))
    cdef int hsize = 0
    cdef int64_t[:, :] D
    cdef int64_t[:] A, Q, S
    cdef int k, i, j, s, dest
    cdef int64_t code
    cdef int64_t events = 0
    cdef bint overflow = False
    cdef Py_ssize_t g = 0
    cdef double t, tg, run
    import numpy as np
    D_arr = np.zeros((K, K + 1), dtype=np.int64)
    A_arr = np.zeros(K, dtype=np.int64)
    Q_arr = np.zeros(K, dtype=np.int64)
    S_arr = np.zeros(K, dtype=np.int64)
    D = D_arr
    A = A_arr
    Q = Q_arr
    S = S_arr
    try:
        for k in range(K):
            abg[k] = _bitgen(arr_rngs[k]) if arr_kind[k] != 0 else NULL
            sbg[k] = _bitgen(svc_rngs[k])
            rbg[k] = _bitgen(route_rngs[k])
        with nogil:
            for k in range(K):
                waiting[k] = 0
            for s in range(nserv):
                srv[s].serving = -1
                srv[s].start = 0.0
                srv[s].length = 0.0
                srv[s].busy = 0.0
                srv[s].work = 0.0
            for k in range(K):
                if arr_kind[k] != 0:
                    _heap_push(ht, hc, &hsize, _draw(arr_kind[k], arr_params[k], abg[k]), K + k)
            while g < G:
                t = ht[0]
                code = hc[0]
                while g < G and grid[g] < t:
                    tg = grid[g]
                    D_out[g, :, :] = D
                    A_out[g, :] = A
                    Q_out[g, :] = Q
                    S_out[g, :] = S
                    for s in range(nserv):
                        run = tg - srv[s].start if srv[s].serving >= 0 else 0.0
                        busy_out[g, s] = srv[s].busy + run
                        work_out[g, s] = srv[s].work
                        elapsed_out[g, s] = run
                        serving_out[g, s] = srv[s].serving
                    g += 1
                if g == G:
                    break
                _heap_pop(ht, hc, &hsize)
                events += 1
                if events > max_events:
                    overflow = True
                    break
                if code >= K:
                    k = <int> (code - K)
                    A[k] += 1
                    Q[k] += 1
                    waiting[k] += 1
                    _heap_push(ht, hc, &hsize, t + _draw(arr_kind[k], arr_params[k], abg[k]), code)
                    _try_start(<int> server_of[k], t, srv, priority, waiting, svc_kind,
                               svc_params, sbg, ht, hc, &hsize)
                else:
                    i = <int> code
                    s = <int> server_of[i]
                    Q[i] -= 1
                    S[i] += 1
                    srv[s].busy += t - srv[s].start
                    srv[s].work += srv[s].length
                    srv[s].serving = -1
                    dest = _route(route_cum[i], K, rbg[i])
                    D[i, dest] += 1
                    if dest:
                        j = dest - 1
                        Q[j] += 1
                        waiting[j] += 1
                    _try_start(s, t, srv, priority, waiting, svc_kind, svc_params, sbg,
                               ht, hc, &hsize)
                    if dest:
                        _try_start(<int> server_of[dest - 1], t, srv, priority, waiting,
                                   svc_kind, svc_params, sbg, ht, hc, &hsize)
    finally:
        free(abg)
        free(sbg)
        free(rbg)
        free(waiting)
        free(srv)
        free(ht)
        free(hc)
    if overflow:
        raise EventQueueOverflow(max_events)
    return events
