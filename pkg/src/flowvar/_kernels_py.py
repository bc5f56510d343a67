"""Pure Python simulation kernels.

Reference implementation of the hot loops and the fallback used when the
compiled ``_kernels`` extension is unavailable. Both implementations draw
uniforms in the same order from the same bit generators, so their outputs
are bit-identical; ``tests/test_kernels.py`` holds them to that.

Queue indices are 0-based here. Flow count arrays have ``K + 1`` columns:
column 0 counts departures to the outside, column ``j + 1`` counts
transitions into queue ``j``.
"""

import heapq
import math

from .errors import EventQueueOverflow, TourLengthExceeded

NAME = "python"


def draw(kind, params, rng):
    """One variate from an encoded distribution row (see ``distributions``)."""
    if kind == 1:
        return -math.log1p(-rng.random()) / params[0]
    if kind == 2:
        rate = params[1]
        total = 0.0
        for _ in range(int(params[0])):
            total += -math.log1p(-rng.random()) / rate
        return total
    if kind == 3:
        n = int(params[0])
        u = rng.random()
        phase = n - 1
        for p in range(n):
            if u < params[1 + p]:
                phase = p
                break
        return -math.log1p(-rng.random()) / params[1 + n + phase]
    if kind == 4:
        return params[0]
    raise ValueError(f"unknown distribution kind {kind}")


def route(cum_row, rng):
    """Destination column (0 = outside, j + 1 = queue j) for one departure."""
    u = rng.random()
    for j, c in enumerate(cum_row):
        if u < c:
            return j + 1
    return 0


def _tour(start, cum, rngs, counts, max_len):
    x = start
    steps = 0
    while True:
        dest = route(cum[x], rngs[x])
        counts[x][dest] += 1
        steps += 1
        if dest == 0:
            return
        if steps >= max_len:
            raise TourLengthExceeded(max_len)
        x = dest - 1


def sample_tours(route_cum, start, n, rng, max_len, out):
    """Fill ``out[t]`` (shape ``(n, K, K+1)``) with the counts of ``n`` tours from ``start``."""
    cum = [list(map(float, row)) for row in route_cum]
    K = len(cum)
    rngs = [rng] * K
    for t in range(n):
        counts = [[0] * (K + 1) for _ in range(K)]
        _tour(start, cum, rngs, counts, max_len)
        out[t] = counts


def zero_service(grid, arr_kind, arr_params, route_cum, arr_rngs, route_rngs, max_len,
                 D_out, A_out):
    """Instantaneous-tour replication: every exogenous arrival walks its whole tour at once."""
    cum = [list(map(float, row)) for row in route_cum]
    K = len(cum)
    kinds = [int(x) for x in arr_kind]
    params = [list(map(float, row)) for row in arr_params]
    grid = [float(t) for t in grid]
    G = len(grid)
    inf = math.inf
    nxt = [draw(kinds[k], params[k], arr_rngs[k]) if kinds[k] else inf for k in range(K)]
    D = [[0] * (K + 1) for _ in range(K)]
    A = [0] * K
    g = 0
    while g < G:
        k = min(range(K), key=nxt.__getitem__)
        t = nxt[k]
        while g < G and grid[g] < t:
            D_out[g] = D
            A_out[g] = A
            g += 1
        if g == G:
            break
        A[k] += 1
        _tour(k, cum, route_rngs, D, max_len)
        nxt[k] = t + draw(kinds[k], params[k], arr_rngs[k])


def des_replication(grid, arr_kind, arr_params, svc_kind, svc_params, route_cum,
                    server_of, priority, arr_rngs, svc_rngs, route_rngs, max_events,
                    D_out, A_out, Q_out, S_out, busy_out, work_out, elapsed_out, serving_out):
    """Event-driven replication of the queueing network, starting empty at t = 0.

    ``priority[s]`` lists the queues of server ``s`` highest priority first,
    padded with -1. ``serving_out[g, s]`` is the queue in service (-1 idle).
    Heap entries are ``(time, code)``: ``code = i`` for a
    service completion at queue ``i`` and ``K + k`` for an exogenous arrival
    at ``k``, so equal times pop completions first, then lower queue index.
    Returns the number of events processed.
    """
    cum = [list(map(float, row)) for row in route_cum]
    K = len(cum)
    nserv = len(priority)
    akind = [int(x) for x in arr_kind]
    apar = [list(map(float, row)) for row in arr_params]
    skind = [int(x) for x in svc_kind]
    spar = [list(map(float, row)) for row in svc_params]
    server_of = [int(x) for x in server_of]
    prio = [[int(q) for q in row if q >= 0] for row in priority]
    grid = [float(t) for t in grid]
    G = len(grid)

    D = [[0] * (K + 1) for _ in range(K)]
    A = [0] * K
    Q = [0] * K
    S = [0] * K
    waiting = [0] * K
    serving = [-1] * nserv
    start = [0.0] * nserv
    length = [0.0] * nserv
    busy = [0.0] * nserv
    work = [0.0] * nserv

    heap = []
    for k in range(K):
        if akind[k]:
            heapq.heappush(heap, (draw(akind[k], apar[k], arr_rngs[k]), K + k))

    def try_start(s, now):
        if serving[s] >= 0:
            return
        for q in prio[s]:
            if waiting[q] > 0:
                waiting[q] -= 1
                serving[s] = q
                start[s] = now
                length[s] = draw(skind[q], spar[q], svc_rngs[q])
                heapq.heappush(heap, (now + length[s], q))
                return

    events = 0
    g = 0
    while g < G:
        t, code = heap[0]
        while g < G and grid[g] < t:
            tg = grid[g]
            D_out[g] = D
            A_out[g] = A
            Q_out[g] = Q
            S_out[g] = S
            for s in range(nserv):
                run = tg - start[s] if serving[s] >= 0 else 0.0
                busy_out[g, s] = busy[s] + run
                work_out[g, s] = work[s]
                elapsed_out[g, s] = run
                serving_out[g, s] = serving[s]
            g += 1
        if g == G:
            break
        heapq.heappop(heap)
        events += 1
        if events > max_events:
            raise EventQueueOverflow(max_events)
        if code >= K:
            k = code - K
            A[k] += 1
            Q[k] += 1
            waiting[k] += 1
            heapq.heappush(heap, (t + draw(akind[k], apar[k], arr_rngs[k]), code))
            try_start(server_of[k], t)
        else:
            i = code
            s = server_of[i]
            Q[i] -= 1
            S[i] += 1
            busy[s] += t - start[s]
            work[s] += length[s]
            serving[s] = -1
            dest = route(cum[i], route_rngs[i])
            D[i][dest] += 1
            if dest:
                j = dest - 1
                Q[j] += 1
                waiting[j] += 1
            try_start(s, t)
            if dest:
                try_start(server_of[dest - 1], t)
    return events
