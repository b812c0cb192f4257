# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled serving kernels: same contracts as gdserve._kernels_py.

Inputs are plain Python lists of floats (candidate lists per impression are
short, so list access with typed locals beats array conversions); all inner
arithmetic runs in C.
"""

from libc.stdlib cimport free, malloc


cdef struct BreakPoint:
    double b
    double r
    double s


cdef void _sort_breakpoints(BreakPoint* pts, Py_ssize_t n) noexcept nogil:
    # Insertion sort by b: candidate lists are short, O(n^2) is fine here.
    cdef Py_ssize_t i, j
    cdef BreakPoint key
    for i in range(1, n):
        key = pts[i]
        j = i - 1
        while j >= 0 and pts[j].b > key.b:
            pts[j + 1] = pts[j]
            j -= 1
        pts[j + 1] = key


def solve_rate(list remaining, list supply, double demand):
    """Smallest a with sum_i min(r_i, s_i * a) = demand; 1.0 when unsolvable."""
    cdef Py_ssize_t n = len(remaining)
    if demand <= 0.0:
        return 0.0
    if n == 0:
        return 1.0
    cdef BreakPoint* pts = <BreakPoint*> malloc(n * sizeof(BreakPoint))
    if pts == NULL:
        raise MemoryError()
    cdef Py_ssize_t m = 0, i
    cdef double total = 0.0, slope = 0.0
    cdef double r, s, saturated, prev, value, a
    try:
        for i in range(n):
            r = remaining[i]
            s = supply[i]
            if s <= 0.0:
                continue
            pts[m].b = r / s
            pts[m].r = r
            pts[m].s = s
            m += 1
            total += r
            slope += s
        if total < demand:
            return 1.0
        _sort_breakpoints(pts, m)
        saturated = 0.0
        prev = 0.0
        for i in range(m):
            value = saturated + slope * pts[i].b
            if value >= demand:
                if slope > 0.0:
                    a = (demand - saturated) / slope
                else:
                    a = prev
                return a if a < 1.0 else 1.0
            saturated += pts[i].r
            slope -= pts[i].s
            prev = pts[i].b
        return 1.0
    finally:
        free(pts)


def effective_probs(list rates):
    """Truncate priority-ordered rates so they sum to at most 1."""
    cdef Py_ssize_t n = len(rates)
    cdef list out = [0.0] * n
    cdef double cum = 0.0, a, room, e
    cdef Py_ssize_t i
    for i in range(n):
        a = rates[i]
        room = 1.0 - cum
        e = a if a < room else room
        if e < 0.0:
            e = 0.0
        out[i] = e
        cum += e
    return out


def dual_probs(list thetas, list alphas):
    """Per-impression primal reconstruction from dual values (see the pure
    Python twin for the derivation)."""
    cdef Py_ssize_t n = len(thetas)
    if n == 0:
        return []
    cdef BreakPoint* pts = <BreakPoint*> malloc(n * sizeof(BreakPoint))
    if pts == NULL:
        raise MemoryError()
    cdef Py_ssize_t i
    cdef double a_sum = 0.0, b_sum = 0.0, x_val = 0.0, low, cand, beta, x
    cdef bint found = False
    try:
        for i in range(n):
            pts[i].b = 1.0 + <double> alphas[i]
            pts[i].s = <double> thetas[i]
            pts[i].r = 0.0
        _sort_breakpoints(pts, n)
        # Scan activation points from the largest down; stop in the segment
        # where the decreasing piecewise-linear sum crosses 1.
        for i in range(n - 1, -1, -1):
            a_sum += pts[i].s * pts[i].b
            b_sum += pts[i].s
            low = pts[i - 1].b if i > 0 else -1e300
            cand = (a_sum - 1.0) / b_sum
            if cand >= low:
                x_val = cand
                found = True
                break
        if not found:
            x_val = (a_sum - 1.0) / b_sum
    finally:
        free(pts)
    beta = x_val if x_val > 0.0 else 0.0
    cdef list out = [0.0] * n
    for i in range(n):
        x = (<double> thetas[i]) * (1.0 + (<double> alphas[i]) - beta)
        out[i] = x if x > 0.0 else 0.0
    return out


def draw_index(list probs, double u):
    """Single-uniform categorical draw; -1 means unallocated."""
    cdef Py_ssize_t n = len(probs)
    cdef double cum = 0.0
    cdef Py_ssize_t i
    for i in range(n):
        cum += <double> probs[i]
        if u < cum:
            return i
    return -1
