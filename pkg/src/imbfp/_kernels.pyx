# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: timestamp parsing, type-105 column scan, bin accumulation.

Mirrors ``_kernels_py`` exactly; see that module for the reference semantics.
"""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport strtod
from libc.string cimport memcpy

cnp.import_array()

cdef enum:
    MAX_INT_DIGITS = 18
    MAX_DECIMAL_DIGITS = 30
    MAX_FIELDS = 15

from ._kernels_py import NanoTimeError


cdef inline bint _is_digit(unsigned char c) noexcept nogil:
    return 48 <= c <= 57


cdef long long _nanotime(const unsigned char* s, Py_ssize_t n) noexcept nogil:
    """Nanoseconds since midnight, or -1 when malformed."""
    cdef Py_ssize_t i
    cdef long long hh, mm, ss, frac = 0
    cdef int nfrac
    if n < 10 or n > 18:
        return -1
    if not (_is_digit(s[0]) and _is_digit(s[1]) and _is_digit(s[3])
            and _is_digit(s[4]) and _is_digit(s[6]) and _is_digit(s[7])):
        return -1
    if s[2] != 58 or s[5] != 58 or s[8] != 46:
        return -1
    hh = (s[0] - 48) * 10 + (s[1] - 48)
    mm = (s[3] - 48) * 10 + (s[4] - 48)
    ss = (s[6] - 48) * 10 + (s[7] - 48)
    if hh > 23 or mm > 59 or ss > 59:
        return -1
    nfrac = <int>(n - 9)
    for i in range(9, n):
        if not _is_digit(s[i]):
            return -1
        frac = frac * 10 + (s[i] - 48)
    for i in range(nfrac, 9):
        frac *= 10
    return ((hh * 60 + mm) * 60 + ss) * 1000000000 + frac


def parse_nanotime(str text):
    cdef bytes b
    try:
        b = text.encode("ascii")
    except UnicodeEncodeError:
        b = None
    cdef long long v = -1
    if b is not None:
        v = _nanotime(<const unsigned char*>b, len(b))
    if v < 0:
        # the pure version produces the component-specific message
        from ._kernels_py import parse_nanotime as _slow
        return _slow(text)
    return v


cdef inline bint _is_uint(const unsigned char* s, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    if n <= 0 or n > MAX_INT_DIGITS:
        return False
    for i in range(n):
        if not _is_digit(s[i]):
            return False
    return True


cdef inline long long _uint(const unsigned char* s, Py_ssize_t n) noexcept nogil:
    cdef long long v = 0
    cdef Py_ssize_t i
    for i in range(n):
        v = v * 10 + (s[i] - 48)
    return v


cdef inline bint _is_udecimal(const unsigned char* s, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    cdef int dots = 0
    for i in range(n):
        if s[i] == 46:
            dots += 1
            if dots > 1:
                return False
        elif not _is_digit(s[i]):
            return False
    if n - dots == 0:
        return False
    return n - dots <= MAX_DECIMAL_DIGITS


cdef inline bint _is_space(unsigned char c) noexcept nogil:
    return c == 32


cdef inline void _strip(const unsigned char* s, Py_ssize_t n,
                        Py_ssize_t* a, Py_ssize_t* b) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = n
    while lo < hi and _is_space(s[lo]):
        lo += 1
    while hi > lo and _is_space(s[hi - 1]):
        hi -= 1
    a[0] = lo
    b[0] = hi


def scan_imbalances(const unsigned char[::1] data):
    cdef Py_ssize_t n = data.shape[0]
    cdef Py_ssize_t pos = 0, end, line_end, k, nf, a, b, fs, fl
    cdef Py_ssize_t starts[MAX_FIELDS + 1]
    cdef Py_ssize_t lens[MAX_FIELDS + 1]
    cdef const unsigned char* base = &data[0] if n > 0 else NULL
    cdef long long t
    cdef char buf[64]
    cdef unsigned char c
    cdef bint ok
    cdef Py_ssize_t n_lines = 0, n_ok = 0, n_bad = 0
    cdef dict index = {}
    cdef list symbols = []
    cdef bytes key

    times = np.empty(1024, dtype=np.int64)
    prices = np.empty(1024, dtype=np.float64)
    imbs = np.empty(1024, dtype=np.int64)
    codes = np.empty(1024, dtype=np.int32)
    cdef long long[::1] tv = times
    cdef double[::1] pv = prices
    cdef long long[::1] iv = imbs
    cdef int[::1] cv = codes
    cdef Py_ssize_t cap = 1024

    while pos < n:
        end = pos
        while end < n and base[end] != 10:
            end += 1
        line_end = end
        if line_end > pos:
            n_lines += 1
            while line_end > pos and base[line_end - 1] == 13:
                line_end -= 1
            # first field must be exactly "105"
            if (line_end - pos >= 3 and base[pos] == 49 and base[pos + 1] == 48
                    and base[pos + 2] == 53
                    and (line_end - pos == 3 or base[pos + 3] == 44)):
                nf = 0
                fs = pos
                k = pos
                while True:
                    if k == line_end or base[k] == 44:
                        if nf < MAX_FIELDS:
                            starts[nf] = fs
                            lens[nf] = k - fs
                        nf += 1
                        if k == line_end:
                            break
                        fs = k + 1
                    k += 1
                ok = nf >= MAX_FIELDS
                if ok:
                    t = _nanotime(base + starts[2], lens[2])
                    ok = t >= 0
                if ok:
                    ok = (_is_uint(base + starts[1], lens[1])
                          and _is_uint(base + starts[4], lens[4])
                          and _is_uint(base + starts[6], lens[6])
                          and _is_uint(base + starts[7], lens[7])
                          and _is_uint(base + starts[8], lens[8]))
                if ok:
                    ok = lens[3] > 0
                if ok:
                    ok = (_is_udecimal(base + starts[5], lens[5])
                          and _is_udecimal(base + starts[12], lens[12])
                          and _is_udecimal(base + starts[13], lens[13])
                          and _is_udecimal(base + starts[14], lens[14]))
                if ok:
                    _strip(base + starts[10], lens[10], &a, &b)
                    c = base[starts[10] + a] if b - a == 1 else 0
                    ok = b - a == 1 and (c == 79 or c == 77 or c == 72 or c == 67 or c == 82)
                if ok:
                    _strip(base + starts[11], lens[11], &a, &b)
                    if b - a == 0:
                        ok = True
                    elif b - a == 1:
                        c = base[starts[11] + a]
                        ok = c == 66 or c == 83 or c == 48
                    else:
                        ok = False
                if not ok:
                    n_bad += 1
                else:
                    if n_ok == cap:
                        cap *= 2
                        times = np.resize(times, cap)
                        prices = np.resize(prices, cap)
                        imbs = np.resize(imbs, cap)
                        codes = np.resize(codes, cap)
                        tv = times
                        pv = prices
                        iv = imbs
                        cv = codes
                    key = bytes(data[starts[3]:starts[3] + lens[3]])
                    code = index.get(key)
                    if code is None:
                        code = len(symbols)
                        index[key] = code
                        symbols.append(key.decode("utf-8", errors="replace"))
                    tv[n_ok] = t
                    fl = lens[5]
                    memcpy(buf, base + starts[5], fl)
                    buf[fl] = 0
                    pv[n_ok] = strtod(buf, NULL)
                    iv[n_ok] = _uint(base + starts[7], lens[7])
                    cv[n_ok] = code
                    n_ok += 1
        pos = end + 1

    return (times[:n_ok].copy(), prices[:n_ok].copy(), imbs[:n_ok].copy(),
            codes[:n_ok].copy(), symbols, (n_lines, n_ok, n_bad))


def accumulate(time_idx, price_idx, dollars, Py_ssize_t n_time, Py_ssize_t n_price):
    cdef long long[::1] ti = np.ascontiguousarray(time_idx, dtype=np.int64)
    cdef long long[::1] pi = np.ascontiguousarray(price_idx, dtype=np.int64)
    cdef double[::1] dv = np.ascontiguousarray(dollars, dtype=np.float64)
    grid = np.zeros((n_time, n_price), dtype=np.float64)
    counts = np.zeros(n_time, dtype=np.int64)
    cdef double[:, ::1] g = grid
    cdef long long[::1] cnt = counts
    cdef Py_ssize_t i, t
    with nogil:
        for i in range(ti.shape[0]):
            t = ti[i]
            if t < 0:
                continue
            g[t, pi[i]] += dv[i]
            cnt[t] += 1
    return grid, counts
