# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled construction core: grid KNN plus the full projection/score/pick loop.

The contract with the pure-Python modules is bit-for-bit equality of results,
not merely tolerance-level agreement, so a tour built here is the same array
the numpy path would have produced. That only holds because of three rules
kept throughout this file:

* every elementwise formula is transcribed with the same operand order as its
  numpy counterpart (each IEEE-754 operation rounds identically no matter who
  executes it);
* order-sensitive reductions (the 8-view logit total, softmax normalization,
  the centroid anchor) are delegated to the exact numpy calls the Python code
  makes, on arrays of the same shape and layout;
* tanh/exp/expm1 are delegated to the numpy ufuncs as well, because numpy's
  SIMD loops for them differ from libm scalars by one ulp on a sizable share
  of inputs (measured here), while sqrt and hypot agree exactly and are taken
  from libm directly.

Numeric strategy codes, policy codes and the DSL step vocabulary are imported
from the Python modules rather than duplicated.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, floor, hypot, sqrt

cnp.import_array()

from .dsl import ANCHORS, COORD_LIMIT, DIRECTION_EPS, MAP_MODES, SCALE_MODES, WINDOW_MODES
from .projections import COORD_GUARD, EXP_CLAMP

cdef double GUARD = COORD_GUARD
cdef double LIMIT = COORD_LIMIT
cdef double ECLAMP = EXP_CLAMP
cdef double DIR_EPS = DIRECTION_EPS
cdef double POS_INF = np.inf
cdef double NEG_INF = -np.inf

_np_exp = np.exp
_np_tanh = np.tanh
_np_expm1 = np.expm1


def has_kernel():
    """Import-time probe used by the backend selector."""
    return True


# ---------------------------------------------------------------------------
# DSL step encoding

cdef enum:
    OP_WINDOW = 0
    OP_TRANSLATE = 1
    OP_MIRROR = 2
    OP_SCALE = 3
    OP_MAP = 4
    OP_ADD = 5
    OP_CLIP_UNIT = 6

cdef enum:
    ANCH_MIN = 0
    ANCH_MAX = 1
    ANCH_MID = 2
    ANCH_CENTROID = 3
    ANCH_FIRST = 4
    ANCH_LAST = 5
    ANCH_DEPOT = 6

cdef enum:
    SCALE_RANGE_MAX = 0
    SCALE_NORM_MAX = 1
    SCALE_SQRT_NORM_MAX = 2
    SCALE_CONST = 3

cdef enum:
    MAP_TANH = 0
    MAP_EXPM1 = 1
    MAP_IDENTITY = 2

_OP_CODES = {
    "window": OP_WINDOW,
    "translate": OP_TRANSLATE,
    "mirror": OP_MIRROR,
    "scale": OP_SCALE,
    "map": OP_MAP,
    "add": OP_ADD,
    "clip_unit": OP_CLIP_UNIT,
}
_ANCHOR_CODES = {name: i for i, name in enumerate(ANCHORS)}
_SCALE_CODES = {name: i for i, name in enumerate(SCALE_MODES)}
_MAP_CODES = {name: i for i, name in enumerate(MAP_MODES)}
_WINDOW_CODES = {name: i for i, name in enumerate(WINDOW_MODES)}


def compile_program_steps(steps):
    """Encode parsed DSL steps as an (ops, args) pair of small matrices.

    ops[i] = (opcode, mode code); args[i] carries numeric payload (the scale
    constant in column 0, add constants in both columns). "add const" is
    marked by mode -1 to distinguish it from anchor adds.
    """
    n = len(steps)
    ops = np.zeros((n, 2), dtype=np.int32)
    args = np.zeros((n, 2), dtype=np.float64)
    for i, (op, mode, nums) in enumerate(steps):
        try:
            ops[i, 0] = _OP_CODES[op]
        except KeyError:
            raise ValueError(f"cannot compile unknown operation {op!r}") from None
        if op == "window":
            ops[i, 1] = _WINDOW_CODES[mode]
        elif op in ("translate", "mirror"):
            ops[i, 1] = _ANCHOR_CODES[mode]
        elif op == "scale":
            ops[i, 1] = _SCALE_CODES[mode]
            if mode == "const":
                args[i, 0] = nums[0]
        elif op == "map":
            ops[i, 1] = _MAP_CODES[mode]
        elif op == "add":
            if mode == "const":
                ops[i, 1] = -1
                args[i, 0] = nums[0]
                args[i, 1] = nums[1]
            else:
                ops[i, 1] = _ANCHOR_CODES[mode]
    return ops, args


# ---------------------------------------------------------------------------
# grid KNN index

cdef inline bint _pair_gt(double d2a, Py_ssize_t ida, double d2b, Py_ssize_t idb) noexcept:
    # lexicographic (squared distance, id) comparison
    if d2a != d2b:
        return d2a > d2b
    return ida > idb


cdef class GridIndex:
    """Exact KNN over a fixed point set with deletions; compiled twin of the
    numpy grid index. Identical results, identical (distance, id) ordering."""

    cdef object coords_arr
    cdef double[:, ::1] coords
    cdef object alive_arr
    cdef cnp.uint8_t[::1] alive
    cdef readonly Py_ssize_t n
    cdef readonly Py_ssize_t alive_count
    cdef Py_ssize_t built_alive
    cdef double lo0, lo1, cell
    cdef Py_ssize_t ncx, ncy
    cdef object order_arr, starts_arr, cursor_arr
    cdef Py_ssize_t[::1] order
    cdef Py_ssize_t[::1] starts

    def __init__(self, coords):
        arr = np.ascontiguousarray(coords, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError(f"expected an (n, 2) coordinate matrix, got shape {arr.shape}")
        self.coords_arr = arr
        self.coords = arr
        self.n = len(arr)
        if self.n == 0:
            raise ValueError("cannot index an empty point set")
        self.alive_arr = np.ones(self.n, dtype=np.uint8)
        self.alive = self.alive_arr
        self.alive_count = self.n
        self._rebuild()

    cdef void _rebuild(self):
        cdef Py_ssize_t i, na, m, cells, c
        cdef double x0, x1, y0, y1, span
        na = self.alive_count
        x0 = POS_INF; y0 = POS_INF
        x1 = NEG_INF; y1 = NEG_INF
        for i in range(self.n):
            if not self.alive[i]:
                continue
            if self.coords[i, 0] < x0: x0 = self.coords[i, 0]
            if self.coords[i, 0] > x1: x1 = self.coords[i, 0]
            if self.coords[i, 1] < y0: y0 = self.coords[i, 1]
            if self.coords[i, 1] > y1: y1 = self.coords[i, 1]
        span = x1 - x0
        if y1 - y0 > span:
            span = y1 - y0
        m = <Py_ssize_t>ceil(sqrt(na / 2.0))
        if m < 1:
            m = 1
        self.cell = span / m if span > 0 else 1.0
        self.lo0 = x0
        self.lo1 = y0
        self.ncx = <Py_ssize_t>((x1 - x0) / self.cell) + 1
        if self.ncx > m:
            self.ncx = m
        self.ncy = <Py_ssize_t>((y1 - y0) / self.cell) + 1
        if self.ncy > m:
            self.ncy = m
        cells = self.ncx * self.ncy
        self.starts_arr = np.zeros(cells + 1, dtype=np.intp)
        self.starts = self.starts_arr
        self.order_arr = np.empty(na, dtype=np.intp)
        self.order = self.order_arr
        self.cursor_arr = np.zeros(cells, dtype=np.intp)
        cdef Py_ssize_t[::1] cur = self.cursor_arr
        # counting sort by cell; scanning ids ascending keeps buckets sorted
        for i in range(self.n):
            if not self.alive[i]:
                continue
            self.starts[self._cell_of(self.coords[i, 0], self.coords[i, 1]) + 1] += 1
        for c in range(cells):
            self.starts[c + 1] += self.starts[c]
            cur[c] = self.starts[c]
        for i in range(self.n):
            if not self.alive[i]:
                continue
            c = self._cell_of(self.coords[i, 0], self.coords[i, 1])
            self.order[cur[c]] = i
            cur[c] += 1
        self.built_alive = na

    cdef inline Py_ssize_t _cell_of(self, double x, double y) noexcept:
        cdef double fx = (x - self.lo0) / self.cell
        cdef double fy = (y - self.lo1) / self.cell
        if fx > self.ncx - 1:
            fx = self.ncx - 1
        if fy > self.ncy - 1:
            fy = self.ncy - 1
        return (<Py_ssize_t>fy) * self.ncx + (<Py_ssize_t>fx)

    def remove(self, node_id):
        cdef Py_ssize_t i = node_id
        if not (0 <= i < self.n):
            raise KeyError(f"node id {node_id} is not in the index")
        if not self.alive[i]:
            raise KeyError(f"node id {node_id} was already removed")
        self._remove(i)

    cdef void _remove(self, Py_ssize_t i):
        self.alive[i] = 0
        self.alive_count -= 1
        # tombstone compaction once half the indexed points are dead
        if self.alive_count > 0 and (self.built_alive - self.alive_count) * 2 > self.built_alive:
            self._rebuild()

    cdef inline double _ring_bound(self, double qx, double qy, Py_ssize_t ccx, Py_ssize_t ccy,
                                   Py_ssize_t r) noexcept:
        # lower bound on distance from q to any cell of ring r; 0 disables pruning
        cdef double ix0, ix1, iy0, iy1, b
        if r == 0:
            return 0.0
        ix0 = self.lo0 + (ccx - r + 1) * self.cell
        ix1 = self.lo0 + (ccx + r) * self.cell
        iy0 = self.lo1 + (ccy - r + 1) * self.cell
        iy1 = self.lo1 + (ccy + r) * self.cell
        if not (ix0 <= qx <= ix1 and iy0 <= qy <= iy1):
            return 0.0
        b = qx - ix0
        if ix1 - qx < b: b = ix1 - qx
        if qy - iy0 < b: b = qy - iy0
        if iy1 - qy < b: b = iy1 - qy
        if b < 0.0:
            b = 0.0
        return b

    cdef inline void _scan_cell(self, Py_ssize_t c, double qx, double qy,
                                double* hd, Py_ssize_t* hi, Py_ssize_t* size, Py_ssize_t k,
                                Py_ssize_t* excl, Py_ssize_t n_excl) noexcept:
        cdef Py_ssize_t p, nid, j
        cdef double dx, dy, d2
        cdef bint skip
        for p in range(self.starts[c], self.starts[c + 1]):
            nid = self.order[p]
            if not self.alive[nid]:
                continue
            if n_excl:
                skip = False
                for j in range(n_excl):
                    if excl[j] == nid:
                        skip = True
                        break
                if skip:
                    continue
            dx = self.coords[nid, 0] - qx
            dy = self.coords[nid, 1] - qy
            d2 = dx * dx + dy * dy
            _heap_push(hd, hi, size, k, d2, nid)

    cdef Py_ssize_t _query_into(self, double qx, double qy, Py_ssize_t k,
                                double* hd, Py_ssize_t* hi, Py_ssize_t* out,
                                Py_ssize_t* excl, Py_ssize_t n_excl) noexcept:
        """Write up to k alive ids nearest to (qx, qy) into out, ascending by
        (squared distance, id); returns the count. hd/hi are k-sized scratch."""
        cdef Py_ssize_t size = 0
        cdef Py_ssize_t ccx, ccy, max_ring, r, x, y, x0, x1, y0, y1, xa, xb, ya, yb
        cdef double bound
        if k <= 0:
            return 0
        ccx = <Py_ssize_t>floor((qx - self.lo0) / self.cell)
        ccy = <Py_ssize_t>floor((qy - self.lo1) / self.cell)
        max_ring = ccx
        if self.ncx - 1 - ccx > max_ring: max_ring = self.ncx - 1 - ccx
        if ccy > max_ring: max_ring = ccy
        if self.ncy - 1 - ccy > max_ring: max_ring = self.ncy - 1 - ccy
        if max_ring < 0: max_ring = 0
        for r in range(max_ring + 1):
            if size >= k:
                bound = self._ring_bound(qx, qy, ccx, ccy, r)
                if bound * bound > hd[0]:
                    break
            x0 = ccx - r; x1 = ccx + r
            y0 = ccy - r; y1 = ccy + r
            xa = x0 if x0 > 0 else 0
            xb = x1 if x1 < self.ncx - 1 else self.ncx - 1
            # horizontal edges of the ring (full width), then vertical edges
            # without the corners; r == 0 degenerates to the single center cell
            if 0 <= y0 < self.ncy:
                for x in range(xa, xb + 1):
                    self._scan_cell(y0 * self.ncx + x, qx, qy, hd, hi, &size, k, excl, n_excl)
            if y1 != y0 and 0 <= y1 < self.ncy:
                for x in range(xa, xb + 1):
                    self._scan_cell(y1 * self.ncx + x, qx, qy, hd, hi, &size, k, excl, n_excl)
            ya = y0 + 1 if y0 + 1 > 0 else 0
            yb = y1 - 1 if y1 - 1 < self.ncy - 1 else self.ncy - 1
            if 0 <= x0 < self.ncx:
                for y in range(ya, yb + 1):
                    self._scan_cell(y * self.ncx + x0, qx, qy, hd, hi, &size, k, excl, n_excl)
            if x1 != x0 and 0 <= x1 < self.ncx:
                for y in range(ya, yb + 1):
                    self._scan_cell(y * self.ncx + x1, qx, qy, hd, hi, &size, k, excl, n_excl)
        return _heap_drain(hd, hi, size, out)

    def query(self, point, k, exclude=()):
        """Ids of up to k alive, non-excluded points nearest to `point`,
        ascending by (squared distance, id)."""
        cdef Py_ssize_t kk = k
        if kk < 0:
            raise ValueError("k must be >= 0")
        if kk == 0:
            return np.empty(0, dtype=np.intp)
        cdef double qx = point[0]
        cdef double qy = point[1]
        excl_list = [int(e) for e in exclude]
        cdef Py_ssize_t n_excl = len(excl_list)
        scratch_d = np.empty(kk, dtype=np.float64)
        scratch_i = np.empty(kk, dtype=np.intp)
        out_arr = np.empty(kk, dtype=np.intp)
        excl_arr = np.asarray(excl_list, dtype=np.intp) if n_excl else np.empty(1, dtype=np.intp)
        cdef double[::1] hd = scratch_d
        cdef Py_ssize_t[::1] hi = scratch_i
        cdef Py_ssize_t[::1] out = out_arr
        cdef Py_ssize_t[::1] ex = excl_arr
        cdef Py_ssize_t got = self._query_into(qx, qy, kk, &hd[0], &hi[0], &out[0],
                                               &ex[0], n_excl)
        return out_arr[:got].copy()


cdef inline void _heap_push(double* hd, Py_ssize_t* hi, Py_ssize_t* size, Py_ssize_t cap,
                            double d2, Py_ssize_t nid) noexcept:
    # max-heap on (d2, id); keeps the cap smallest pairs
    cdef Py_ssize_t pos, parent, child, right
    cdef double td
    cdef Py_ssize_t ti
    if size[0] < cap:
        pos = size[0]
        hd[pos] = d2
        hi[pos] = nid
        size[0] += 1
        while pos > 0:
            parent = (pos - 1) >> 1
            if _pair_gt(hd[pos], hi[pos], hd[parent], hi[parent]):
                td = hd[pos]; hd[pos] = hd[parent]; hd[parent] = td
                ti = hi[pos]; hi[pos] = hi[parent]; hi[parent] = ti
                pos = parent
            else:
                break
        return
    if not _pair_gt(hd[0], hi[0], d2, nid):
        return
    hd[0] = d2
    hi[0] = nid
    pos = 0
    while True:
        child = 2 * pos + 1
        if child >= cap:
            break
        right = child + 1
        if right < cap and _pair_gt(hd[right], hi[right], hd[child], hi[child]):
            child = right
        if _pair_gt(hd[child], hi[child], hd[pos], hi[pos]):
            td = hd[pos]; hd[pos] = hd[child]; hd[child] = td
            ti = hi[pos]; hi[pos] = hi[child]; hi[child] = ti
            pos = child
        else:
            break


cdef inline Py_ssize_t _heap_drain(double* hd, Py_ssize_t* hi, Py_ssize_t size,
                                   Py_ssize_t* out) noexcept:
    # empty the max-heap into out[0..size) ascending by (d2, id)
    cdef Py_ssize_t total = size
    cdef Py_ssize_t p, j, c, right
    cdef double td
    cdef Py_ssize_t ti
    for p in range(total - 1, -1, -1):
        out[p] = hi[0]
        size -= 1
        hd[0] = hd[size]
        hi[0] = hi[size]
        j = 0
        while True:
            c = 2 * j + 1
            if c >= size:
                break
            right = c + 1
            if right < size and _pair_gt(hd[right], hi[right], hd[c], hi[c]):
                c = right
            if _pair_gt(hd[c], hi[c], hd[j], hi[j]):
                td = hd[j]; hd[j] = hd[c]; hd[c] = td
                ti = hi[j]; hi[j] = hi[c]; hi[c] = ti
                j = c
            else:
                break
    return total


# ---------------------------------------------------------------------------
# projection + scoring engine

cdef inline double _clampg(double v) noexcept:
    # input guard of the built-in projections
    if v < -GUARD:
        return -GUARD
    if v > GUARD:
        return GUARD
    return v


cdef inline double _clamp_limit(double v) noexcept:
    # per-step totality clamp of the DSL evaluator
    if v < -LIMIT:
        return -LIMIT
    if v > LIMIT:
        return LIMIT
    return v


cdef inline double _clamp01(double v) noexcept:
    if v < 0.0:
        return 0.0
    if v > 1.0:
        return 1.0
    return v


cdef class _Engine:
    """Per-construction scratch buffers and the strategy/policy evaluators.

    All buffers are sized once for the largest possible subgraph (k + 2 rows)
    and reused every step; numpy handles are kept alongside the memoryviews
    because the transcendentals are evaluated through numpy ufunc calls on
    slices of these exact buffers.
    """

    cdef Py_ssize_t maxm
    cdef object sub_arr, state_arr, view_arr, norms_arr, amp_arr
    cdef object e1_arr, e2_arr, logits_arr, zbuf_arr, pbuf_arr
    cdef double[:, ::1] sub, state, view
    cdef double[::1] norms, amp, e1, e2, logits, zbuf, pbuf
    cdef int code
    cdef object ops_arr, args_arr
    cdef int[:, ::1] ops
    cdef double[:, ::1] pargs
    cdef Py_ssize_t n_steps
    cdef int policy
    cdef double w1, w2, w3, w4, s1, s2, w5
    cdef bint mvdf

    def __init__(self, Py_ssize_t k, int code, ops, args, int policy, params, bint mvdf):
        cdef Py_ssize_t maxm = k + 2
        self.maxm = maxm
        self.sub_arr = np.empty((maxm, 2), dtype=np.float64)
        self.state_arr = np.empty((maxm, 2), dtype=np.float64)
        self.view_arr = np.empty((maxm, 2), dtype=np.float64)
        self.norms_arr = np.empty(maxm, dtype=np.float64)
        self.amp_arr = np.empty(maxm, dtype=np.float64)
        self.e1_arr = np.empty(maxm, dtype=np.float64)
        self.e2_arr = np.empty(maxm, dtype=np.float64)
        self.logits_arr = np.empty(maxm, dtype=np.float64)
        self.zbuf_arr = np.empty(maxm, dtype=np.float64)
        self.pbuf_arr = np.empty(maxm, dtype=np.float64)
        self.sub = self.sub_arr
        self.state = self.state_arr
        self.view = self.view_arr
        self.norms = self.norms_arr
        self.amp = self.amp_arr
        self.e1 = self.e1_arr
        self.e2 = self.e2_arr
        self.logits = self.logits_arr
        self.zbuf = self.zbuf_arr
        self.pbuf = self.pbuf_arr
        self.code = code
        if ops is None:
            ops = np.zeros((0, 2), dtype=np.int32)
            args = np.zeros((0, 2), dtype=np.float64)
        self.ops_arr = np.ascontiguousarray(ops, dtype=np.int32)
        self.args_arr = np.ascontiguousarray(args, dtype=np.float64)
        self.ops = self.ops_arr
        self.pargs = self.args_arr
        self.n_steps = len(self.ops_arr)
        self.policy = policy
        p = np.asarray(params, dtype=np.float64)
        self.w1 = p[0]; self.w2 = p[1]; self.w3 = p[2]; self.w4 = p[3]
        self.s1 = p[4]; self.s2 = p[5]; self.w5 = p[6]
        self.mvdf = mvdf

    # -- anchors over a working matrix ------------------------------------

    cdef void _anchor(self, double[:, ::1] mat, object mat_arr, Py_ssize_t m, int wm, int mode,
                      double* ax, double* ay):
        cdef Py_ssize_t off, i
        cdef double x0, x1, y0, y1
        if mode == ANCH_FIRST or mode == ANCH_DEPOT:
            ax[0] = mat[0, 0]; ay[0] = mat[0, 1]
            return
        if mode == ANCH_LAST:
            ax[0] = mat[m - 1, 0]; ay[0] = mat[m - 1, 1]
            return
        off = 1 if wm else 0
        if mode == ANCH_CENTROID:
            # numpy's mean reduction order is matched by calling it outright
            c = mat_arr[off:m].mean(axis=0)
            ax[0] = c[0]; ay[0] = c[1]
            return
        x0 = POS_INF; y0 = POS_INF
        x1 = NEG_INF; y1 = NEG_INF
        for i in range(off, m):
            if mat[i, 0] < x0: x0 = mat[i, 0]
            if mat[i, 0] > x1: x1 = mat[i, 0]
            if mat[i, 1] < y0: y0 = mat[i, 1]
            if mat[i, 1] > y1: y1 = mat[i, 1]
        if mode == ANCH_MIN:
            ax[0] = x0; ay[0] = y0
        elif mode == ANCH_MAX:
            ax[0] = x1; ay[0] = y1
        else:
            ax[0] = (x0 + x1) / 2.0
            ay[0] = (y0 + y1) / 2.0

    # -- built-in projections ----------------------------------------------

    cdef void _project_builtin(self, Py_ssize_t m):
        """sub[0:m] -> state[0:m] through the built-in strategy self.code."""
        cdef Py_ssize_t i
        cdef int code = self.code
        cdef double x0, x1, y0, y1, r, v, c0x, c0y, vx, vy, nrm, vmax, g, amax, ratio, ux, uy, eps
        cdef bint degenerate
        if code == 0:  # identity
            for i in range(m):
                self.state[i, 0] = self.sub[i, 0]
                self.state[i, 1] = self.sub[i, 1]
            return
        if code <= 4:
            # unit-square family: stats over the window rows 1..m-1 of the
            # guarded input
            x0 = POS_INF; y0 = POS_INF
            x1 = NEG_INF; y1 = NEG_INF
            for i in range(1, m):
                v = _clampg(self.sub[i, 0])
                if v < x0: x0 = v
                if v > x1: x1 = v
                v = _clampg(self.sub[i, 1])
                if v < y0: y0 = v
                if v > y1: y1 = v
            r = x1 - x0
            if y1 - y0 > r:
                r = y1 - y0
            degenerate = r == 0.0
            if degenerate:
                r = 1.0
            if code == 1:  # seed
                for i in range(m):
                    v = (_clampg(self.sub[i, 0]) - x0) / r
                    if degenerate:
                        v = v + x0
                    self.state[i, 0] = _clamp01(v)
                    v = (_clampg(self.sub[i, 1]) - y0) / r
                    if degenerate:
                        v = v + y0
                    self.state[i, 1] = _clamp01(v)
            elif code == 2:  # tsp1k
                for i in range(m):
                    self.state[i, 0] = _clamp01((x1 - _clampg(self.sub[i, 0])) / r + x1)
                    self.state[i, 1] = _clamp01((y1 - _clampg(self.sub[i, 1])) / r + y1)
            elif code == 3:  # tsp5k
                for i in range(m):
                    self.state[i, 0] = _clampg(self.sub[i, 0]) - x0
                    self.state[i, 1] = _clampg(self.sub[i, 1]) - y0
                _np_tanh(self.state_arr[:m], out=self.state_arr[:m])
                for i in range(m):
                    self.state[i, 0] = _clamp01(self.state[i, 0] / r)
                    self.state[i, 1] = _clamp01(self.state[i, 1] / r)
            else:  # tsp10k
                c0x = (x1 + x0) / 2.0
                c0y = (y1 + y0) / 2.0
                for i in range(m):
                    self.state[i, 0] = _clamp01((_clampg(self.sub[i, 0]) - c0x) / r + 0.5)
                    self.state[i, 1] = _clamp01((_clampg(self.sub[i, 1]) - c0y) / r + 0.5)
            return
        # depot-offset family: offsets against the guarded depot row
        c0x = _clampg(self.sub[0, 0])
        c0y = _clampg(self.sub[0, 1])
        for i in range(m):
            vx = _clampg(self.sub[i, 0]) - c0x
            vy = _clampg(self.sub[i, 1]) - c0y
            self.state[i, 0] = vx
            self.state[i, 1] = vy
            self.norms[i] = hypot(vx, vy)
        if code == 5:  # cvrp1k
            vmax = 0.0
            for i in range(m):
                if self.norms[i] > vmax:
                    vmax = self.norms[i]
            if vmax == 0.0:
                vmax = 1.0
            for i in range(m):
                nrm = self.norms[i]
                g = 1.0 if nrm == 0.0 else nrm
                ratio = g / vmax
                self.state[i, 0] = c0x + (self.state[i, 0] / g) * ratio
                self.state[i, 1] = c0y + (self.state[i, 1] / g) * ratio
            return
        if code == 6:  # cvrp5k
            vmax = 0.0
            for i in range(m):
                if self.norms[i] > vmax:
                    vmax = self.norms[i]
            vmax = sqrt(vmax)
            if vmax == 0.0:
                vmax = 1.0
            for i in range(m):
                self.state[i, 0] = c0x + self.state[i, 0] / vmax
                self.state[i, 1] = c0y + self.state[i, 1] / vmax
            return
        # cvrp10k (code 7) and its verbatim variant (code 8)
        eps = 1e-6 if code == 7 else 1e6
        for i in range(m):
            v = self.norms[i]
            self.amp[i] = v if v < ECLAMP else ECLAMP
        _np_expm1(self.amp_arr[:m], out=self.amp_arr[:m])
        amax = 0.0
        for i in range(m):
            if self.amp[i] > amax:
                amax = self.amp[i]
        if amax == 0.0:
            amax = 1.0
        for i in range(m):
            ratio = self.amp[i] / amax
            ux = self.state[i, 0] / (self.norms[i] + eps)
            uy = self.state[i, 1] / (self.norms[i] + eps)
            self.state[i, 0] = c0x + ratio * ux
            self.state[i, 1] = c0y + ratio * uy

    # -- DSL program evaluation ---------------------------------------------

    cdef void _project_program(self, Py_ssize_t m):
        """sub[0:m] -> state[0:m] through the compiled program; sub doubles as
        the untouched ORIGINAL matrix the anchor/scale rules refer to."""
        cdef Py_ssize_t s, i, off
        cdef int op, mode, wm = 0
        cdef double ax, ay, r, v, x0, x1, y0, y1, nrm, amax, ratio
        for i in range(m):
            self.state[i, 0] = self.sub[i, 0]
            self.state[i, 1] = self.sub[i, 1]
        for s in range(self.n_steps):
            op = self.ops[s, 0]
            mode = self.ops[s, 1]
            if op == OP_WINDOW:
                wm = mode
                continue
            if op == OP_TRANSLATE:
                self._anchor(self.state, self.state_arr, m, wm, mode, &ax, &ay)
                for i in range(m):
                    self.state[i, 0] = self.state[i, 0] - ax
                    self.state[i, 1] = self.state[i, 1] - ay
            elif op == OP_MIRROR:
                self._anchor(self.state, self.state_arr, m, wm, mode, &ax, &ay)
                for i in range(m):
                    self.state[i, 0] = ax - self.state[i, 0]
                    self.state[i, 1] = ay - self.state[i, 1]
            elif op == OP_SCALE:
                if mode == SCALE_RANGE_MAX:
                    # per-axis range of the ORIGINAL input's window
                    off = 1 if wm else 0
                    x0 = POS_INF; y0 = POS_INF
                    x1 = NEG_INF; y1 = NEG_INF
                    for i in range(off, m):
                        if self.sub[i, 0] < x0: x0 = self.sub[i, 0]
                        if self.sub[i, 0] > x1: x1 = self.sub[i, 0]
                        if self.sub[i, 1] < y0: y0 = self.sub[i, 1]
                        if self.sub[i, 1] > y1: y1 = self.sub[i, 1]
                    r = x1 - x0
                    if y1 - y0 > r:
                        r = y1 - y0
                elif mode == SCALE_CONST:
                    r = self.pargs[s, 0]
                else:
                    # max row norm over the CURRENT window
                    off = 1 if wm else 0
                    r = NEG_INF
                    for i in range(off, m):
                        v = hypot(self.state[i, 0], self.state[i, 1])
                        if v > r:
                            r = v
                    if mode == SCALE_SQRT_NORM_MAX:
                        r = sqrt(r)
                if r == 0.0:
                    r = 1.0
                for i in range(m):
                    self.state[i, 0] = self.state[i, 0] / r
                    self.state[i, 1] = self.state[i, 1] / r
            elif op == OP_MAP:
                if mode == MAP_TANH:
                    _np_tanh(self.state_arr[:m], out=self.state_arr[:m])
                elif mode == MAP_EXPM1:
                    for i in range(m):
                        nrm = hypot(self.state[i, 0], self.state[i, 1])
                        self.norms[i] = nrm
                        self.amp[i] = nrm if nrm < ECLAMP else ECLAMP
                    _np_expm1(self.amp_arr[:m], out=self.amp_arr[:m])
                    off = 1 if wm else 0
                    amax = NEG_INF
                    for i in range(off, m):
                        if self.amp[i] > amax:
                            amax = self.amp[i]
                    if amax == 0.0:
                        amax = 1.0
                    for i in range(m):
                        ratio = self.amp[i] / amax
                        if ratio > LIMIT:
                            ratio = LIMIT
                        self.state[i, 0] = self.state[i, 0] / (self.norms[i] + DIR_EPS) * ratio
                        self.state[i, 1] = self.state[i, 1] / (self.norms[i] + DIR_EPS) * ratio
            elif op == OP_ADD:
                if mode == -1:
                    ax = self.pargs[s, 0]
                    ay = self.pargs[s, 1]
                else:
                    # anchors re-added come from the ORIGINAL input
                    self._anchor(self.sub, self.sub_arr, m, wm, mode, &ax, &ay)
                for i in range(m):
                    self.state[i, 0] = self.state[i, 0] + ax
                    self.state[i, 1] = self.state[i, 1] + ay
            elif op == OP_CLIP_UNIT:
                for i in range(m):
                    self.state[i, 0] = _clamp01(self.state[i, 0])
                    self.state[i, 1] = _clamp01(self.state[i, 1])
            for i in range(m):
                self.state[i, 0] = _clamp_limit(self.state[i, 0])
                self.state[i, 1] = _clamp_limit(self.state[i, 1])

    cdef inline void project(self, Py_ssize_t m):
        if self.code >= 0:
            self._project_builtin(m)
        else:
            self._project_program(m)

    # -- policy scoring -----------------------------------------------------

    cdef void _score(self, double[:, ::1] P, Py_ssize_t m, bint cvrp, double rf,
                     double[::1] df, bint depot_allowed, double* out):
        """Logits of the m-2 candidates of P (plus the depot slot for CVRP)."""
        cdef Py_ssize_t nc = m - 2, i
        cdef double lx = P[m - 1, 0], ly = P[m - 1, 1]
        cdef double fx = P[0, 0], fy = P[0, 1]
        cdef double d, depot_logit
        if self.policy == 1:  # isometry-invariant: negated distance to current
            for i in range(nc):
                out[i] = -hypot(P[i + 1, 0] - lx, P[i + 1, 1] - ly)
            if cvrp:
                depot_logit = -hypot(fx - lx, fy - ly)
        else:  # scale-sensitive
            for i in range(nc):
                d = hypot(P[i + 1, 0] - lx, P[i + 1, 1] - ly)
                self.e1[i] = (-d) / self.s1
                d = hypot(P[i + 1, 0] - fx, P[i + 1, 1] - fy)
                self.e2[i] = (-d) / self.s2
            _np_exp(self.e1_arr[:nc], out=self.e1_arr[:nc])
            _np_exp(self.e2_arr[:nc], out=self.e2_arr[:nc])
            for i in range(nc):
                out[i] = ((self.w1 * self.e1[i] + self.w2 * self.e2[i])
                          + self.w3 * P[i + 1, 0]) + self.w4 * P[i + 1, 1]
            if cvrp:
                depot_logit = self.w5 * (1.0 - rf)
        if cvrp:
            for i in range(nc):
                if df[i] > rf:
                    out[i] = NEG_INF
            out[nc] = depot_logit if depot_allowed else NEG_INF

    cdef Py_ssize_t _pick(self, Py_ssize_t m, bint cvrp, double rf, double[::1] df,
                          bint depot_allowed) except -1:
        """Action index for the projected subgraph in state[0:m]."""
        cdef Py_ssize_t nc = m - 2
        cdef Py_ssize_t actions = nc + 1 if cvrp else nc
        cdef Py_ssize_t i, v, best
        cdef double mx, ssum, val, bval
        cdef double[:, ::1] stack
        cdef double[::1] total
        if not self.mvdf:
            self._score(self.state, m, cvrp, rf, df, depot_allowed, &self.logits[0])
            best = -1
            bval = NEG_INF
            for i in range(actions):
                if self.logits[i] > bval:
                    bval = self.logits[i]
                    best = i
            if best < 0 or bval == NEG_INF:
                self._raise_masked()
            return best
        # fused pick: score all 8 views, sum the stack with numpy, softmax,
        # then argmax over positive probabilities (ties to the lowest index)
        stack_arr = np.empty((8, actions), dtype=np.float64)
        stack = stack_arr
        for v in range(8):
            self._make_view(v, m)
            self._score(self.view, m, cvrp, rf, df, depot_allowed, &stack[v, 0])
        total_arr = stack_arr.sum(axis=0)
        total = total_arr
        mx = NEG_INF
        for i in range(actions):
            if total[i] != NEG_INF and total[i] > mx:
                mx = total[i]
        if mx == NEG_INF:
            self._raise_masked()
        for i in range(actions):
            val = total[i]
            self.zbuf[i] = val - mx if val != NEG_INF else 0.0
        _np_exp(self.zbuf_arr[:actions], out=self.zbuf_arr[:actions])
        for i in range(actions):
            self.pbuf[i] = self.zbuf[i] if total[i] != NEG_INF else 0.0
        ssum = float(self.pbuf_arr[:actions].sum())
        best = -1
        bval = NEG_INF
        for i in range(actions):
            val = self.pbuf[i] / ssum
            if val <= 0.0:
                val = NEG_INF
            if val > bval:
                bval = val
                best = i
        if best < 0 or bval == NEG_INF:
            self._raise_masked()
        return best

    cdef void _make_view(self, Py_ssize_t v, Py_ssize_t m):
        # the 8 unit-square symmetries, fixed order: (x,y) (y,x) (x,1-y)
        # (y,1-x) (1-x,y) (1-y,x) (1-x,1-y) (1-y,1-x)
        cdef Py_ssize_t i
        cdef double x, y
        for i in range(m):
            x = self.state[i, 0]
            y = self.state[i, 1]
            if v == 0:
                self.view[i, 0] = x; self.view[i, 1] = y
            elif v == 1:
                self.view[i, 0] = y; self.view[i, 1] = x
            elif v == 2:
                self.view[i, 0] = x; self.view[i, 1] = 1.0 - y
            elif v == 3:
                self.view[i, 0] = y; self.view[i, 1] = 1.0 - x
            elif v == 4:
                self.view[i, 0] = 1.0 - x; self.view[i, 1] = y
            elif v == 5:
                self.view[i, 0] = 1.0 - y; self.view[i, 1] = x
            elif v == 6:
                self.view[i, 0] = 1.0 - x; self.view[i, 1] = 1.0 - y
            else:
                self.view[i, 0] = 1.0 - y; self.view[i, 1] = 1.0 - x

    cdef void _raise_masked(self):
        from .policy import NoFeasibleActionError
        raise NoFeasibleActionError("all actions are masked")


# ---------------------------------------------------------------------------
# construction drivers

def construct_tsp(coords, Py_ssize_t k, int code, ops, args, int policy, params, int mvdf):
    """Greedy KNN-restricted tour construction; returns the visit order."""
    coords_arr = np.ascontiguousarray(coords, dtype=np.float64)
    cdef double[:, ::1] C = coords_arr
    cdef Py_ssize_t n = len(coords_arr)
    tour_arr = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t[::1] tour = tour_arr
    tour[0] = 0
    if n == 1:
        return tour_arr
    cdef GridIndex index = GridIndex(coords_arr)
    index._remove(0)
    cdef _Engine eng = _Engine(k, code, ops, args, policy, params, mvdf != 0)
    heap_d = np.empty(k, dtype=np.float64)
    heap_i = np.empty(k, dtype=np.intp)
    cand_arr = np.empty(k, dtype=np.intp)
    cdef double[::1] hd = heap_d
    cdef Py_ssize_t[::1] hi = heap_i
    cdef Py_ssize_t[::1] cand = cand_arr
    cdef double[::1] no_df = heap_d  # unused for TSP
    cdef Py_ssize_t step, nc, i, j, node, current = 0
    cdef Py_ssize_t m
    for step in range(1, n):
        nc = index._query_into(C[current, 0], C[current, 1], k, &hd[0], &hi[0], &cand[0], NULL, 0)
        m = nc + 2
        eng.sub[0, 0] = C[0, 0]
        eng.sub[0, 1] = C[0, 1]
        for i in range(nc):
            eng.sub[i + 1, 0] = C[cand[i], 0]
            eng.sub[i + 1, 1] = C[cand[i], 1]
        eng.sub[m - 1, 0] = C[current, 0]
        eng.sub[m - 1, 1] = C[current, 1]
        eng.project(m)
        j = eng._pick(m, False, 1.0, no_df, True)
        node = cand[j]
        tour[step] = node
        index._remove(node)
        current = node
    return tour_arr


def construct_cvrp(coords, demands, long long capacity, Py_ssize_t k, int code, ops, args,
                   int policy, params, int mvdf):
    """Greedy KNN-restricted route construction with capacity masking.

    Returns customer ids in visit order with -1 closing each route.
    """
    coords_arr = np.ascontiguousarray(coords, dtype=np.float64)
    demands_arr = np.ascontiguousarray(demands, dtype=np.int64)
    cdef double[:, ::1] C = coords_arr
    cdef long long[::1] D = demands_arr
    cdef Py_ssize_t n = len(coords_arr)
    flat_arr = np.empty(2 * n + 2, dtype=np.intp)
    cdef Py_ssize_t[::1] flat = flat_arr
    cdef Py_ssize_t pos = 0
    if n == 1:
        return flat_arr[:0]
    cdef GridIndex index = GridIndex(coords_arr)
    index._remove(0)
    cdef _Engine eng = _Engine(k, code, ops, args, policy, params, mvdf != 0)
    heap_d = np.empty(k, dtype=np.float64)
    heap_i = np.empty(k, dtype=np.intp)
    cand_arr = np.empty(k, dtype=np.intp)
    df_arr = np.empty(k, dtype=np.float64)
    cdef double[::1] hd = heap_d
    cdef Py_ssize_t[::1] hi = heap_i
    cdef Py_ssize_t[::1] cand = cand_arr
    cdef double[::1] df = df_arr
    cdef Py_ssize_t left = n - 1, nc, i, j, node, current = 0
    cdef Py_ssize_t m
    cdef long long remaining = capacity
    cdef double rf
    while left > 0:
        nc = index._query_into(C[current, 0], C[current, 1], k, &hd[0], &hi[0], &cand[0], NULL, 0)
        m = nc + 2
        eng.sub[0, 0] = C[0, 0]
        eng.sub[0, 1] = C[0, 1]
        for i in range(nc):
            eng.sub[i + 1, 0] = C[cand[i], 0]
            eng.sub[i + 1, 1] = C[cand[i], 1]
            df[i] = (<double>D[cand[i]]) / (<double>capacity)
        eng.sub[m - 1, 0] = C[current, 0]
        eng.sub[m - 1, 1] = C[current, 1]
        eng.project(m)
        rf = (<double>remaining) / (<double>capacity)
        j = eng._pick(m, True, rf, df, current != 0)
        if j == nc:
            flat[pos] = -1
            pos += 1
            current = 0
            remaining = capacity
        else:
            node = cand[j]
            flat[pos] = node
            pos += 1
            remaining -= D[node]
            index._remove(node)
            current = node
            left -= 1
    return flat_arr[:pos]
