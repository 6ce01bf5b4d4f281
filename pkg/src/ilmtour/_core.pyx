# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled DOP853 propagation core.

Same numerical scheme as scipy's DOP853 (the Butcher tableau, error norm
and dense-output construction are taken from scipy's coefficient tables at
import time), specialized to the rotating-frame oblate three-body vector
fields with in-loop event detection, so the hot manifold/connection
searches avoid per-step Python dispatch entirely.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, fmax, fmin, pow, INFINITY
from libc.string cimport memcpy

from scipy.integrate._ivp import dop853_coefficients as _dc

cnp.import_array()

cdef int NS = 12            # stages of the embedded pair
cdef int NSX = 16           # including the dense-output extras
cdef int NMAX = 42          # largest native field dimension

cdef double[:, ::1] CA = np.ascontiguousarray(_dc.A, dtype=np.float64)
cdef double[::1] CB = np.ascontiguousarray(_dc.B, dtype=np.float64)
cdef double[::1] CC = np.ascontiguousarray(_dc.C, dtype=np.float64)
cdef double[::1] CE3 = np.ascontiguousarray(_dc.E3, dtype=np.float64)
cdef double[::1] CE5 = np.ascontiguousarray(_dc.E5, dtype=np.float64)
cdef double[:, ::1] CD = np.ascontiguousarray(_dc.D, dtype=np.float64)
cdef int NDENSE = _dc.D.shape[0]          # rows of the D matrix (4)
cdef int IPOW = _dc.INTERPOLATOR_POWER    # 7

cdef double SAFETY = 0.9
cdef double MIN_FACTOR = 0.2
cdef double MAX_FACTOR = 10.0
cdef double ERR_EXP = -0.125              # -1/(error_estimator_order + 1)
cdef double EPS = np.finfo(np.float64).eps


# ---------------------------------------------------------------- fields

cdef void _accel_terms(double gm, double a_obl, double dx, double y,
                       double z, double* gx, double* gy, double* gz) noexcept nogil:
    cdef double r2 = dx * dx + y * y + z * z
    cdef double r = sqrt(r2)
    cdef double r3 = r2 * r
    cdef double c = 1.0 - 1.5 * a_obl / r2 * (5.0 * z * z / r2 - 1.0)
    cdef double ct = c + 3.0 * a_obl / r2
    gx[0] += -gm * dx * c / r3
    gy[0] += -gm * y * c / r3
    gz[0] += -gm * z * ct / r3


cdef void f_cr3bp(double t, double* y, double* out, double* p) noexcept nogil:
    cdef double mu = p[0], a1 = p[1], a2 = p[2], n = p[3]
    cdef double gx = n * n * y[0], gy = n * n * y[1], gz = 0.0
    _accel_terms(1.0 - mu, a1, y[0] - mu, y[1], y[2], &gx, &gy, &gz)
    _accel_terms(mu, a2, y[0] + 1.0 - mu, y[1], y[2], &gx, &gy, &gz)
    out[0] = y[3]
    out[1] = y[4]
    out[2] = y[5]
    out[3] = gx + 2.0 * n * y[4]
    out[4] = gy - 2.0 * n * y[3]
    out[5] = gz


cdef void _hess_terms(double gm, double a_obl, double dx, double y,
                      double z, double* h) noexcept nogil:
    # accumulates the 3x3 Hessian of one body's potential term into h[9]
    cdef double r2 = dx * dx + y * y + z * z
    cdef double r = sqrt(r2)
    cdef double r3 = r2 * r, r5 = r2 * r2 * r
    cdef double r7 = r5 * r2, r9 = r7 * r2
    cdef double z2 = z * z
    cdef double p = -1.0 / r3 - 1.5 * a_obl / r5 + 7.5 * a_obl * z2 / r7
    cdef double dpr = 3.0 / r5 + 7.5 * a_obl / r7 - 52.5 * a_obl * z2 / r9
    cdef double f1 = -1.5 * a_obl / r5
    cdef double cross = 15.0 * a_obl * z / r7
    cdef double v0 = dx, v1 = y, v2 = z
    h[0] += gm * (dpr * v0 * v0 + p)
    h[1] += gm * (dpr * v0 * v1)
    h[2] += gm * (dpr * v0 * v2 + cross * v0)
    h[3] += gm * (dpr * v1 * v0)
    h[4] += gm * (dpr * v1 * v1 + p)
    h[5] += gm * (dpr * v1 * v2 + cross * v1)
    h[6] += gm * (dpr * v2 * v0 + cross * v0)
    h[7] += gm * (dpr * v2 * v1 + cross * v1)
    h[8] += gm * (dpr * v2 * v2 + p + 2.0 * f1 + 2.0 * cross * v2)


cdef void f_cr3bp_stm(double t, double* y, double* out, double* p) noexcept nogil:
    cdef double mu = p[0], a1 = p[1], a2 = p[2], n = p[3]
    cdef double h[9]
    cdef int i, j, k
    f_cr3bp(t, y, out, p)
    for i in range(9):
        h[i] = 0.0
    _hess_terms(1.0 - mu, a1, y[0] - mu, y[1], y[2], h)
    _hess_terms(mu, a2, y[0] + 1.0 - mu, y[1], y[2], h)
    h[0] += n * n
    h[4] += n * n
    # phi_dot = J phi with J = [[0, I], [H, S]], S the Coriolis skew
    cdef double* phi = y + 6
    cdef double* phid = out + 6
    for j in range(6):
        for i in range(3):
            phid[i * 6 + j] = phi[(i + 3) * 6 + j]
        for i in range(3):
            phid[(i + 3) * 6 + j] = (h[i * 3] * phi[j]
                                     + h[i * 3 + 1] * phi[6 + j]
                                     + h[i * 3 + 2] * phi[12 + j])
        phid[18 + j] += 2.0 * n * phi[24 + j]
        phid[24 + j] -= 2.0 * n * phi[18 + j]


ctypedef void (*fieldfun)(double, double*, double*, double*) noexcept nogil


cdef fieldfun _lookup(str kind, int* dim) except NULL:
    if kind == "cr3bp":
        dim[0] = 6
        return f_cr3bp
    if kind == "cr3bp_stm":
        dim[0] = 42
        return f_cr3bp_stm
    raise ValueError(f"unknown native field kind {kind!r}")


def dim_of(kind):
    """State dimension of a native field kind."""
    cdef int dim
    _lookup(kind, &dim)
    return dim


# ---------------------------------------------------------------- events

cdef struct CEvent:
    int kind            # 0 y-plane, 1 x-plane, 2 sphere
    int direction
    int count
    int terminal
    double value
    double cx, cy, cz
    double radius
    int has_constraint
    int caxis
    int cop             # 0 '<', 1 '>'
    double cval
    int need            # stop_when requirement, 0 if none


cdef double _event_g(CEvent* ev, double* y) noexcept nogil:
    cdef double dx, dy, dz
    if ev.kind == 0:
        return y[1]
    if ev.kind == 1:
        return y[0] - ev.value
    dx = y[0] - ev.cx
    dy = y[1] - ev.cy
    dz = y[2] - ev.cz
    return sqrt(dx * dx + dy * dy + dz * dz) - ev.radius


cdef int _event_ok(CEvent* ev, double* y) noexcept nogil:
    if not ev.has_constraint:
        return 1
    if ev.cop == 0:
        return y[ev.caxis] < ev.cval
    return y[ev.caxis] > ev.cval


# ---------------------------------------------------------------- stepper

cdef double _rms(double* v, double* scale, int n) noexcept nogil:
    cdef double s = 0.0
    cdef int i
    for i in range(n):
        s += (v[i] / scale[i]) * (v[i] / scale[i])
    return sqrt(s / n)


cdef class _Work:
    """Scratch buffers for one propagation (no shared mutable state)."""
    cdef double K[16][42]
    cdef double F[7][42]
    cdef double y[42]
    cdef double y_new[42]
    cdef double y_stage[42]
    cdef double scale[42]
    cdef double params[8]
    cdef double err5[42]
    cdef double err3[42]


cdef void _dense_eval(double* F, int ncomp, double x, double* y_old,
                      double* out) noexcept nogil:
    # Horner evaluation of the 7th-order interpolant in x = (t-t_old)/h
    cdef int i, j
    cdef double acc
    for j in range(ncomp):
        acc = 0.0
        for i in range(7):
            acc += F[(6 - i) * NMAX + j]
            if i % 2 == 0:
                acc *= x
            else:
                acc *= 1.0 - x
        out[j] = y_old[j] + acc


def propagate(str kind, cnp.ndarray[double, ndim=1] params,
              cnp.ndarray[double, ndim=1] y0, double t0, double t1,
              double rtol, double atol, double max_step,
              events, stop_when):
    """Integrate a native field from t0 to t1 with event handling.

    Returns (ts, ys, crossings, status_code, terminal_index) where
    crossings is a list of (event_index, t, y) and status_code is
    0 finished, 1 terminal event, 2 stop_when satisfied.
    """
    cdef int dim
    cdef fieldfun f = _lookup(kind, &dim)
    if y0.shape[0] != dim:
        raise ValueError(f"state dimension {y0.shape[0]} != {dim}")
    cdef _Work w = _Work()
    cdef int i, j, s, iev
    for i in range(min(params.shape[0], 8)):
        w.params[i] = params[i]
    for i in range(dim):
        w.y[i] = y0[i]

    # event setup
    cdef int nev = len(events)
    cdef CEvent cev[16]
    cdef double g_prev[16]
    cdef int counts[16]
    if nev > 16:
        raise ValueError("too many events")
    cdef int need_all = 0
    for iev, ev in enumerate(events):
        if ev.kind == "y_plane":
            cev[iev].kind = 0
        elif ev.kind == "x_plane":
            cev[iev].kind = 1
        elif ev.kind in ("sphere", "altitude"):
            cev[iev].kind = 2
        else:
            raise ValueError(f"event kind {ev.kind!r} not supported natively")
        cev[iev].direction = ev.direction
        cev[iev].count = ev.count
        cev[iev].terminal = 1 if ev.terminal else 0
        cev[iev].value = ev.value
        cev[iev].cx, cev[iev].cy, cev[iev].cz = ev.center
        cev[iev].radius = ev.radius
        if ev.constraint is None:
            cev[iev].has_constraint = 0
        else:
            cev[iev].has_constraint = 1
            cev[iev].caxis = ev.constraint[0]
            cev[iev].cop = 0 if ev.constraint[1] == "<" else 1
            cev[iev].cval = ev.constraint[2]
        cev[iev].need = 0
        counts[iev] = 0
        g_prev[iev] = _event_g(&cev[iev], w.y)
    if stop_when is not None:
        for iev_key, n_need in stop_when.items():
            cev[<int> iev_key].need = <int> n_need
            need_all += 1

    cdef double direction = 1.0 if t1 >= t0 else -1.0
    cdef double t = t0, h, h_abs, t_new, err_norm, factor, x
    cdef double span = fabs(t1 - t0)
    cdef int status = 0, term_idx = -1, rejected = 0, dense_ready
    cdef double d0, d1, d2, h0, h1

    ts = [t0]
    ys = [np.array(y0)]
    crossings = []

    # initial step: same heuristic as standard adaptive starters
    f(t, w.y, &w.K[0][0], w.params)
    for i in range(dim):
        w.scale[i] = atol + fabs(w.y[i]) * rtol
    d0 = _rms(w.y, w.scale, dim)
    d1 = _rms(&w.K[0][0], w.scale, dim)
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    for i in range(dim):
        w.y_new[i] = w.y[i] + h0 * direction * w.K[0][i]
    f(t + h0 * direction, w.y_new, &w.K[1][0], w.params)
    for i in range(dim):
        w.err5[i] = w.K[1][i] - w.K[0][i]
    d2 = _rms(w.err5, w.scale, dim) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = fmax(1e-6, h0 * 1e-3)
    else:
        h1 = pow(0.01 / fmax(d1, d2), 0.125)
    h_abs = fmin(fmin(100.0 * h0, h1), fmin(span, max_step))

    cdef double t_stop = 0.0
    cdef int stop_now
    cdef double e5, e3
    cdef double g_new, go, t_e, lo, hi, glo, mid, gm_
    cdef int nhit, hit_idx[16]
    cdef double hit_t[16]
    cdef int first_step = 1

    while status == 0:
        if direction * (t - t1) >= 0.0:
            break
        # do not step past t1
        if h_abs > fabs(t1 - t):
            h_abs = fabs(t1 - t)
        if h_abs < 10.0 * EPS * fabs(t) and fabs(t1 - t) > 10.0 * EPS * fabs(t):
            raise RuntimeError(
                f"step size underflow at t = {t:.6g} (rtol = {rtol:g})")
        h = h_abs * direction
        t_new = t + h

        # stages 1..11 (stage 0 already holds f(t, y))
        for s in range(1, NS):
            for j in range(dim):
                w.y_stage[j] = 0.0
            for i in range(s):
                if CA[s, i] != 0.0:
                    for j in range(dim):
                        w.y_stage[j] += CA[s, i] * w.K[i][j]
            for j in range(dim):
                w.y_stage[j] = w.y[j] + h * w.y_stage[j]
            f(t + CC[s] * h, w.y_stage, &w.K[s][0], w.params)
        for j in range(dim):
            w.y_stage[j] = 0.0
        for i in range(NS):
            if CB[i] != 0.0:
                for j in range(dim):
                    w.y_stage[j] += CB[i] * w.K[i][j]
        for j in range(dim):
            w.y_new[j] = w.y[j] + h * w.y_stage[j]
        f(t_new, w.y_new, &w.K[NS][0], w.params)

        # combined 5th/3rd order error norm
        for j in range(dim):
            w.scale[j] = atol + fmax(fabs(w.y[j]), fabs(w.y_new[j])) * rtol
            w.err5[j] = 0.0
            w.err3[j] = 0.0
        for i in range(NS + 1):
            if CE5[i] != 0.0:
                for j in range(dim):
                    w.err5[j] += CE5[i] * w.K[i][j]
            if CE3[i] != 0.0:
                for j in range(dim):
                    w.err3[j] += CE3[i] * w.K[i][j]
        e5 = 0.0
        e3 = 0.0
        for j in range(dim):
            e5 += (w.err5[j] / w.scale[j]) ** 2
            e3 += (w.err3[j] / w.scale[j]) ** 2
        if e5 == 0.0 and e3 == 0.0:
            err_norm = 0.0
        else:
            err_norm = fabs(h) * e5 / sqrt((e5 + 0.01 * e3) * dim)

        if err_norm >= 1.0:
            h_abs *= fmax(MIN_FACTOR, SAFETY * pow(err_norm, ERR_EXP))
            rejected = 1
            continue
        factor = MAX_FACTOR if err_norm == 0.0 else \
            fmin(MAX_FACTOR, SAFETY * pow(err_norm, ERR_EXP))
        if rejected:
            factor = fmin(1.0, factor)
        rejected = 0

        # events on [t, t_new]
        dense_ready = 0
        nhit = 0
        stop_now = 0
        for iev in range(nev):
            g_new = _event_g(&cev[iev], w.y_new)
            go = g_prev[iev]
            g_prev[iev] = g_new
            if go == 0.0 and g_new == 0.0:
                continue
            if not (((go <= 0.0 <= g_new) and cev[iev].direction >= 0) or
                    ((go >= 0.0 >= g_new) and cev[iev].direction <= 0)):
                continue
            if not dense_ready:
                _build_dense(f, w, t, h, dim)
                dense_ready = 1
            # bisection on the dense polynomial
            lo, hi = 0.0, 1.0
            _dense_eval(&w.F[0][0], dim, lo, w.y, w.y_stage)
            glo = _event_g(&cev[iev], w.y_stage)
            if glo == 0.0:
                t_e = t
            else:
                for i in range(80):
                    mid = 0.5 * (lo + hi)
                    _dense_eval(&w.F[0][0], dim, mid, w.y, w.y_stage)
                    gm_ = _event_g(&cev[iev], w.y_stage)
                    if gm_ == 0.0:
                        lo = hi = mid
                        break
                    if (gm_ > 0.0) == (glo > 0.0):
                        lo = mid
                        glo = gm_
                    else:
                        hi = mid
                    if hi - lo <= 4.0 * EPS:
                        break
                t_e = t + 0.5 * (lo + hi) * h
            if first_step and fabs(t_e - t0) <= 1e-12 * fmax(span, 1.0):
                continue
            hit_t[nhit] = t_e
            hit_idx[nhit] = iev
            nhit += 1
        # apply hits in time order
        for i in range(nhit):
            for j in range(i + 1, nhit):
                if direction * (hit_t[j] - hit_t[i]) < 0.0:
                    hit_t[i], hit_t[j] = hit_t[j], hit_t[i]
                    hit_idx[i], hit_idx[j] = hit_idx[j], hit_idx[i]
        for i in range(nhit):
            iev = hit_idx[i]
            x = (hit_t[i] - t) / h
            _dense_eval(&w.F[0][0], dim, x, w.y, w.y_stage)
            if not _event_ok(&cev[iev], w.y_stage):
                continue
            counts[iev] += 1
            y_e = np.empty(dim)
            for j in range(dim):
                y_e[j] = w.y_stage[j]
            crossings.append((iev, hit_t[i], y_e))
            if cev[iev].terminal and counts[iev] >= cev[iev].count:
                status = 1
                term_idx = iev
                t_stop = hit_t[i]
                break
            if need_all:
                stop_now = 1
                for j in range(nev):
                    if cev[j].need > 0 and counts[j] < cev[j].need:
                        stop_now = 0
                        break
                if stop_now:
                    status = 2
                    t_stop = hit_t[i]
                    break
        first_step = 0
        if status != 0:
            x = (t_stop - t) / h
            _dense_eval(&w.F[0][0], dim, x, w.y, w.y_stage)
            yf = np.empty(dim)
            for j in range(dim):
                yf[j] = w.y_stage[j]
            ts.append(t_stop)
            ys.append(yf)
            break

        # accept
        t = t_new
        memcpy(w.y, w.y_new, dim * sizeof(double))
        memcpy(&w.K[0][0], &w.K[NS][0], dim * sizeof(double))
        h_abs = fmin(h_abs * factor, max_step)
        yrow = np.empty(dim)
        for j in range(dim):
            yrow[j] = w.y_new[j]
        ts.append(t)
        ys.append(yrow)

    return (np.asarray(ts), np.vstack(ys), crossings, status, term_idx)


cdef void _build_dense(fieldfun f, _Work w, double t, double h,
                       int dim) noexcept nogil:
    # three extra stages, then the seven interpolation coefficient vectors
    cdef int s, i, j
    cdef double acc
    for s in range(NS + 1, NSX):
        for j in range(dim):
            w.y_stage[j] = 0.0
        for i in range(s):
            if CA[s, i] != 0.0:
                for j in range(dim):
                    w.y_stage[j] += CA[s, i] * w.K[i][j]
        for j in range(dim):
            w.y_stage[j] = w.y[j] + h * w.y_stage[j]
        f(t + CC[s] * h, w.y_stage, &w.K[s][0], w.params)
    for j in range(dim):
        acc = w.y_new[j] - w.y[j]
        w.F[0][j] = acc
        w.F[1][j] = h * w.K[0][j] - acc
        w.F[2][j] = 2.0 * acc - h * (w.K[NS][j] + w.K[0][j])
    for i in range(NDENSE):
        for j in range(dim):
            acc = 0.0
            for s in range(NSX):
                if CD[i, s] != 0.0:
                    acc += CD[i, s] * w.K[s][j]
            w.F[3 + i][j] = h * acc
