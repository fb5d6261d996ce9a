# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False, language_level=3
"""Compiled path loop for euclidean space and the constant-curvature quadrics
with built-in fields (V zero/constant/quadratic, Z zero/OU).

On these models Ric_Z is a scalar multiple of the identity and d*R, nabla Ric_Z
vanish, so W-hat stays a scalar multiple of I and only W-hat' needs a matrix.
Same scheme and same left-point accumulation order as the numpy backend.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, exp, sin, cos, sinh, cosh, fabs, isfinite

cnp.import_array()

cdef enum:
    MAXN = 8
    MAXD = 9


cdef inline double _sinc(double a) nogil:
    if fabs(a) < 1e-8:
        return 1.0 - a * a / 6.0
    return sin(a) / a


cdef inline double _sinhc(double a) nogil:
    if fabs(a) < 1e-8:
        return 1.0 + a * a / 6.0
    return sinh(a) / a


def simulate(const double[:, :, ::1] normals, double dt, double T,
             const double[::1] x0, const double[:, ::1] F0,
             int mcode, double curv, int vcode, double vpar, int zcode, double zpar, double v_min,
             const double[::1] kg_v, const double[::1] kg_d, const double[::1] k_v, const double[::1] k_d,
             const double[::1] l_v, const double[::1] l_d,
             const double[::1] vv, const double[::1] ww,
             int need_gen, int need_hess, double pos_bound, double cond_bound):
    cdef Py_ssize_t P = normals.shape[0], N = normals.shape[1], n = normals.shape[2]
    cdef Py_ssize_t d = x0.shape[0]
    if n > MAXN or d > MAXD:
        raise ValueError("dimension too large for the compiled kernel")

    X_out = np.empty((P, d))
    F_out = np.empty((P, d, n))
    W_out = np.zeros((P, n, n))
    Wp_out = np.zeros((P, n, n))
    fk_out = np.empty(P)
    sc = {name: np.zeros(P) for name in ("g_dB", "g_dV", "Zi", "h_Wp", "h_V", "hl_dB", "hl_dV", "hk_dB", "hk_dV")}
    vec = {name: np.zeros((P, n)) for name in ("A_dB", "A_dV", "Bv")}
    fail_out = np.zeros(P, dtype=np.int64)
    fstep_out = np.full(P, -1, dtype=np.int64)

    cdef double[:, ::1] Xo = X_out
    cdef double[:, :, ::1] Fo = F_out
    cdef double[:, :, ::1] Wo = W_out
    cdef double[:, :, ::1] Wpo = Wp_out
    cdef double[::1] fko = fk_out
    cdef double[::1] o_gdB = sc["g_dB"], o_gdV = sc["g_dV"], o_Zi = sc["Zi"], o_hWp = sc["h_Wp"], o_hV = sc["h_V"]
    cdef double[::1] o_hldB = sc["hl_dB"], o_hldV = sc["hl_dV"], o_hkdB = sc["hk_dB"], o_hkdV = sc["hk_dV"]
    cdef double[:, ::1] o_AdB = vec["A_dB"], o_AdV = vec["A_dV"], o_Bv = vec["Bv"]
    cdef long long[::1] o_fail = fail_out, o_fstep = fstep_out

    cdef double x[MAXD]
    cdef double F[MAXD][MAXN]
    cdef double Fn[MAXD][MAXN]
    cdef double U[MAXD]
    cdef double gdiag[MAXD]
    cdef double Wp[MAXN][MAXN]
    cdef double Wpn[MAXN][MAXN]
    cdef double dB[MAXN]
    cdef double dVh[MAXN]
    cdef double Wpv[MAXN]
    cdef double A_dB[MAXN]
    cdef double A_dV[MAXN]
    cdef double Bv[MAXN]
    cdef double gr[MAXD]
    cdef double coef[MAXN]
    cdef double dirv[MAXD]
    cdef double M[MAXN][MAXN]
    cdef double om, fk, g_dB, g_dV, Zi, h_Wp, h_V, hl_dB, hl_dV, hk_dB, hk_dV
    cdef double sq = sqrt(dt), r, fac, Vx, s2, s, a, C, qa, qh, cm1, t1, t2, Wv_dB, Ww_dB, dVWv, dVWw
    cdef double HV, gx, xx, nrm, ip, xmax, tol, radius
    cdef double cvw = 0.0, vw_sum
    cdef Py_ssize_t p, j, i, aa, bb, cc
    cdef int failed, fstep, v_below = 0
    cdef int quad = mcode == 1
    cdef double cc_curv = curv if quad else 0.0

    tol = 1e-12 * (1.0 if fabs(v_min) < 1.0 else fabs(v_min))
    radius = 1.0 / sqrt(fabs(curv)) if quad else 0.0
    for i in range(d):
        gdiag[i] = 1.0
    if quad and curv < 0:
        gdiag[d - 1] = -1.0
    # Ric_Z = (c (n - 1) + 2 lam) I on every supported case
    r = (curv if quad else 0.0) * (n - 1)
    if zcode == 1:
        r += 2.0 * zpar
    fac = (1.0 - 0.25 * dt * r) / (1.0 + 0.25 * dt * r)

    with nogil:
        for p in range(P):
            for i in range(d):
                x[i] = x0[i]
                for aa in range(n):
                    F[i][aa] = F0[i, aa]
            for aa in range(n):
                A_dB[aa] = 0.0
                A_dV[aa] = 0.0
                Bv[aa] = 0.0
                for bb in range(n):
                    Wp[aa][bb] = 0.0
            om = 1.0
            fk = 1.0
            g_dB = 0.0; g_dV = 0.0; Zi = 0.0; h_Wp = 0.0; h_V = 0.0
            hl_dB = 0.0; hl_dV = 0.0; hk_dB = 0.0; hk_dV = 0.0
            failed = 0
            fstep = -1

            for j in range(N):
                for aa in range(n):
                    dB[aa] = normals[p, j, aa] * sq
                # potential
                xx = 0.0
                for i in range(d):
                    xx = xx + x[i] * x[i]
                if vcode == 0:
                    Vx = 0.0
                elif vcode == 1:
                    Vx = vpar
                else:
                    Vx = vpar * xx
                if failed == 0 and Vx < v_min - tol:
                    v_below = 1
                for aa in range(n):
                    dVh[aa] = 0.0
                if vcode == 2:
                    for i in range(d):
                        gr[i] = 2.0 * vpar * x[i]
                    for aa in range(n):
                        t1 = 0.0
                        for i in range(d):
                            t1 = t1 + gr[i] * F[i][aa]
                        dVh[aa] = t1

                Wv_dB = 0.0
                Ww_dB = 0.0
                dVWv = 0.0
                dVWw = 0.0
                for aa in range(n):
                    Wv_dB = Wv_dB + vv[aa] * dB[aa]
                    Ww_dB = Ww_dB + ww[aa] * dB[aa]
                    dVWv = dVWv + dVh[aa] * vv[aa]
                    dVWw = dVWw + dVh[aa] * ww[aa]
                Wv_dB = om * Wv_dB
                Ww_dB = om * Ww_dB
                dVWv = om * dVWv
                dVWw = om * dVWw

                g_dB = g_dB + kg_d[j] * Wv_dB
                g_dV = g_dV + kg_v[j] * dVWv * dt

                if need_gen:
                    for aa in range(n):
                        A_dB[aa] = A_dB[aa] + l_d[j] * (om * dB[aa])
                        A_dV[aa] = A_dV[aa] + l_v[j] * (om * dVh[aa]) * dt
                    if k_d[j] != 0.0:
                        if sqrt(n * 1.0) / fabs(om) > cond_bound and failed == 0:
                            failed = 3
                            fstep = j
                        for aa in range(n):
                            Bv[aa] = Bv[aa] + k_d[j] * (dB[aa] / om)
                        if zcode == 1:
                            t1 = 0.0
                            for aa in range(n):
                                t2 = 0.0
                                for i in range(d):
                                    t2 = t2 + F[i][aa] * (-zpar * x[i]) * gdiag[i]
                                t1 = t1 + t2 * dB[aa]
                            Zi = Zi + k_d[j] * t1

                if need_hess:
                    t1 = 0.0
                    t2 = 0.0
                    for aa in range(n):
                        Wpv[aa] = 0.0
                        for bb in range(n):
                            Wpv[aa] = Wpv[aa] + Wp[aa][bb] * vv[bb]
                        t1 = t1 + Wpv[aa] * dB[aa]
                        t2 = t2 + dVh[aa] * Wpv[aa]
                    HV = 0.0
                    if vcode == 2:
                        gx = 0.0
                        for i in range(d):
                            gx = gx + gr[i] * x[i]
                        for aa in range(n):
                            for bb in range(n):
                                s = 0.0
                                for i in range(d):
                                    s = s + F[i][aa] * F[i][bb]
                                M[aa][bb] = 2.0 * vpar * s
                            M[aa][aa] = M[aa][aa] - cc_curv * gx
                        for aa in range(n):
                            for bb in range(n):
                                HV = HV + vv[aa] * M[aa][bb] * ww[bb]
                        HV = HV * om * om
                    h_Wp = h_Wp + k_d[j] * t1
                    h_V = h_V + k_v[j] * (HV + t2) * dt
                    hl_dB = hl_dB + l_d[j] * Ww_dB
                    hl_dV = hl_dV + l_v[j] * dVWw * dt
                    hk_dB = hk_dB + k_d[j] * Wv_dB
                    hk_dV = hk_dV + k_v[j] * dVWv * dt
                    # W' (Ito-Euler); R(dB, W e_j)(W w) = c om^2 (w_j dB - <dB, w> e_j)
                    vw_sum = 0.0
                    for aa in range(n):
                        vw_sum = vw_sum + dB[aa] * ww[aa]
                    for aa in range(n):
                        for bb in range(n):
                            Wpn[aa][bb] = Wp[aa][bb] - 0.5 * dt * r * Wp[aa][bb]
                    if cc_curv != 0.0:
                        t1 = cc_curv * om * om
                        for bb in range(n):
                            for aa in range(n):
                                Wpn[aa][bb] = Wpn[aa][bb] + t1 * ww[bb] * dB[aa]
                            Wpn[bb][bb] = Wpn[bb][bb] - t1 * vw_sum
                    for aa in range(n):
                        for bb in range(n):
                            Wp[aa][bb] = Wpn[aa][bb]

                fk = fk * exp(-Vx * dt)
                om = om * fac

                # geodesic step with frame transport
                for i in range(d):
                    t1 = 0.0
                    for aa in range(n):
                        t1 = t1 + F[i][aa] * dB[aa]
                    U[i] = t1
                    if zcode == 1:
                        U[i] = U[i] - zpar * x[i] * dt
                if not quad:
                    for i in range(d):
                        x[i] = x[i] + U[i]
                else:
                    s2 = 0.0
                    for i in range(d):
                        s2 = s2 + U[i] * U[i] * gdiag[i]
                    if s2 < 0.0:
                        s2 = 0.0
                    s = sqrt(s2)
                    a = sqrt(fabs(curv)) * s
                    if curv > 0:
                        C = cos(a)
                        qa = _sinc(a)
                        qh = _sinc(0.5 * a)
                    else:
                        C = cosh(a)
                        qa = _sinhc(a)
                        qh = _sinhc(0.5 * a)
                    cm1 = -0.5 * curv * qh * qh
                    for aa in range(n):
                        t1 = 0.0
                        for i in range(d):
                            t1 = t1 + F[i][aa] * U[i] * gdiag[i]
                        coef[aa] = t1
                    for i in range(d):
                        dirv[i] = cm1 * U[i] - curv * qa * x[i]
                        for aa in range(n):
                            F[i][aa] = F[i][aa] + dirv[i] * coef[aa]
                        x[i] = C * x[i] + qa * U[i]
                    # retract onto the quadric
                    if curv > 0:
                        nrm = 0.0
                        for i in range(d):
                            nrm = nrm + x[i] * x[i]
                        nrm = sqrt(nrm)
                        for i in range(d):
                            x[i] = x[i] * (radius / nrm)
                    else:
                        nrm = 0.0
                        for i in range(d - 1):
                            nrm = nrm + x[i] * x[i]
                        x[d - 1] = sqrt(radius * radius + nrm)
                    for aa in range(n):
                        t1 = 0.0
                        for i in range(d):
                            t1 = t1 + x[i] * gdiag[i] * F[i][aa]
                        coef[aa] = t1
                    for i in range(d):
                        for aa in range(n):
                            F[i][aa] = F[i][aa] - curv * x[i] * coef[aa]
                    for aa in range(n):
                        for bb in range(n):
                            t1 = 0.0
                            for i in range(d):
                                t1 = t1 + F[i][aa] * gdiag[i] * F[i][bb]
                            M[aa][bb] = -0.5 * t1
                        M[aa][aa] = M[aa][aa] + 1.5
                    for i in range(d):
                        for aa in range(n):
                            t1 = 0.0
                            for bb in range(n):
                                t1 = t1 + F[i][bb] * M[bb][aa]
                            Fn[i][aa] = t1
                    for i in range(d):
                        for aa in range(n):
                            F[i][aa] = Fn[i][aa]

                if failed == 0:
                    xmax = 0.0
                    t2 = 1.0
                    for i in range(d):
                        if fabs(x[i]) > xmax:
                            xmax = fabs(x[i])
                        t2 = t2 + x[i]
                    t2 = t2 + om + fk + g_dB + h_Wp
                    for aa in range(n):
                        for bb in range(n):
                            t2 = t2 + Wp[aa][bb]
                    if not isfinite(t2):
                        failed = 1
                        fstep = j
                    elif xmax > pos_bound:
                        failed = 2
                        fstep = j

            for i in range(d):
                Xo[p, i] = x[i]
                for aa in range(n):
                    Fo[p, i, aa] = F[i][aa]
            for aa in range(n):
                Wo[p, aa, aa] = om
                o_AdB[p, aa] = A_dB[aa]
                o_AdV[p, aa] = A_dV[aa]
                o_Bv[p, aa] = Bv[aa]
                for bb in range(n):
                    Wpo[p, aa, bb] = Wp[aa][bb]
            fko[p] = fk
            o_gdB[p] = g_dB; o_gdV[p] = g_dV; o_Zi[p] = Zi; o_hWp[p] = h_Wp; o_hV[p] = h_V
            o_hldB[p] = hl_dB; o_hldV[p] = hl_dV; o_hkdB[p] = hk_dB; o_hkdV[p] = hk_dV
            o_fail[p] = failed
            o_fstep[p] = fstep

    out = dict(X=X_out, F=F_out, W=W_out, Wp=Wp_out, fk=fk_out, fail=fail_out, fail_step=fstep_out, v_below=v_below)
    out.update(sc)
    out.update(vec)
    return out
