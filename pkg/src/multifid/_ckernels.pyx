# cython: language_level=3
"""Compiled kernel backend: system RHS, finite-difference Jacobian and the
fixed-step trapezoidal loop. Arithmetic mirrors ``_pykernels`` line by line."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, atan2, sqrt, fabs, isfinite
from libc.stdlib cimport malloc, free
from scipy.linalg.cython_lapack cimport dgetrf, dgetrs

cnp.import_array()

BACKEND = "cython"

INVERTER_PARAMS = (
    "T_a", "k_d", "k_omega", "k_q", "omega_f", "m_p", "m_q",
    "p_ref", "q_ref", "v_ref", "omega_ref",
    "k_pv", "k_iv", "k_pc", "k_ic", "k_ffv", "k_ffi", "r_v", "l_v", "k_ad", "omega_ad",
    "l_f", "r_f", "c_f", "l_g", "r_g",
    "kp_pll", "ki_pll", "omega_lp", "omega_w",
)
MACHINE_PARAMS = ("r_a", "x_d", "x_q", "xp_d", "Tp_d0", "H", "D", "e_fd", "tau_m")

cdef enum:
    T_A = 0
    K_D = 1
    K_OMEGA = 2
    K_Q = 3
    OMEGA_F = 4
    M_P = 5
    M_Q = 6
    P_REF = 7
    Q_REF = 8
    V_REF = 9
    OMEGA_REF = 10
    K_PV = 11
    K_IV = 12
    K_PC = 13
    K_IC = 14
    K_FFV = 15
    K_FFI = 16
    R_V = 17
    L_V = 18
    K_AD = 19
    OMEGA_AD = 20
    L_F = 21
    R_F = 22
    C_F = 23
    L_G = 24
    R_G = 25
    KP_PLL = 26
    KI_PLL = 27
    OMEGA_LP = 28
    OMEGA_W = 29

cdef enum:
    M_RA = 0
    M_XD = 1
    M_XQ = 2
    M_XPD = 3
    M_TPD0 = 4
    M_H = 5
    M_D = 6
    M_EFD = 7
    M_TAUM = 8

cdef enum:
    DEV_SOURCE = 0
    DEV_INVERTER = 1
    DEV_MACHINE = 2
    N_OUT = 9

cdef double C1 = -0.5
cdef double S1 = -0.8660254037844386
cdef double C2 = -0.5
cdef double S2 = 0.8660254037844386


cdef inline double complex cis(double a) noexcept:
    return cos(a) + 1j * sin(a)


cdef inline double complex conj(double complex z) noexcept:
    return z.real - 1j * z.imag


cdef class CompiledSystem:
    cdef public int n, abc, lin_off, lin_n, nd, n_diff
    cdef public double omega_b, omega_s
    cdef double[:, ::1] L
    cdef int[::1] dev_type, dev_xoff, dev_poff, tgt_ptr, tgt_row, tgt_kind
    cdef int[:, ::1] dev_flags, meas_kind, meas_idx
    cdef double[::1] params, tgt_gain
    cdef double complex* ports

    def __cinit__(self):
        self.ports = NULL

    def __init__(self, n, abc, omega_b, omega_s, lin_off, L, dev_type, dev_flags, dev_xoff, dev_poff,
                 params, meas_kind, meas_idx, tgt_ptr, tgt_row, tgt_gain, tgt_kind, n_diff):
        self.n = n
        self.abc = abc
        self.omega_b = omega_b
        self.omega_s = omega_s
        self.lin_off = lin_off
        self.L = np.ascontiguousarray(L, dtype=float)
        self.lin_n = self.L.shape[0]
        self.dev_type = np.ascontiguousarray(dev_type, dtype=np.int32)
        self.dev_flags = np.ascontiguousarray(np.asarray(dev_flags, dtype=np.int32).reshape(-1, 5))
        self.dev_xoff = np.ascontiguousarray(dev_xoff, dtype=np.int32)
        self.dev_poff = np.ascontiguousarray(dev_poff, dtype=np.int32)
        self.params = np.ascontiguousarray(params, dtype=float)
        self.meas_kind = np.ascontiguousarray(np.asarray(meas_kind, dtype=np.int32).reshape(-1, 4))
        self.meas_idx = np.ascontiguousarray(np.asarray(meas_idx, dtype=np.int32).reshape(-1, 4))
        self.tgt_ptr = np.ascontiguousarray(tgt_ptr, dtype=np.int32)
        self.tgt_row = np.ascontiguousarray(tgt_row, dtype=np.int32)
        self.tgt_gain = np.ascontiguousarray(tgt_gain, dtype=float)
        self.tgt_kind = np.ascontiguousarray(tgt_kind, dtype=np.int32)
        self.n_diff = n_diff
        self.nd = self.dev_type.shape[0]
        self.ports = <double complex*> malloc((self.nd + 1) * sizeof(double complex))
        if self.ports == NULL:
            raise MemoryError()

    def __dealloc__(self):
        free(self.ports)

    # -- devices ---------------------------------------------------------------

    cdef double complex _inverter(self, int k, const double* x, double* dx, double complex* meas,
                                  double* ex) noexcept:
        cdef const double* p = &self.params[self.dev_poff[k]]
        cdef int outer = self.dev_flags[k, 0]
        cdef int inner_full = self.dev_flags[k, 1]
        cdef int filter_full = self.dev_flags[k, 2]
        cdef int pll_kind = self.dev_flags[k, 3]
        cdef int norton = self.dev_flags[k, 4]
        cdef double wb = self.omega_b, ws = self.omega_s
        cdef double delta = x[0], omega, q_m, p_m = 0.0, v_olc
        cdef double complex fwd, back, i_g, v_o, v_th, z_th, z_g, s_e, out, v_bus
        cdef double p_e, q_e, omega_pll, err, mag2, dw_pu
        cdef double complex v_pll, w, vdot
        cdef int hold = 0, kk
        cdef double complex phi, gamma, xi, vo_d, icv_d, ig_d, v_vi, e_v, i_ref, e_i, v_cv, y_th, y_0

        if outer == 0:
            omega = x[1]
            q_m = x[2]
            v_olc = p[V_REF] + p[K_Q] * (p[Q_REF] - q_m)
        else:
            p_m = x[1]
            q_m = x[2]
            omega = p[OMEGA_REF] + p[M_P] * (p[P_REF] - p_m)
            v_olc = p[V_REF] + p[M_Q] * (p[Q_REF] - q_m)
        fwd = cis(delta)
        back = conj(fwd)
        z_g = p[R_G] + 1j * ws * p[L_G]

        if filter_full:
            i_g = meas[2]
            if inner_full:
                v_o = meas[1]
            else:
                v_o = fwd * (v_olc - (p[R_V] + 1j * omega * p[L_V]) * (back * i_g))
        else:
            v_th = v_olc * fwd
            z_th = z_g + (p[R_V] + 1j * omega * p[L_V])
            v_bus = meas[3]
            i_g = (v_th - v_bus) / z_th
            v_o = v_bus + z_g * i_g
        s_e = v_o * conj(i_g)
        p_e = s_e.real
        q_e = s_e.imag

        if pll_kind == 0:
            v_pll = v_o * cis(-x[6])
            hold = sqrt(x[3] * x[3] + x[4] * x[4]) <= 1e-6
            err = 0.0 if hold else atan2(x[4], x[3])
            omega_pll = p[OMEGA_REF] + p[KP_PLL] * err + p[KI_PLL] * x[5]
            dx[3] = p[OMEGA_LP] * (v_pll.real - x[3])
            dx[4] = p[OMEGA_LP] * (v_pll.imag - x[4])
            dx[5] = err
            dx[6] = wb * (omega_pll - ws)
            kk = 7
        else:
            w = x[3] + 1j * x[4]
            vdot = p[OMEGA_W] * (v_o - w)
            mag2 = v_o.real * v_o.real + v_o.imag * v_o.imag
            hold = mag2 <= 1e-12
            dw_pu = 0.0 if hold else (v_o.real * vdot.imag - v_o.imag * vdot.real) / mag2 / wb
            omega_pll = ws + dw_pu
            dx[3] = vdot.real
            dx[4] = vdot.imag
            kk = 5

        dx[0] = wb * (omega - ws)
        if outer == 0:
            dx[1] = (p[P_REF] - p_e - p[K_D] * (omega - omega_pll) - p[K_OMEGA] * (omega - p[OMEGA_REF])) / p[T_A]
            dx[2] = p[OMEGA_F] * (q_e - q_m)
        else:
            dx[1] = p[OMEGA_F] * (p_e - p_m)
            dx[2] = p[OMEGA_F] * (q_e - q_m)

        if inner_full:
            phi = x[kk] + 1j * x[kk + 1]
            gamma = x[kk + 2] + 1j * x[kk + 3]
            xi = x[kk + 4] + 1j * x[kk + 5]
            vo_d = back * v_o
            icv_d = back * meas[0]
            ig_d = back * i_g
            v_vi = v_olc - (p[R_V] + 1j * omega * p[L_V]) * ig_d
            e_v = v_vi - vo_d
            i_ref = p[K_PV] * e_v + phi + 1j * omega * p[C_F] * vo_d + p[K_FFI] * ig_d
            e_i = i_ref - icv_d
            v_cv = p[K_PC] * e_i + gamma + 1j * omega * p[L_F] * icv_d + p[K_FFV] * vo_d - p[K_AD] * (vo_d - xi)
            dx[kk] = p[K_IV] * e_v.real
            dx[kk + 1] = p[K_IV] * e_v.imag
            dx[kk + 2] = p[K_IC] * e_i.real
            dx[kk + 3] = p[K_IC] * e_i.imag
            dx[kk + 4] = p[OMEGA_AD] * (vo_d.real - xi.real)
            dx[kk + 5] = p[OMEGA_AD] * (vo_d.imag - xi.imag)
            out = fwd * v_cv
        elif filter_full:
            out = v_o
        elif norton:
            y_th = 1.0 / z_th
            y_0 = 1.0 / (z_g + (p[R_V] + 1j * ws * p[L_V]))
            out = y_th * v_th - (y_th - y_0) * meas[3]
        else:
            out = i_g

        if ex != NULL:
            ex[0] = omega
            ex[1] = p_e
            ex[2] = q_e
            ex[3] = omega_pll
            ex[4] = v_o.real
            ex[5] = v_o.imag
            ex[6] = i_g.real
            ex[7] = i_g.imag
            ex[8] = <double> hold
        return out

    cdef double complex _machine(self, int k, const double* x, double* dx, double complex* meas,
                                 double* ex) noexcept:
        cdef const double* p = &self.params[self.dev_poff[k]]
        cdef int full = self.dev_flags[k, 0]
        cdef double wb = self.omega_b, ws = self.omega_s
        cdef double eqp, delta, omega, tau_e, det, rhs_d, rhs_q
        cdef double complex psi, fwd, e, i, dpsi, i_net, s, v_bus = meas[3]
        cdef int o = 0
        if full:
            psi = x[0] + 1j * x[1]
            o = 2
        eqp = x[o]
        delta = x[o + 1]
        omega = x[o + 2]
        fwd = cis(delta)
        e = conj(fwd) * v_bus
        if full:
            i = (eqp - psi.real) / p[M_XPD] + 1j * (-psi.imag / p[M_XQ])
            tau_e = psi.real * i.imag - psi.imag * i.real
            dpsi = wb * (e + p[M_RA] * i - 1j * psi)
            dx[0] = dpsi.real
            dx[1] = dpsi.imag
        else:
            det = p[M_RA] * p[M_RA] + p[M_XQ] * p[M_XPD]
            rhs_d = -e.real
            rhs_q = eqp - e.imag
            i = (p[M_RA] * rhs_d + p[M_XQ] * rhs_q) / det + 1j * ((-p[M_XPD] * rhs_d + p[M_RA] * rhs_q) / det)
            tau_e = e.real * i.real + e.imag * i.imag + p[M_RA] * (i.real * i.real + i.imag * i.imag)
        dx[o] = (-eqp - (p[M_XD] - p[M_XPD]) * i.real + p[M_EFD]) / p[M_TPD0]
        dx[o + 1] = wb * (omega - ws)
        dx[o + 2] = (p[M_TAUM] - tau_e - p[M_D] * (omega - 1.0)) / (2.0 * p[M_H])
        i_net = fwd * i
        if ex != NULL:
            s = v_bus * conj(i_net)
            ex[0] = omega
            ex[1] = s.real
            ex[2] = s.imag
            ex[3] = omega
            ex[4] = v_bus.real
            ex[5] = v_bus.imag
            ex[6] = i_net.real
            ex[7] = i_net.imag
            ex[8] = 0.0
        return i_net

    # -- system ----------------------------------------------------------------

    cdef void _eval(self, double t, const double* x, double* out, double* extras) noexcept:
        cdef int i, j, k, slot, kind, idx, m, row, lo = self.lin_off, ln = self.lin_n
        cdef int n_fix = 0
        cdef double acc, gain, c0 = 1.0, s0 = 0.0, c1 = 0.0, s1 = 0.0, c2 = 0.0, s2 = 0.0, th, a, b, c
        cdef double complex meas[4]
        cdef double complex u
        cdef const double* xl = x + lo
        for i in range(self.n):
            out[i] = 0.0
        for i in range(ln):
            acc = 0.0
            for j in range(ln):
                acc += self.L[i, j] * xl[j]
            out[lo + i] = acc
        if self.abc:
            th = self.omega_b * self.omega_s * t
            c0 = cos(th)
            s0 = sin(th)
            c1 = c0 * C1 - s0 * S1
            s1 = s0 * C1 + c0 * S1
            c2 = c0 * C2 - s0 * S2
            s2 = s0 * C2 + c0 * S2
        for k in range(self.nd):
            for slot in range(4):
                kind = self.meas_kind[k, slot]
                idx = self.meas_idx[k, slot]
                if kind == 0:
                    if self.abc:
                        a = x[idx]
                        b = x[idx + 1]
                        c = x[idx + 2]
                        meas[slot] = ((2.0 / 3.0) * (a * c0 + b * c1 + c * c2)
                                      - 1j * ((2.0 / 3.0) * (a * s0 + b * s1 + c * s2)))
                    else:
                        meas[slot] = x[idx] + 1j * x[idx + 1]
                elif kind == 1:
                    meas[slot] = self.ports[idx]
                else:
                    meas[slot] = 0.0
            if self.dev_type[k] == DEV_INVERTER:
                u = self._inverter(k, x + self.dev_xoff[k], out + self.dev_xoff[k], meas,
                                   extras + k * N_OUT if extras != NULL else NULL)
            elif self.dev_type[k] == DEV_MACHINE:
                u = self._machine(k, x + self.dev_xoff[k], out + self.dev_xoff[k], meas,
                                  extras + k * N_OUT if extras != NULL else NULL)
            else:
                u = self.params[self.dev_poff[k]] * cis(self.params[self.dev_poff[k] + 1])
            self.ports[k] = u
            for m in range(self.tgt_ptr[k], self.tgt_ptr[k + 1]):
                row = self.tgt_row[m]
                gain = self.tgt_gain[m]
                if self.tgt_kind[m] == 1:
                    continue
                if self.abc:
                    out[row] += gain * (u.real * c0 - u.imag * s0)
                    out[row + 1] += gain * (u.real * c1 - u.imag * s1)
                    out[row + 2] += gain * (u.real * c2 - u.imag * s2)
                else:
                    out[row] += gain * u.real
                    out[row + 1] += gain * u.imag
        for k in range(self.nd):
            for m in range(self.tgt_ptr[k], self.tgt_ptr[k + 1]):
                if self.tgt_kind[m] == 1:
                    row = self.tgt_row[m]
                    u = self.ports[k]
                    out[row] = x[row] - u.real
                    out[row + 1] = x[row + 1] - u.imag

    def rhs(self, double t, const double[::1] x, double[::1] out):
        self._eval(t, &x[0], &out[0], NULL)

    def outputs(self, double t, const double[::1] x, double[:, ::1] out):
        cdef double[::1] scratch = np.empty(self.n)
        out[:, :] = 0.0
        self._eval(t, &x[0], &scratch[0], &out[0, 0])

    cdef void _jacobian(self, double t, double* x, const double* f0, double* J, double eps_rel,
                        int central, double* fp, double* fm) noexcept:
        cdef int i, j, n = self.n
        cdef double h, xj
        for j in range(n):
            xj = x[j]
            h = eps_rel * (fabs(xj) if fabs(xj) > 1.0 else 1.0)
            x[j] = xj + h
            h = x[j] - xj
            self._eval(t, x, fp, NULL)
            if central:
                x[j] = xj - h
                self._eval(t, x, fm, NULL)
                for i in range(n):
                    J[i * n + j] = (fp[i] - fm[i]) / (2.0 * h)
            else:
                for i in range(n):
                    J[i * n + j] = (fp[i] - f0[i]) / h
            x[j] = xj

    def jacobian(self, double t, const double[::1] x, const double[::1] f0, double[:, ::1] J,
                 double eps_rel, int central=0):
        cdef double[::1] xw = np.array(x, dtype=float)
        cdef double[::1] fp = np.empty(self.n)
        cdef double[::1] fm = np.empty(self.n)
        self._jacobian(t, &xw[0], &f0[0], &J[0, 0], eps_rel, central, &fp[0], &fm[0])

    def integrate_trapezoidal(self, double t0, const double[::1] x0, double dt, long n_steps, long rec_every,
                              double[:, ::1] rec, double newton_tol, int newton_max, int reuse_limit,
                              double eps_rel):
        """Fixed-step trapezoidal rule with simplified Newton; see the Python backend."""
        cdef int n = self.n, nd_ = self.n_diff, i, j, info = 0, nrhs = 1, it, fresh, converged
        cdef long step, m, n_rec = rec.shape[0]
        cdef int age = reuse_limit
        cdef double t1, rmax, hdt = 0.5 * dt
        cdef double[::1] x = np.array(x0, dtype=float)
        cdef double[::1] x1 = np.empty(n)
        cdef double[::1] f0 = np.empty(n)
        cdef double[::1] f1 = np.empty(n)
        cdef double[::1] r = np.empty(n)
        cdef double[::1] fp = np.empty(n)
        cdef double[::1] fm = np.empty(n)
        cdef double[:, ::1] J = np.empty((n, n))
        cdef double[:, ::1] W = np.empty((n, n))
        cdef int[::1] ipiv = np.empty(n, dtype=np.int32)
        cdef char trans = b'T'
        cdef long rhs_ev = 0, jac_ev = 0, jac_rhs = 0, lu_ct = 0, newton_it = 0, steps_done = 0
        cdef long failed = -1

        self._eval(t0, &x[0], &f0[0], NULL)
        rhs_ev += 1
        for j in range(n):
            rec[0, j] = x[j]

        for step in range(n_steps):
            t1 = t0 + (step + 1) * dt
            if age >= reuse_limit:
                if self._refresh(t0 + step * dt, x, f0, J, W, ipiv, dt, eps_rel, fp, fm) != 0:
                    failed = step
                    break
                age = 0
                jac_ev += 1
                jac_rhs += n
                lu_ct += 1
            for i in range(n):
                x1[i] = x[i] + dt * f0[i] if i < nd_ else x[i]
            fresh = age == 0
            converged = 0
            it = 0
            while True:
                self._eval(t1, &x1[0], &f1[0], NULL)
                rhs_ev += 1
                rmax = 0.0
                for i in range(n):
                    if i < nd_:
                        r[i] = x1[i] - x[i] - hdt * (f0[i] + f1[i])
                    else:
                        r[i] = f1[i]
                    if not isfinite(r[i]):
                        rmax = -1.0
                        break
                    if fabs(r[i]) > rmax:
                        rmax = fabs(r[i])
                if rmax < 0.0:
                    break
                if rmax < newton_tol:
                    converged = 1
                    break
                if it >= newton_max:
                    if fresh:
                        break
                    if self._refresh(t1, x1, f1, J, W, ipiv, dt, eps_rel, fp, fm) != 0:
                        break
                    jac_ev += 1
                    jac_rhs += n
                    lu_ct += 1
                    fresh = 1
                    it = 0
                dgetrs(&trans, &n, &nrhs, &W[0, 0], &n, &ipiv[0], &r[0], &n, &info)
                for i in range(n):
                    x1[i] -= r[i]
                it += 1
                newton_it += 1
            if not converged:
                failed = step
                break
            x, x1 = x1, x
            f0, f1 = f1, f0
            age += 1
            steps_done += 1
            if (step + 1) % rec_every == 0:
                m = (step + 1) // rec_every
                if m < n_rec:
                    for j in range(n):
                        rec[m, j] = x[j]
        return dict(steps=steps_done, rhs_evaluations=rhs_ev, jacobian_evaluations=jac_ev,
                    jacobian_rhs_evaluations=jac_rhs, lu_factorizations=lu_ct, newton_iterations=newton_it,
                    failed_step=failed)

    cdef int _refresh(self, double t, double[::1] x, double[::1] f, double[:, ::1] J, double[:, ::1] W,
                      int[::1] ipiv, double dt, double eps_rel, double[::1] fp, double[::1] fm) noexcept:
        # x is perturbed in place and restored exactly by _jacobian
        cdef int n = self.n, nd_ = self.n_diff, i, j, info = 0
        self._jacobian(t, &x[0], &f[0], &J[0, 0], eps_rel, 0, &fp[0], &fm[0])
        for i in range(n):
            for j in range(n):
                if i < nd_:
                    W[i, j] = -0.5 * dt * J[i, j] + (1.0 if i == j else 0.0)
                else:
                    W[i, j] = J[i, j]
        dgetrf(&n, &n, &W[0, 0], &n, &ipiv[0], &info)
        return info
