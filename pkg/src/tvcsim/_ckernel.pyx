# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled plant kernel; mirrors ``_pykernel.py`` line for line."""

from libc.math cimport sin, cos, tan, atan2, asin, sqrt, exp, pow, fabs, isfinite, M_PI
import numpy as np
cimport numpy as cnp

cnp.import_array()

DEF N_STATE = 29
DEF N_HOLD = 18

STATUS_OK = 0
STATUS_APOGEE = 1
STATUS_SINGULAR = 2
STATUS_NONFINITE = 3

BACKEND = "cython"


cdef inline double _interp(double[::1] xs, double[::1] ys, double x) noexcept nogil:
    cdef Py_ssize_t n = xs.shape[0]
    cdef Py_ssize_t lo = 0, hi = n - 1, mid
    if x <= xs[0]:
        return ys[0]
    if x >= xs[n - 1]:
        return ys[n - 1]
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if xs[mid] <= x:
            lo = mid
        else:
            hi = mid
    return ys[lo] + (x - xs[lo]) / (xs[hi] - xs[lo]) * (ys[hi] - ys[lo])


cdef inline double[::1] _arr(obj):
    return np.ascontiguousarray(obj, dtype=np.float64).copy()


cdef class Plant:
    cdef double[::1] thrust_t, thrust_f, mass_t, xcm, jl, jt, xcp_mach, xcp
    cdef double[::1] aero_mach, ca, cna, cyb, isa_h, isa_lapse, isa_t, isa_p
    cdef double[::1] l_acf, l_pcf
    cdef double S, d, x_gimbal, C_lp, C_mq, C_nr, v_e, A_e, p_e, k_roll, roll_torque
    cdef double floor, tau, rate_limit, limit, margin, g0, r_earth, r_air, gamma, r0_geopot, h_max
    cdef int filters
    cdef double sf_buf[3]

    def __init__(self, tables, scalars):
        self.thrust_t = _arr(tables["thrust_t"])
        self.thrust_f = _arr(tables["thrust_f"])
        self.mass_t = _arr(tables["mass_t"])
        self.xcm = _arr(tables["xcm"])
        self.jl = _arr(tables["jl"])
        self.jt = _arr(tables["jt"])
        self.xcp_mach = _arr(tables["xcp_mach"])
        self.xcp = _arr(tables["xcp"])
        self.aero_mach = _arr(tables["aero_mach"])
        self.ca = _arr(tables["ca"])
        self.cna = _arr(tables["cna"])
        self.cyb = _arr(tables["cyb"])
        self.isa_h = _arr(tables["isa_h"])
        self.isa_lapse = _arr(tables["isa_lapse"])
        self.isa_t = _arr(tables["isa_t"])
        self.isa_p = _arr(tables["isa_p"])
        self.l_acf = _arr(tables["l_acf"])
        self.l_pcf = _arr(tables["l_pcf"])
        self.S = scalars["S"]
        self.d = scalars["d"]
        self.x_gimbal = scalars["x_gimbal"]
        self.C_lp = scalars["C_lp"]
        self.C_mq = scalars["C_mq"]
        self.C_nr = scalars["C_nr"]
        self.v_e = scalars["v_e"]
        self.A_e = scalars["A_e"]
        self.p_e = scalars["p_e"]
        self.k_roll = scalars["k_roll"]
        self.roll_torque = scalars["roll_torque"]
        self.floor = scalars["floor"]
        self.tau = scalars["tau"]
        self.rate_limit = scalars["rate_limit"]
        self.limit = scalars["limit"]
        self.margin = scalars["margin"]
        self.g0 = scalars["g0"]
        self.r_earth = scalars["r_earth"]
        self.r_air = scalars["r_air"]
        self.gamma = scalars["gamma"]
        self.r0_geopot = scalars["r0_geopot"]
        self.h_max = scalars["h_max"]
        self.filters = int(scalars["filters"])
        self.sf_buf[0] = 0.0
        self.sf_buf[1] = 0.0
        self.sf_buf[2] = 0.0

    cdef void _atmosphere(self, double h, double* pa, double* rho, double* a_snd) noexcept nogil:
        cdef double hp, lapse, dh, t0, p0, temp, pres
        cdef Py_ssize_t i = 0, nl = self.isa_lapse.shape[0]
        if h < 0.0:
            h = 0.0
        elif h > self.h_max:
            h = self.h_max
        hp = self.r0_geopot * h / (self.r0_geopot + h)
        while i < nl - 1 and hp >= self.isa_h[i + 1]:
            i += 1
        lapse = self.isa_lapse[i]
        dh = hp - self.isa_h[i]
        t0 = self.isa_t[i]
        p0 = self.isa_p[i]
        temp = t0 + lapse * dh
        if lapse == 0.0:
            pres = p0 * exp(-self.g0 * dh / (self.r_air * t0))
        else:
            pres = p0 * pow(temp / t0, -self.g0 / (lapse * self.r_air))
        pa[0] = pres
        rho[0] = pres / (self.r_air * temp)
        a_snd[0] = sqrt(self.gamma * self.r_air * temp)

    cdef inline double _gravity(self, double h) noexcept nogil:
        cdef double re = self.r_earth
        return self.g0 * re * re / ((re + h) * (re + h))

    cdef inline double _dynamic_thrust(self, double t) noexcept nogil:
        cdef Py_ssize_t n = self.thrust_t.shape[0]
        if t < self.thrust_t[0] or t > self.thrust_t[n - 1]:
            return 0.0
        return _interp(self.thrust_t, self.thrust_f, t)

    cdef int _rhs(self, double t, double* y, double mu_p, double mu_y, double* wind,
                  double* hold, double* dy) noexcept nogil:
        cdef double u = y[3], v = y[4], w = y[5]
        cdef double p = y[6], q = y[7], r = y[8]
        cdef double phi = y[9], th = y[10], psi = y[11]
        cdef double m = y[12]
        cdef double pa, rho, a_snd, g, h
        cdef double cf, sf, ct, st, cp, sp
        cdef double r00, r01, r02, r10, r11, r12, r20, r21, r22
        cdef double ur, vr, wr, V, mach, xcm, jl, jt, xcp, sm, arm, c_a, c_na, c_yb
        cdef double t_dyn, thrust, cmp_, smp, cmy, smy, fpx, fpy, fpz, tpy, tpz
        cdef double qbar, alpha, beta, c_l, dm, dn, sb, k, c_n, c_y, c_m, c_nn, qs, qsd
        cdef double fax, fay, faz, tax, tay, taz, mg, fx, fy, fz, tx, ty, tz, tt
        cdef double asx, asy, asz, wrx
        cdef int i
        if not isfinite(th):
            return 3
        if fabs(th) >= 0.5 * M_PI - self.margin:
            return 2
        h = y[0]
        self._atmosphere(h, &pa, &rho, &a_snd)
        g = self._gravity(h)

        cf = cos(phi); sf = sin(phi)
        ct = cos(th); st = sin(th)
        cp = cos(psi); sp = sin(psi)
        r00 = ct * cp
        r01 = sf * st * cp - cf * sp
        r02 = cf * st * cp + sf * sp
        r10 = ct * sp
        r11 = sf * st * sp + cf * cp
        r12 = cf * st * sp - sf * cp
        r20 = -st
        r21 = sf * ct
        r22 = cf * ct

        ur = u - (r00 * wind[0] + r10 * wind[1] + r20 * wind[2])
        vr = v - (r01 * wind[0] + r11 * wind[1] + r21 * wind[2])
        wr = w - (r02 * wind[0] + r12 * wind[1] + r22 * wind[2])
        V = sqrt(ur * ur + vr * vr + wr * wr)
        mach = V / a_snd

        xcm = _interp(self.mass_t, self.xcm, t)
        jl = _interp(self.mass_t, self.jl, t)
        jt = _interp(self.mass_t, self.jt, t)
        xcp = _interp(self.xcp_mach, self.xcp, mach)
        sm = (xcp - xcm) / self.d
        arm = self.x_gimbal - xcm
        c_a = _interp(self.aero_mach, self.ca, mach)
        c_na = _interp(self.aero_mach, self.cna, mach)
        c_yb = _interp(self.aero_mach, self.cyb, mach)

        t_dyn = self._dynamic_thrust(t)
        thrust = t_dyn + (self.p_e - pa) * self.A_e
        if thrust < 0.0:
            thrust = 0.0

        cmp_ = cos(mu_p); smp = sin(mu_p)
        cmy = cos(mu_y); smy = sin(mu_y)
        fpx = thrust * cmp_ * cmy
        fpy = -thrust * cmp_ * smy
        fpz = -thrust * smp
        tpy = -thrust * smp * arm
        tpz = thrust * cmp_ * smy * arm

        qbar = 0.5 * rho * V * V
        if V < self.floor:
            alpha = 0.0
            beta = 0.0
            c_l = 0.0
            dm = 0.0
            dn = 0.0
        else:
            alpha = atan2(wr, ur)
            sb = vr / V
            if sb > 1.0:
                sb = 1.0
            elif sb < -1.0:
                sb = -1.0
            beta = asin(sb)
            k = self.d / (2.0 * V)
            c_l = self.C_lp * p * k
            dm = self.C_mq * q * k
            dn = self.C_nr * r * k
        c_n = c_na * alpha
        c_y = c_yb * beta
        c_m = -c_n * sm + dm
        c_nn = -c_y * sm + dn
        qs = qbar * self.S
        fax = -qs * c_a
        fay = qs * c_y
        faz = -qs * c_n
        qsd = qs * self.d
        tax = qsd * c_l
        tay = qsd * c_m
        taz = qsd * c_nn

        mg = m * g
        fx = -mg * r00 + fpx + fax
        fy = -mg * r01 + fpy + fay
        fz = -mg * r02 + fpz + faz
        tx = tax - self.k_roll * p + self.roll_torque
        ty = tpy + tay
        tz = tpz + taz

        dy[0] = r00 * u + r01 * v + r02 * w
        dy[1] = r10 * u + r11 * v + r12 * w
        dy[2] = r20 * u + r21 * v + r22 * w
        dy[3] = -(q * w - r * v) + fx / m
        dy[4] = -(r * u - p * w) + fy / m
        dy[5] = -(p * v - q * u) + fz / m
        dy[6] = (-(q * jt * r - r * jt * q) + tx) / jl
        dy[7] = (-(r * jl * p - p * jt * r) + ty) / jt
        dy[8] = (-(p * jt * q - q * jl * p) + tz) / jt
        tt = st / ct
        dy[9] = p + (q * sf + r * cf) * tt
        dy[10] = q * cf - r * sf
        dy[11] = (q * sf + r * cf) / ct
        dy[12] = -t_dyn / self.v_e

        asx = (fpx + fax) / m
        asy = (fpy + fay) / m
        asz = (fpz + faz) / m
        self.sf_buf[0] = asx
        self.sf_buf[1] = asy
        self.sf_buf[2] = asz

        wrx = p + hold[3] + hold[6]
        dy[13] = wrx - y[17]
        if self.filters == 0:
            for i in range(14, N_STATE):
                dy[i] = 0.0
            return 0
        self._filter_rhs(y, dy, phi, th, psi, p, q, r, asx, asy, asz, hold)
        return 0

    cdef void _filter_rhs(self, double* y, double* dy, double phi, double th, double psi,
                          double p, double q, double r, double asx, double asy, double asz,
                          double* hold) noexcept nogil:
        cdef double lrf, lrt, lrp, wcx, wcy, wcz, cf, sf, ct, st, cp, sp, tt, e0, e1, e2
        cdef double r00, r01, r02, r10, r11, r12, r20, r21, r22
        cdef double ex, ey, ez, ax, ay, az, g_hat, l3x, l3y, l3z
        lrf = phi + hold[0]
        lrt = th + hold[1]
        lrp = psi + hold[2]
        wcx = p + hold[3] + hold[6] - y[17]
        wcy = q + hold[4] + hold[7] - y[18]
        wcz = r + hold[5] + hold[8] - y[19]
        cf = cos(lrf); sf = sin(lrf)
        ct = cos(lrt)
        tt = tan(lrt)
        e0 = lrf - y[14]
        e1 = lrt - y[15]
        e2 = lrp - y[16]
        dy[14] = wcx + (wcy * sf + wcz * cf) * tt + self.l_acf[0] * e0 + self.l_acf[1] * e1 + self.l_acf[2] * e2
        dy[15] = wcy * cf - wcz * sf + self.l_acf[3] * e0 + self.l_acf[4] * e1 + self.l_acf[5] * e2
        dy[16] = (wcy * sf + wcz * cf) / ct + self.l_acf[6] * e0 + self.l_acf[7] * e1 + self.l_acf[8] * e2
        dy[17] = self.l_acf[9] * e0 + self.l_acf[10] * e1 + self.l_acf[11] * e2
        dy[18] = self.l_acf[12] * e0 + self.l_acf[13] * e1 + self.l_acf[14] * e2
        dy[19] = self.l_acf[15] * e0 + self.l_acf[16] * e1 + self.l_acf[17] * e2

        cf = cos(y[14]); sf = sin(y[14])
        ct = cos(y[15]); st = sin(y[15])
        cp = cos(y[16]); sp = sin(y[16])
        r00 = ct * cp
        r01 = sf * st * cp - cf * sp
        r02 = cf * st * cp + sf * sp
        r10 = ct * sp
        r11 = sf * st * sp + cf * cp
        r12 = cf * st * sp - sf * cp
        r20 = -st
        r21 = sf * ct
        r22 = cf * ct
        ex = y[0] + hold[15] - y[20]
        ey = y[1] + hold[16] - y[21]
        ez = y[2] + hold[17] - y[22]
        ax = asx + hold[9] + hold[12] - y[26]
        ay = asy + hold[10] + hold[13] - y[27]
        az = asz + hold[11] + hold[14] - y[28]
        g_hat = self._gravity(y[20])
        dy[20] = y[23] + self.l_pcf[0] * ex + self.l_pcf[1] * ey + self.l_pcf[2] * ez
        dy[21] = y[24] + self.l_pcf[3] * ex + self.l_pcf[4] * ey + self.l_pcf[5] * ez
        dy[22] = y[25] + self.l_pcf[6] * ex + self.l_pcf[7] * ey + self.l_pcf[8] * ez
        dy[23] = r00 * ax + r01 * ay + r02 * az - g_hat + self.l_pcf[9] * ex + self.l_pcf[10] * ey + self.l_pcf[11] * ez
        dy[24] = r10 * ax + r11 * ay + r12 * az + self.l_pcf[12] * ex + self.l_pcf[13] * ey + self.l_pcf[14] * ez
        dy[25] = r20 * ax + r21 * ay + r22 * az + self.l_pcf[15] * ex + self.l_pcf[16] * ey + self.l_pcf[17] * ez
        l3x = self.l_pcf[18] * ex + self.l_pcf[19] * ey + self.l_pcf[20] * ez
        l3y = self.l_pcf[21] * ex + self.l_pcf[22] * ey + self.l_pcf[23] * ez
        l3z = self.l_pcf[24] * ex + self.l_pcf[25] * ey + self.l_pcf[26] * ez
        dy[26] = r00 * l3x + r10 * l3y + r20 * l3z
        dy[27] = r01 * l3x + r11 * l3y + r21 * l3z
        dy[28] = r02 * l3x + r12 * l3y + r22 * l3z

    cdef inline double _vertical_speed(self, double* y) noexcept nogil:
        cdef double cf = cos(y[9]), sf = sin(y[9]), ct = cos(y[10]), st = sin(y[10])
        cdef double cp = cos(y[11]), sp = sin(y[11])
        return ct * cp * y[3] + (sf * st * cp - cf * sp) * y[4] + (cf * st * cp + sf * sp) * y[5]

    cdef void _actuator(self, double* act, double* cmd, double dt) noexcept nogil:
        cdef double decay = exp(-dt / self.tau)
        cdef double max_step = self.rate_limit * dt
        cdef double target, step, val
        cdef int i
        for i in range(2):
            target = cmd[i] + (act[i] - cmd[i]) * decay
            step = target - act[i]
            if step > max_step:
                step = max_step
            elif step < -max_step:
                step = -max_step
            val = act[i] + step
            if val > self.limit:
                val = self.limit
            elif val < -self.limit:
                val = -self.limit
            act[i] = val

    def rhs(self, double t, double[::1] y, double mu_p, double mu_y, double[::1] wind,
            double[::1] hold, double[::1] dy):
        return self._rhs(t, &y[0], mu_p, mu_y, &wind[0], &hold[0], &dy[0])

    def derivative(self, double t, y, double mu_p, double mu_y, wind, hold):
        cdef double[::1] yy = np.ascontiguousarray(y, dtype=np.float64).copy()
        cdef double[::1] ww = np.ascontiguousarray(wind, dtype=np.float64)
        cdef double[::1] hh = np.ascontiguousarray(hold, dtype=np.float64)
        cdef double[::1] dy = np.zeros(N_STATE)
        status = self._rhs(t, &yy[0], mu_p, mu_y, &ww[0], &hh[0], &dy[0])
        return status, list(dy)

    def specific_force(self, double t, y, double mu_p, double mu_y, wind):
        status, _ = self.derivative(t, y, mu_p, mu_y, wind, np.zeros(N_HOLD))
        if status != 0:
            raise ValueError(f"plant evaluation failed with status {status}")
        return [self.sf_buf[0], self.sf_buf[1], self.sf_buf[2]]

    def propagate(self, double t0, double[::1] y, double[::1] act, double[::1] cmd,
                  double[::1] wind, double[::1] hold, long n_steps, double dt, bint detect_apogee):
        cdef double k1[N_STATE]
        cdef double k2[N_STATE]
        cdef double k3[N_STATE]
        cdef double k4[N_STATE]
        cdef double yt[N_STATE]
        cdef double y0[N_STATE]
        cdef double* yp = &y[0]
        cdef double* ap = &act[0]
        cdef double* wp = &wind[0]
        cdef double* hp = &hold[0]
        cdef double t = t0, half = 0.5 * dt, sixth = dt / 6.0
        cdef double mp, my, vx0, vx1, s
        cdef long step
        cdef int i, j, st
        cdef int status = 0
        with nogil:
            for step in range(n_steps):
                self._actuator(ap, &cmd[0], dt)
                mp = ap[0]
                my = ap[1]
                for i in range(N_STATE):
                    y0[i] = yp[i]
                vx0 = self._vertical_speed(yp)
                st = self._rhs(t, yp, mp, my, wp, hp, k1)
                if st:
                    status = st
                    break
                for i in range(N_STATE):
                    yt[i] = yp[i] + half * k1[i]
                st = self._rhs(t + half, yt, mp, my, wp, hp, k2)
                if st:
                    status = st
                    break
                for i in range(N_STATE):
                    yt[i] = yp[i] + half * k2[i]
                st = self._rhs(t + half, yt, mp, my, wp, hp, k3)
                if st:
                    status = st
                    break
                for i in range(N_STATE):
                    yt[i] = yp[i] + dt * k3[i]
                st = self._rhs(t + dt, yt, mp, my, wp, hp, k4)
                if st:
                    status = st
                    break
                for i in range(N_STATE):
                    yp[i] = yp[i] + sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                for i in range(N_STATE):
                    if not isfinite(yp[i]):
                        for j in range(N_STATE):
                            yp[j] = y0[j]
                        status = 3
                        break
                if status:
                    break
                t = t0 + (step + 1) * dt
                if detect_apogee:
                    vx1 = self._vertical_speed(yp)
                    if vx0 > 0.0 and vx1 <= 0.0:
                        s = vx0 / (vx0 - vx1)
                        for i in range(N_STATE):
                            yp[i] = y0[i] + s * (yp[i] - y0[i])
                        t = t - dt + s * dt
                        status = 1
                        break
        return status, t
