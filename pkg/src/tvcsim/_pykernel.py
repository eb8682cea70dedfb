"""Pure-Python plant kernel.

Scalar transliteration of ``_ckernel.pyx``; used when the compiled extension
is unavailable or ``TVCSIM_PURE_PYTHON=1`` is set. Both backends expose the
same :class:`Plant` interface and are cross-checked in the test suite.

Extended state layout (29 entries)::

    0-2   p       inertial position (x up)
    3-5   v       body velocity
    6-8   omega   body rates
    9-11  lam     Euler angles
    12    m       mass
    13    chi     integrated roll angle for spin correction
    14-16 lam_hat attitude estimate
    17-19 b_w     gyro bias estimate
    20-22 p_hat   position estimate
    23-25 v_hat   inertial velocity estimate
    26-28 b_a     accelerometer bias estimate

``hold`` (18 entries) carries the sensor errors frozen over one GNC tick:
Euler-reading noise, gyro noise, gyro bias, accel noise, accel bias, GNSS
noise, three entries each.
"""

import math

N_STATE = 29
N_HOLD = 18

STATUS_OK = 0
STATUS_APOGEE = 1
STATUS_SINGULAR = 2
STATUS_NONFINITE = 3

BACKEND = "python"


def _interp(xs, ys, x):
    n = len(xs)
    if x <= xs[0]:
        return ys[0]
    if x >= xs[n - 1]:
        return ys[n - 1]
    lo, hi = 0, n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if xs[mid] <= x:
            lo = mid
        else:
            hi = mid
    f = (x - xs[lo]) / (xs[hi] - xs[lo])
    return ys[lo] + f * (ys[hi] - ys[lo])


class Plant:
    """Nonlinear plant plus co-integrated complementary filters.

    Args:
        tables: dict of 1-D float sequences (see ``kernels.plant_tables``).
        scalars: dict of float parameters (see ``kernels.plant_tables``).
    """

    def __init__(self, tables, scalars):
        self.thrust_t = [float(v) for v in tables["thrust_t"]]
        self.thrust_f = [float(v) for v in tables["thrust_f"]]
        self.mass_t = [float(v) for v in tables["mass_t"]]
        self.xcm = [float(v) for v in tables["xcm"]]
        self.jl = [float(v) for v in tables["jl"]]
        self.jt = [float(v) for v in tables["jt"]]
        self.xcp_mach = [float(v) for v in tables["xcp_mach"]]
        self.xcp = [float(v) for v in tables["xcp"]]
        self.aero_mach = [float(v) for v in tables["aero_mach"]]
        self.ca = [float(v) for v in tables["ca"]]
        self.cna = [float(v) for v in tables["cna"]]
        self.cyb = [float(v) for v in tables["cyb"]]
        self.isa_h = [float(v) for v in tables["isa_h"]]
        self.isa_lapse = [float(v) for v in tables["isa_lapse"]]
        self.isa_t = [float(v) for v in tables["isa_t"]]
        self.isa_p = [float(v) for v in tables["isa_p"]]
        self.l_acf = [float(v) for v in tables["l_acf"]]  # 6x3 row-major
        self.l_pcf = [float(v) for v in tables["l_pcf"]]  # L1, L2, L3 row-major
        s = scalars
        self.S = s["S"]
        self.d = s["d"]
        self.x_gimbal = s["x_gimbal"]
        self.C_lp = s["C_lp"]
        self.C_mq = s["C_mq"]
        self.C_nr = s["C_nr"]
        self.v_e = s["v_e"]
        self.A_e = s["A_e"]
        self.p_e = s["p_e"]
        self.k_roll = s["k_roll"]
        self.roll_torque = s["roll_torque"]
        self.floor = s["floor"]
        self.tau = s["tau"]
        self.rate_limit = s["rate_limit"]
        self.limit = s["limit"]
        self.margin = s["margin"]
        self.g0 = s["g0"]
        self.r_earth = s["r_earth"]
        self.r_air = s["r_air"]
        self.gamma = s["gamma"]
        self.r0_geopot = s["r0_geopot"]
        self.h_max = s["h_max"]
        self.filters = int(s["filters"])
        self.last_specific_force = [0.0, 0.0, 0.0]

    # -- environment -----------------------------------------------------

    def atmosphere(self, h):
        if h < 0.0:
            h = 0.0
        elif h > self.h_max:
            h = self.h_max
        hp = self.r0_geopot * h / (self.r0_geopot + h)
        i = 0
        nl = len(self.isa_lapse)
        while i < nl - 1 and hp >= self.isa_h[i + 1]:
            i += 1
        lapse = self.isa_lapse[i]
        dh = hp - self.isa_h[i]
        t0 = self.isa_t[i]
        p0 = self.isa_p[i]
        temp = t0 + lapse * dh
        if lapse == 0.0:
            pa = p0 * math.exp(-self.g0 * dh / (self.r_air * t0))
        else:
            pa = p0 * (temp / t0) ** (-self.g0 / (lapse * self.r_air))
        return pa, pa / (self.r_air * temp), math.sqrt(self.gamma * self.r_air * temp)

    def gravity(self, h):
        re = self.r_earth
        return self.g0 * re * re / ((re + h) * (re + h))

    def dynamic_thrust(self, t):
        n = len(self.thrust_t)
        if t < self.thrust_t[0] or t > self.thrust_t[n - 1]:
            return 0.0
        return _interp(self.thrust_t, self.thrust_f, t)

    # -- derivative --------------------------------------------------------

    def rhs(self, t, y, mu_p, mu_y, wind, hold, dy):
        """Fill ``dy`` with the state derivative; return a status code."""
        u, v, w = y[3], y[4], y[5]
        p, q, r = y[6], y[7], y[8]
        phi, th, psi = y[9], y[10], y[11]
        m = y[12]
        if not math.isfinite(th):
            return STATUS_NONFINITE
        if abs(th) >= 0.5 * math.pi - self.margin:
            return STATUS_SINGULAR
        h = y[0]
        pa, rho, a_snd = self.atmosphere(h)
        g = self.gravity(h)

        cf, sf = math.cos(phi), math.sin(phi)
        ct, st = math.cos(th), math.sin(th)
        cp, sp = math.cos(psi), math.sin(psi)
        r00 = ct * cp
        r01 = sf * st * cp - cf * sp
        r02 = cf * st * cp + sf * sp
        r10 = ct * sp
        r11 = sf * st * sp + cf * cp
        r12 = cf * st * sp - sf * cp
        r20 = -st
        r21 = sf * ct
        r22 = cf * ct

        wx, wy, wz = wind[0], wind[1], wind[2]
        ur = u - (r00 * wx + r10 * wy + r20 * wz)
        vr = v - (r01 * wx + r11 * wy + r21 * wz)
        wr = w - (r02 * wx + r12 * wy + r22 * wz)
        V = math.sqrt(ur * ur + vr * vr + wr * wr)
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

        t_dyn = self.dynamic_thrust(t)
        thrust = t_dyn + (self.p_e - pa) * self.A_e
        if thrust < 0.0:
            thrust = 0.0

        cmp_, smp = math.cos(mu_p), math.sin(mu_p)
        cmy, smy = math.cos(mu_y), math.sin(mu_y)
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
            alpha = math.atan2(wr, ur)
            sb = vr / V
            if sb > 1.0:
                sb = 1.0
            elif sb < -1.0:
                sb = -1.0
            beta = math.asin(sb)
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
        sfv = self.last_specific_force
        sfv[0] = asx
        sfv[1] = asy
        sfv[2] = asz

        # gyro-derived roll rate drives the spin-correction angle
        wrx = p + hold[3] + hold[6]
        if self.filters == 0:
            dy[13] = wrx - y[17]
            for i in range(14, N_STATE):
                dy[i] = 0.0
            return STATUS_OK
        dy[13] = wrx - y[17]
        self._filter_rhs(y, dy, g, phi, th, psi, p, q, r, asx, asy, asz, hold)
        return STATUS_OK

    def _filter_rhs(self, y, dy, g_true, phi, th, psi, p, q, r, asx, asy, asz, hold):
        la = self.l_acf
        lp = self.l_pcf
        # attitude complementary filter
        lrf = phi + hold[0]
        lrt = th + hold[1]
        lrp = psi + hold[2]
        wcx = p + hold[3] + hold[6] - y[17]
        wcy = q + hold[4] + hold[7] - y[18]
        wcz = r + hold[5] + hold[8] - y[19]
        cf, sf = math.cos(lrf), math.sin(lrf)
        ct = math.cos(lrt)
        tt = math.tan(lrt)
        e0 = lrf - y[14]
        e1 = lrt - y[15]
        e2 = lrp - y[16]
        dy[14] = wcx + (wcy * sf + wcz * cf) * tt + la[0] * e0 + la[1] * e1 + la[2] * e2
        dy[15] = wcy * cf - wcz * sf + la[3] * e0 + la[4] * e1 + la[5] * e2
        dy[16] = (wcy * sf + wcz * cf) / ct + la[6] * e0 + la[7] * e1 + la[8] * e2
        dy[17] = la[9] * e0 + la[10] * e1 + la[11] * e2
        dy[18] = la[12] * e0 + la[13] * e1 + la[14] * e2
        dy[19] = la[15] * e0 + la[16] * e1 + la[17] * e2

        # position complementary filter, rotation from the attitude estimate
        hf, ht, hp_ = y[14], y[15], y[16]
        cf, sf = math.cos(hf), math.sin(hf)
        ct, st = math.cos(ht), math.sin(ht)
        cp, sp = math.cos(hp_), math.sin(hp_)
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
        g_hat = self.gravity(y[20])
        dy[20] = y[23] + lp[0] * ex + lp[1] * ey + lp[2] * ez
        dy[21] = y[24] + lp[3] * ex + lp[4] * ey + lp[5] * ez
        dy[22] = y[25] + lp[6] * ex + lp[7] * ey + lp[8] * ez
        dy[23] = r00 * ax + r01 * ay + r02 * az - g_hat + lp[9] * ex + lp[10] * ey + lp[11] * ez
        dy[24] = r10 * ax + r11 * ay + r12 * az + lp[12] * ex + lp[13] * ey + lp[14] * ez
        dy[25] = r20 * ax + r21 * ay + r22 * az + lp[15] * ex + lp[16] * ey + lp[17] * ez
        l3x = lp[18] * ex + lp[19] * ey + lp[20] * ez
        l3y = lp[21] * ex + lp[22] * ey + lp[23] * ez
        l3z = lp[24] * ex + lp[25] * ey + lp[26] * ez
        dy[26] = r00 * l3x + r10 * l3y + r20 * l3z
        dy[27] = r01 * l3x + r11 * l3y + r21 * l3z
        dy[28] = r02 * l3x + r12 * l3y + r22 * l3z

    def specific_force(self, t, y, mu_p, mu_y, wind):
        """Body specific force (thrust + aero over mass) at ``(t, y)``."""
        dy = [0.0] * N_STATE
        status = self.rhs(t, y, mu_p, mu_y, wind, [0.0] * N_HOLD, dy)
        if status != STATUS_OK:
            raise ValueError(f"plant evaluation failed with status {status}")
        return list(self.last_specific_force)

    def derivative(self, t, y, mu_p, mu_y, wind, hold):
        """Convenience wrapper returning ``(status, dy)`` as lists."""
        dy = [0.0] * N_STATE
        status = self.rhs(t, list(y), mu_p, mu_y, wind, hold, dy)
        return status, dy

    # -- integration -------------------------------------------------------

    def _actuator(self, act, cmd, dt):
        decay = math.exp(-dt / self.tau)
        max_step = self.rate_limit * dt
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

    def propagate(self, t0, y, act, cmd, wind, hold, n_steps, dt, detect_apogee):
        """Advance ``y`` and ``act`` in place by up to ``n_steps`` RK4 steps.

        The actuator is updated once per step (exact first-order lag, rate and
        position limits) and held through the step. Returns ``(status, t)``;
        on apogee the state is interpolated to the vertical-velocity zero.
        """
        n = N_STATE
        k1 = [0.0] * n
        k2 = [0.0] * n
        k3 = [0.0] * n
        k4 = [0.0] * n
        yt = [0.0] * n
        y0 = [0.0] * n
        t = t0
        half = 0.5 * dt
        for _ in range(n_steps):
            self._actuator(act, cmd, dt)
            mp, my = act[0], act[1]
            for i in range(n):
                y0[i] = y[i]
            vx0 = self._vertical_speed(y)
            st = self.rhs(t, y, mp, my, wind, hold, k1)
            if st:
                return st, t
            for i in range(n):
                yt[i] = y[i] + half * k1[i]
            st = self.rhs(t + half, yt, mp, my, wind, hold, k2)
            if st:
                return st, t
            for i in range(n):
                yt[i] = y[i] + half * k2[i]
            st = self.rhs(t + half, yt, mp, my, wind, hold, k3)
            if st:
                return st, t
            for i in range(n):
                yt[i] = y[i] + dt * k3[i]
            st = self.rhs(t + dt, yt, mp, my, wind, hold, k4)
            if st:
                return st, t
            sixth = dt / 6.0
            for i in range(n):
                y[i] = y[i] + sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            for i in range(n):
                if not math.isfinite(y[i]):
                    for j in range(n):
                        y[j] = y0[j]
                    return STATUS_NONFINITE, t
            t = t0 + (_ + 1) * dt
            if detect_apogee:
                vx1 = self._vertical_speed(y)
                if vx0 > 0.0 and vx1 <= 0.0:
                    s = vx0 / (vx0 - vx1)
                    for i in range(n):
                        y[i] = y0[i] + s * (y[i] - y0[i])
                    return STATUS_APOGEE, t - dt + s * dt
        return STATUS_OK, t

    @staticmethod
    def _vertical_speed(y):
        cf, sf = math.cos(y[9]), math.sin(y[9])
        ct, st = math.cos(y[10]), math.sin(y[10])
        cp = math.cos(y[11])
        return ct * cp * y[3] + (sf * st * cp - cf * math.sin(y[11])) * y[4] \
            + (cf * st * cp + sf * math.sin(y[11])) * y[5]
