# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels. Operation order follows ``_kernels_py`` exactly; do not
build with -ffast-math or FMA contraction, it breaks cross-backend equality."""
from libc.math cimport cos, sin, sqrt, fabs, M_PI

BACKEND = "cython"

cdef double TWO_PI = 2.0 * M_PI
cdef int BISECT_ITERS = 16
cdef int MAX_BOXES = 16

DEF P_WHEEL_R = 0
DEF P_AXLE = 1
DEF P_BODY_R = 2
DEF P_OMEGA_L = 3
DEF P_OMEGA_R = 4
DEF P_DT = 5
DEF P_SUBSTEPS = 6
DEF P_K_ROT = 7


def radial_moment_midpoint(double X, double Y, long n):
    cdef double hx = X / n
    cdef double hy = Y / n
    cdef long i, j, m
    cdef double x, yy, row, total = 0.0
    if n % 2 == 0:
        m = n // 2
        for i in range(m):
            x = (i + 0.5) * hx
            row = 0.0
            for j in range(m):
                yy = (j + 0.5) * hy
                row += sqrt(x * x + yy * yy)
            total += row
        return 4.0 * total * hx * hy
    for i in range(n):
        x = (i + 0.5) * hx - 0.5 * X
        row = 0.0
        for j in range(n):
            yy = (j + 0.5) * hy - 0.5 * Y
            row += sqrt(x * x + yy * yy)
        total += row
    return total * hx * hy


cdef inline double wrap_angle(double a) nogil:
    while a > M_PI:
        a -= TWO_PI
    while a <= -M_PI:
        a += TWO_PI
    return a


cdef inline void disc_box_contact(double px, double py, double r, double bx, double by,
                                  double byaw, double hw, double hl, double* out) nogil:
    cdef double c = cos(byaw)
    cdef double s = sin(byaw)
    cdef double dx = px - bx
    cdef double dy = py - by
    cdef double lx = c * dx + s * dy
    cdef double ly = -s * dx + c * dy
    cdef double qx = lx, qy = ly, ex, ey, d2, d, depth, nlx, nly, gx, gy, sx, sy
    if qx > hw:
        qx = hw
    elif qx < -hw:
        qx = -hw
    if qy > hl:
        qy = hl
    elif qy < -hl:
        qy = -hl
    ex = qx - lx
    ey = qy - ly
    d2 = ex * ex + ey * ey
    if d2 > 0.0:
        d = sqrt(d2)
        if d >= r:
            out[0] = r - d
            out[1] = 0.0
            out[2] = 0.0
            out[3] = 0.0
            return
        depth = r - d
        nlx = ex / d
        nly = ey / d
    else:
        gx = hw - fabs(lx)
        gy = hl - fabs(ly)
        if gx <= gy:
            sx = 1.0 if lx >= 0.0 else -1.0
            nlx = -sx
            nly = 0.0
            qx = sx * hw
            depth = gx + r
        else:
            sy = 1.0 if ly >= 0.0 else -1.0
            nlx = 0.0
            nly = -sy
            qy = sy * hl
            depth = gy + r
    out[0] = depth
    out[1] = c * nlx - s * nly
    out[2] = s * nlx + c * nly
    out[3] = qx * nly - qy * nlx


cdef inline double disc_rect_overlap(double px, double py, double r, double xmin, double ymin,
                                     double xmax, double ymax) nogil:
    cdef double qx = px, qy = py, ex, ey, d2, g, t
    if qx > xmax:
        qx = xmax
    elif qx < xmin:
        qx = xmin
    if qy > ymax:
        qy = ymax
    elif qy < ymin:
        qy = ymin
    ex = qx - px
    ey = qy - py
    d2 = ex * ex + ey * ey
    if d2 > 0.0:
        return r - sqrt(d2)
    g = px - xmin
    t = xmax - px
    if t < g:
        g = t
    t = py - ymin
    if t < g:
        g = t
    t = ymax - py
    if t < g:
        g = t
    return r + g


cdef inline double box_box_overlap(double ax, double ay, double ayaw, double ahw, double ahl,
                                   double bx, double by, double byaw, double bhw, double bhl) nogil:
    cdef double ca = cos(ayaw)
    cdef double sa = sin(ayaw)
    cdef double cb = cos(byaw)
    cdef double sb = sin(byaw)
    cdef double dx = bx - ax
    cdef double dy = by - ay
    cdef double best = 1e300, ux, uy, ra, rb, o
    cdef int k
    for k in range(4):
        if k == 0:
            ux = ca
            uy = sa
        elif k == 1:
            ux = -sa
            uy = ca
        elif k == 2:
            ux = cb
            uy = sb
        else:
            ux = -sb
            uy = cb
        ra = ahw * fabs(ca * ux + sa * uy) + ahl * fabs(-sa * ux + ca * uy)
        rb = bhw * fabs(cb * ux + sb * uy) + bhl * fabs(-sb * ux + cb * uy)
        o = ra + rb - fabs(dx * ux + dy * uy)
        if o < best:
            best = o
    return best


cdef void advance(double* base, double* state, int nb, double* half, double* obstacles, int nobs,
                  double* prm, double h, double* dxs, double* dths, double* pushed,
                  double* rov_out, double* bov_out) nogil:
    cdef double wr = prm[P_WHEEL_R]
    cdef double u = wr * (prm[P_OMEGA_L] + prm[P_OMEGA_R]) * 0.5
    cdef double w = wr * (prm[P_OMEGA_R] - prm[P_OMEGA_L]) / prm[P_AXLE]
    cdef double x = base[0]
    cdef double y = base[1]
    cdef double yaw = base[2]
    cdef double wh = w * h
    cdef double rad, rb, k_rot, bx, by, byaw, hw, hl, theta, trans, ov, ohw, ohl
    cdef double robot_ov, box_ov
    cdef double cont[4]
    cdef int i, j, k, o, m, q
    if fabs(wh) < 1e-12:
        x = x + u * h * cos(yaw)
        y = y + u * h * sin(yaw)
    else:
        rad = u / w
        x = x + rad * (sin(yaw + wh) - sin(yaw))
        y = y - rad * (cos(yaw + wh) - cos(yaw))
        yaw = wrap_angle(yaw + wh)
    for k in range(3 + 3 * nb):
        state[k] = base[k]
    state[0] = x
    state[1] = y
    state[2] = yaw
    rb = prm[P_BODY_R]
    k_rot = prm[P_K_ROT]

    for i in range(nb):
        j = 3 + 3 * i
        bx = state[j]
        by = state[j + 1]
        byaw = state[j + 2]
        hw = half[2 * i]
        hl = half[2 * i + 1]
        disc_box_contact(x, y, rb, bx, by, byaw, hw, hl, cont)
        dxs[i] = 0.0
        dths[i] = 0.0
        pushed[i] = 0.0
        if cont[0] > 0.0:
            theta = k_rot * cont[3] * cont[0]
            byaw = wrap_angle(byaw + theta)
            disc_box_contact(x, y, rb, bx, by, byaw, hw, hl, cont)
            trans = 0.0
            if cont[0] > 0.0:
                bx = bx + cont[1] * cont[0]
                by = by + cont[2] * cont[0]
                trans = cont[0]
            state[j] = bx
            state[j + 1] = by
            state[j + 2] = byaw
            dxs[i] = trans
            dths[i] = fabs(theta)
            if trans > 0.0 or theta != 0.0:
                pushed[i] = 1.0

    robot_ov = -1e300
    box_ov = -1e300
    for k in range(nobs):
        o = k * 4
        ov = disc_rect_overlap(x, y, rb, obstacles[o], obstacles[o + 1],
                               obstacles[o + 2], obstacles[o + 3])
        if ov > robot_ov:
            robot_ov = ov
    for i in range(nb):
        if pushed[i] == 0.0:
            continue
        j = 3 + 3 * i
        hw = half[2 * i]
        hl = half[2 * i + 1]
        for k in range(nobs):
            o = k * 4
            ohw = 0.5 * (obstacles[o + 2] - obstacles[o])
            ohl = 0.5 * (obstacles[o + 3] - obstacles[o + 1])
            ov = box_box_overlap(state[j], state[j + 1], state[j + 2], hw, hl,
                                 obstacles[o] + ohw, obstacles[o + 1] + ohl, 0.0, ohw, ohl)
            if ov > box_ov:
                box_ov = ov
        for m in range(nb):
            if m == i:
                continue
            q = 3 + 3 * m
            ov = box_box_overlap(state[j], state[j + 1], state[j + 2], hw, hl,
                                 state[q], state[q + 1], state[q + 2],
                                 half[2 * m], half[2 * m + 1])
            if ov > box_ov:
                box_ov = ov
    rov_out[0] = robot_ov
    bov_out[0] = box_ov


def step(const double[::1] state_in, const double[::1] half, const double[::1] obstacles,
         const double[::1] prm, double[::1] state_out, double[::1] report):
    cdef int ns = state_in.shape[0]
    cdef int nb = (ns - 3) // 3
    cdef int nobs = obstacles.shape[0] // 4
    if nb > MAX_BOXES:
        raise ValueError(f"at most {MAX_BOXES} boxes supported, got {nb}")
    if state_out.shape[0] != ns or report.shape[0] != 3 * nb + 3:
        raise ValueError("output buffers have the wrong size")
    cdef double state[3 + 3 * 16]
    cdef double new[3 + 3 * 16]
    cdef double hsz[2 * 16]
    cdef double obs_empty[4]
    cdef double p[8]
    cdef double acc_dx[16]
    cdef double acc_th[16]
    cdef double acc_push[16]
    cdef double dxs[16]
    cdef double dths[16]
    cdef double pushed[16]
    cdef double* obs_ptr = obs_empty
    cdef double rov, bov, lo, hi, mid, frac, h_full, speed
    cdef double robot_hit = 0.0, box_hit = 0.0, path = 0.0
    cdef int i, k, it, substeps
    for k in range(ns):
        state[k] = state_in[k]
    for k in range(2 * nb):
        hsz[k] = half[k]
    for k in range(8):
        p[k] = prm[k]
    if nobs > 0:
        obs_ptr = <double*> &obstacles[0]
    for i in range(nb):
        acc_dx[i] = 0.0
        acc_th[i] = 0.0
        acc_push[i] = 0.0
    substeps = <int> p[P_SUBSTEPS]
    h_full = p[P_DT] / substeps
    speed = fabs(p[P_WHEEL_R] * (p[P_OMEGA_L] + p[P_OMEGA_R]) * 0.5)

    with nogil:
        for it in range(substeps):
            advance(state, new, nb, hsz, obs_ptr, nobs, p, h_full, dxs, dths, pushed, &rov, &bov)
            frac = 1.0
            if rov > 0.0 or bov > 0.0:
                if rov > 0.0:
                    robot_hit = 1.0
                if bov > 0.0:
                    box_hit = 1.0
                lo = 0.0
                hi = 1.0
                for k in range(BISECT_ITERS):
                    mid = 0.5 * (lo + hi)
                    advance(state, new, nb, hsz, obs_ptr, nobs, p, h_full * mid,
                            dxs, dths, pushed, &rov, &bov)
                    if rov > 0.0 or bov > 0.0:
                        hi = mid
                    else:
                        lo = mid
                frac = lo
                advance(state, new, nb, hsz, obs_ptr, nobs, p, h_full * lo,
                        dxs, dths, pushed, &rov, &bov)
            for k in range(ns):
                state[k] = new[k]
            path += speed * h_full * frac
            for i in range(nb):
                acc_dx[i] += dxs[i]
                acc_th[i] += dths[i]
                if pushed[i] != 0.0:
                    acc_push[i] = 1.0
            if robot_hit != 0.0 or box_hit != 0.0:
                break

    for k in range(ns):
        state_out[k] = state[k]
    for i in range(nb):
        report[i] = acc_dx[i]
        report[nb + i] = acc_th[i]
        report[2 * nb + i] = acc_push[i]
    report[3 * nb] = robot_hit
    report[3 * nb + 1] = box_hit
    report[3 * nb + 2] = path
