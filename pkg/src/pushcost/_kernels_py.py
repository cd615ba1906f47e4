"""Pure-Python kernels. ``_kernels.pyx`` mirrors these operation for operation
so both backends produce bit-identical floats."""
from math import cos, sin, sqrt, pi

import numpy as np

BACKEND = "python"

TWO_PI = 2.0 * pi
BISECT_ITERS = 16

# params layout
P_WHEEL_R, P_AXLE, P_BODY_R, P_OMEGA_L, P_OMEGA_R, P_DT, P_SUBSTEPS, P_K_ROT = range(8)
N_PARAMS = 8


def radial_moment_midpoint(X, Y, n):
    hx = X / n
    hy = Y / n
    if n % 2 == 0:
        m = n // 2
        xs = (np.arange(m, dtype=np.float64) + 0.5) * hx
        ys2 = ((np.arange(m, dtype=np.float64) + 0.5) * hy) ** 2
        total = 0.0
        for x in xs:
            total += float(np.sqrt(x * x + ys2).sum())
        return 4.0 * total * hx * hy
    xs = (np.arange(n, dtype=np.float64) + 0.5) * hx - 0.5 * X
    ys2 = ((np.arange(n, dtype=np.float64) + 0.5) * hy - 0.5 * Y) ** 2
    total = 0.0
    for x in xs:
        total += float(np.sqrt(x * x + ys2).sum())
    return total * hx * hy


def wrap_angle(a):
    while a > pi:
        a -= TWO_PI
    while a <= -pi:
        a += TWO_PI
    return a


def disc_box_contact(px, py, r, bx, by, byaw, hw, hl):
    """Penetration of a disc into an oriented box.

    Returns ``(depth, nx, ny, lever)`` where ``(nx, ny)`` is the unit direction
    the box must move to separate and ``lever`` is the cross product of the
    contact offset with that direction (box frame). ``depth <= 0`` means no
    contact.
    """
    c = cos(byaw)
    s = sin(byaw)
    dx = px - bx
    dy = py - by
    lx = c * dx + s * dy
    ly = -s * dx + c * dy
    qx = lx
    if qx > hw:
        qx = hw
    elif qx < -hw:
        qx = -hw
    qy = ly
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
            return r - d, 0.0, 0.0, 0.0
        depth = r - d
        nlx = ex / d
        nly = ey / d
    else:
        gx = hw - abs(lx)
        gy = hl - abs(ly)
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
    lever = qx * nly - qy * nlx
    nx = c * nlx - s * nly
    ny = s * nlx + c * nly
    return depth, nx, ny, lever


def disc_rect_overlap(px, py, r, xmin, ymin, xmax, ymax):
    """Overlap depth of a disc with an axis-aligned rectangle (negative = gap)."""
    qx = px
    if qx > xmax:
        qx = xmax
    elif qx < xmin:
        qx = xmin
    qy = py
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


def box_box_overlap(ax, ay, ayaw, ahw, ahl, bx, by, byaw, bhw, bhl):
    """Separating-axis overlap of two oriented rectangles (negative = gap)."""
    ca = cos(ayaw)
    sa = sin(ayaw)
    cb = cos(byaw)
    sb = sin(byaw)
    dx = bx - ax
    dy = by - ay
    best = 1e300
    # axes of A then B
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
        ra = ahw * abs(ca * ux + sa * uy) + ahl * abs(-sa * ux + ca * uy)
        rb = bhw * abs(cb * ux + sb * uy) + bhl * abs(-sb * ux + cb * uy)
        o = ra + rb - abs(dx * ux + dy * uy)
        if o < best:
            best = o
    return best


def _advance(base, nb, half, obstacles, nobs, prm, h, dxs, dths, pushed):
    """Advance one (possibly partial) substep from ``base``.

    Fills the motion accumulators of this substep and returns
    ``(state, robot_overlap, box_overlap)``.
    """
    wr = prm[P_WHEEL_R]
    u = wr * (prm[P_OMEGA_L] + prm[P_OMEGA_R]) * 0.5
    w = wr * (prm[P_OMEGA_R] - prm[P_OMEGA_L]) / prm[P_AXLE]
    x = base[0]
    y = base[1]
    yaw = base[2]
    wh = w * h
    if abs(wh) < 1e-12:
        x = x + u * h * cos(yaw)
        y = y + u * h * sin(yaw)
    else:
        rad = u / w
        x = x + rad * (sin(yaw + wh) - sin(yaw))
        y = y - rad * (cos(yaw + wh) - cos(yaw))
        yaw = wrap_angle(yaw + wh)
    state = list(base)
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
        depth, nx, ny, lever = disc_box_contact(x, y, rb, bx, by, byaw, hw, hl)
        dxs[i] = 0.0
        dths[i] = 0.0
        pushed[i] = 0.0
        if depth > 0.0:
            theta = k_rot * lever * depth
            byaw = wrap_angle(byaw + theta)
            depth2, nx, ny, lever = disc_box_contact(x, y, rb, bx, by, byaw, hw, hl)
            trans = 0.0
            if depth2 > 0.0:
                bx = bx + nx * depth2
                by = by + ny * depth2
                trans = depth2
            state[j] = bx
            state[j + 1] = by
            state[j + 2] = byaw
            dxs[i] = trans
            dths[i] = abs(theta)
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
    return state, robot_ov, box_ov


def step(state_in, half, obstacles, prm, state_out, report):
    """Advance the world by one control step of ``substeps`` substeps.

    ``state_in`` is ``[rx, ry, ryaw, b0x, b0y, b0yaw, ...]``; ``report`` receives
    ``[dx_0.., theta_0.., pushed_0.., robot_collided, box_collided, robot_path]``.
    """
    nb = (len(state_in) - 3) // 3
    nobs = len(obstacles) // 4
    state = [float(v) for v in state_in]
    half = [float(v) for v in half]
    obstacles = [float(v) for v in obstacles]
    prm = [float(v) for v in prm]
    substeps = int(prm[P_SUBSTEPS])
    h_full = prm[P_DT] / substeps
    speed = abs(prm[P_WHEEL_R] * (prm[P_OMEGA_L] + prm[P_OMEGA_R]) * 0.5)

    acc_dx = [0.0] * nb
    acc_th = [0.0] * nb
    acc_push = [0.0] * nb
    dxs = [0.0] * nb
    dths = [0.0] * nb
    pushed = [0.0] * nb
    robot_hit = 0.0
    box_hit = 0.0
    path = 0.0

    for _ in range(substeps):
        new, rov, bov = _advance(state, nb, half, obstacles, nobs, prm, h_full, dxs, dths, pushed)
        frac = 1.0
        if rov > 0.0 or bov > 0.0:
            if rov > 0.0:
                robot_hit = 1.0
            if bov > 0.0:
                box_hit = 1.0
            lo = 0.0
            hi = 1.0
            for _k in range(BISECT_ITERS):
                mid = 0.5 * (lo + hi)
                _, rov, bov = _advance(state, nb, half, obstacles, nobs, prm, h_full * mid,
                                       dxs, dths, pushed)
                if rov > 0.0 or bov > 0.0:
                    hi = mid
                else:
                    lo = mid
            frac = lo
            new, rov, bov = _advance(state, nb, half, obstacles, nobs, prm, h_full * lo,
                                     dxs, dths, pushed)
        state = new
        path += speed * h_full * frac
        for i in range(nb):
            acc_dx[i] += dxs[i]
            acc_th[i] += dths[i]
            if pushed[i] != 0.0:
                acc_push[i] = 1.0
        if robot_hit != 0.0 or box_hit != 0.0:
            break

    for k in range(len(state)):
        state_out[k] = state[k]
    for i in range(nb):
        report[i] = acc_dx[i]
        report[nb + i] = acc_th[i]
        report[2 * nb + i] = acc_push[i]
    report[3 * nb] = robot_hit
    report[3 * nb + 1] = box_hit
    report[3 * nb + 2] = path
