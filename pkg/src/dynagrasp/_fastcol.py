"""JIT-compiled hot path: FK points, capsule-obstacle tests, BiRRT core.

These kernels mirror the closed-set collision semantics of geom2d exactly
(boundary contact counts); the test suite cross-checks them against the
scalar predicates.  Obstacles are packed into plain float arrays so the
planner's inner loop runs without Python object overhead.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .geom2d import Circle, OrientedRect

# extend statuses
_BUST, _TRAPPED, _ADVANCED, _REACHED = 0, 1, 2, 3


def pack_obstacles(shapes):
    """Split shapes into (circles (C,3), rects (R,6)) float arrays."""
    circs, rects = [], []
    for s in shapes:
        if isinstance(s, Circle):
            circs.append((s.center[0], s.center[1], s.radius))
        elif isinstance(s, OrientedRect):
            rects.append(
                (s.pose.x, s.pose.y, math.cos(s.pose.phi), math.sin(s.pose.phi), s.half_w, s.half_h)
            )
        else:
            raise TypeError(f"cannot pack obstacle of type {type(s)}")
    return (
        np.array(circs, dtype=np.float64).reshape(-1, 3),
        np.array(rects, dtype=np.float64).reshape(-1, 6),
    )


@njit(cache=True)
def _seg_point_dist(ax, ay, bx, by, px, py):
    dx = bx - ax
    dy = by - ay
    L2 = dx * dx + dy * dy
    if L2 == 0.0:
        ddx = px - ax
        ddy = py - ay
        return math.sqrt(ddx * ddx + ddy * ddy)
    t = ((px - ax) * dx + (py - ay) * dy) / L2
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    ex = px - (ax + t * dx)
    ey = py - (ay + t * dy)
    return math.sqrt(ex * ex + ey * ey)


@njit(cache=True)
def _seg_box_dist(ax, ay, bx, by, cx, cy, co, si, hw, hh):
    """Distance from a segment to an oriented box; 0.0 when they touch."""
    dxa, dya = ax - cx, ay - cy
    lax = co * dxa + si * dya
    lay = -si * dxa + co * dya
    dxb, dyb = bx - cx, by - cy
    lbx = co * dxb + si * dyb
    lby = -si * dxb + co * dyb

    if abs(lax) <= hw and abs(lay) <= hh:
        return 0.0
    if abs(lbx) <= hw and abs(lby) <= hh:
        return 0.0

    dx = lbx - lax
    dy = lby - lay

    # slab clip for a segment-box crossing
    t0, t1 = 0.0, 1.0
    ok = True
    if dx == 0.0:
        if lax < -hw or lax > hw:
            ok = False
    else:
        ta = (-hw - lax) / dx
        tb = (hw - lax) / dx
        if ta > tb:
            ta, tb = tb, ta
        if ta > t0:
            t0 = ta
        if tb < t1:
            t1 = tb
    if ok:
        if dy == 0.0:
            if lay < -hh or lay > hh:
                ok = False
        else:
            ta = (-hh - lay) / dy
            tb = (hh - lay) / dy
            if ta > tb:
                ta, tb = tb, ta
            if ta > t0:
                t0 = ta
            if tb < t1:
                t1 = tb
    if ok and t0 <= t1:
        return 0.0

    # endpoint-to-box plus corner-to-segment distances
    ddx = abs(lax) - hw
    if ddx < 0.0:
        ddx = 0.0
    ddy = abs(lay) - hh
    if ddy < 0.0:
        ddy = 0.0
    best = ddx * ddx + ddy * ddy
    ddx = abs(lbx) - hw
    if ddx < 0.0:
        ddx = 0.0
    ddy = abs(lby) - hh
    if ddy < 0.0:
        ddy = 0.0
    d2 = ddx * ddx + ddy * ddy
    if d2 < best:
        best = d2

    L2 = dx * dx + dy * dy
    for sx in (-1.0, 1.0):
        for sy in (-1.0, 1.0):
            px = sx * hw
            py = sy * hh
            if L2 == 0.0:
                ex = px - lax
                ey = py - lay
            else:
                t = ((px - lax) * dx + (py - lay) * dy) / L2
                if t < 0.0:
                    t = 0.0
                elif t > 1.0:
                    t = 1.0
                ex = px - (lax + t * dx)
                ey = py - (lay + t * dy)
            d2 = ex * ex + ey * ey
            if d2 < best:
                best = d2
    return math.sqrt(best)


@njit(cache=True)
def fk_pts(q, lengths, bx, by, bphi, out):
    """Joint positions into out (n+1, 2)."""
    out[0, 0] = bx
    out[0, 1] = by
    a = bphi
    for i in range(lengths.shape[0]):
        a += q[i]
        out[i + 1, 0] = out[i, 0] + lengths[i] * math.cos(a)
        out[i + 1, 1] = out[i, 1] + lengths[i] * math.sin(a)
    return out


@njit(cache=True)
def links_hit(pts, link_r, circs, rects):
    """Any link capsule (consecutive pts, radius link_r) touching anything?"""
    n_links = pts.shape[0] - 1
    for i in range(n_links):
        ax, ay = pts[i, 0], pts[i, 1]
        bx, by = pts[i + 1, 0], pts[i + 1, 1]
        for c in range(circs.shape[0]):
            if _seg_point_dist(ax, ay, bx, by, circs[c, 0], circs[c, 1]) <= circs[c, 2] + link_r:
                return True
        for r in range(rects.shape[0]):
            if (
                _seg_box_dist(
                    ax, ay, bx, by,
                    rects[r, 0], rects[r, 1], rects[r, 2], rects[r, 3], rects[r, 4], rects[r, 5],
                )
                <= link_r
            ):
                return True
    return False


@njit(cache=True)
def config_free(q, lengths, bx, by, bphi, link_r, circs, rects):
    pts = np.empty((lengths.shape[0] + 1, 2))
    fk_pts(q, lengths, bx, by, bphi, pts)
    return not links_hit(pts, link_r, circs, rects)


@njit(cache=True)
def _extend(
    nodes,
    parents,
    cnt,
    target,
    lengths,
    bx,
    by,
    bphi,
    link_r,
    circs,
    rects,
    budget,
    charged,
    checks,
    exts,
    c_cc,
    c_ext,
    extend_step,
    resolution,
    pts,
    scratch,
):
    """One RRT extend of the tree toward target.

    Returns (status, cnt, charged, checks, exts).  On ADVANCED/REACHED the
    new node has been appended at cnt-1.
    """
    n = target.shape[0]
    if charged + c_ext > budget:
        return _BUST, cnt, charged, checks, exts
    charged += c_ext
    exts += 1

    best = 0
    best_d2 = 1e300
    for j in range(cnt):
        d2 = 0.0
        for k in range(n):
            dd = nodes[j, k] - target[k]
            d2 += dd * dd
        if d2 < best_d2:
            best_d2 = d2
            best = j

    m = 0.0
    for k in range(n):
        dd = abs(target[k] - nodes[best, k])
        if dd > m:
            m = dd
    if m <= extend_step:
        reached = True
        span = m
        f = 1.0
    else:
        reached = False
        span = extend_step
        f = extend_step / m

    steps = int(math.ceil(span / resolution))
    if steps < 1:
        steps = 1
    for t_i in range(1, steps + 1):
        if charged + c_cc > budget:
            return _BUST, cnt, charged, checks, exts
        charged += c_cc
        checks += 1
        frac = f * t_i / steps
        for k in range(n):
            scratch[k] = nodes[best, k] + (target[k] - nodes[best, k]) * frac
        fk_pts(scratch, lengths, bx, by, bphi, pts)
        if links_hit(pts, link_r, circs, rects):
            return _TRAPPED, cnt, charged, checks, exts

    if cnt == nodes.shape[0]:  # cannot happen: capacity covers budget/c_ext
        return _BUST, cnt, charged, checks, exts
    if reached:
        for k in range(n):
            nodes[cnt, k] = target[k]
    else:
        for k in range(n):
            nodes[cnt, k] = nodes[best, k] + (target[k] - nodes[best, k]) * f
    parents[cnt] = best
    cnt += 1
    return (_REACHED if reached else _ADVANCED), cnt, charged, checks, exts


@njit(cache=True)
def birrt_core(
    start,
    goal,
    lengths,
    bx,
    by,
    bphi,
    link_r,
    circs,
    rects,
    budget,
    charged0,
    checks0,
    ext0,
    c_cc,
    c_ext,
    extend_step,
    resolution,
    samples,
):
    """BiRRT main loop; start and goal are pre-validated and pre-charged.

    Returns (ok, path (K,n), charged, checks, extensions); on failure the
    caller reports elapsed == budget.
    """
    n = start.shape[0]
    charged = charged0
    checks = checks0
    exts = ext0

    cap = int((budget - charged) / c_ext) + 4
    nodes_a = np.empty((cap, n))
    nodes_b = np.empty((cap, n))
    par_a = np.empty(cap, dtype=np.int64)
    par_b = np.empty(cap, dtype=np.int64)
    nodes_a[0] = start
    nodes_b[0] = goal
    par_a[0] = -1
    par_b[0] = -1
    cnt_a = 1
    cnt_b = 1

    pts = np.empty((n + 1, 2))
    scratch = np.empty(n)
    q_conn = np.empty(n)
    empty = np.empty((0, n))

    a_turn = True  # True: extend the start tree toward the sample
    link_a = -1
    link_b = -1
    found = False

    for s_i in range(samples.shape[0]):
        target = samples[s_i]
        if a_turn:
            st, cnt_a, charged, checks, exts = _extend(
                nodes_a, par_a, cnt_a, target, lengths, bx, by, bphi, link_r, circs, rects,
                budget, charged, checks, exts, c_cc, c_ext, extend_step, resolution, pts, scratch,
            )
        else:
            st, cnt_b, charged, checks, exts = _extend(
                nodes_b, par_b, cnt_b, target, lengths, bx, by, bphi, link_r, circs, rects,
                budget, charged, checks, exts, c_cc, c_ext, extend_step, resolution, pts, scratch,
            )
        if st == _BUST:
            return False, empty, budget, checks, exts
        if st != _TRAPPED:
            if a_turn:
                for k in range(n):
                    q_conn[k] = nodes_a[cnt_a - 1, k]
            else:
                for k in range(n):
                    q_conn[k] = nodes_b[cnt_b - 1, k]
            while True:
                if a_turn:
                    st2, cnt_b, charged, checks, exts = _extend(
                        nodes_b, par_b, cnt_b, q_conn, lengths, bx, by, bphi, link_r, circs, rects,
                        budget, charged, checks, exts, c_cc, c_ext, extend_step, resolution, pts, scratch,
                    )
                else:
                    st2, cnt_a, charged, checks, exts = _extend(
                        nodes_a, par_a, cnt_a, q_conn, lengths, bx, by, bphi, link_r, circs, rects,
                        budget, charged, checks, exts, c_cc, c_ext, extend_step, resolution, pts, scratch,
                    )
                if st2 == _BUST:
                    return False, empty, budget, checks, exts
                if st2 == _TRAPPED:
                    break
                if st2 == _REACHED:
                    if a_turn:
                        link_a = cnt_a - 1
                        link_b = cnt_b - 1
                    else:
                        link_a = cnt_a - 1
                        link_b = cnt_b - 1
                    found = True
                    break
            if found:
                break
        a_turn = not a_turn

    if not found:
        return False, empty, budget, checks, exts

    ka = 0
    j = link_a
    while j >= 0:
        ka += 1
        j = par_a[j]
    kb = 0
    j = link_b
    while j >= 0:
        kb += 1
        j = par_b[j]
    path = np.empty((ka + kb - 1, n))
    idx = ka - 1
    j = link_a
    while j >= 0:
        for k in range(n):
            path[idx, k] = nodes_a[j, k]
        idx -= 1
        j = par_a[j]
    idx = ka
    j = par_b[link_b]  # skip the shared junction
    while j >= 0:
        for k in range(n):
            path[idx, k] = nodes_b[j, k]
        idx += 1
        j = par_b[j]
    return True, path, charged, checks, exts


@njit(cache=True)
def dls_ik_core(
    seeds,
    tx,
    ty,
    tphi,
    lengths,
    bx,
    by,
    bphi,
    lo,
    hi,
    tol_pos,
    tol_phi,
    max_iters,
    damping,
    step_clamp,
):
    """Sequential random-restart damped-least-squares IK.

    Runs each seed row in turn for up to max_iters steps; returns
    (found, q) for the first restart that converges.  Convergence is
    checked before stepping, so an already-valid seed returns unchanged.
    """
    R, n = seeds.shape
    q = np.empty(n)
    pts = np.empty((n + 1, 2))
    lam2 = damping * damping
    two_pi = 2.0 * math.pi

    for r in range(R):
        for k in range(n):
            v = seeds[r, k]
            if v < lo[k]:
                v = lo[k]
            elif v > hi[k]:
                v = hi[k]
            q[k] = v
        for it in range(max_iters + 1):
            fk_pts(q, lengths, bx, by, bphi, pts)
            ex = tx - pts[n, 0]
            ey = ty - pts[n, 1]
            phi = bphi
            for k in range(n):
                phi += q[k]
            ephi = (tphi - phi + math.pi) % two_pi
            if ephi < 0.0:
                ephi += two_pi
            ephi -= math.pi
            if math.sqrt(ex * ex + ey * ey) <= tol_pos and abs(ephi) <= tol_phi:
                return True, q.copy()
            if it == max_iters:
                break
            # J rows: (-(ee_y - p_y), ee_x - p_x, 1) per joint column
            a00 = lam2
            a01 = 0.0
            a02 = 0.0
            a11 = lam2
            a12 = 0.0
            a22 = lam2
            for k in range(n):
                jx = -(pts[n, 1] - pts[k, 1])
                jy = pts[n, 0] - pts[k, 0]
                a00 += jx * jx
                a01 += jx * jy
                a02 += jx
                a11 += jy * jy
                a12 += jy
                a22 += 1.0
            # solve (J J^T + lam2 I) y = e via 3x3 cofactors
            c00 = a11 * a22 - a12 * a12
            c01 = a02 * a12 - a01 * a22
            c02 = a01 * a12 - a02 * a11
            det = a00 * c00 + a01 * c01 + a02 * c02
            if det == 0.0:
                break
            c11 = a00 * a22 - a02 * a02
            c12 = a01 * a02 - a00 * a12
            c22 = a00 * a11 - a01 * a01
            y0 = (c00 * ex + c01 * ey + c02 * ephi) / det
            y1 = (c01 * ex + c11 * ey + c12 * ephi) / det
            y2 = (c02 * ex + c12 * ey + c22 * ephi) / det
            for k in range(n):
                jx = -(pts[n, 1] - pts[k, 1])
                jy = pts[n, 0] - pts[k, 0]
                dq = jx * y0 + jy * y1 + y2
                if dq > step_clamp:
                    dq = step_clamp
                elif dq < -step_clamp:
                    dq = -step_clamp
                v = q[k] + dq
                if v < lo[k]:
                    v = lo[k]
                elif v > hi[k]:
                    v = hi[k]
                q[k] = v
    return False, q


# world-advance event codes
EV_NONE, EV_TRIGGER, EV_KNOCKED, EV_COLLISION = 0, 1, 2, 3


@njit(cache=True)
def _point_obj_dist(px, py, ox, oy, ophi, fp_kind, fp_a, fp_b):
    """Distance from a point to the object footprint at pose (ox, oy, ophi)."""
    if fp_kind == 0:  # circle radius fp_a
        dx = px - ox
        dy = py - oy
        d = math.sqrt(dx * dx + dy * dy) - fp_a
        return d if d > 0.0 else 0.0
    co = math.cos(ophi)
    si = math.sin(ophi)
    dx = px - ox
    dy = py - oy
    lx = co * dx + si * dy
    ly = -si * dx + co * dy
    ddx = abs(lx) - fp_a
    if ddx < 0.0:
        ddx = 0.0
    ddy = abs(ly) - fp_b
    if ddy < 0.0:
        ddy = 0.0
    return math.sqrt(ddx * ddx + ddy * ddy)


@njit(cache=True)
def _links_hit_object(pts, link_r, ox, oy, ophi, fp_kind, fp_a, fp_b):
    n_links = pts.shape[0] - 1
    for i in range(n_links):
        ax, ay = pts[i, 0], pts[i, 1]
        bx, by = pts[i + 1, 0], pts[i + 1, 1]
        if fp_kind == 0:
            if _seg_point_dist(ax, ay, bx, by, ox, oy) <= fp_a + link_r:
                return True
        else:
            co = math.cos(ophi)
            si = math.sin(ophi)
            if _seg_box_dist(ax, ay, bx, by, ox, oy, co, si, fp_a, fp_b) <= link_r:
                return True
    return False


@njit(cache=True)
def scan_events(
    pts_all,  # (K, n+1, 2) arm joint points per sample
    ee_phi,  # (K,) end-effector headings
    obj_poses,  # (K, 3) object poses per sample
    grasp_offsets,  # (5, 3) object-frame grasp poses
    fp_kind,  # 0 circle, 1 rect
    fp_a,
    fp_b,
    link_r,
    trig_pos,
    trig_phi,
    circs,
    rects,
    check_obstacles,
):
    """Scan 60 Hz samples for the first episode event.

    Returns (code, sample index, grasp index).  Order per sample: grasp
    trigger, then end-effector knock, then link collisions.
    """
    K = pts_all.shape[0]
    n = pts_all.shape[1] - 1
    two_pi = 2.0 * math.pi
    for k in range(K):
        ox = obj_poses[k, 0]
        oy = obj_poses[k, 1]
        ophi = obj_poses[k, 2]
        eex = pts_all[k, n, 0]
        eey = pts_all[k, n, 1]
        co = math.cos(ophi)
        si = math.sin(ophi)
        for g in range(grasp_offsets.shape[0]):
            gx = ox + co * grasp_offsets[g, 0] - si * grasp_offsets[g, 1]
            gy = oy + si * grasp_offsets[g, 0] + co * grasp_offsets[g, 1]
            dx = eex - gx
            dy = eey - gy
            if dx * dx + dy * dy <= trig_pos * trig_pos:
                gphi = ophi + grasp_offsets[g, 2]
                dphi = (ee_phi[k] - gphi + math.pi) % two_pi
                if dphi < 0.0:
                    dphi += two_pi
                dphi -= math.pi
                if abs(dphi) <= trig_phi:
                    return EV_TRIGGER, k, g
        if _point_obj_dist(eex, eey, ox, oy, ophi, fp_kind, fp_a, fp_b) <= link_r:
            return EV_KNOCKED, k, -1
        if _links_hit_object(pts_all[k], link_r, ox, oy, ophi, fp_kind, fp_a, fp_b):
            return EV_COLLISION, k, -1
        if check_obstacles:
            if links_hit(pts_all[k], link_r, circs, rects):
                return EV_COLLISION, k, -1
    return EV_NONE, K, -1


@njit(cache=True)
def fk_batch_pts(Q, lengths, bx, by, bphi, out):
    """Joint positions for a batch of configs into out (K, n+1, 2)."""
    for k in range(Q.shape[0]):
        fk_pts(Q[k], lengths, bx, by, bphi, out[k])
    return out
