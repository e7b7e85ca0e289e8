"""Inner loops shared by the exact engine and the ray oracle.

Everything here takes and returns plain numpy arrays so it compiles under
numba (see ``_accel``). Polygons are ``(m, 3)`` float64 arrays of unit
vectors, counterclockwise seen from outside the sphere, i.e. each edge
normal ``cross(v[k], v[k+1])`` points into the interior.

Boxes are packed as rows ``(cx, cy, cz, hx, hy, hz, cos_yaw, sin_yaw)``
with half dimensions ``h``.
"""
import math

import numpy as np

from ._accel import NUMBA_ENABLED, jit, prange

CLIP_EPS = 1e-9
FACE_EPS = 1e-9
MIN_AREA = 1e-12
DUP_EPS = 1e-12
MC_CHUNK = 4096


def _face_tables():
    # corner c has sign +1 on axis k iff bit k of c is set
    signs = np.array([[1 if (c >> k) & 1 else -1 for k in range(3)] for c in range(8)],
                     dtype=np.int64)
    loops = np.empty((6, 4), dtype=np.int64)
    neighbours = np.empty((6, 4), dtype=np.int64)
    for a in range(3):
        b, c = (a + 1) % 3, (a + 2) % 3
        for side, sigma in enumerate((-1, 1)):
            face = 2 * a + side
            quad = [(-1, -1), (1, -1), (1, 1), (-1, 1)]  # ccw about +e_a
            if sigma < 0:
                quad = quad[::-1]
            idx = []
            for sb, sc in quad:
                s = [0, 0, 0]
                s[a], s[b], s[c] = sigma, sb, sc
                idx.append(sum(1 << k for k in range(3) if s[k] > 0))
            loops[face] = idx
            for k in range(4):
                p, q = signs[idx[k]], signs[idx[(k + 1) % 4]]
                fixed = [ax for ax in range(3) if ax != a and p[ax] == q[ax]][0]
                neighbours[face, k] = 2 * fixed + (1 if p[fixed] > 0 else 0)
    return signs.astype(np.float64), loops, neighbours


CORNER_SIGNS, FACE_LOOPS, FACE_NEIGHBOURS = _face_tables()


# ----------------------------------------------------------------------------
# spherical polygon primitives


@jit()
def triangle_excess(a, b, c):
    # Van Oosterom-Strackee, written on differences to keep precision for
    # tiny triangles
    ux = b[0] - a[0]
    uy = b[1] - a[1]
    uz = b[2] - a[2]
    wx = c[0] - a[0]
    wy = c[1] - a[1]
    wz = c[2] - a[2]
    det = (a[0] * (uy * wz - uz * wy)
           + a[1] * (uz * wx - ux * wz)
           + a[2] * (ux * wy - uy * wx))
    den = (1.0 + (a[0] * b[0] + a[1] * b[1] + a[2] * b[2])
           + (b[0] * c[0] + b[1] * c[1] + b[2] * c[2])
           + (c[0] * a[0] + c[1] * a[1] + c[2] * a[2]))
    return 2.0 * math.atan2(det, den)


@jit()
def polygon_area(v):
    """Signed spherical excess by fan triangulation from ``v[0]``."""
    m = v.shape[0]
    if m < 3:
        return 0.0
    total = 0.0
    for k in range(1, m - 1):
        total += triangle_excess(v[0], v[k], v[k + 1])
    return total


@jit()
def edge_normals(v):
    m = v.shape[0]
    out = np.empty((m, 3))
    for k in range(m):
        a = v[k]
        b = v[(k + 1) % m]
        x = a[1] * b[2] - a[2] * b[1]
        y = a[2] * b[0] - a[0] * b[2]
        z = a[0] * b[1] - a[1] * b[0]
        r = math.sqrt(x * x + y * y + z * z)
        if r > 0.0:
            x /= r
            y /= r
            z /= r
        out[k, 0] = x
        out[k, 1] = y
        out[k, 2] = z
    return out


@jit()
def clip_halfspace(v, nx, ny, nz):
    """Keep the part of convex ``v`` with ``dot(p, n) >= -CLIP_EPS``.

    Returns ``v`` itself when nothing is cut, and an array with fewer than
    3 rows when nothing survives.
    """
    m = v.shape[0]
    n_in = 0
    for idx in range(m):
        if v[idx, 0] * nx + v[idx, 1] * ny + v[idx, 2] * nz >= -CLIP_EPS:
            n_in += 1
    if n_in == m:
        return v
    out = np.empty((2 * m + 1, 3))
    if n_in == 0:
        return out[:0].copy()
    k = 0
    sx = v[m - 1, 0]
    sy = v[m - 1, 1]
    sz = v[m - 1, 2]
    ds = sx * nx + sy * ny + sz * nz
    for idx in range(m):
        ex = v[idx, 0]
        ey = v[idx, 1]
        ez = v[idx, 2]
        de = ex * nx + ey * ny + ez * nz
        e_in = de >= -CLIP_EPS
        s_in = ds >= -CLIP_EPS
        if e_in != s_in:
            t = ds / (ds - de)
            px = sx + t * (ex - sx)
            py = sy + t * (ey - sy)
            pz = sz + t * (ez - sz)
            r = math.sqrt(px * px + py * py + pz * pz)
            out[k, 0] = px / r
            out[k, 1] = py / r
            out[k, 2] = pz / r
            k += 1
        if e_in:
            out[k, 0] = ex
            out[k, 1] = ey
            out[k, 2] = ez
            k += 1
        sx = ex
        sy = ey
        sz = ez
        ds = de
    k = _dedupe_inplace(out, k)
    return out[:k].copy()


@jit()
def _dedupe_inplace(v, m):
    """Drop consecutive near-duplicate rows among the first ``m``; new count."""
    k = 0
    tol = DUP_EPS * DUP_EPS
    for idx in range(m):
        if k > 0:
            dx = v[idx, 0] - v[k - 1, 0]
            dy = v[idx, 1] - v[k - 1, 1]
            dz = v[idx, 2] - v[k - 1, 2]
            if dx * dx + dy * dy + dz * dz < tol:
                continue
        if k != idx:
            v[k, 0] = v[idx, 0]
            v[k, 1] = v[idx, 1]
            v[k, 2] = v[idx, 2]
        k += 1
    while k > 1:
        dx = v[k - 1, 0] - v[0, 0]
        dy = v[k - 1, 1] - v[0, 1]
        dz = v[k - 1, 2] - v[0, 2]
        if dx * dx + dy * dy + dz * dz < tol:
            k -= 1
        else:
            break
    return k


@jit()
def dedupe(v):
    out = v.copy()
    k = _dedupe_inplace(out, v.shape[0])
    return out[:k].copy()


@jit()
def is_empty(v):
    return v.shape[0] < 3 or polygon_area(v) < MIN_AREA


@jit()
def clip_by_polygon(v, normals):
    out = v
    for k in range(normals.shape[0]):
        out = clip_halfspace(out, normals[k, 0], normals[k, 1], normals[k, 2])
        if out.shape[0] < 3:
            break
    return out


@jit()
def separated(v, normals):
    """True if some clipper edge has every vertex of ``v`` strictly outside."""
    for k in range(normals.shape[0]):
        nx = normals[k, 0]
        ny = normals[k, 1]
        nz = normals[k, 2]
        outside = True
        for idx in range(v.shape[0]):
            if v[idx, 0] * nx + v[idx, 1] * ny + v[idx, 2] * nz >= -CLIP_EPS:
                outside = False
                break
        if outside:
            return True
    return False


@jit()
def subtract_one(frag, normals, out):
    """Append ``frag`` minus the convex clipper to ``out``; report overlap.

    The remainder is split into edge-anchored wedges: outside edge j and
    inside edges 0..j-1. Fragments that do not overlap the clipper are
    appended unchanged.
    """
    if separated(frag, normals):
        out.append(frag)
        return False
    inter = clip_by_polygon(frag, normals)
    if is_empty(inter):
        out.append(frag)
        return False
    rest = frag
    for k in range(normals.shape[0]):
        piece = clip_halfspace(rest, -normals[k, 0], -normals[k, 1], -normals[k, 2])
        if not is_empty(piece):
            out.append(piece)
        rest = clip_halfspace(rest, normals[k, 0], normals[k, 1], normals[k, 2])
        if rest.shape[0] < 3:
            break
    return True


# ----------------------------------------------------------------------------
# box silhouettes


@jit()
def box_silhouette(box, out):
    """Write the projected silhouette loop of ``box`` into ``out`` (6, 3).

    Returns the vertex count (4 or 6), or 0 if no face is front-facing.
    """
    cx, cy, cz = box[0], box[1], box[2]
    c, s = box[6], box[7]
    q = np.empty(3)
    q[0] = -(c * cx + s * cy)
    q[1] = -(-s * cx + c * cy)
    q[2] = -cz
    front = np.zeros(6, dtype=np.bool_)
    n_front = 0
    for f in range(6):
        a = f // 2
        sigma = 1.0 if f % 2 == 1 else -1.0
        if sigma * q[a] - box[3 + a] > FACE_EPS:
            front[f] = True
            n_front += 1
    if n_front == 0:
        return 0
    starts = np.empty(12, dtype=np.int64)
    ends = np.empty(12, dtype=np.int64)
    ne = 0
    for f in range(6):
        if not front[f]:
            continue
        for k in range(4):
            if not front[FACE_NEIGHBOURS[f, k]]:
                starts[ne] = FACE_LOOPS[f, k]
                ends[ne] = FACE_LOOPS[f, (k + 1) % 4]
                ne += 1
    first = starts[0]
    cur = first
    m = 0
    for _ in range(ne):
        lx = CORNER_SIGNS[cur, 0] * box[3]
        ly = CORNER_SIGNS[cur, 1] * box[4]
        lz = CORNER_SIGNS[cur, 2] * box[5]
        wx = c * lx - s * ly + cx
        wy = s * lx + c * ly + cy
        wz = lz + cz
        r = math.sqrt(wx * wx + wy * wy + wz * wz)
        out[m, 0] = wx / r
        out[m, 1] = wy / r
        out[m, 2] = wz / r
        m += 1
        nxt = -1
        for e in range(ne):
            if starts[e] == cur:
                nxt = ends[e]
                break
        cur = nxt
        if cur == first or cur < 0:
            break
    if cur != first:
        return 0
    if polygon_area(out[:m]) < 0.0:
        for k in range(m // 2):
            for d in range(3):
                tmp = out[k, d]
                out[k, d] = out[m - 1 - k, d]
                out[m - 1 - k, d] = tmp
    return m


@jit()
def pack_silhouettes(boxes):
    """Silhouettes of all rows as CSR ``(verts, ptr)``; empty rows allowed."""
    n = boxes.shape[0]
    buf = np.empty((6 * n, 3))
    ptr = np.zeros(n + 1, dtype=np.int64)
    tmp = np.empty((6, 3))
    k = 0
    for i in range(n):
        m = box_silhouette(boxes[i], tmp)
        for j in range(m):
            buf[k + j] = tmp[j]
        k += m
        ptr[i + 1] = k
    return buf[:k].copy(), ptr


@jit()
def pack_normals(verts, ptr):
    out = np.empty_like(verts)
    for i in range(ptr.shape[0] - 1):
        a, b = ptr[i], ptr[i + 1]
        if b > a:
            out[a:b] = edge_normals(verts[a:b])
    return out


# ----------------------------------------------------------------------------
# exact scene visibility


@jit()
def visible_area(t, i, verts, normals, ptr, cand_ptr, cand_idx, hit):
    """Remaining area of polygon ``i`` after removing its candidates.

    Candidates of target slot ``t`` are visited in the order given;
    ``hit[c]`` records whether candidate ``c`` overlapped a surviving
    fragment.
    """
    target = verts[ptr[i]:ptr[i + 1]].copy()
    frags = [target]
    for c in range(cand_ptr[t], cand_ptr[t + 1]):
        j = cand_idx[c]
        occ = normals[ptr[j]:ptr[j + 1]]
        touching = False
        for f in frags:
            if not separated(f, occ):
                touching = True
                break
        if not touching:
            continue
        nxt = [target[:0].copy()]
        nxt.pop()
        overlapped = False
        for f in frags:
            if subtract_one(f, occ, nxt):
                overlapped = True
        hit[c] = overlapped
        frags = nxt
    total = 0.0
    for f in frags:
        total += polygon_area(f)
    return total


@jit()
def scene_visibility(verts, normals, ptr, targets, cand_ptr, cand_idx):
    n = targets.shape[0]
    omega = np.empty(n)
    remaining = np.empty(n)
    hit = np.zeros(cand_idx.shape[0], dtype=np.bool_)
    for t in range(n):
        i = targets[t]
        omega[t] = polygon_area(verts[ptr[i]:ptr[i + 1]])
        remaining[t] = visible_area(t, i, verts, normals, ptr, cand_ptr, cand_idx, hit)
    return omega, remaining, hit


@jit(parallel=True)
def scene_visibility_parallel(verts, normals, ptr, targets, cand_ptr, cand_idx):
    n = targets.shape[0]
    omega = np.empty(n)
    remaining = np.empty(n)
    hit = np.zeros(cand_idx.shape[0], dtype=np.bool_)
    for t in prange(n):
        i = targets[t]
        omega[t] = polygon_area(verts[ptr[i]:ptr[i + 1]])
        remaining[t] = visible_area(t, i, verts, normals, ptr, cand_ptr, cand_idx, hit)
    return omega, remaining, hit


# ----------------------------------------------------------------------------
# ray casting


@jit()
def ray_box_t(dx, dy, dz, box):
    """Entry distance of the ray from the origin along d, or -1 on a miss."""
    cx, cy, cz = box[0], box[1], box[2]
    c, s = box[6], box[7]
    o0 = -(c * cx + s * cy)
    o1 = -(-s * cx + c * cy)
    o2 = -cz
    l0 = c * dx + s * dy
    l1 = -s * dx + c * dy
    l2 = dz
    tmin = -np.inf
    tmax = np.inf
    for a in range(3):
        if a == 0:
            o, d, h = o0, l0, box[3]
        elif a == 1:
            o, d, h = o1, l1, box[4]
        else:
            o, d, h = o2, l2, box[5]
        if d == 0.0:
            if abs(o) > h:
                return -1.0
        else:
            t1 = (-h - o) / d
            t2 = (h - o) / d
            if t1 > t2:
                t1, t2 = t2, t1
            if t1 > tmin:
                tmin = t1
            if t2 < tmax:
                tmax = t2
    if tmax < tmin or tmax <= 0.0:
        return -1.0
    return max(tmin, 0.0)


@jit(parallel=True)
def _count_cap_hits_jit(u, frame, cos_alpha, target, occluders):
    n = u.shape[0]
    k = occluders.shape[0]
    n_chunks = (n + MC_CHUNK - 1) // MC_CHUNK
    counts = np.zeros((n_chunks, k + 2), dtype=np.int64)
    two_pi = 2.0 * math.pi
    for ch in prange(n_chunks):
        lo = ch * MC_CHUNK
        hi = min(n, lo + MC_CHUNK)
        for idx in range(lo, hi):
            ct = 1.0 - u[idx, 0] * (1.0 - cos_alpha)
            st = math.sqrt(max(0.0, 1.0 - ct * ct))
            cp = math.cos(two_pi * u[idx, 1])
            sp = math.sqrt((1.0 - cp) * (1.0 + cp))
            if u[idx, 1] > 0.5:
                sp = -sp
            dx = ct * frame[0, 0] + st * (cp * frame[1, 0] + sp * frame[2, 0])
            dy = ct * frame[0, 1] + st * (cp * frame[1, 1] + sp * frame[2, 1])
            dz = ct * frame[0, 2] + st * (cp * frame[1, 2] + sp * frame[2, 2])
            if ray_box_t(dx, dy, dz, target) < 0.0:
                continue
            counts[ch, 0] += 1
            covered = False
            for j in range(k):
                if ray_box_t(dx, dy, dz, occluders[j]) >= 0.0:
                    counts[ch, 2 + j] += 1
                    covered = True
            if covered:
                counts[ch, 1] += 1
    return counts.sum(axis=0)


def cap_directions(u, frame, cos_alpha):
    """Map uniforms ``u`` (n, 2) to directions uniform inside a cap.

    ``u[:, 0]`` sets the polar cosine, ``u[:, 1]`` the azimuth; the sine of
    the azimuth comes from the cosine and the half-turn bit, as in the
    compiled kernel.
    """
    ct = 1.0 - u[:, 0] * (1.0 - cos_alpha)
    st = np.sqrt(np.maximum(0.0, 1.0 - ct * ct))
    cp = np.cos(2.0 * np.pi * u[:, 1])
    sp = np.sqrt((1.0 - cp) * (1.0 + cp))
    sp = np.where(u[:, 1] > 0.5, -sp, sp)
    return (ct[:, None] * frame[0]
            + (st * cp)[:, None] * frame[1]
            + (st * sp)[:, None] * frame[2])


def ray_box_t_many(d, box):
    """Vectorised ``ray_box_t`` over directions ``d`` (n, 3)."""
    cx, cy, cz, hx, hy, hz, c, s = box
    o = np.array([-(c * cx + s * cy), -(-s * cx + c * cy), -cz])
    h = np.array([hx, hy, hz])
    loc = np.stack([c * d[:, 0] + s * d[:, 1], -s * d[:, 0] + c * d[:, 1], d[:, 2]], axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (-h - o) / loc
        t2 = (h - o) / loc
    lo = np.minimum(t1, t2)
    hi = np.maximum(t1, t2)
    parallel = loc == 0.0
    lo = np.where(parallel, -np.inf, lo)
    hi = np.where(parallel, np.inf, hi)
    blocked = (parallel & (np.abs(o) > h)).any(axis=1)
    tmin = lo.max(axis=1)
    tmax = hi.min(axis=1)
    miss = blocked | (tmax < tmin) | (tmax <= 0.0)
    return np.where(miss, -1.0, np.maximum(tmin, 0.0))


def _count_cap_hits_numpy(u, frame, cos_alpha, target, occluders):
    k = occluders.shape[0]
    totals = np.zeros(k + 2, dtype=np.int64)
    for lo in range(0, u.shape[0], 64 * MC_CHUNK):
        d = cap_directions(u[lo:lo + 64 * MC_CHUNK], frame, cos_alpha)
        d = d[ray_box_t_many(d, target) >= 0.0]
        totals[0] += d.shape[0]
        covered = np.zeros(d.shape[0], dtype=bool)
        for j in range(k):
            h = ray_box_t_many(d, occluders[j]) >= 0.0
            totals[2 + j] += int(h.sum())
            covered |= h
        totals[1] += int(covered.sum())
    return totals


def count_cap_hits(u, frame, cos_alpha, target, occluders):
    """Count rays through the cap that hit ``target`` and any occluder.

    Returns ``[hits, covered, per-occluder hits...]`` as int64. Counting is
    chunked with integer partial sums, so the result does not depend on
    the number of worker threads.
    """
    u = np.ascontiguousarray(u, dtype=np.float64)
    frame = np.ascontiguousarray(frame, dtype=np.float64)
    target = np.ascontiguousarray(target, dtype=np.float64)
    occluders = np.ascontiguousarray(occluders, dtype=np.float64).reshape(-1, 8)
    if NUMBA_ENABLED:
        return _count_cap_hits_jit(u, frame, float(cos_alpha), target, occluders)
    return _count_cap_hits_numpy(u, frame, float(cos_alpha), target, occluders)
