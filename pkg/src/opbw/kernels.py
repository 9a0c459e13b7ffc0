"""Hot numerical kernels (numba).

The walk engine works on a spatial window padded by one neighbourhood
radius of permanently-closed halo cells, so neighbour access never needs a
bounds check.  Per site and layer two bytes are kept:

  ell8:   min(ell, 254) + 1, i.e. 0 = closed (ell = -1), k = ell k-1
          clamped at 255 meaning "ell >= 254";
  flags:  bit0 = xi (ell saturated at the remaining horizon),
          bit1 = contaminated (the closed-boundary value at this site is
          not certified equal to the unbounded-lattice value).

Contamination spreads from the halo inward: a site is contaminated iff it
is open, not saturated, and some successor (or the halo) is contaminated.
Saturated values cannot increase, closed sites are exact, so querying only
uncontaminated sites yields exactly the unbounded-lattice field.  All
randomness is counter-based (see rng.py); the kernels reproduce the
python-side key chains bit for bit.
"""

import numpy as np
from numba import njit

U64 = np.uint64

_GAMMA = U64(0x9E3779B97F4A7C15)
_MIX1 = U64(0xBF58476D1CE4E5B9)
_MIX2 = U64(0x94D049BB133111EB)

STREAM_OMEGA = U64(0x51D1)
STREAM_PERM = U64(0x52D2)
STREAM_CAPACITY = U64(0x53D3)
STREAM_WALK = U64(0x54D4)

FLAG_XI = np.uint8(1)
FLAG_CONT = np.uint8(2)

# gamma_advance / direct_advance status codes
ST_TARGET = 0
ST_NEED_SLAB = 1
ST_STAGE_CAP = 2
ST_CONTAMINATED = 3
ST_CLAMP = 4
ST_GAP = 5
ST_NO_BACKBONE_NEIGHBOR = 6


@njit(cache=True, inline="always")
def mix64(z):
    z = z + _GAMMA
    z = (z ^ (z >> U64(30))) * _MIX1
    z = (z ^ (z >> U64(27))) * _MIX2
    return z ^ (z >> U64(31))


@njit(cache=True, inline="always")
def stream_key(seed, stream, n):
    return mix64(mix64(U64(seed) ^ stream) ^ U64(n))


@njit(cache=True, inline="always")
def site_from_layer(layer_key, coords, s, d):
    h = layer_key
    for j in range(d):
        h = mix64(h ^ U64(coords[s, j]))
    return h


@njit(cache=True)
def init_top_layer(seed, thr, all_open, H, coords, interior, ell8, flags):
    """Layer H: ell is 0 at open sites, xi equals omega, nothing contaminated."""
    S, d = coords.shape
    lk = stream_key(seed, STREAM_OMEGA, H)
    for s in range(S):
        if interior[s] == 0:
            ell8[s] = 0
            flags[s] = FLAG_CONT
        else:
            open_ = all_open or site_from_layer(lk, coords, s, d) < thr
            if open_:
                ell8[s] = 1
                flags[s] = FLAG_XI
            else:
                ell8[s] = 0
                flags[s] = 0


@njit(cache=True)
def sweep_one_layer(
    seed, thr, all_open, H, n, coords, interior, nbr,
    prev_ell8, prev_flags, out_ell8, out_flags,
):
    """Fill layer n from layer n+1."""
    S, d = coords.shape
    nU = nbr.shape[0]
    lk = stream_key(seed, STREAM_OMEGA, n)
    depth = H - n
    cap_enc = depth + 1 if depth + 1 < 255 else 255
    for s in range(S):
        if interior[s] == 0:
            out_ell8[s] = 0
            out_flags[s] = FLAG_CONT
            continue
        open_ = all_open or site_from_layer(lk, coords, s, d) < thr
        if not open_:
            out_ell8[s] = 0
            out_flags[s] = 0
            continue
        maxe = 0
        anyxi = False
        anycont = False
        for u in range(nU):
            t = s + nbr[u]
            e = prev_ell8[t]
            if e > maxe:
                maxe = e
            f = prev_flags[t]
            if f & FLAG_XI:
                anyxi = True
            if f & FLAG_CONT:
                anycont = True
        enc = maxe + 1
        if enc > cap_enc:
            enc = cap_enc
        out_ell8[s] = np.uint8(enc)
        f = np.uint8(0)
        if anyxi:
            f |= FLAG_XI
        elif anycont:
            f |= FLAG_CONT
        out_flags[s] = f


@njit(cache=True)
def sweep_collect(
    seed, thr, all_open, H, n_hi, n_lo, coords, interior, nbr,
    top_ell8, top_flags, has_top, ell8, flags,
):
    """Fill slab rows for layers n_lo..n_hi (row index = n - n_lo).

    When has_top, top_* hold layer n_hi + 1; otherwise n_hi == H and the top
    layer is initialised from omega.
    """
    if has_top:
        sweep_one_layer(seed, thr, all_open, H, n_hi, coords, interior, nbr,
                        top_ell8, top_flags, ell8[n_hi - n_lo], flags[n_hi - n_lo])
    else:
        init_top_layer(seed, thr, all_open, H, coords, interior,
                       ell8[n_hi - n_lo], flags[n_hi - n_lo])
    for n in range(n_hi - 1, n_lo - 1, -1):
        r = n - n_lo
        sweep_one_layer(seed, thr, all_open, H, n, coords, interior, nbr,
                        ell8[r + 1], flags[r + 1], ell8[r], flags[r])


@njit(cache=True)
def sweep_skim(
    seed, thr, all_open, H, n_lo, coords, interior, nbr,
    save_layers, saved_ell8, saved_flags,
):
    """Roll a full sweep H..n_lo keeping two rows, saving scheduled layers.

    save_layers must be strictly decreasing; saved rows land at the matching
    index of saved_ell8 / saved_flags.
    """
    S = coords.shape[0]
    a_e = np.empty(S, np.uint8)
    a_f = np.empty(S, np.uint8)
    b_e = np.empty(S, np.uint8)
    b_f = np.empty(S, np.uint8)
    init_top_layer(seed, thr, all_open, H, coords, interior, a_e, a_f)
    si = 0
    if si < save_layers.shape[0] and save_layers[si] == H:
        saved_ell8[si, :] = a_e
        saved_flags[si, :] = a_f
        si += 1
    cur_e, cur_f, nxt_e, nxt_f = a_e, a_f, b_e, b_f
    for n in range(H - 1, n_lo - 1, -1):
        sweep_one_layer(seed, thr, all_open, H, n, coords, interior, nbr,
                        cur_e, cur_f, nxt_e, nxt_f)
        cur_e, nxt_e = nxt_e, cur_e
        cur_f, nxt_f = nxt_f, cur_f
        if si < save_layers.shape[0] and save_layers[si] == n:
            saved_ell8[si, :] = cur_e
            saved_flags[si, :] = cur_f
            si += 1
    return si


@njit(cache=True)
def _hash_open_row_1d(seed, thr, all_open, n, x0, r, open_row):
    S = open_row.shape[0]
    if all_open:
        for s in range(r, S - r):
            open_row[s] = 1
        return
    lk = stream_key(seed, STREAM_OMEGA, n)
    if r == 1:
        # literal bounds let LLVM vectorise (runtime bounds defeat it)
        for s in range(1, S - 1):
            open_row[s] = np.uint8(mix64(lk ^ U64(x0 + s)) < thr)
    else:
        for s in range(r, S - r):
            open_row[s] = np.uint8(mix64(lk ^ U64(x0 + s)) < thr)


@njit(cache=True)
def _combine_row_1d(open_row, prev_e, prev_f, out_e, out_f, cap8, r, nbr):
    """Branchless stencil over the row above; all-uint8 so it vectorises.

    enc = min(1 + max ell over successors, remaining horizon, 254) + 1 is
    computed as m + [m < cap8], valid because the previous layer's encodings
    never exceed this layer's cap."""
    S = open_row.shape[0]
    one = np.uint8(1)
    two = np.uint8(2)
    nU = nbr.shape[0]
    for s in range(r):
        out_e[s] = 0
        out_f[s] = FLAG_CONT
        out_e[S - 1 - s] = 0
        out_f[S - 1 - s] = FLAG_CONT
    if r == 1 and nU == 3 and nbr[0] == -1 and nbr[1] == 0 and nbr[2] == 1:
        for s in range(1, S - 1):
            m = max(max(prev_e[s - 1], prev_e[s]), prev_e[s + 1])
            out_e[s] = open_row[s] * (m + np.uint8(m < cap8))
        for s in range(1, S - 1):
            facc = prev_f[s - 1] | prev_f[s] | prev_f[s + 1]
            xi = facc & one
            out_f[s] = open_row[s] * (xi + (facc & two) * (one - xi))
    else:
        for s in range(r, S - r):
            m = np.uint8(0)
            facc = np.uint8(0)
            for u in range(nU):
                t = s + nbr[u]
                e = prev_e[t]
                m = max(m, e)
                facc |= prev_f[t]
            enc = m + np.uint8(m < cap8)
            xi = facc & one
            fout = xi + (facc & two) * (one - xi)
            o = open_row[s]
            out_e[s] = o * enc
            out_f[s] = o * fout


@njit(cache=True)
def sweep_one_layer_1d(seed, thr, all_open, H, n, x0, r, nbr, prev_e, prev_f,
                       out_e, out_f, open_row):
    """d = 1 specialisation of sweep_one_layer; x0 is the coordinate of flat
    index 0, halo cells are the first/last r entries."""
    depth = H - n
    cap8 = np.uint8(depth + 1 if depth + 1 < 255 else 255)
    _hash_open_row_1d(seed, thr, all_open, n, x0, r, open_row)
    _combine_row_1d(open_row, prev_e, prev_f, out_e, out_f, cap8, r, nbr)


@njit(cache=True)
def init_top_layer_1d(seed, thr, all_open, H, x0, r, ell8, flags):
    S = ell8.shape[0]
    lk = stream_key(seed, STREAM_OMEGA, H)
    for s in range(S):
        if s < r or s >= S - r:
            ell8[s] = 0
            flags[s] = FLAG_CONT
        elif all_open or mix64(lk ^ U64(x0 + s)) < thr:
            ell8[s] = 1
            flags[s] = FLAG_XI
        else:
            ell8[s] = 0
            flags[s] = 0


@njit(cache=True)
def sweep_collect_1d(
    seed, thr, all_open, H, n_hi, n_lo, x0, r, nbr,
    top_ell8, top_flags, has_top, ell8, flags,
):
    open_row = np.empty(ell8.shape[1], np.uint8)
    if has_top:
        sweep_one_layer_1d(seed, thr, all_open, H, n_hi, x0, r, nbr,
                           top_ell8, top_flags, ell8[n_hi - n_lo], flags[n_hi - n_lo],
                           open_row)
    else:
        init_top_layer_1d(seed, thr, all_open, H, x0, r, ell8[n_hi - n_lo], flags[n_hi - n_lo])
    for n in range(n_hi - 1, n_lo - 1, -1):
        row = n - n_lo
        sweep_one_layer_1d(seed, thr, all_open, H, n, x0, r, nbr,
                           ell8[row + 1], flags[row + 1], ell8[row], flags[row],
                           open_row)


@njit(cache=True)
def sweep_skim_1d(
    seed, thr, all_open, H, n_lo, x0, r, nbr,
    save_layers, saved_ell8, saved_flags,
):
    S = saved_ell8.shape[1]
    a_e = np.empty(S, np.uint8)
    a_f = np.empty(S, np.uint8)
    b_e = np.empty(S, np.uint8)
    b_f = np.empty(S, np.uint8)
    open_row = np.empty(S, np.uint8)
    init_top_layer_1d(seed, thr, all_open, H, x0, r, a_e, a_f)
    si = 0
    if si < save_layers.shape[0] and save_layers[si] == H:
        saved_ell8[si, :] = a_e
        saved_flags[si, :] = a_f
        si += 1
    cur_e, cur_f, nxt_e, nxt_f = a_e, a_f, b_e, b_f
    for n in range(H - 1, n_lo - 1, -1):
        sweep_one_layer_1d(seed, thr, all_open, H, n, x0, r, nbr,
                           cur_e, cur_f, nxt_e, nxt_f, open_row)
        cur_e, nxt_e = nxt_e, cur_e
        cur_f, nxt_f = nxt_f, cur_f
        if si < save_layers.shape[0] and save_layers[si] == n:
            saved_ell8[si, :] = cur_e
            saved_flags[si, :] = cur_f
            si += 1
    return si


@njit(cache=True)
def _hash_open_d2(seed, thr, all_open, n, x0, y0, w, open_row):
    """Row-major (x outer, y inner) layer hash for d = 2; w = inner extent."""
    S = open_row.shape[0]
    if all_open:
        for s in range(S):
            open_row[s] = 1
        return
    lk = stream_key(seed, STREAM_OMEGA, n)
    nrows = S // w
    for i in range(nrows):
        kx = mix64(lk ^ U64(x0 + i))
        base = i * w
        for j in range(w):
            open_row[base + j] = np.uint8(mix64(kx ^ U64(y0 + j)) < thr)


@njit(cache=True)
def _row_max3(a, out):
    """out[s] = max(a[s-1], a[s], a[s+1]); endpoints copied."""
    S = a.shape[0]
    out[0] = max(a[0], a[1])
    out[S - 1] = max(a[S - 2], a[S - 1])
    for s in range(1, S - 1):
        out[s] = max(max(a[s - 1], a[s]), a[s + 1])


@njit(cache=True)
def _row_or3(a, out):
    S = a.shape[0]
    out[0] = a[0] | a[1]
    out[S - 1] = a[S - 2] | a[S - 1]
    for s in range(1, S - 1):
        out[s] = a[s - 1] | a[s] | a[s + 1]


@njit(cache=True)
def _col_combine_e(a0, a1, a2, open_c, out_c, cap8):
    n = out_c.shape[0]
    for s in range(n):
        m = max(max(a0[s], a1[s]), a2[s])
        out_c[s] = open_c[s] * (m + np.uint8(m < cap8))


@njit(cache=True)
def _col_combine_f(a0, a1, a2, open_c, out_c):
    one = np.uint8(1)
    two = np.uint8(2)
    n = out_c.shape[0]
    for s in range(n):
        facc = a0[s] | a1[s] | a2[s]
        xi = facc & one
        out_c[s] = open_c[s] * (xi + (facc & two) * (one - xi))


@njit(cache=True)
def _halo_fix(interior, out_e, out_f):
    one = np.uint8(1)
    S = interior.shape[0]
    for s in range(S):
        keep = interior[s]
        out_e[s] = out_e[s] * keep
        out_f[s] = out_f[s] * keep + (one - keep) * FLAG_CONT


@njit(cache=True)
def _combine_d2(open_row, prev_e, prev_f, out_e, out_f, cap8, w, interior,
                tmp_e, tmp_f):
    """Separable 3x3 stencil built from vectorisable slice-view passes; the
    halo border is overwritten afterwards from the interior mask."""
    S = open_row.shape[0]
    _row_max3(prev_e, tmp_e)
    _row_or3(prev_f, tmp_f)
    _col_combine_e(tmp_e[: S - 2 * w], tmp_e[w: S - w], tmp_e[2 * w:],
                   open_row[w: S - w], out_e[w: S - w], cap8)
    _col_combine_f(tmp_f[: S - 2 * w], tmp_f[w: S - w], tmp_f[2 * w:],
                   open_row[w: S - w], out_f[w: S - w])
    for s in range(w):
        out_e[s] = 0
        out_f[s] = 0
        out_e[S - 1 - s] = 0
        out_f[S - 1 - s] = 0
    _halo_fix(interior, out_e, out_f)


@njit(cache=True)
def sweep_collect_d2(
    seed, thr, all_open, H, n_hi, n_lo, x0, y0, w, interior,
    top_ell8, top_flags, has_top, ell8, flags, coords,
):
    S = ell8.shape[1]
    open_row = np.empty(S, np.uint8)
    tmp_e = np.empty(S, np.uint8)
    tmp_f = np.empty(S, np.uint8)
    if has_top:
        depth = H - n_hi
        cap8 = np.uint8(depth + 1 if depth + 1 < 255 else 255)
        _hash_open_d2(seed, thr, all_open, n_hi, x0, y0, w, open_row)
        _combine_d2(open_row, top_ell8, top_flags, ell8[n_hi - n_lo],
                    flags[n_hi - n_lo], cap8, w, interior, tmp_e, tmp_f)
    else:
        init_top_layer(seed, thr, all_open, H, coords, interior,
                       ell8[n_hi - n_lo], flags[n_hi - n_lo])
    for n in range(n_hi - 1, n_lo - 1, -1):
        row = n - n_lo
        depth = H - n
        cap8 = np.uint8(depth + 1 if depth + 1 < 255 else 255)
        _hash_open_d2(seed, thr, all_open, n, x0, y0, w, open_row)
        _combine_d2(open_row, ell8[row + 1], flags[row + 1], ell8[row], flags[row],
                    cap8, w, interior, tmp_e, tmp_f)


@njit(cache=True)
def sweep_skim_d2(
    seed, thr, all_open, H, n_lo, x0, y0, w, interior, coords,
    save_layers, saved_ell8, saved_flags,
):
    S = saved_ell8.shape[1]
    a_e = np.empty(S, np.uint8)
    a_f = np.empty(S, np.uint8)
    b_e = np.empty(S, np.uint8)
    b_f = np.empty(S, np.uint8)
    open_row = np.empty(S, np.uint8)
    tmp_e = np.empty(S, np.uint8)
    tmp_f = np.empty(S, np.uint8)
    init_top_layer(seed, thr, all_open, H, coords, interior, a_e, a_f)
    si = 0
    if si < save_layers.shape[0] and save_layers[si] == H:
        saved_ell8[si, :] = a_e
        saved_flags[si, :] = a_f
        si += 1
    cur_e, cur_f, nxt_e, nxt_f = a_e, a_f, b_e, b_f
    for n in range(H - 1, n_lo - 1, -1):
        depth = H - n
        cap8 = np.uint8(depth + 1 if depth + 1 < 255 else 255)
        _hash_open_d2(seed, thr, all_open, n, x0, y0, w, open_row)
        _combine_d2(open_row, cur_e, cur_f, nxt_e, nxt_f, cap8, w, interior, tmp_e, tmp_f)
        cur_e, nxt_e = nxt_e, cur_e
        cur_f, nxt_f = nxt_f, cur_f
        if si < save_layers.shape[0] and save_layers[si] == n:
            saved_ell8[si, :] = cur_e
            saved_flags[si, :] = cur_f
            si += 1
    return si


@njit(cache=True)
def forward_survival_1d(seed, thr, all_open, x_start, n_layers, offs, r):
    """Whether the cluster grown forward from (x_start, 0) still has occupied
    sites after n_layers layers (openness read straight from counters, the
    start layer is taken occupied by convention).  Exact: a False answer
    proves the site is off the backbone for any horizon >= n_layers."""
    if all_open:
        return True
    width = n_layers * r + r + 1
    size = 2 * width + 1
    cur = np.zeros(size, np.uint8)
    nxt = np.zeros(size, np.uint8)
    cur[width] = 1
    nU = offs.shape[0]
    for n in range(1, n_layers + 1):
        lk = stream_key(seed, STREAM_OMEGA, n)
        alive = False
        for s in range(r, size - r):
            hit = False
            for u in range(nU):
                if cur[s + offs[u]]:
                    hit = True
                    break
            if hit:
                x = x_start + (s - width)
                if mix64(lk ^ U64(x)) < thr:
                    nxt[s] = 1
                    alive = True
                else:
                    nxt[s] = 0
            else:
                nxt[s] = 0
        if not alive:
            return False
        cur, nxt = nxt, cur
    return True


@njit(cache=True)
def forward_survival_d2(seed, thr, x_start, y_start, n_layers):
    """d = 2 analogue of forward_survival_1d for the 3x3 neighbourhood."""
    width = n_layers + 2
    w = 2 * width + 1
    cur = np.zeros(w * w, np.uint8)
    nxt = np.zeros(w * w, np.uint8)
    cur[width * w + width] = 1
    for n in range(1, n_layers + 1):
        lk = stream_key(seed, STREAM_OMEGA, n)
        alive = False
        for i in range(1, w - 1):
            kx = mix64(lk ^ U64(x_start + i - width))
            base = i * w
            for j in range(1, w - 1):
                s = base + j
                occ = (cur[s - w - 1] | cur[s - w] | cur[s - w + 1]
                       | cur[s - 1] | cur[s] | cur[s + 1]
                       | cur[s + w - 1] | cur[s + w] | cur[s + w + 1])
                if occ:
                    if mix64(kx ^ U64(y_start + j - width)) < thr:
                        nxt[s] = 1
                        alive = True
                    else:
                        nxt[s] = 0
                else:
                    nxt[s] = 0
        if not alive:
            return False
        cur, nxt = nxt, cur
    return True


@njit(cache=True)
def forward_height_1d(seed, thr, x_start, cap, offs, r):
    """Survival time of the forward cluster from (x_start, 0): the first
    layer with no occupied sites, or cap when still alive there (the start
    layer is occupied by convention)."""
    width = cap * r + r + 1
    size = 2 * width + 1
    cur = np.zeros(size, np.uint8)
    nxt = np.zeros(size, np.uint8)
    cur[width] = 1
    nU = offs.shape[0]
    for n in range(1, cap + 1):
        lk = stream_key(seed, STREAM_OMEGA, n)
        alive = False
        for s in range(r, size - r):
            hit = False
            for u in range(nU):
                if cur[s + offs[u]]:
                    hit = True
                    break
            if hit:
                if mix64(lk ^ U64(x_start + (s - width))) < thr:
                    nxt[s] = 1
                    alive = True
                else:
                    nxt[s] = 0
            else:
                nxt[s] = 0
        if not alive:
            return n
        cur, nxt = nxt, cur
    return cap


@njit(cache=True, inline="always")
def _perm_key(sp, n, coords, s, d, salt):
    h = mix64(sp ^ U64(n))
    for j in range(d):
        h = mix64(h ^ U64(coords[s, j]))
    if salt != 0:
        h = mix64(h ^ U64(salt))
    return h


@njit(cache=True)
def _uniform_order(pk, nU, order):
    for i in range(nU):
        order[i] = i
    for i in range(nU - 1, 0, -1):
        j = np.int64(mix64(pk ^ U64(nU - 1 - i)) % U64(i + 1))
        tmp = order[i]
        order[i] = order[j]
        order[j] = tmp


@njit(cache=True)
def _capacity_at(sc, n, coords, s, d, delta_coords, u, cap_thr, cap_vals):
    h = mix64(sc ^ U64(n))
    for j in range(d):
        h = mix64(h ^ U64(coords[s, j] + delta_coords[u, j]))
    for i in range(cap_thr.shape[0]):
        if h <= cap_thr[i]:
            return cap_vals[i]
    return cap_vals[cap_thr.shape[0] - 1]


@njit(cache=True)
def _weighted_order(pk, nU, weights, order, scratch):
    for i in range(nU):
        scratch[i] = i
    m = nU
    for t in range(nU):
        total = 0
        for i in range(m):
            total += weights[scratch[i]]
        v = np.int64(mix64(pk ^ U64(t)) % U64(total))
        acc = 0
        pick = 0
        for i in range(m):
            acc += weights[scratch[i]]
            if v < acc:
                pick = i
                break
        order[t] = scratch[pick]
        for i in range(pick, m - 1):
            scratch[i] = scratch[i + 1]
        m -= 1


@njit(cache=True)
def gamma_advance(
    seed, perm_salt, H, n_lo, n_hi,
    ell8, flags, coords, nbr, delta_coords,
    cap_enabled, cap_thr, cap_vals,
    path, state, regs,
    target_frozen, stage_cap, gap_max,
):
    """Advance one local-construction walk while its layers stay in the slab.

    state = [k, frozen, n_regs]; path holds window-flat positions of the
    current length-k path (prefix up to `frozen` is final).  Returns a
    status code; see module constants.
    """
    S, d = coords.shape
    nU = nbr.shape[0]
    sp = mix64(U64(seed) ^ STREAM_PERM)
    sc = mix64(U64(seed) ^ STREAM_CAPACITY)
    order = np.empty(nU, np.int64)
    scratch = np.empty(nU, np.int64)
    weights = np.empty(nU, np.int64)

    k = state[0]
    frozen = state[1]
    nregs = state[2]

    while True:
        if frozen >= target_frozen:
            state[0] = k; state[1] = frozen; state[2] = nregs
            return ST_TARGET
        if k >= stage_cap:
            state[0] = k; state[1] = frozen; state[2] = nregs
            return ST_STAGE_CAP
        new_k = k + 1
        if new_k > n_hi:
            state[0] = k; state[1] = frozen; state[2] = nregs
            return ST_NEED_SLAB
        if new_k - frozen > gap_max:
            state[0] = k; state[1] = frozen; state[2] = nregs
            return ST_GAP
        # rebuild the suffix above the frozen prefix at stage new_k
        for i in range(frozen + 1, new_k + 1):
            y = path[i - 1]
            ny = i - 1
            t = new_k - i - 1
            row_e = ell8[i - n_lo]
            row_f = flags[i - n_lo]
            maxe = 0
            for u in range(nU):
                z = y + nbr[u]
                if row_f[z] & FLAG_CONT:
                    state[0] = k; state[1] = frozen; state[2] = nregs
                    return ST_CONTAMINATED
                e = row_e[z]
                if e > maxe:
                    maxe = np.int64(e)
            if t >= 254 and maxe == 255:
                state[0] = k; state[1] = frozen; state[2] = nregs
                return ST_CLAMP
            want = t + 1
            if maxe < want:
                want = maxe
            pk = _perm_key(sp, ny, coords, y, d, perm_salt)
            if cap_enabled:
                for u in range(nU):
                    weights[u] = _capacity_at(sc, ny + 1, coords, y, d,
                                              delta_coords, u, cap_thr, cap_vals)
                _weighted_order(pk, nU, weights, order, scratch)
            else:
                _uniform_order(pk, nU, order)
            chosen = -1
            for oi in range(nU):
                z = y + nbr[order[oi]]
                if np.int64(row_e[z]) >= want:
                    chosen = z
                    break
            path[i] = chosen
            if row_f[chosen] & FLAG_XI:
                frozen = i
        k = new_k
        if frozen == new_k:
            regs[nregs] = new_k
            nregs += 1


@njit(cache=True)
def direct_advance(
    seed, walker_id, H, n_lo, n_hi,
    flags, coords, nbr, delta_coords,
    cap_enabled, cap_thr, cap_vals,
    path, state, n_steps,
):
    """Advance the direct walk: uniform (or capacity-weighted) choice among
    backbone successors.  state = [current step]."""
    S, d = coords.shape
    nU = nbr.shape[0]
    sw = mix64(U64(seed) ^ STREAM_WALK)
    sc = mix64(U64(seed) ^ STREAM_CAPACITY)
    n = state[0]
    while n < n_steps:
        if n + 1 > n_hi:
            state[0] = n
            return ST_NEED_SLAB
        y = path[n]
        row_f = flags[n + 1 - n_lo]
        total = 0
        for u in range(nU):
            z = y + nbr[u]
            f = row_f[z]
            if f & FLAG_CONT:
                state[0] = n
                return ST_CONTAMINATED
            if f & FLAG_XI:
                if cap_enabled:
                    total += _capacity_at(sc, n + 1, coords, y, d,
                                          delta_coords, u, cap_thr, cap_vals)
                else:
                    total += 1
        if total == 0:
            state[0] = n
            return ST_NO_BACKBONE_NEIGHBOR
        key = mix64(mix64(sw ^ U64(walker_id)) ^ U64(n))
        v = np.int64(key % U64(total))
        acc = 0
        chosen = -1
        for u in range(nU):
            z = y + nbr[u]
            if row_f[z] & FLAG_XI:
                if cap_enabled:
                    acc += _capacity_at(sc, n + 1, coords, y, d,
                                        delta_coords, u, cap_thr, cap_vals)
                else:
                    acc += 1
                if v < acc:
                    chosen = z
                    break
        path[n + 1] = chosen
        n += 1
    state[0] = n
    return ST_TARGET
