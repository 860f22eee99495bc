"""Compiled episodic value stores with exact-match hashing and kd-tree k-NN.

Two layouts back the nearest-neighbor Q-memories:

* sparse per-action append arenas (``sp_*``): one ring of (key, value)
  entries per action. Entries older than the per-action capacity window are
  dead; a full arena is compacted in place (live window moved to the front,
  hash and kd-tree rebuilt). Used for the omniscient memory, whose keys are
  mostly novel.

* a dense observation table (``dn_*``): one row per distinct observation key
  holding a Q-value slot per action plus a presence bitmask (so n_actions is
  limited to 64). Used for the masked memory, where the same observation is
  revisited constantly and whole-row value reads dominate.

Keys are quantized to a 1e-5 grid on entry, which makes exact-match lookups a
hash probe and merges float noise between equal tree-traversal bounds.
"""
import numpy as np
from numba import njit

QUANT = 1.0e5
KMAX = 64
KD_DEPTH_LIMIT = 48
STACK_SIZE = 4096

_HASH_MIX = np.int64(0x9E3779B97F4A7C15 & 0x7FFFFFFFFFFFFFFF)


@njit(cache=True)
def quantize_into(src, out, offset):
    for i in range(src.shape[0]):
        out[offset + i] = np.float32(np.rint(src[i] * QUANT) / QUANT)
    return offset + src.shape[0]


@njit(cache=True)
def key_hash(key):
    h = np.int64(1469598103934665603)
    for i in range(key.shape[0]):
        g = np.int64(np.rint(key[i] * QUANT))
        h = (h ^ g) * np.int64(1099511628211)
    h = h ^ (h >> np.int64(29))
    h = h * _HASH_MIX
    h = h ^ (h >> np.int64(32))
    if h < 0:
        h = -h
    if h < 0:  # int64 min
        h = np.int64(0)
    return h


@njit(cache=True)
def keys_eq(keys2, row, q):
    for i in range(q.shape[0]):
        if keys2[row, i] != q[i]:
            return False
    return True


# ---------------------------------------------------------------------------
# generic kd helpers over a 2-D key array (rows indexed by node payload)
# ---------------------------------------------------------------------------

@njit(cache=True)
def _kd_select(keys2, dim, idxbuf, lo, hi, nth):
    """Partition idxbuf[lo:hi] so the nth-smallest by keys2[., dim] is at nth."""
    while hi - lo > 1:
        pivot = keys2[idxbuf[(lo + hi) // 2], dim]
        i, j = lo, hi - 1
        while i <= j:
            while keys2[idxbuf[i], dim] < pivot:
                i += 1
            while keys2[idxbuf[j], dim] > pivot:
                j -= 1
            if i <= j:
                tmp = idxbuf[i]
                idxbuf[i] = idxbuf[j]
                idxbuf[j] = tmp
                i += 1
                j -= 1
        if nth <= j:
            hi = j + 1
        elif nth >= i:
            lo = i
        else:
            return


@njit(cache=True)
def _kd_build(keys2, left, right, dim_arr, idxbuf, n, bstack):
    """Median-balanced build over idxbuf[0:n]; returns the root node id.

    Node ids are the idxbuf payload values; left/right/dim_arr are indexed by
    node id. bstack is an int64 scratch of shape (*, 4).
    """
    if n == 0:
        return -1
    D = keys2.shape[1]
    root = -1
    sp = 0
    bstack[0, 0] = 0
    bstack[0, 1] = n
    bstack[0, 2] = -1
    bstack[0, 3] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        lo = int(bstack[sp, 0])
        hi = int(bstack[sp, 1])
        parent = int(bstack[sp, 2])
        side = int(bstack[sp, 3])
        # pick the dimension with the largest spread over this range
        best_dim = 0
        best_spread = np.float32(-1.0)
        for d in range(D):
            mn = keys2[idxbuf[lo], d]
            mx = mn
            for i in range(lo + 1, hi):
                v = keys2[idxbuf[i], d]
                if v < mn:
                    mn = v
                elif v > mx:
                    mx = v
            if mx - mn > best_spread:
                best_spread = mx - mn
                best_dim = d
        mid = (lo + hi) // 2
        _kd_select(keys2, best_dim, idxbuf, lo, hi, mid)
        node = idxbuf[mid]
        dim_arr[node] = best_dim
        left[node] = -1
        right[node] = -1
        if parent < 0:
            root = node
        elif side == 0:
            left[parent] = node
        else:
            right[parent] = node
        if lo < mid:
            bstack[sp, 0] = lo
            bstack[sp, 1] = mid
            bstack[sp, 2] = node
            bstack[sp, 3] = 0
            sp += 1
        if mid + 1 < hi:
            bstack[sp, 0] = mid + 1
            bstack[sp, 1] = hi
            bstack[sp, 2] = node
            bstack[sp, 3] = 1
            sp += 1
    return root


@njit(cache=True)
def _kd_insert(keys2, left, right, dim_arr, root, node):
    """Attach `node` below `root`; returns (new_root, depth_exceeded)."""
    D = keys2.shape[1]
    left[node] = -1
    right[node] = -1
    if root < 0:
        dim_arr[node] = 0
        return node, False
    cur = root
    depth = 0
    while True:
        d = dim_arr[cur]
        if keys2[node, d] <= keys2[cur, d]:
            nxt = left[cur]
            if nxt < 0:
                dim_arr[node] = (d + 1) % D
                left[cur] = node
                break
        else:
            nxt = right[cur]
            if nxt < 0:
                dim_arr[node] = (d + 1) % D
                right[cur] = node
                break
        cur = nxt
        depth += 1
    return root, depth > KD_DEPTH_LIMIT


# ---------------------------------------------------------------------------
# sparse per-action arena store
# ---------------------------------------------------------------------------

@njit(cache=True)
def sp_lookup(keys, napp, cap, hasht, a, q):
    """Exact-match probe; returns a live arena position or -1."""
    H = hasht.shape[1]
    live_lo = napp[a] - cap
    slot = int(key_hash(q) & (H - 1))
    while True:
        pos = hasht[a, slot]
        if pos < 0:
            return -1
        if pos >= live_lo and keys_eq(keys[a], pos, q):
            return pos
        slot = (slot + 1) & (H - 1)


@njit(cache=True)
def sp_knn(keys, vals, napp, cap, kdl, kdr, kdd, kroot, a, q, k,
           qstack, kb_d, kb_v):
    """Mean of the k nearest live values for action a; returns (count, mean)."""
    root = kroot[a]
    if root < 0:
        return 0, 0.0
    live_lo = napp[a] - cap
    D = q.shape[0]
    found = 0
    worst = np.inf
    sp = 0
    qstack[sp] = root
    sp += 1
    while sp > 0:
        sp -= 1
        node = qstack[sp]
        if node < 0:
            continue
        if node >= live_lo:
            d2 = 0.0
            for d in range(D):
                diff = float(q[d]) - float(keys[a, node, d])
                d2 += diff * diff
            if found < k:
                i = found
                while i > 0 and kb_d[i - 1] > d2:
                    kb_d[i] = kb_d[i - 1]
                    kb_v[i] = kb_v[i - 1]
                    i -= 1
                kb_d[i] = d2
                kb_v[i] = vals[a, node]
                found += 1
                if found == k:
                    worst = kb_d[k - 1]
            elif d2 < worst:
                i = k - 1
                while i > 0 and kb_d[i - 1] > d2:
                    kb_d[i] = kb_d[i - 1]
                    kb_v[i] = kb_v[i - 1]
                    i -= 1
                kb_d[i] = d2
                kb_v[i] = vals[a, node]
                worst = kb_d[k - 1]
        dim = kdd[a, node]
        diff = float(q[dim]) - float(keys[a, node, dim])
        if diff <= 0.0:
            near = kdl[a, node]
            far = kdr[a, node]
        else:
            near = kdr[a, node]
            far = kdl[a, node]
        if far >= 0 and (found < k or diff * diff < worst):
            qstack[sp] = far
            sp += 1
        if near >= 0:
            qstack[sp] = near
            sp += 1
    if found == 0:
        return 0, 0.0
    s = 0.0
    for i in range(found):
        s += kb_v[i]
    return found, s / found


@njit(cache=True)
def sp_estimate(keys, vals, napp, cap, hasht, kdl, kdr, kdd, kroot, a, q, k,
                qstack, kb_d, kb_v):
    pos = sp_lookup(keys, napp, cap, hasht, a, q)
    if pos >= 0:
        return vals[a, pos]
    cnt, mean = sp_knn(keys, vals, napp, cap, kdl, kdr, kdd, kroot, a, q, k,
                       qstack, kb_d, kb_v)
    if cnt == 0:
        return 0.0
    return mean


@njit(cache=True)
def sp_compact(keys, vals, napp, cap, hasht, kdl, kdr, kdd, kroot, flags,
               built, a, idxbuf, bstack):
    """Move the live window to the arena front; rebuild hash and kd-tree."""
    n = napp[a]
    live_lo = n - cap
    if live_lo < 0:
        live_lo = 0
    L = n - live_lo
    D = keys.shape[2]
    if live_lo > 0:
        for i in range(L):
            src = live_lo + i
            for d in range(D):
                keys[a, i, d] = keys[a, src, d]
            vals[a, i] = vals[a, src]
    napp[a] = L
    H = hasht.shape[1]
    for s in range(H):
        hasht[a, s] = -1
    for pos in range(L):
        slot = int(key_hash(keys[a, pos]) & (H - 1))
        while hasht[a, slot] >= 0:
            slot = (slot + 1) & (H - 1)
        hasht[a, slot] = pos
    for i in range(L):
        idxbuf[i] = i
    kroot[a] = _kd_build(keys[a], kdl[a], kdr[a], kdd[a], idxbuf, L, bstack)
    flags[a] = 0
    built[a] = L


@njit(cache=True)
def sp_update(keys, vals, napp, cap, hasht, kdl, kdr, kdd, kroot, flags,
              built, a, q, target, alpha, idxbuf, bstack):
    """Blend toward target on an exact hit, otherwise insert a new entry.

    The kd-tree is rebuilt balanced (via compaction) whenever the arena
    fills, insertion depth degenerates, or the entry count has doubled since
    the last build; keys arrive in correlated order, so a purely incremental
    tree decays into a list.
    """
    pos = sp_lookup(keys, napp, cap, hasht, a, q)
    if pos >= 0:
        vals[a, pos] += alpha * (target - vals[a, pos])
        return
    arena = keys.shape[1]
    if (napp[a] == arena or flags[a] != 0
            or napp[a] - built[a] > max(1024, built[a])):
        sp_compact(keys, vals, napp, cap, hasht, kdl, kdr, kdd, kroot, flags,
                   built, a, idxbuf, bstack)
    pos = napp[a]
    D = keys.shape[2]
    for d in range(D):
        keys[a, pos, d] = q[d]
    vals[a, pos] = target
    napp[a] = pos + 1
    H = hasht.shape[1]
    slot = int(key_hash(q) & (H - 1))
    while hasht[a, slot] >= 0:
        slot = (slot + 1) & (H - 1)
    hasht[a, slot] = pos
    new_root, deep = _kd_insert(keys[a], kdl[a], kdr[a], kdd[a], kroot[a], pos)
    kroot[a] = new_root
    if deep:
        flags[a] = 1


# ---------------------------------------------------------------------------
# dense observation-row store
# ---------------------------------------------------------------------------

@njit(cache=True)
def dn_find(dkeys, dhash, q):
    H = dhash.shape[0]
    slot = int(key_hash(q) & (H - 1))
    while True:
        row = dhash[slot]
        if row < 0:
            return -1
        if keys_eq(dkeys, row, q):
            return row
        slot = (slot + 1) & (H - 1)


@njit(cache=True)
def dn_add_row(dkeys, dhash, dbits, dtouch, meta, q):
    """Append a new observation row (caller guarantees free space).

    The caller is responsible for clearing dkdbits for fresh rows; rows are
    zero-initialized on allocation so this holds for append-only use.
    """
    row = int(meta[0])
    for d in range(q.shape[0]):
        dkeys[row, d] = q[d]
    dbits[row] = 0
    dtouch[row] = 0
    meta[0] = row + 1
    H = dhash.shape[0]
    slot = int(key_hash(q) & (H - 1))
    while dhash[slot] >= 0:
        slot = (slot + 1) & (H - 1)
    dhash[slot] = row
    return row


@njit(cache=True)
def dn_rehash(dkeys, dhash, used):
    H = dhash.shape[0]
    for r in range(used):
        slot = int(key_hash(dkeys[r]) & (H - 1))
        while dhash[slot] >= 0:
            slot = (slot + 1) & (H - 1)
        dhash[slot] = r


@njit(cache=True)
def dn_knn(dkeys, dq, dbits, akd_row, akd_l, akd_r, akd_dim, akd_root, a, q,
           k, qstack, kb_d, kb_v):
    """k-NN over rows that hold an entry for action a; returns (count, mean)."""
    root = akd_root[a]
    if root < 0:
        return 0, 0.0
    D = q.shape[0]
    bit = np.int64(1) << a
    found = 0
    worst = np.inf
    sp = 0
    qstack[sp] = root
    sp += 1
    while sp > 0:
        sp -= 1
        node = qstack[sp]
        if node < 0:
            continue
        row = akd_row[node]
        if dbits[row] & bit:
            d2 = 0.0
            for d in range(D):
                diff = float(q[d]) - float(dkeys[row, d])
                d2 += diff * diff
            if found < k:
                i = found
                while i > 0 and kb_d[i - 1] > d2:
                    kb_d[i] = kb_d[i - 1]
                    kb_v[i] = kb_v[i - 1]
                    i -= 1
                kb_d[i] = d2
                kb_v[i] = dq[row, a]
                found += 1
                if found == k:
                    worst = kb_d[k - 1]
            elif d2 < worst:
                i = k - 1
                while i > 0 and kb_d[i - 1] > d2:
                    kb_d[i] = kb_d[i - 1]
                    kb_v[i] = kb_v[i - 1]
                    i -= 1
                kb_d[i] = d2
                kb_v[i] = dq[row, a]
                worst = kb_d[k - 1]
        dim = akd_dim[node]
        diff = float(q[dim]) - float(dkeys[akd_row[node], dim])
        if diff <= 0.0:
            near = akd_l[node]
            far = akd_r[node]
        else:
            near = akd_r[node]
            far = akd_l[node]
        if far >= 0 and (found < k or diff * diff < worst):
            qstack[sp] = far
            sp += 1
        if near >= 0:
            qstack[sp] = near
            sp += 1
    if found == 0:
        return 0, 0.0
    s = 0.0
    for i in range(found):
        s += kb_v[i]
    return found, s / found


@njit(cache=True)
def dn_estimate_row(dkeys, dq, dbits, dcount, akd_row, akd_l, akd_r, akd_dim,
                    akd_root, row, a, q, k, qstack, kb_d, kb_v):
    """Estimate with a known row id (-1 when the observation is unseen)."""
    if row >= 0 and (dbits[row] >> a) & 1:
        return dq[row, a]
    if dcount[a] == 0:
        return 0.0
    cnt, mean = dn_knn(dkeys, dq, dbits, akd_row, akd_l, akd_r, akd_dim,
                       akd_root, a, q, k, qstack, kb_d, kb_v)
    if cnt == 0:
        return 0.0
    return mean


@njit(cache=True)
def dn_estimate_all(dkeys, dq, dbits, dcount, akd_row, akd_l, akd_r, akd_dim,
                    akd_root, row, q, k, n_actions, out, qstack, kb_d, kb_v):
    """Fill `out[:n_actions]` with estimates for every action at one key."""
    for a in range(n_actions):
        out[a] = dn_estimate_row(dkeys, dq, dbits, dcount, akd_row, akd_l,
                                 akd_r, akd_dim, akd_root, row, a, q, k,
                                 qstack, kb_d, kb_v)


@njit(cache=True)
def dn_akd_insert(dkeys, akd_row, akd_l, akd_r, akd_dim, akd_root, akd_meta,
                  a, row):
    """Register (row, action) in action a's kd-tree. Returns False when the
    node arena is exhausted (caller must grow/rebuild)."""
    nid = int(akd_meta[0])
    if nid >= akd_row.shape[0]:
        return False
    akd_row[nid] = row
    akd_meta[0] = nid + 1
    # inline insert walking with dkeys indexed through akd_row
    D = dkeys.shape[1]
    akd_l[nid] = -1
    akd_r[nid] = -1
    root = akd_root[a]
    if root < 0:
        akd_dim[nid] = 0
        akd_root[a] = nid
        return True
    cur = root
    depth = 0
    while True:
        d = akd_dim[cur]
        if dkeys[row, d] <= dkeys[akd_row[cur], d]:
            nxt = akd_l[cur]
            if nxt < 0:
                akd_dim[nid] = (d + 1) % D
                akd_l[cur] = nid
                break
        else:
            nxt = akd_r[cur]
            if nxt < 0:
                akd_dim[nid] = (d + 1) % D
                akd_r[cur] = nid
                break
        cur = nxt
        depth += 1
    if depth > KD_DEPTH_LIMIT:
        akd_meta[1] = 1
    return True


@njit(cache=True)
def dn_update(dkeys, dq, dbits, dkdbits, dtouch, dhash, meta, dcount, devict,
              akd_row, akd_l, akd_r, akd_dim, akd_root, akd_meta,
              a, q, target, alpha, step, capacity, row_hint):
    """Update or insert (observation, action). Returns (row, ok); ok is False
    when the row table or kd arena is full and the caller must grow.

    dkdbits tracks which (row, action) pairs already own a kd node, so an
    entry evicted and later re-inserted is not registered twice.
    """
    row = row_hint
    if row < 0:
        row = dn_find(dkeys, dhash, q)
    bit = np.int64(1) << a
    if row >= 0 and dbits[row] & bit:
        dq[row, a] += alpha * (target - dq[row, a])
        dtouch[row] = step
        return row, True, False
    if row < 0:
        if meta[0] >= dkeys.shape[0]:
            return -1, False, False
        row = dn_add_row(dkeys, dhash, dbits, dtouch, meta, q)
    if not (dkdbits[row] & bit):
        if not dn_akd_insert(dkeys, akd_row, akd_l, akd_r, akd_dim, akd_root,
                             akd_meta, a, row):
            return row, False, False
        dkdbits[row] |= bit
    dq[row, a] = target
    dbits[row] |= bit
    dtouch[row] = step
    dcount[a] += 1
    evicted = False
    if dcount[a] > capacity:
        r2 = devict[a]
        used = int(meta[0])
        while r2 < used and not (dbits[r2] & bit):
            r2 += 1
        if r2 < used:
            dbits[r2] &= ~bit
            dq[r2, a] = 0.0
            dcount[a] -= 1
            devict[a] = r2 + 1
            evicted = True
    return row, True, evicted


@njit(cache=True)
def dn_rebuild_kd(dkeys, dbits, dkdbits, meta, dcount, akd_row, akd_l, akd_r,
                  akd_dim, akd_root, akd_meta, idxbuf, bstack):
    """Rebuild every action's kd-tree from the live presence bits."""
    A = akd_root.shape[0]
    used = int(meta[0])
    akd_meta[0] = 0
    akd_meta[1] = 0
    for r in range(used):
        dkdbits[r] = dbits[r]
    for a in range(A):  # noqa: B007 - loop body below fills per-action trees
        bit = np.int64(1) << a
        n = 0
        base = int(akd_meta[0])
        for r in range(used):
            if dbits[r] & bit:
                akd_row[base + n] = r
                idxbuf[n] = base + n
                n += 1
        akd_meta[0] = base + n
        if n == 0:
            akd_root[a] = -1
            continue
        # build over node ids; keys accessed through akd_row indirection
        akd_root[a] = _kd_build_indirect(dkeys, akd_row, akd_l, akd_r,
                                         akd_dim, idxbuf, n, bstack)
    akd_meta[2] = akd_meta[0]


@njit(cache=True)
def _kd_build_indirect(dkeys, akd_row, left, right, dim_arr, idxbuf, n, bstack):
    """Median build where node ids map to key rows via akd_row."""
    if n == 0:
        return -1
    D = dkeys.shape[1]
    root = -1
    bstack[0, 0] = 0
    bstack[0, 1] = n
    bstack[0, 2] = -1
    bstack[0, 3] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        lo = int(bstack[sp, 0])
        hi = int(bstack[sp, 1])
        parent = int(bstack[sp, 2])
        side = int(bstack[sp, 3])
        best_dim = 0
        best_spread = np.float32(-1.0)
        for d in range(D):
            mn = dkeys[akd_row[idxbuf[lo]], d]
            mx = mn
            for i in range(lo + 1, hi):
                v = dkeys[akd_row[idxbuf[i]], d]
                if v < mn:
                    mn = v
                elif v > mx:
                    mx = v
            if mx - mn > best_spread:
                best_spread = mx - mn
                best_dim = d
        mid = (lo + hi) // 2
        # select by indirect key
        lo2, hi2 = lo, hi
        while hi2 - lo2 > 1:
            pivot = dkeys[akd_row[idxbuf[(lo2 + hi2) // 2]], best_dim]
            i, j = lo2, hi2 - 1
            while i <= j:
                while dkeys[akd_row[idxbuf[i]], best_dim] < pivot:
                    i += 1
                while dkeys[akd_row[idxbuf[j]], best_dim] > pivot:
                    j -= 1
                if i <= j:
                    tmp = idxbuf[i]
                    idxbuf[i] = idxbuf[j]
                    idxbuf[j] = tmp
                    i += 1
                    j -= 1
            if mid <= j:
                hi2 = j + 1
            elif mid >= i:
                lo2 = i
            else:
                break
        node = idxbuf[mid]
        dim_arr[node] = best_dim
        left[node] = -1
        right[node] = -1
        if parent < 0:
            root = node
        elif side == 0:
            left[parent] = node
        else:
            right[parent] = node
        if lo < mid:
            bstack[sp, 0] = lo
            bstack[sp, 1] = mid
            bstack[sp, 2] = node
            bstack[sp, 3] = 0
            sp += 1
        if mid + 1 < hi:
            bstack[sp, 0] = mid + 1
            bstack[sp, 1] = hi
            bstack[sp, 2] = node
            bstack[sp, 3] = 1
            sp += 1
    return root
