"""Per-action nearest-neighbor Q-value memories.

Both classes implement the same contract: ``estimate(key, action)`` returns
the stored value on an exact key match, the mean of the k nearest stored
values for that action otherwise, and 0 when the action's memory is empty.
``update(key, action, target, alpha)`` blends an existing entry toward the
target and inserts a new entry otherwise, evicting oldest-first once the
per-action capacity is reached.

``QMemory`` keeps per-action entry arenas and suits keys that rarely repeat
(the omniscient memory). ``DenseQMemory`` keeps one row of Q-values per
distinct key and suits heavily revisited keys (the masked memory); it caps
n_actions at 62 because presence is tracked in an int64 bitmask.

Keys are quantized to a 1e-5 grid when stored and queried, so lookups treat
keys within float noise of each other as identical.
"""
import numpy as np

from . import _store
from ._store import KMAX, STACK_SIZE


def _next_pow2(n):
    p = 1
    while p < n:
        p *= 2
    return p


class _Scratch:
    def __init__(self, idx_size):
        self.qstack = np.empty(STACK_SIZE, np.int32)
        self.kb_d = np.empty(KMAX, np.float64)
        self.kb_v = np.empty(KMAX, np.float64)
        self.idxbuf = np.empty(max(idx_size, 16), np.int32)
        self.bstack = np.empty((128, 4), np.int64)


def _check_params(key_dim, n_actions, k, capacity):
    if key_dim < 1:
        raise ValueError("key_dim must be >= 1")
    if n_actions < 1:
        raise ValueError("n_actions must be >= 1")
    if not 1 <= k <= KMAX:
        raise ValueError(f"k must lie in 1..{KMAX}")
    if capacity < 1:
        raise ValueError("capacity must be >= 1")


class QMemory:
    """Sparse per-action entry store (general-purpose / omniscient flavor)."""

    def __init__(self, key_dim, n_actions, k=9, capacity=200_000):
        _check_params(key_dim, n_actions, k, capacity)
        self.key_dim = key_dim
        self.n_actions = n_actions
        self.k = k
        self.capacity = capacity
        arena = capacity + max(capacity // 2, 1024)
        H = _next_pow2(2 * arena)
        self.keys = np.zeros((n_actions, arena, key_dim), np.float32)
        self.vals = np.zeros((n_actions, arena), np.float64)
        self.napp = np.zeros(n_actions, np.int64)
        self.hasht = np.full((n_actions, H), -1, np.int32)
        self.kdl = np.full((n_actions, arena), -1, np.int32)
        self.kdr = np.full((n_actions, arena), -1, np.int32)
        self.kdd = np.zeros((n_actions, arena), np.uint8)
        self.kroot = np.full(n_actions, -1, np.int32)
        self.flags = np.zeros(n_actions, np.uint8)
        self.built = np.zeros(n_actions, np.int64)
        self.scratch = _Scratch(arena)

    def _qkey(self, key):
        key = np.asarray(key, dtype=np.float64)
        if key.shape != (self.key_dim,):
            raise ValueError(
                f"key length {key.shape} does not match key_dim {self.key_dim}")
        out = np.empty(self.key_dim, np.float32)
        _store.quantize_into(key, out, 0)
        return out

    def _check_action(self, action):
        if not 0 <= action < self.n_actions:
            raise ValueError(f"action {action} out of range")

    def entry_count(self, action):
        self._check_action(action)
        return int(min(self.napp[action], self.capacity))

    def estimate(self, key, action):
        self._check_action(action)
        q = self._qkey(key)
        s = self.scratch
        return float(_store.sp_estimate(
            self.keys, self.vals, self.napp, self.capacity, self.hasht,
            self.kdl, self.kdr, self.kdd, self.kroot, action, q, self.k,
            s.qstack, s.kb_d, s.kb_v))

    def estimate_all(self, key):
        return np.array([self.estimate(key, a) for a in range(self.n_actions)])

    def update(self, key, action, target, alpha):
        self._check_action(action)
        if not 0 < alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        q = self._qkey(key)
        s = self.scratch
        _store.sp_update(
            self.keys, self.vals, self.napp, self.capacity, self.hasht,
            self.kdl, self.kdr, self.kdd, self.kroot, self.flags, self.built,
            action, q, float(target), float(alpha), s.idxbuf, s.bstack)


class DenseQMemory:
    """Dense observation-row store (masked flavor; n_actions <= 62)."""

    MAX_ROWS = 4_194_304

    def __init__(self, key_dim, n_actions, k=9, capacity=200_000,
                 init_rows=4096):
        _check_params(key_dim, n_actions, k, capacity)
        if n_actions > 62:
            raise ValueError("DenseQMemory supports at most 62 actions")
        self.key_dim = key_dim
        self.n_actions = n_actions
        self.k = k
        self.capacity = capacity
        self._alloc(init_rows, 4 * init_rows)
        self.scratch = _Scratch(init_rows)

    def _alloc(self, rows, arena):
        self.dkeys = np.zeros((rows, self.key_dim), np.float32)
        self.dq = np.zeros((rows, self.n_actions), np.float64)
        self.dbits = np.zeros(rows, np.int64)
        self.dkdbits = np.zeros(rows, np.int64)
        self.dtouch = np.zeros(rows, np.int32)
        self.dhash = np.full(_next_pow2(2 * rows), -1, np.int32)
        self.dmeta = np.zeros(4, np.int64)
        self.dcount = np.zeros(self.n_actions, np.int64)
        self.devict = np.zeros(self.n_actions, np.int64)
        self.akd_row = np.full(arena, -1, np.int32)
        self.akd_l = np.full(arena, -1, np.int32)
        self.akd_r = np.full(arena, -1, np.int32)
        self.akd_dim = np.zeros(arena, np.uint8)
        self.akd_root = np.full(self.n_actions, -1, np.int32)
        self.akd_meta = np.zeros(4, np.int64)

    @property
    def rows_used(self):
        return int(self.dmeta[0])

    def entry_count(self, action):
        return int(self.dcount[action])

    def _qkey(self, key):
        key = np.asarray(key, dtype=np.float64)
        if key.shape != (self.key_dim,):
            raise ValueError(
                f"key length {key.shape} does not match key_dim {self.key_dim}")
        out = np.empty(self.key_dim, np.float32)
        _store.quantize_into(key, out, 0)
        return out

    def _check_action(self, action):
        if not 0 <= action < self.n_actions:
            raise ValueError(f"action {action} out of range")

    def estimate(self, key, action):
        self._check_action(action)
        q = self._qkey(key)
        row = _store.dn_find(self.dkeys, self.dhash, q)
        s = self.scratch
        return float(_store.dn_estimate_row(
            self.dkeys, self.dq, self.dbits, self.dcount, self.akd_row,
            self.akd_l, self.akd_r, self.akd_dim, self.akd_root, row, action,
            q, self.k, s.qstack, s.kb_d, s.kb_v))

    def estimate_all(self, key):
        q = self._qkey(key)
        row = _store.dn_find(self.dkeys, self.dhash, q)
        s = self.scratch
        out = np.empty(self.n_actions)
        _store.dn_estimate_all(
            self.dkeys, self.dq, self.dbits, self.dcount, self.akd_row,
            self.akd_l, self.akd_r, self.akd_dim, self.akd_root, row, q,
            self.k, self.n_actions, out, s.qstack, s.kb_d, s.kb_v)
        return out

    def update(self, key, action, target, alpha):
        self._check_action(action)
        if not 0 < alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        q = self._qkey(key)
        for _ in range(3):
            row, ok, _evicted = _store.dn_update(
                self.dkeys, self.dq, self.dbits, self.dkdbits, self.dtouch,
                self.dhash, self.dmeta, self.dcount, self.devict,
                self.akd_row, self.akd_l, self.akd_r, self.akd_dim,
                self.akd_root, self.akd_meta, action, q, float(target),
                float(alpha), 0, self.capacity, -1)
            if ok:
                if self.akd_meta[1]:
                    self.rebuild_kd()
                return
            self.service(int(self.dmeta[0]) + 2, int(self.akd_meta[0]) + 2)
        raise RuntimeError("DenseQMemory could not make room for an update")

    def rebuild_kd(self):
        s = self.scratch
        if s.idxbuf.shape[0] < self.dkeys.shape[0]:
            s.idxbuf = np.empty(self.dkeys.shape[0], np.int32)
        _store.dn_rebuild_kd(
            self.dkeys, self.dbits, self.dkdbits, self.dmeta, self.dcount,
            self.akd_row, self.akd_l, self.akd_r, self.akd_dim, self.akd_root,
            self.akd_meta, s.idxbuf, s.bstack)

    def service(self, need_rows, need_nodes):
        """Grow row/node storage (or compact at the hard row cap) until the
        requested headroom is available."""
        rows = self.dkeys.shape[0]
        if need_rows > rows:
            if rows >= self.MAX_ROWS:
                self._compact_rows()
            else:
                self._grow_rows(min(max(2 * rows, need_rows), self.MAX_ROWS))
        if need_nodes > self.akd_row.shape[0] or self.akd_meta[1]:
            self._grow_arena(max(2 * self.akd_row.shape[0], need_nodes))
            self.rebuild_kd()

    def _grow_rows(self, new_rows):
        used = self.rows_used
        if self.scratch.idxbuf.shape[0] < new_rows:
            self.scratch.idxbuf = np.empty(new_rows, np.int32)
        old = (self.dkeys, self.dq, self.dbits, self.dkdbits, self.dtouch)
        self.dkeys = np.zeros((new_rows, self.key_dim), np.float32)
        self.dq = np.zeros((new_rows, self.n_actions), np.float64)
        self.dbits = np.zeros(new_rows, np.int64)
        self.dkdbits = np.zeros(new_rows, np.int64)
        self.dtouch = np.zeros(new_rows, np.int32)
        self.dkeys[:used] = old[0][:used]
        self.dq[:used] = old[1][:used]
        self.dbits[:used] = old[2][:used]
        self.dkdbits[:used] = old[3][:used]
        self.dtouch[:used] = old[4][:used]
        self.dhash = np.full(_next_pow2(2 * new_rows), -1, np.int32)
        _store.dn_rehash(self.dkeys, self.dhash, used)

    def _grow_arena(self, new_arena):
        n = int(self.akd_meta[0])
        old = (self.akd_row, self.akd_l, self.akd_r, self.akd_dim)
        self.akd_row = np.full(new_arena, -1, np.int32)
        self.akd_l = np.full(new_arena, -1, np.int32)
        self.akd_r = np.full(new_arena, -1, np.int32)
        self.akd_dim = np.zeros(new_arena, np.uint8)
        self.akd_row[:n] = old[0][:n]
        self.akd_l[:n] = old[1][:n]
        self.akd_r[:n] = old[2][:n]
        self.akd_dim[:n] = old[3][:n]

    def _compact_rows(self):
        """Drop the least recently updated half of the rows (memory-pressure
        valve; per-action capacity eviction is handled in dn_update)."""
        used = self.rows_used
        order = np.argsort(self.dtouch[:used], kind="stable")
        keep = np.sort(order[used // 2:])
        self._retain_rows(keep)

    def _retain_rows(self, keep):
        n_keep = keep.shape[0]
        self.dkeys[:n_keep] = self.dkeys[keep]
        self.dq[:n_keep] = self.dq[keep]
        self.dbits[:n_keep] = self.dbits[keep]
        self.dkdbits[:n_keep] = self.dbits[:n_keep]
        self.dtouch[:n_keep] = self.dtouch[keep]
        self.dmeta[0] = n_keep
        for a in range(self.n_actions):
            bit = np.int64(1) << a
            self.dcount[a] = int(np.count_nonzero(
                self.dbits[:n_keep] & bit))
        self.devict[:] = 0
        self.dhash[:] = -1
        _store.dn_rehash(self.dkeys, self.dhash, n_keep)
        self.rebuild_kd()
