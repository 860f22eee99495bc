"""Compiled episodic-control training loop over the wrapped environment.

One call runs whole episodes until an episode target is reached (the caller
pauses there to evaluate/extract) or until the masked store needs more room
(return code 1). All mutable state lives in the arrays passed in, so chunked
calls resume seamlessly at episode boundaries.

The loop body is split into moderate-size jitted helpers; one huge function
makes LLVM compile times explode on small machines.
"""
import numpy as np
from numba import njit

from ._envs_impl import (
    ENV_CARTPOLE,
    ENV_POTHOLE,
    ENV_PREREQ,
    cartpole_step_into,
    normalize_into,
    pothole_step,
    prereq_step_into,
)
from ._rng import next_f64, next_int
from ._store import (
    dn_estimate_row,
    dn_find,
    dn_rebuild_kd,
    dn_update,
    quantize_into,
    sp_estimate,
    sp_update,
)

CHUNK_DONE = 0
CHUNK_GROW = 1


@njit(cache=True)
def _f4_eq(a, b):
    for i in range(a.shape[0]):
        if a[i] != b[i]:
            return False
    return True


@njit(cache=True)
def _masked_argmax(dkeys, dq, dbits, dcount, akd_row, akd_l, akd_r, akd_dim,
                   akd_root, row, q, k, nleg, qstack, kb_d, kb_v):
    """Greedy action over the first nleg actions; ties go to the lowest index."""
    best_a = 0
    best_v = -np.inf
    for a in range(nleg):
        v = dn_estimate_row(dkeys, dq, dbits, dcount, akd_row, akd_l, akd_r,
                            akd_dim, akd_root, row, a, q, k, qstack, kb_d,
                            kb_v)
        if v > best_v:
            best_v = v
            best_a = a
    return best_a, best_v


@njit(cache=True)
def _apply_action(env_kind, goal_item, prereq_mask, lane2, lane3, env_consts,
                  lo, hi, n, n_base, p, zeta, a, t_base, rng_state,
                  raw, norm, lower, upper, raw2, norm2, lower2, upper2):
    """Apply wrapped action a; fills the *2 buffers. Returns (r, terminal)."""
    if a < n_base:
        if env_kind == ENV_PREREQ:
            r, term = prereq_step_into(raw, a, prereq_mask, goal_item, raw2)
        elif env_kind == ENV_POTHOLE:
            u = env_consts[3] + next_f64(rng_state) * (env_consts[4]
                                                       - env_consts[3])
            pos, r, term = pothole_step(raw[0], a, u, lane2, lane3,
                                        env_consts[0], env_consts[1],
                                        env_consts[2])
            raw2[0] = pos
        else:
            r, term = cartpole_step_into(raw, a, t_base, raw2)
        normalize_into(raw2, lo, hi, norm2)
        for i in range(n):
            lower2[i] = 0.0
            upper2[i] = 1.0
        return r, term
    rel = a - n_base
    c = rel // p
    j = rel % p
    v = float(j + 1) / float(p + 1)
    v_p = v * (upper[c] - lower[c]) + lower[c]
    for i in range(n):
        raw2[i] = raw[i]
        norm2[i] = norm[i]
        lower2[i] = lower[i]
        upper2[i] = upper[i]
    if norm[c] <= v_p:
        if v_p < upper2[c]:
            upper2[c] = v_p
    else:
        if v_p > lower2[c]:
            lower2[c] = v_p
    return zeta, False


@njit(cache=True)
def run_chunk(env_kind, goal_item, prereq_mask, lane2, lane3, env_consts,
              lo, hi, n, n_base, p, n_act,
              zeta, gamma_b, gamma_w, depth_limit, max_wrapped,
              k, alpha_b, alpha_o, eps_start, eps_end, eps_decay,
              episodes_until, cap_masked, cap_omni,
              dkeys, dq, dbits, dkdbits, dtouch, dhash, dmeta, dcount, devict,
              akd_row, akd_l, akd_r, akd_dim, akd_root, akd_meta,
              okeys, ovals, onapp, ohash, okdl, okdr, okdd, okroot, oflags,
              obuilt,
              qstack, kb_d, kb_v, oidxbuf, obstack, midxbuf, mbstack,
              rng_state, meta):
    raw = np.zeros(n)
    raw2 = np.zeros(n)
    norm = np.zeros(n)
    norm2 = np.zeros(n)
    lower = np.zeros(n)
    upper = np.ones(n)
    lower2 = np.zeros(n)
    upper2 = np.ones(n)
    obs_key = np.empty(2 * n, np.float32)
    obs_key2 = np.empty(2 * n, np.float32)
    full_key = np.empty(3 * n, np.float32)

    while meta[0] < episodes_until:
        # the masked store must fit a worst-case episode of fresh entries
        if (dmeta[0] + max_wrapped + 2 > dkeys.shape[0]
                or akd_meta[0] + max_wrapped + 2 > akd_row.shape[0]
                or akd_meta[1] != 0):
            meta[2] = CHUNK_GROW
            return CHUNK_GROW
        # keep the masked kd-trees balanced as entries accumulate
        if akd_meta[0] - akd_meta[2] > max(2048, akd_meta[2]):
            dn_rebuild_kd(dkeys, dbits, dkdbits, dmeta, dcount, akd_row,
                          akd_l, akd_r, akd_dim, akd_root, akd_meta,
                          midxbuf, mbstack)
        ep = meta[0]
        if ep >= eps_decay:
            eps = eps_end
        else:
            eps = eps_start + (eps_end - eps_start) * ep / eps_decay

        if env_kind == ENV_CARTPOLE:
            for i in range(n):
                raw[i] = -0.05 + 0.1 * next_f64(rng_state)
        else:
            for i in range(n):
                raw[i] = 0.0
        normalize_into(raw, lo, hi, norm)
        for i in range(n):
            lower[i] = 0.0
            upper[i] = 1.0
        ssb = 0
        t_base = 0
        off = quantize_into(lower, obs_key, 0)
        quantize_into(upper, obs_key, off)
        cur_row = dn_find(dkeys, dhash, obs_key)
        steps = 0
        carry_a = -1  # next-state argmax carried into the next selection

        while True:
            splits_ok = depth_limit < 0 or ssb < depth_limit
            nleg = n_act if splits_ok else n_base
            if next_f64(rng_state) < eps:
                a = next_int(rng_state, nleg)
            elif carry_a >= 0:
                a = carry_a
            else:
                a, _ = _masked_argmax(dkeys, dq, dbits, dcount, akd_row,
                                      akd_l, akd_r, akd_dim, akd_root,
                                      cur_row, obs_key, k, nleg, qstack,
                                      kb_d, kb_v)
            r, term = _apply_action(env_kind, goal_item, prereq_mask, lane2,
                                    lane3, env_consts, lo, hi, n, n_base, p,
                                    zeta, a, t_base, rng_state,
                                    raw, norm, lower, upper,
                                    raw2, norm2, lower2, upper2)
            if a < n_base:
                ssb2 = 0
                t_base += 1
            else:
                ssb2 = ssb + 1
            steps += 1

            off = quantize_into(lower2, obs_key2, 0)
            quantize_into(upper2, obs_key2, off)
            same_obs = _f4_eq(obs_key2, obs_key)
            if same_obs:
                next_row = cur_row
            else:
                next_row = dn_find(dkeys, dhash, obs_key2)

            carry_a = -1
            if term:
                target = r
            else:
                splits_ok2 = depth_limit < 0 or ssb2 < depth_limit
                nleg2 = n_act if splits_ok2 else n_base
                a_star, _ = _masked_argmax(dkeys, dq, dbits, dcount, akd_row,
                                           akd_l, akd_r, akd_dim, akd_root,
                                           next_row, obs_key2, k, nleg2,
                                           qstack, kb_d, kb_v)
                carry_a = a_star
                off = quantize_into(norm2, full_key, 0)
                off = quantize_into(lower2, full_key, off)
                quantize_into(upper2, full_key, off)
                bootstrap = sp_estimate(okeys, ovals, onapp, cap_omni, ohash,
                                        okdl, okdr, okdd, okroot, a_star,
                                        full_key, k, qstack, kb_d, kb_v)
                if a < n_base:
                    target = r + gamma_b * bootstrap
                else:
                    target = zeta + gamma_w * bootstrap

            row_after, ok, evicted = dn_update(
                dkeys, dq, dbits, dkdbits, dtouch, dhash, dmeta, dcount,
                devict, akd_row, akd_l, akd_r, akd_dim, akd_root, akd_meta,
                a, obs_key, target, alpha_b, np.int32(meta[1] & 0x7FFFFFFF),
                cap_masked, cur_row)
            if not ok:
                meta[2] = CHUNK_GROW
                return CHUNK_GROW
            if same_obs and cur_row < 0:
                next_row = row_after
            if same_obs or evicted:
                # the masked values behind the carried argmax just changed
                carry_a = -1

            off = quantize_into(norm, full_key, 0)
            off = quantize_into(lower, full_key, off)
            quantize_into(upper, full_key, off)
            sp_update(okeys, ovals, onapp, cap_omni, ohash, okdl, okdr, okdd,
                      okroot, oflags, obuilt, a, full_key, target, alpha_o,
                      oidxbuf, obstack)

            raw, raw2 = raw2, raw
            norm, norm2 = norm2, norm
            lower, lower2 = lower2, lower
            upper, upper2 = upper2, upper
            obs_key, obs_key2 = obs_key2, obs_key
            cur_row = next_row
            ssb = ssb2
            meta[1] += 1
            if term or steps >= max_wrapped:
                break
        meta[0] += 1
    meta[2] = CHUNK_DONE
    return CHUNK_DONE
