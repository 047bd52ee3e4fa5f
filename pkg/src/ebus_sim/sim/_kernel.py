"""Minute-stepped fleet kernel.

The world advances one minute per ``step_minute`` call.  Inside a minute,
bus events (station arrivals, dwell ends, charger completions), terminal
dispatches and the service-close transition are processed in time order at
their exact sub-minute instants; continuous quantities (position, state of
charge, charger draw) are then integrated to the minute boundary.

All state lives in flat numpy arrays indexed by the constants below so the
same code runs under numba or as plain Python.
"""

from __future__ import annotations

import numpy as np

from .._accel import njit

INF = 1e300
NEG_INF = -1e300
EPS = 1e-9

# bus phases
PH_READY = 1
PH_TRAVEL = 2
PH_DWELL = 3
PH_QUEUED = 4
PH_FAST = 5
PH_DEADHEAD = 6
PH_DEPOT_QUEUE = 7
PH_SLOW = 8
PH_DONE = 9
PH_STRANDED = 10
PH_TOPUP = 11  # idle in the pool on a free fast charger; still dispatchable

# bus int fields
BI_PHASE = 0
BI_DIR = 1  # 0 up (increasing index), 1 down
BI_STATION = 2  # station being approached / occupied
BI_TERM = 3  # 0 or 1 while parked, queued or charging at a terminal
BI_NON = 4  # passengers on board
BI_SLOT = 5  # charger slot in use
BI_STRAND = 6  # 1 when the pending event is running out of energy
BI_PULLIN = 7  # 1 when the deadhead is the end-of-day return to depot
BI_NI = 8

# bus float fields
BF_SOC = 0
BF_TNEXT = 1
BF_READY = 2  # earliest dispatch time at the terminal
BF_QUEUE_T = 3
BF_POS = 4  # km from origin
BF_TARGET = 5
BF_SYNC = 6
BF_ODO = 7
BF_TRACTION = 8
BF_AUX = 9
BF_CHARGED = 10
BF_DOOR = 11  # time the doors opened at the current stop
BF_GRID = 12  # grid-side kWh drawn for this bus
BF_CHARGE_TO = 13  # soc at which the current or queued charge session ends
BF_NF = 14

# float params
FP_SPEED = 0  # km per minute
FP_DWELL = 1
FP_LAYOVER = 2
FP_EKM = 3  # kWh per km
FP_AUX = 4  # kWh per minute in revenue service
FP_USABLE = 5
FP_START = 6  # kWh
FP_STOP = 7  # kWh
FP_FAST_RATE = 8  # kWh per minute
FP_SLOW_RATE = 9
FP_EFF = 10
FP_OPEN = 11
FP_CLOSE = 12
FP_SERVICE_START = 13
FP_HSTART = 14
FP_N = 15

# int params
IP_NST = 0
IP_NBUS = 1
IP_CAP = 2
IP_DEPOT = 3
IP_FAST0 = 4
IP_FAST1 = 5
IP_SLOW = 6
IP_MAXH = 7
IP_TOPUP = 8  # 1 enables opportunistic top-up
IP_LOWSOC = 9  # 1 dispatches the lowest-soc ready bus, 0 the longest waiting
IP_N = 10

# counters
IC_VIOL0 = 0
IC_VIOL1 = 1
IC_NSTRAND = 2
IC_CLOSED = 3
IC_FINISHED = 4
IC_LAST_MINUTE = 5
IC_CAP_BREACH = 6
IC_N = 7


@njit
def _term_station(ip, e):
    return 0 if e == 0 else ip[IP_NST] - 1


@njit
def _fast_count(ip, e):
    return ip[IP_FAST0] if e == 0 else ip[IP_FAST1]


@njit
def _consume(bf, b, x, aux):
    soc = bf[b, BF_SOC]
    if x > soc:
        x = soc
    if x <= 0.0:
        return
    bf[b, BF_SOC] = soc - x
    if aux:
        bf[b, BF_AUX] += x
    else:
        bf[b, BF_TRACTION] += x


@njit
def _add_charge(bf, fp, grid, b, x, minute):
    if x <= 0.0:
        return
    bf[b, BF_SOC] += x
    bf[b, BF_CHARGED] += x
    g = x / fp[FP_EFF]
    bf[b, BF_GRID] += g
    grid[minute - int(fp[FP_HSTART])] += g


@njit
def _sync(bi, bf, fp, grid, b, t, minute):
    """Integrate bus ``b`` from its last sync time up to ``t``."""
    dt = t - bf[b, BF_SYNC]
    if dt <= 0.0:
        return
    ph = bi[b, BI_PHASE]
    if ph == PH_TRAVEL or ph == PH_DEADHEAD:
        remaining = abs(bf[b, BF_TARGET] - bf[b, BF_POS])
        dist = fp[FP_SPEED] * dt
        if dist > remaining:
            dist = remaining
        if bf[b, BF_TARGET] >= bf[b, BF_POS]:
            bf[b, BF_POS] += dist
        else:
            bf[b, BF_POS] -= dist
        bf[b, BF_ODO] += dist
        _consume(bf, b, dist * fp[FP_EKM], False)
        if ph == PH_TRAVEL:
            _consume(bf, b, fp[FP_AUX] * dt, True)
    elif ph == PH_DWELL:
        _consume(bf, b, fp[FP_AUX] * dt, True)
    elif ph == PH_FAST or ph == PH_SLOW or ph == PH_TOPUP:
        rate = fp[FP_SLOW_RATE] if ph == PH_SLOW else fp[FP_FAST_RATE]
        room = bf[b, BF_CHARGE_TO] - bf[b, BF_SOC]
        x = rate * dt
        if x > room:
            x = room
        _add_charge(bf, fp, grid, b, x, minute)
    bf[b, BF_SYNC] = t


@njit
def _begin_move(bi, bf, fp, b, t, target, phase):
    bi[b, BI_PHASE] = phase
    bf[b, BF_TARGET] = target
    bf[b, BF_SYNC] = t
    dist = abs(target - bf[b, BF_POS])
    dur = dist / fp[FP_SPEED]
    rate = fp[FP_SPEED] * fp[FP_EKM]
    if phase == PH_TRAVEL:
        rate += fp[FP_AUX]
    need = rate * dur
    soc = bf[b, BF_SOC]
    if need <= soc or rate <= 0.0:
        bi[b, BI_STRAND] = 0
        bf[b, BF_TNEXT] = t + dur
    else:
        bi[b, BI_STRAND] = 1
        bf[b, BF_TNEXT] = t + soc / rate


@njit
def _begin_dwell(bi, bf, fp, b, t):
    bi[b, BI_PHASE] = PH_DWELL
    bf[b, BF_SYNC] = t
    bf[b, BF_DOOR] = t
    need = fp[FP_AUX] * fp[FP_DWELL]
    soc = bf[b, BF_SOC]
    if need <= soc or fp[FP_AUX] <= 0.0:
        bi[b, BI_STRAND] = 0
        bf[b, BF_TNEXT] = t + fp[FP_DWELL]
    else:
        bi[b, BI_STRAND] = 1
        bf[b, BF_TNEXT] = t + soc / fp[FP_AUX]


@njit
def _depart(bi, bf, fp, st_km, b, t):
    """Leave the current station in the bus's direction of travel."""
    st = bi[b, BI_STATION]
    nxt = st + 1 if bi[b, BI_DIR] == 0 else st - 1
    bi[b, BI_STATION] = nxt
    _begin_move(bi, bf, fp, b, t, st_km[nxt], PH_TRAVEL)


@njit
def _board(bi, bf, ip, onboard, p_arr, p_board, p_bus, q_head, q_end, b, t):
    st = bi[b, BI_STATION]
    d = bi[b, BI_DIR]
    cap = ip[IP_CAP]
    h = q_head[st, d]
    end = q_end[st, d]
    n = bi[b, BI_NON]
    while h < end and n < cap and p_arr[h] <= t:
        onboard[b, n] = h
        n += 1
        p_board[h] = t
        p_bus[h] = b
        h += 1
    q_head[st, d] = h
    bi[b, BI_NON] = n


@njit
def _alight(bi, onboard, p_dest, p_alight, b, t):
    st = bi[b, BI_STATION]
    n = bi[b, BI_NON]
    k = 0
    for j in range(n):
        pid = onboard[b, j]
        if p_dest[pid] == st:
            p_alight[pid] = t
        else:
            onboard[b, k] = pid
            k += 1
    bi[b, BI_NON] = k


@njit
def _start_charge(bi, bf, b, t, phase, slot, rate, target):
    bi[b, BI_PHASE] = phase
    bi[b, BI_SLOT] = slot
    bf[b, BF_SYNC] = t
    bf[b, BF_CHARGE_TO] = target
    room = target - bf[b, BF_SOC]
    if room < 0.0:
        room = 0.0
    bf[b, BF_TNEXT] = t + room / rate


@njit
def _request_fast(bi, bf, fp, ip, grid, fast_slot, b, e, t, minute, target):
    bi[b, BI_TERM] = e
    for k in range(_fast_count(ip, e)):
        if fast_slot[e, k] < 0:
            fast_slot[e, k] = b
            _start_charge(bi, bf, b, t, PH_FAST, k, fp[FP_FAST_RATE], target)
            return
    # a top-up session yields its charger to a bus below the start threshold
    for k in range(_fast_count(ip, e)):
        o = fast_slot[e, k]
        if bi[o, BI_PHASE] == PH_TOPUP:
            _unplug(bi, bf, fp, grid, fast_slot, o, t, minute)
            fast_slot[e, k] = b
            _start_charge(bi, bf, b, t, PH_FAST, k, fp[FP_FAST_RATE], target)
            return
    bi[b, BI_PHASE] = PH_QUEUED
    bf[b, BF_CHARGE_TO] = target
    bf[b, BF_QUEUE_T] = t
    bf[b, BF_TNEXT] = INF


@njit
def _unplug(bi, bf, fp, grid, fast_slot, b, t, minute):
    """End a top-up session early; the bus goes back to the ready pool."""
    _sync(bi, bf, fp, grid, b, t, minute)
    fast_slot[bi[b, BI_TERM], bi[b, BI_SLOT]] = -1
    bi[b, BI_SLOT] = -1
    bi[b, BI_PHASE] = PH_READY
    bf[b, BF_TNEXT] = INF


@njit
def _fill_chargers(bi, bf, fp, ip, fast_slot, e, t):
    """Hand free fast chargers at terminal ``e`` to queued buses, then to idle ones."""
    nbus = ip[IP_NBUS]
    for k in range(_fast_count(ip, e)):
        if fast_slot[e, k] >= 0:
            continue
        nq = _next_queued(bi, bf, PH_QUEUED, e, nbus)
        if nq >= 0:
            fast_slot[e, k] = nq
            _start_charge(bi, bf, nq, t, PH_FAST, k, fp[FP_FAST_RATE], bf[nq, BF_CHARGE_TO])
            continue
        if ip[IP_TOPUP] == 0 or t >= fp[FP_CLOSE]:
            return
        best = -1
        low = fp[FP_STOP] - EPS
        for b in range(nbus):
            if bi[b, BI_PHASE] == PH_READY and bi[b, BI_TERM] == e and bf[b, BF_SOC] < low:
                low = bf[b, BF_SOC]
                best = b
        if best < 0:
            return
        fast_slot[e, k] = best
        _start_charge(bi, bf, best, t, PH_TOPUP, k, fp[FP_FAST_RATE], fp[FP_STOP])


@njit
def _request_slow(bi, bf, fp, ip, slow_slot, b, t):
    if bf[b, BF_SOC] >= fp[FP_USABLE]:
        bi[b, BI_PHASE] = PH_DONE
        bf[b, BF_TNEXT] = INF
        return
    for k in range(ip[IP_SLOW]):
        if slow_slot[k] < 0:
            slow_slot[k] = b
            _start_charge(bi, bf, b, t, PH_SLOW, k, fp[FP_SLOW_RATE], fp[FP_USABLE])
            return
    bi[b, BI_PHASE] = PH_DEPOT_QUEUE
    bf[b, BF_QUEUE_T] = t
    bf[b, BF_TNEXT] = INF


@njit
def _pull_in_or_charge(bi, bf, fp, ip, st_km, grid, fast_slot, slow_slot, b, e, t, minute):
    """End-of-service handling for a bus standing at terminal ``e``."""
    depot = ip[IP_DEPOT]
    here = _term_station(ip, e)
    if here == depot:
        bi[b, BI_STATION] = depot
        _request_slow(bi, bf, fp, ip, slow_slot, b, t)
        return
    need = abs(st_km[here] - st_km[depot]) * fp[FP_EKM]
    # a pack that cannot hold the deadhead energy leaves anyway and strands
    if bf[b, BF_SOC] >= need - EPS or _fast_count(ip, e) == 0 or need > fp[FP_USABLE] + EPS:
        bi[b, BI_PULLIN] = 1
        bi[b, BI_STATION] = depot
        _begin_move(bi, bf, fp, b, t, st_km[depot], PH_DEADHEAD)
        return
    target = need if need > fp[FP_STOP] else fp[FP_STOP]
    if target > fp[FP_USABLE]:
        target = fp[FP_USABLE]
    if bi[b, BI_PHASE] == PH_QUEUED:
        bf[b, BF_CHARGE_TO] = target
    else:
        _request_fast(bi, bf, fp, ip, grid, fast_slot, b, e, t, minute, target)


@njit
def _next_queued(bi, bf, phase, e, nbus):
    best = -1
    best_t = INF
    for b in range(nbus):
        if bi[b, BI_PHASE] == phase and (phase == PH_DEPOT_QUEUE or bi[b, BI_TERM] == e):
            if bf[b, BF_QUEUE_T] < best_t:
                best_t = bf[b, BF_QUEUE_T]
                best = b
    return best


@njit
def _arrive_terminal(bi, bf, fp, ip, st_km, grid, fast_slot, slow_slot, b, e, t, minute):
    if t < fp[FP_CLOSE]:
        bi[b, BI_TERM] = e
        bf[b, BF_READY] = t + fp[FP_LAYOVER]
        if bf[b, BF_SOC] < fp[FP_START]:
            _request_fast(bi, bf, fp, ip, grid, fast_slot, b, e, t, minute, fp[FP_STOP])
        else:
            bi[b, BI_PHASE] = PH_READY
            bf[b, BF_TNEXT] = INF
            _fill_chargers(bi, bf, fp, ip, fast_slot, e, t)
    else:
        bi[b, BI_TERM] = e
        _pull_in_or_charge(bi, bf, fp, ip, st_km, grid, fast_slot, slow_slot, b, e, t, minute)


@njit
def _strand(bi, bf, fp, grid, ic, strand_bus, strand_t, strand_pos, b, t, minute):
    _sync(bi, bf, fp, grid, b, t, minute)
    _consume(bf, b, bf[b, BF_SOC], bi[b, BI_PHASE] == PH_DWELL)
    bi[b, BI_PHASE] = PH_STRANDED
    bf[b, BF_TNEXT] = INF
    k = ic[IC_NSTRAND]
    strand_bus[k] = b
    strand_t[k] = t
    strand_pos[k] = bf[b, BF_POS]
    ic[IC_NSTRAND] = k + 1


@njit
def _dispatch_candidate(bi, bf, fp, ip, headway, term_last, ic, e):
    if ic[IC_CLOSED] != 0:
        return INF, -1
    best = -1
    best_t = INF
    for b in range(ip[IP_NBUS]):
        ph = bi[b, BI_PHASE]
        if (ph == PH_READY or ph == PH_TOPUP) and bi[b, BI_TERM] == e:
            if bf[b, BF_READY] < best_t:
                best_t = bf[b, BF_READY]
                best = b
    if best < 0:
        return INF, -1
    last = term_last[e]
    if last <= NEG_INF:
        cand = fp[FP_SERVICE_START]
    else:
        idx = int(np.floor(last))
        if idx < 0:
            idx = 0
        if idx >= headway.shape[0]:
            idx = headway.shape[0] - 1
        cand = last + headway[idx]
    if best_t > cand:
        cand = best_t
    if cand >= fp[FP_CLOSE]:
        return INF, -1
    if ip[IP_LOWSOC] != 0:
        low = INF
        for b in range(ip[IP_NBUS]):
            ph = bi[b, BI_PHASE]
            if (ph == PH_READY or ph == PH_TOPUP) and bi[b, BI_TERM] == e and bf[b, BF_READY] <= cand:
                if bf[b, BF_SOC] < low:
                    low = bf[b, BF_SOC]
                    best = b
    return cand, best


@njit
def _finished(bi, ip):
    for b in range(ip[IP_NBUS]):
        ph = bi[b, BI_PHASE]
        if ph == PH_DONE or ph == PH_STRANDED:
            continue
        if ph == PH_DEPOT_QUEUE and ip[IP_SLOW] == 0:
            continue
        if ph == PH_QUEUED and _fast_count(ip, bi[b, BI_TERM]) == 0:
            continue
        return False
    return True


@njit
def step_minute(
    minute, fp, ip, st_km, headway,
    p_arr, p_dest, q_end, q_head, p_board, p_alight, p_bus,
    bi, bf, onboard, term_last, fast_slot, slow_slot, ic, grid,
    strand_bus, strand_t, strand_pos,
):
    """Process every event in ``[minute, minute + 1)`` then integrate to the boundary."""
    nbus = ip[IP_NBUS]
    nst = ip[IP_NST]
    t_end = minute + 1.0
    close = fp[FP_CLOSE]
    while True:
        # earliest pending event; ties resolve bus < dispatch < close
        kind = -1
        who = -1
        t_ev = t_end
        for b in range(nbus):
            tn = bf[b, BF_TNEXT]
            if tn < t_ev:
                t_ev = tn
                kind = 0
                who = b
        disp_bus = -1
        for e in range(2):
            cand, cb = _dispatch_candidate(bi, bf, fp, ip, headway, term_last, ic, e)
            if cand < t_ev:
                t_ev = cand
                kind = 1
                who = e
                disp_bus = cb
        if ic[IC_CLOSED] == 0 and close < t_end and close < t_ev:
            t_ev = close
            kind = 2
        if kind < 0:
            break

        if kind == 2:
            ic[IC_CLOSED] = 1
            for b in range(nbus):
                ph = bi[b, BI_PHASE]
                if ph == PH_TOPUP:
                    _unplug(bi, bf, fp, grid, fast_slot, b, close, minute)
                    ph = PH_READY
                if ph == PH_READY or ph == PH_QUEUED:
                    e = bi[b, BI_TERM]
                    if ph == PH_QUEUED and _term_station(ip, e) == ip[IP_DEPOT]:
                        bi[b, BI_PHASE] = PH_READY  # leaves the fast-charger queue
                    _pull_in_or_charge(bi, bf, fp, ip, st_km, grid, fast_slot, slow_slot, b, e, close, minute)
            continue

        if kind == 1:
            e = who
            b = disp_bus
            last = term_last[e]
            if last > NEG_INF:
                idx = int(np.floor(last))
                if idx < 0:
                    idx = 0
                if idx >= headway.shape[0]:
                    idx = headway.shape[0] - 1
                if t_ev > last + headway[idx] + EPS:
                    ic[IC_VIOL0 + e] += 1
            term_last[e] = t_ev
            if bi[b, BI_PHASE] == PH_TOPUP:
                _unplug(bi, bf, fp, grid, fast_slot, b, t_ev, minute)
            bi[b, BI_DIR] = e
            bi[b, BI_STATION] = _term_station(ip, e)
            bf[b, BF_DOOR] = t_ev
            _board(bi, bf, ip, onboard, p_arr, p_board, p_bus, q_head, q_end, b, t_ev)
            _depart(bi, bf, fp, st_km, b, t_ev)
            _fill_chargers(bi, bf, fp, ip, fast_slot, e, t_ev)
            continue

        b = who
        ph = bi[b, BI_PHASE]
        if bi[b, BI_STRAND] == 1 and (ph == PH_TRAVEL or ph == PH_DEADHEAD or ph == PH_DWELL):
            _strand(bi, bf, fp, grid, ic, strand_bus, strand_t, strand_pos, b, t_ev, minute)
            continue
        _sync(bi, bf, fp, grid, b, t_ev, minute)

        if ph == PH_TRAVEL or ph == PH_DEADHEAD:
            # close out the residual distance so the bus sits exactly on the stop
            resid = abs(bf[b, BF_TARGET] - bf[b, BF_POS])
            if resid > 0.0:
                bf[b, BF_ODO] += resid
                _consume(bf, b, resid * fp[FP_EKM], False)
            bf[b, BF_POS] = bf[b, BF_TARGET]
            if ph == PH_TRAVEL:
                _begin_dwell(bi, bf, fp, b, t_ev)
            elif bi[b, BI_PULLIN] == 1:
                _request_slow(bi, bf, fp, ip, slow_slot, b, t_ev)
            else:
                e = 0 if bi[b, BI_STATION] == 0 else 1
                bi[b, BI_TERM] = e
                bi[b, BI_PHASE] = PH_READY
                bf[b, BF_READY] = t_ev
                bf[b, BF_TNEXT] = INF
                _fill_chargers(bi, bf, fp, ip, fast_slot, e, t_ev)
        elif ph == PH_DWELL:
            _alight(bi, onboard, p_dest, p_alight, b, t_ev)
            st = bi[b, BI_STATION]
            at_end = (bi[b, BI_DIR] == 0 and st == nst - 1) or (bi[b, BI_DIR] == 1 and st == 0)
            if at_end:
                e = 1 if st == nst - 1 else 0
                _arrive_terminal(bi, bf, fp, ip, st_km, grid, fast_slot, slow_slot, b, e, t_ev, minute)
            else:
                _board(bi, bf, ip, onboard, p_arr, p_board, p_bus, q_head, q_end, b, t_ev)
                _depart(bi, bf, fp, st_km, b, t_ev)
        elif ph == PH_FAST or ph == PH_TOPUP:
            top = bf[b, BF_CHARGE_TO] - bf[b, BF_SOC]
            _add_charge(bf, fp, grid, b, top, minute)
            e = bi[b, BI_TERM]
            fast_slot[e, bi[b, BI_SLOT]] = -1
            bi[b, BI_SLOT] = -1
            bi[b, BI_PHASE] = PH_READY
            bf[b, BF_TNEXT] = INF
            if t_ev < close:
                if bf[b, BF_READY] < t_ev:
                    bf[b, BF_READY] = t_ev
            else:
                _pull_in_or_charge(bi, bf, fp, ip, st_km, grid, fast_slot, slow_slot, b, e, t_ev, minute)
            _fill_chargers(bi, bf, fp, ip, fast_slot, e, t_ev)
        elif ph == PH_SLOW:
            top = bf[b, BF_CHARGE_TO] - bf[b, BF_SOC]
            _add_charge(bf, fp, grid, b, top, minute)
            slow_slot[bi[b, BI_SLOT]] = -1
            k = bi[b, BI_SLOT]
            bi[b, BI_SLOT] = -1
            bi[b, BI_PHASE] = PH_DONE
            bf[b, BF_TNEXT] = INF
            nq = _next_queued(bi, bf, PH_DEPOT_QUEUE, 0, nbus)
            if nq >= 0:
                slow_slot[k] = nq
                _start_charge(bi, bf, nq, t_ev, PH_SLOW, k, fp[FP_SLOW_RATE], fp[FP_USABLE])
        else:
            bf[b, BF_TNEXT] = INF

    for b in range(nbus):
        _sync(bi, bf, fp, grid, b, t_end, minute)
        if bi[b, BI_NON] > ip[IP_CAP]:
            ic[IC_CAP_BREACH] += 1
    ic[IC_LAST_MINUTE] = minute
    if ic[IC_CLOSED] != 0 and _finished(bi, ip):
        ic[IC_FINISHED] = 1


@njit
def run_day(
    fp, ip, st_km, headway,
    p_arr, p_dest, q_end, q_head, p_board, p_alight, p_bus,
    bi, bf, onboard, term_last, fast_slot, slow_slot, ic, grid,
    strand_bus, strand_t, strand_pos,
):
    start = int(fp[FP_HSTART])
    for minute in range(start, start + ip[IP_MAXH]):
        step_minute(
            minute, fp, ip, st_km, headway,
            p_arr, p_dest, q_end, q_head, p_board, p_alight, p_bus,
            bi, bf, onboard, term_last, fast_slot, slow_slot, ic, grid,
            strand_bus, strand_t, strand_pos,
        )
        if ic[IC_FINISHED] != 0:
            break
