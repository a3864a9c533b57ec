"""The interpreter loop.

``execute`` runs compiled bytecode until ``pause``, the end of the main
body, a runtime error, or an exhausted instruction budget. All machine
state lives in the arrays passed in, so a later call resumes exactly where
the previous one stopped. The function never raises; it reports through
``regs[R_STATUS]`` / ``regs[R_ERROR]`` and releases the GIL while running.

Layouts:
  frames[f] = (caller word, return offset, kind of callee)
  loops[l]  = (index, limit)
  imeta[k]  = (start in ibuf, length, position)
  ometa[k]  = (start in arena, capacity in bytes, length in items, dtype)
"""

from __future__ import annotations

import numpy as np
from numba import njit

from . import bytecode as bc
from .buffers import (
    _INT_SAME,
    bits_to_float,
    bits_to_int,
    code_width,
    dtype_width,
    float_to_int,
    int_to_float,
    load_bits,
    load_float,
    load_int,
    nbit_at,
    nbit_bytes,
    store_float,
    store_int,
    unzigzag,
    varint_at,
)

_OM_START = 0
_OM_CAP = 1
_OM_LEN = 2
_OM_DTYPE = 3


@njit(cache=True, nogil=True)
def reserve(arena, ometa, regs, k, nbytes):
    """Make room for ``nbytes`` more bytes in output ``k`` inside ``arena``.

    Returns False (with the needed arena size in ``R_NEED``) when the arena
    itself is too small; nothing is changed in that case.
    """
    start = ometa[k, _OM_START]
    cap = ometa[k, _OM_CAP]
    used = ometa[k, _OM_LEN] * dtype_width(ometa[k, _OM_DTYPE])
    if used + nbytes <= cap:
        return True
    new_cap = max(2 * cap, used + nbytes, 64)
    end = regs[bc.R_ARENA_END]
    if start + cap == end:
        # last segment: grow in place
        if start + new_cap > arena.size:
            regs[bc.R_NEED] = start + new_cap
            return False
        ometa[k, _OM_CAP] = new_cap
        regs[bc.R_ARENA_END] = start + new_cap
        return True
    # relocate to the end of the arena
    if end + new_cap > arena.size:
        regs[bc.R_NEED] = end + new_cap
        return False
    arena[end : end + used] = arena[start : start + used]
    ometa[k, _OM_START] = end
    ometa[k, _OM_CAP] = new_cap
    regs[bc.R_ARENA_END] = end + new_cap
    return True


@njit(inline="always")
def _full(ometa, k, nbytes):
    return ometa[k, _OM_LEN] * dtype_width(ometa[k, _OM_DTYPE]) + nbytes > ometa[k, _OM_CAP]


@njit(inline="always")
def _tail(arena, ometa, k):
    return ometa[k, _OM_START] + ometa[k, _OM_LEN] * dtype_width(ometa[k, _OM_DTYPE])


@njit(inline="always")
def _append_int(arena, ometa, k, v):
    store_int(arena, _tail(arena, ometa, k), ometa[k, _OM_DTYPE], v)
    ometa[k, _OM_LEN] += 1


@njit(inline="always")
def _append_float(arena, ometa, k, x):
    store_float(arena, _tail(arena, ometa, k), ometa[k, _OM_DTYPE], x)
    ometa[k, _OM_LEN] += 1


@njit(cache=True, nogil=True)
def execute(code, wstart, wend, stack, variables, frames, loops, regs,
            ibuf, imeta, arena, ometa, budget):
    max_stack = stack.size
    max_depth = frames.shape[0]
    sp = regs[bc.R_SP]
    ip = regs[bc.R_IP]
    w = regs[bc.R_WORD]
    fp = regs[bc.R_FP]
    lp = regs[bc.R_LP]
    steps = regs[bc.R_STEPS]
    last_ip = regs[bc.R_LAST_IP]
    end_of_word = wend[w]
    executed = 0
    status = bc.ST_DONE
    err = 0
    grow = False

    while True:
        # ---- running off the end of a body: return or loop back ----
        if ip >= end_of_word:
            if fp == 0:
                status = bc.ST_DONE
                break
            kind = frames[fp - 1, 2]
            if kind == bc.F_DO:
                nxt = loops[lp - 1, 0] + 1
                if nxt < loops[lp - 1, 1]:
                    loops[lp - 1, 0] = nxt
                    ip = wstart[w]
                    continue
                lp -= 1
            elif kind == bc.F_AGAIN or kind == bc.F_REPEAT:
                ip = wstart[w]
                continue
            elif kind == bc.F_UNTIL:
                if sp < 1:
                    err = bc.E_UNDERFLOW
                    break
                sp -= 1
                if stack[sp] == 0:
                    ip = wstart[w]
                    continue
            elif kind == bc.F_DO_STEP:
                if sp < 1:
                    err = bc.E_UNDERFLOW
                    break
                sp -= 1
                step = stack[sp]
                nxt = loops[lp - 1, 0] + step
                limit = loops[lp - 1, 1]
                if (step >= 0 and nxt < limit) or (step < 0 and nxt >= limit):
                    loops[lp - 1, 0] = nxt
                    ip = wstart[w]
                    continue
                lp -= 1
            fp -= 1
            w = frames[fp, 0]
            ip = frames[fp, 1]
            end_of_word = wend[w]
            continue

        if budget >= 0 and executed >= budget:
            status = bc.ST_STEPPED
            break
        op = code[ip]
        last_ip = ip
        executed += 1

        if op >= bc.READ:
            # ---- reads ----
            if op == bc.READ:
                fmt = code[ip + 1]
                k = code[ip + 2]
                dest = code[ip + 3]
                rkind = fmt & bc.KIND_MASK
                big = (fmt & bc.BIG_ENDIAN) != 0
                pos = imeta[k, 2]
                base = imeta[k, 0]
                avail = imeta[k, 1] - pos
                count = np.int64(1)
                popped = 0
                if fmt & bc.REPEATED:
                    if sp < 1:
                        err = bc.E_UNDERFLOW
                        break
                    count = stack[sp - 1]
                    if count < 0:
                        err = bc.E_READ_BEYOND
                        break
                    popped = 1
                if dest < 0 and sp - popped + count > max_stack:
                    err = bc.E_OVERFLOW
                    break
                if rkind < bc.KIND_VARINT:
                    width = code_width(rkind)
                    nbytes = width * count
                    if nbytes > avail:
                        err = bc.E_READ_BEYOND
                        break
                    if dest >= 0 and _full(ometa, dest, count * 8):
                        if not reserve(arena, ometa, regs, dest, count * 8):
                            grow = True
                            break
                    sp -= popped
                    src = base + pos
                    if dest < 0:
                        for j in range(count):
                            v = load_bits(ibuf, src + j * width, width, big)
                            if rkind >= 8:
                                stack[sp] = float_to_int(bits_to_float(v, rkind))
                            else:
                                stack[sp] = bits_to_int(v, rkind)
                            sp += 1
                    else:
                        dt = ometa[dest, _OM_DTYPE]
                        out = _tail(arena, ometa, dest)
                        same = (rkind < 8 and _INT_SAME[rkind] >= 0
                                and dtype_width(dt) == width and dt != 0 and dt < 9) \
                            or (rkind == 8 and dt == 9) or (rkind == 9 and dt == 10)
                        if same and not big:
                            if nbytes > 64:
                                arena[out : out + nbytes] = ibuf[src : src + nbytes]
                            else:
                                for b in range(nbytes):
                                    arena[out + b] = ibuf[src + b]
                        elif same:
                            for j in range(count):
                                for b in range(width):
                                    arena[out + j * width + b] = ibuf[src + j * width + width - 1 - b]
                        elif rkind >= 8:
                            for j in range(count):
                                x = bits_to_float(load_bits(ibuf, src + j * width, width, big), rkind)
                                out += store_float(arena, out, dt, x)
                        elif dt >= 9:
                            for j in range(count):
                                v = bits_to_int(load_bits(ibuf, src + j * width, width, big), rkind)
                                out += store_float(arena, out, dt, int_to_float(v, rkind == 7))
                        else:
                            for j in range(count):
                                v = bits_to_int(load_bits(ibuf, src + j * width, width, big), rkind)
                                out += store_int(arena, out, dt, v)
                        ometa[dest, _OM_LEN] += count
                    imeta[k, 2] = pos + nbytes
                elif rkind == bc.KIND_NBIT:
                    nbits = fmt >> bc.BITS_SHIFT
                    nbytes = nbit_bytes(nbits, count)
                    if nbytes > avail:
                        err = bc.E_READ_BEYOND
                        break
                    if dest >= 0 and _full(ometa, dest, count * 8):
                        if not reserve(arena, ometa, regs, dest, count * 8):
                            grow = True
                            break
                    sp -= popped
                    src = base + pos
                    if dest < 0:
                        for j in range(count):
                            stack[sp] = nbit_at(ibuf, src, nbits, j)
                            sp += 1
                    else:
                        dt = ometa[dest, _OM_DTYPE]
                        out = _tail(arena, ometa, dest)
                        for j in range(count):
                            out += store_int(arena, out, dt, nbit_at(ibuf, src, nbits, j))
                        ometa[dest, _OM_LEN] += count
                    imeta[k, 2] = pos + nbytes
                else:
                    # varint / zigzag: validate the whole run before mutating anything
                    end = base + imeta[k, 1]
                    q = base + pos
                    for j in range(count):
                        e, v, q = varint_at(ibuf, q, end)
                        if e != 0:
                            err = e
                            break
                    if err != 0:
                        break
                    if dest >= 0 and _full(ometa, dest, count * 8):
                        if not reserve(arena, ometa, regs, dest, count * 8):
                            grow = True
                            break
                    sp -= popped
                    q = base + pos
                    dt = 0
                    out = 0
                    if dest >= 0:
                        dt = ometa[dest, _OM_DTYPE]
                        out = _tail(arena, ometa, dest)
                    for j in range(count):
                        e, v, q = varint_at(ibuf, q, end)
                        if rkind == bc.KIND_ZIGZAG:
                            v = unzigzag(v)
                        if dest < 0:
                            stack[sp] = v
                            sp += 1
                        elif dt >= 9:
                            out += store_float(arena, out, dt, int_to_float(v, rkind == bc.KIND_VARINT))
                        else:
                            out += store_int(arena, out, dt, v)
                    if dest >= 0:
                        ometa[dest, _OM_LEN] += count
                    imeta[k, 2] = q - base
                ip += 4

            # ---- writes ----
            elif op == bc.WRITE or op == bc.WRITE_ADD:
                if sp < 1:
                    err = bc.E_UNDERFLOW
                    break
                if _full(ometa, code[ip + 1], 8):
                    if not reserve(arena, ometa, regs, code[ip + 1], 8):
                        grow = True
                        break
                sp -= 1
                v = stack[sp]
                k = code[ip + 1]
                dt = ometa[k, _OM_DTYPE]
                n = ometa[k, _OM_LEN]
                if op == bc.WRITE:
                    _append_int(arena, ometa, k, v)
                elif dt >= 9:
                    lastf = 0.0
                    if n > 0:
                        lastf = load_float(arena, ometa[k, _OM_START] + (n - 1) * dtype_width(dt), dt)
                    _append_float(arena, ometa, k, lastf + np.float64(v))
                else:
                    lasti = np.int64(0)
                    if n > 0:
                        lasti = load_int(arena, ometa[k, _OM_START] + (n - 1) * dtype_width(dt), dt)
                    _append_int(arena, ometa, k, lasti + v)
                ip += 2
            elif op == bc.OUT_DUP:
                if sp < 1:
                    err = bc.E_UNDERFLOW
                    break
                count = stack[sp - 1]
                k = code[ip + 1]
                width = dtype_width(ometa[k, _OM_DTYPE])
                if count > 0 and _full(ometa, k, count * width):
                    if not reserve(arena, ometa, regs, k, count * width):
                        grow = True
                        break
                sp -= 1
                if count > 0:
                    out = _tail(arena, ometa, k)
                    if ometa[k, _OM_LEN] == 0:
                        arena[out : out + count * width] = 0
                    else:
                        for j in range(count):
                            for b in range(width):
                                arena[out + j * width + b] = arena[out - width + b]
                    ometa[k, _OM_LEN] += count
                ip += 2

        # ---- literals and stack words ----
        elif op == bc.LIT32:
            if sp >= max_stack:
                err = bc.E_OVERFLOW
                break
            stack[sp] = code[ip + 1]
            sp += 1
            ip += 2
        elif op == bc.DUP:
            if sp < 1:
                err = bc.E_UNDERFLOW
                break
            if sp >= max_stack:
                err = bc.E_OVERFLOW
                break
            stack[sp] = stack[sp - 1]
            sp += 1
            ip += 1
        elif op == bc.DROP:
            if sp < 1:
                err = bc.E_UNDERFLOW
                break
            sp -= 1
            ip += 1
        elif op == bc.LOOP_I:
            if sp >= max_stack:
                err = bc.E_OVERFLOW
                break
            stack[sp] = loops[lp - 1, 0]
            sp += 1
            ip += 1
        elif op >= bc.ADD and op <= bc.LE and op != bc.NEGATE and op != bc.ABS and op != bc.INVERT:
            # binary words: ( a b -- c )
            if sp < 2:
                err = bc.E_UNDERFLOW
                break
            a = stack[sp - 2]
            b = stack[sp - 1]
            if op == bc.ADD:
                c = a + b
            elif op == bc.SUB:
                c = a - b
            elif op == bc.MUL:
                c = a * b
            elif op == bc.DIV or op == bc.MOD:
                if b == 0:
                    err = bc.E_DIVZERO
                    break
                if b == -1:
                    # avoids the hardware trap on INT64_MIN / -1
                    c = -a if op == bc.DIV else np.int64(0)
                else:
                    q = a // b
                    c = q if op == bc.DIV else a - q * b
            elif op == bc.MIN:
                c = a if a < b else b
            elif op == bc.MAX:
                c = a if a > b else b
            elif op == bc.AND:
                c = a & b
            elif op == bc.OR:
                c = a | b
            elif op == bc.XOR:
                c = a ^ b
            elif op == bc.LSHIFT:
                c = np.int64(0) if b >= 64 or b < 0 else a << b
            elif op == bc.RSHIFT:
                if b >= 64 or b < 0:
                    c = np.int64(0)
                elif b == 0:
                    c = a
                else:
                    c = (a >> b) & ((np.int64(1) << (64 - b)) - 1)
            elif op == bc.EQ:
                c = -1 if a == b else 0
            elif op == bc.NE:
                c = -1 if a != b else 0
            elif op == bc.GT:
                c = -1 if a > b else 0
            elif op == bc.LT:
                c = -1 if a < b else 0
            elif op == bc.GE:
                c = -1 if a >= b else 0
            else:
                c = -1 if a <= b else 0
            stack[sp - 2] = c
            sp -= 1
            ip += 1
        elif op == bc.SWAP:
            if sp < 2:
                err = bc.E_UNDERFLOW
                break
            t = stack[sp - 1]
            stack[sp - 1] = stack[sp - 2]
            stack[sp - 2] = t
            ip += 1
        elif op == bc.OVER:
            if sp < 2:
                err = bc.E_UNDERFLOW
                break
            if sp >= max_stack:
                err = bc.E_OVERFLOW
                break
            stack[sp] = stack[sp - 2]
            sp += 1
            ip += 1
        elif op == bc.ROT:
            if sp < 3:
                err = bc.E_UNDERFLOW
                break
            t = stack[sp - 3]
            stack[sp - 3] = stack[sp - 2]
            stack[sp - 2] = stack[sp - 1]
            stack[sp - 1] = t
            ip += 1
        elif op == bc.INC or op == bc.DEC or op == bc.NEGATE or op == bc.ABS \
                or op == bc.INVERT or op == bc.ZEQ:
            if sp < 1:
                err = bc.E_UNDERFLOW
                break
            a = stack[sp - 1]
            if op == bc.INC:
                a = a + 1
            elif op == bc.DEC:
                a = a - 1
            elif op == bc.NEGATE:
                a = -a
            elif op == bc.ABS:
                a = -a if a < 0 else a
            elif op == bc.INVERT:
                a = ~a
            else:
                a = -1 if a == 0 else 0
            stack[sp - 1] = a
            ip += 1
        elif op == bc.LIT64:
            if sp >= max_stack:
                err = bc.E_OVERFLOW
                break
            stack[sp] = (np.int64(code[ip + 1]) & 0xFFFFFFFF) | (np.int64(code[ip + 2]) << 32)
            sp += 1
            ip += 3
        elif op == bc.LOOP_J:
            if sp >= max_stack:
                err = bc.E_OVERFLOW
                break
            stack[sp] = loops[lp - 2, 0]
            sp += 1
            ip += 1

        # ---- control flow ----
        elif op == bc.CALL or op == bc.IF or (op >= bc.DO and op <= bc.REPEAT):
            if op == bc.IF:
                if sp < 1:
                    err = bc.E_UNDERFLOW
                    break
                sp -= 1
                target = np.int64(code[ip + 1] if stack[sp] != 0 else code[ip + 2])
                ret = ip + 3
                if target < 0:
                    ip = ret
                    continue
                kind = bc.F_IF
            elif op == bc.CALL:
                target = np.int64(code[ip + 1])
                ret = ip + 2
                kind = bc.F_CALL
            elif op == bc.DO or op == bc.DO_STEP:
                if sp < 2:
                    err = bc.E_UNDERFLOW
                    break
                start = stack[sp - 1]
                limit = stack[sp - 2]
                sp -= 2
                if start >= limit:
                    ip += 2
                    continue
                if fp >= max_depth:
                    sp += 2
                    err = bc.E_RECURSION
                    break
                loops[lp, 0] = start
                loops[lp, 1] = limit
                lp += 1
                target = np.int64(code[ip + 1])
                ret = ip + 2
                kind = bc.F_DO if op == bc.DO else bc.F_DO_STEP
            else:
                target = np.int64(code[ip + 1])
                ret = ip + 2
                if op == bc.AGAIN:
                    kind = bc.F_AGAIN
                elif op == bc.UNTIL:
                    kind = bc.F_UNTIL
                else:
                    kind = bc.F_REPEAT
            if fp >= max_depth:
                err = bc.E_RECURSION
                break
            frames[fp, 0] = w
            frames[fp, 1] = ret
            frames[fp, 2] = kind
            fp += 1
            w = target
            ip = wstart[w]
            end_of_word = wend[w]
        elif op == bc.WHILE:
            if sp < 1:
                err = bc.E_UNDERFLOW
                break
            sp -= 1
            if stack[sp] != 0:
                ip += 1
            else:
                fp -= 1
                w = frames[fp, 0]
                ip = frames[fp, 1]
                end_of_word = wend[w]
        elif op == bc.EXIT:
            returned = False
            while fp > 0:
                fp -= 1
                kind = frames[fp, 2]
                if kind == bc.F_DO or kind == bc.F_DO_STEP:
                    lp -= 1
                w = frames[fp, 0]
                ip = frames[fp, 1]
                if kind == bc.F_CALL:
                    returned = True
                    break
            if not returned:
                # exit from the main body ends the run
                w = 0
                ip = wend[0]
            end_of_word = wend[w]
        elif op == bc.PAUSE:
            ip += 1
            status = bc.ST_PAUSED
            break
        elif op == bc.HALT:
            err = bc.E_USER_HALT
            break

        # ---- variables ----
        elif op == bc.VAR_GET:
            if sp >= max_stack:
                err = bc.E_OVERFLOW
                break
            stack[sp] = variables[code[ip + 1]]
            sp += 1
            ip += 2
        elif op == bc.VAR_SET or op == bc.VAR_ADD:
            if sp < 1:
                err = bc.E_UNDERFLOW
                break
            sp -= 1
            if op == bc.VAR_SET:
                variables[code[ip + 1]] = stack[sp]
            else:
                variables[code[ip + 1]] += stack[sp]
            ip += 2

        # ---- input positioning ----
        else:
            k = code[ip + 1]
            if op == bc.POS or op == bc.END or op == bc.LEN:
                if sp >= max_stack:
                    err = bc.E_OVERFLOW
                    break
                if op == bc.POS:
                    stack[sp] = imeta[k, 2]
                elif op == bc.LEN:
                    stack[sp] = imeta[k, 1]
                else:
                    stack[sp] = -1 if imeta[k, 2] == imeta[k, 1] else 0
                sp += 1
            else:
                if sp < 1:
                    err = bc.E_UNDERFLOW
                    break
                arg = stack[sp - 1]
                if op == bc.SEEK:
                    if arg < 0 or arg > imeta[k, 1]:
                        err = bc.E_SEEK_BEYOND
                        break
                    imeta[k, 2] = arg
                elif op == bc.SKIP:
                    if arg < 0 or imeta[k, 2] + arg > imeta[k, 1]:
                        err = bc.E_SKIP_BEYOND
                        break
                    imeta[k, 2] += arg
                else:
                    if arg < 0 or imeta[k, 2] - arg < 0:
                        err = bc.E_REWIND_BEYOND
                        break
                    imeta[k, 2] -= arg
                sp -= 1
            ip += 2

    if err != 0:
        status = bc.ST_ERROR
    elif grow:
        status = bc.ST_GROW
        executed -= 1
    regs[bc.R_SP] = sp
    regs[bc.R_IP] = ip
    regs[bc.R_WORD] = w
    regs[bc.R_FP] = fp
    regs[bc.R_LP] = lp
    regs[bc.R_STEPS] = steps + executed
    regs[bc.R_STATUS] = status
    regs[bc.R_ERROR] = err
    regs[bc.R_LAST_IP] = last_ip
