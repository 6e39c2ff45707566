# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled executor for fitness tapes.

Twin of run_pure in tape.py: same opcodes, same tag codes, same
operation order, bit-identical results.  Change the two together.
"""

from libc.math cimport fabs, floor, isfinite, pow as c_pow
from libc.stdlib cimport free, malloc
from libc.string cimport memcpy

import numpy as np

cdef enum:
    # value tags; keep in step with the table in fitness.py
    TAG_EMPTY = 0
    TAG_NUMBER = 1
    TAG_BOOLEAN = 2
    TAG_TEXT = 3
    TAG_ERR_DIV0 = 4
    TAG_ERR_VALUE = 5

cdef enum:
    # opcodes; keep in step with tape.py
    OP_CONST = 0
    OP_BOOL = 1
    OP_EMPTY = 2
    OP_TEXT = 3
    OP_ERR = 4
    OP_CELL = 5
    OP_GENE = 6
    OP_STORE = 7
    OP_ADD = 8
    OP_SUB = 9
    OP_MUL = 10
    OP_DIV = 11
    OP_POW = 12
    OP_NEG = 13
    OP_CONCAT = 14
    OP_EQ = 15
    OP_NE = 16
    OP_LT = 17
    OP_LE = 18
    OP_GT = 19
    OP_GE = 20
    OP_IFSEL = 21
    OP_ABS = 22
    OP_ROUND = 23
    OP_SUM = 24
    OP_AVG = 25
    OP_MIN = 26
    OP_MAX = 27
    OP_COUNT = 28


cdef inline void _arith(int op, double a, double b,
                        int *tag, double *val) noexcept nogil:
    cdef double r
    if op == OP_ADD:
        r = a + b
    elif op == OP_SUB:
        r = a - b
    elif op == OP_MUL:
        r = a * b
    elif op == OP_DIV:
        if b == 0.0:
            tag[0] = TAG_ERR_DIV0
            val[0] = 0.0
            return
        r = a / b
    else:
        if a == 0.0 and b < 0.0:
            tag[0] = TAG_ERR_DIV0
            val[0] = 0.0
            return
        r = c_pow(a, b)
    if not isfinite(r):
        tag[0] = TAG_ERR_VALUE
        val[0] = 0.0
        return
    tag[0] = TAG_NUMBER
    val[0] = r


cdef inline void _compare(int op, int at, double av, int bt, double bv,
                          int *tag, double *val) noexcept nogil:
    cdef int ak = TAG_NUMBER if at == TAG_EMPTY else at
    cdef int bk = TAG_NUMBER if bt == TAG_EMPTY else bt
    cdef bint ok
    val[0] = 0.0
    if ak != bk:
        if op == OP_EQ:
            tag[0] = TAG_BOOLEAN
        elif op == OP_NE:
            tag[0] = TAG_BOOLEAN
            val[0] = 1.0
        else:
            tag[0] = TAG_ERR_VALUE
        return
    if op == OP_EQ:
        ok = av == bv
    elif op == OP_NE:
        ok = av != bv
    elif op == OP_LT:
        ok = av < bv
    elif op == OP_LE:
        ok = av <= bv
    elif op == OP_GT:
        ok = av > bv
    else:
        ok = av >= bv
    tag[0] = TAG_BOOLEAN
    if ok:
        val[0] = 1.0


cdef inline void _round(double x, double d, int *tag,
                        double *val) noexcept nogil:
    cdef int dd
    cdef double scale, r
    if d > 308.0:
        dd = 308
    elif d < -308.0:
        dd = -308
    else:
        dd = <int>d
    scale = c_pow(10.0, <double>dd)
    r = floor(fabs(x) * scale + 0.5) / scale
    if not isfinite(r):
        tag[0] = TAG_ERR_VALUE
        val[0] = 0.0
        return
    tag[0] = TAG_NUMBER
    val[0] = -r if x < 0.0 else r


cdef int _run_one(const unsigned char[::1] code, const int[::1] arg,
                  const double[::1] farg, const double *genome,
                  int *rt, double *rv, int *st, double *sv) noexcept nogil:
    """Execute the tape once; registers rt/rv are pre-seeded.  Returns 0,
    or -1 on a malformed tape (unknown opcode)."""
    cdef Py_ssize_t n_ops = code.shape[0]
    cdef Py_ssize_t i, j, base
    cdef int sp = 0
    cdef int op, r, n, err, at, bt, ct, t, count
    cdef bint started
    cdef double av, bv, cv, v, total, acc
    for i in range(n_ops):
        op = code[i]
        if op == OP_CONST:
            st[sp] = TAG_NUMBER
            sv[sp] = farg[i]
            sp += 1
        elif op == OP_BOOL:
            st[sp] = TAG_BOOLEAN
            sv[sp] = farg[i]
            sp += 1
        elif op == OP_EMPTY:
            st[sp] = TAG_EMPTY
            sv[sp] = 0.0
            sp += 1
        elif op == OP_TEXT:
            st[sp] = TAG_TEXT
            sv[sp] = 0.0
            sp += 1
        elif op == OP_ERR:
            st[sp] = arg[i]
            sv[sp] = 0.0
            sp += 1
        elif op == OP_CELL:
            r = arg[i]
            st[sp] = rt[r]
            sv[sp] = rv[r]
            sp += 1
        elif op == OP_GENE:
            st[sp] = TAG_NUMBER
            sv[sp] = genome[arg[i]]
            sp += 1
        elif op == OP_STORE:
            sp -= 1
            r = arg[i]
            rt[r] = st[sp]
            rv[r] = sv[sp]
        elif op <= OP_POW:
            sp -= 2
            at = st[sp]
            av = sv[sp]
            bt = st[sp + 1]
            bv = sv[sp + 1]
            if at >= TAG_ERR_DIV0:
                st[sp] = at
                sv[sp] = 0.0
            elif at == TAG_TEXT:
                st[sp] = TAG_ERR_VALUE
                sv[sp] = 0.0
            elif bt >= TAG_ERR_DIV0:
                st[sp] = bt
                sv[sp] = 0.0
            elif bt == TAG_TEXT:
                st[sp] = TAG_ERR_VALUE
                sv[sp] = 0.0
            else:
                _arith(op, av, bv, &t, &v)
                st[sp] = t
                sv[sp] = v
            sp += 1
        elif op == OP_NEG:
            at = st[sp - 1]
            if at >= TAG_ERR_DIV0:
                sv[sp - 1] = 0.0
            elif at == TAG_TEXT:
                st[sp - 1] = TAG_ERR_VALUE
                sv[sp - 1] = 0.0
            else:
                st[sp - 1] = TAG_NUMBER
                sv[sp - 1] = -sv[sp - 1]
        elif op == OP_CONCAT:
            sp -= 2
            at = st[sp]
            bt = st[sp + 1]
            if at >= TAG_ERR_DIV0:
                st[sp] = at
            elif bt >= TAG_ERR_DIV0:
                st[sp] = bt
            else:
                st[sp] = TAG_TEXT
            sv[sp] = 0.0
            sp += 1
        elif op <= OP_GE:
            sp -= 2
            at = st[sp]
            av = sv[sp]
            bt = st[sp + 1]
            bv = sv[sp + 1]
            if at >= TAG_ERR_DIV0:
                st[sp] = at
                sv[sp] = 0.0
            elif bt >= TAG_ERR_DIV0:
                st[sp] = bt
                sv[sp] = 0.0
            else:
                _compare(op, at, av, bt, bv, &t, &v)
                st[sp] = t
                sv[sp] = v
            sp += 1
        elif op == OP_IFSEL:
            sp -= 3
            ct = st[sp]
            cv = sv[sp]
            if ct >= TAG_ERR_DIV0:
                sv[sp] = 0.0
            elif ct == TAG_TEXT:
                st[sp] = TAG_ERR_VALUE
                sv[sp] = 0.0
            elif cv != 0.0:
                st[sp] = st[sp + 1]
                sv[sp] = sv[sp + 1]
            else:
                st[sp] = st[sp + 2]
                sv[sp] = sv[sp + 2]
            sp += 1
        elif op == OP_ABS:
            at = st[sp - 1]
            if at >= TAG_ERR_DIV0:
                sv[sp - 1] = 0.0
            elif at == TAG_TEXT:
                st[sp - 1] = TAG_ERR_VALUE
                sv[sp - 1] = 0.0
            else:
                st[sp - 1] = TAG_NUMBER
                sv[sp - 1] = fabs(sv[sp - 1])
        elif op == OP_ROUND:
            sp -= 2
            at = st[sp]
            av = sv[sp]
            bt = st[sp + 1]
            bv = sv[sp + 1]
            if at >= TAG_ERR_DIV0:
                sv[sp] = 0.0
            elif at == TAG_TEXT:
                st[sp] = TAG_ERR_VALUE
                sv[sp] = 0.0
            elif bt >= TAG_ERR_DIV0:
                st[sp] = bt
                sv[sp] = 0.0
            elif bt == TAG_TEXT:
                st[sp] = TAG_ERR_VALUE
                sv[sp] = 0.0
            else:
                _round(av, bv, &t, &v)
                st[sp] = t
                sv[sp] = v
            sp += 1
        elif op <= OP_COUNT:
            n = arg[i]
            base = sp - n
            err = 0
            for j in range(base, base + n):
                if st[j] >= TAG_ERR_DIV0:
                    err = st[j]
                    break
            if err:
                st[base] = err
                sv[base] = 0.0
            else:
                count = 0
                total = 0.0
                acc = 0.0
                started = False
                for j in range(base, base + n):
                    if st[j] != TAG_NUMBER:
                        continue
                    v = sv[j]
                    count += 1
                    total += v
                    if not started:
                        acc = v
                        started = True
                    elif op == OP_MIN:
                        if v < acc:
                            acc = v
                    elif op == OP_MAX:
                        if v > acc:
                            acc = v
                if op == OP_COUNT:
                    st[base] = TAG_NUMBER
                    sv[base] = <double>count
                elif op == OP_MIN or op == OP_MAX:
                    if not started:
                        st[base] = TAG_NUMBER
                        sv[base] = 0.0
                    elif not isfinite(acc):
                        st[base] = TAG_ERR_VALUE
                        sv[base] = 0.0
                    else:
                        st[base] = TAG_NUMBER
                        sv[base] = acc
                elif op == OP_AVG:
                    if count == 0:
                        st[base] = TAG_ERR_DIV0
                        sv[base] = 0.0
                    else:
                        total = total / <double>count
                        if not isfinite(total):
                            st[base] = TAG_ERR_VALUE
                            sv[base] = 0.0
                        else:
                            st[base] = TAG_NUMBER
                            sv[base] = total
                else:
                    if not isfinite(total):
                        st[base] = TAG_ERR_VALUE
                        sv[base] = 0.0
                    else:
                        st[base] = TAG_NUMBER
                        sv[base] = total
            sp = <int>base + 1
        else:
            return -1
    return 0


def run_population(const unsigned char[::1] code, const int[::1] arg,
                   const double[::1] farg,
                   const unsigned char[::1] reg_tags,
                   const double[::1] reg_vals, const int[::1] out_regs,
                   const double[:, ::1] genomes, int stack_need,
                   unsigned char[:, ::1] out_tags,
                   double[:, ::1] out_vals):
    """Run the tape over every genome row, filling out_tags/out_vals with
    the target cells' result tags and numeric values (0.0 when the tag is
    not a number)."""
    cdef Py_ssize_t n_rows = genomes.shape[0]
    cdef Py_ssize_t n_slots = genomes.shape[1]
    cdef Py_ssize_t n_regs = reg_tags.shape[0]
    cdef Py_ssize_t n_out = out_regs.shape[0]
    cdef Py_ssize_t row, k
    cdef int status = 0
    cdef int r
    cdef const double *gptr = NULL
    cdef int *rt0
    cdef int *rt
    cdef double *rv
    cdef int *st
    cdef double *sv
    rt0 = <int *>malloc(n_regs * sizeof(int))
    rt = <int *>malloc(n_regs * sizeof(int))
    rv = <double *>malloc(n_regs * sizeof(double))
    st = <int *>malloc(stack_need * sizeof(int))
    sv = <double *>malloc(stack_need * sizeof(double))
    if rt0 == NULL or rt == NULL or rv == NULL or st == NULL or sv == NULL:
        free(rt0)
        free(rt)
        free(rv)
        free(st)
        free(sv)
        raise MemoryError()
    try:
        with nogil:
            for k in range(n_regs):
                rt0[k] = reg_tags[k]
            for row in range(n_rows):
                memcpy(rt, rt0, n_regs * sizeof(int))
                if n_regs:
                    memcpy(rv, &reg_vals[0], n_regs * sizeof(double))
                if n_slots:
                    gptr = &genomes[row, 0]
                status = _run_one(code, arg, farg, gptr,
                                  rt, rv, st, sv)
                if status != 0:
                    break
                for k in range(n_out):
                    r = out_regs[k]
                    out_tags[row, k] = <unsigned char>rt[r]
                    out_vals[row, k] = rv[r] if rt[r] == TAG_NUMBER else 0.0
    finally:
        free(rt0)
        free(rt)
        free(rv)
        free(st)
        free(sv)
    if status != 0:
        raise ValueError("malformed tape")
