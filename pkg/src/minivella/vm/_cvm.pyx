# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled dispatch loop and arena (same semantics as _pyvm / heap)."""

from bisect import bisect_right

from libc.stdint cimport int32_t, int64_t, uint32_t, uint64_t
from libc.stdlib cimport free, malloc, realloc
from libc.string cimport memcmp, memcpy, memset
from cpython.bytes cimport PyBytes_AS_STRING, PyBytes_FromStringAndSize

from minivella.interp import stack_overflow, step_limit_error
from minivella.runtime.errors import InternalError
from minivella.runtime.wideint import arith
from minivella.vm.heap import CATEGORIES

cdef extern from *:
    """
    static inline int mv_arith64(int op, long long a, long long b, long long *r) {
        switch (op) {
        case 0: return __builtin_add_overflow(a, b, r);
        case 1: return __builtin_sub_overflow(a, b, r);
        case 2: return __builtin_mul_overflow(a, b, r);
        }
        return 1;
    }
    """
    int mv_arith64(int op, long long a, long long b, long long *r)

# opcodes (must agree with minivella.vm.loader)
cdef enum:
    MOV, CONST, ARITHOP, LT, EQ, NEWOBJ, ALLOC, ALLOCA, STORE, LOAD, FNADDR, TABADDR, MKPAIR
    FST, SND, ICALL, DISPATCH, RTCALL, SWITCH, BR, RET, RETV, UNREACHABLE

OPCODES = (MOV, CONST, ARITHOP, LT, EQ, NEWOBJ, ALLOC, ALLOCA, STORE, LOAD, FNADDR, TABADDR,
           MKPAIR, FST, SND, ICALL, DISPATCH, RTCALL, SWITCH, BR, RET, RETV, UNREACHABLE)

cdef enum:
    C_ADT = 0
    C_ENV = 1
    C_ALLOCA = 5

_OPS = ("add", "sub", "mul", "div", "rem")
_KINDS = (("i", 32), ("u", 32), ("i", 64), ("u", 64), ("i", 128), ("u", 128), ("i", 256),
          ("u", 256))
cdef object _LO = [-(1 << 31), 0, -(1 << 63), 0, -(1 << 127), 0, -(1 << 255), 0]
cdef object _HI = [(1 << 31) - 1, (1 << 32) - 1, (1 << 63) - 1, (1 << 64) - 1,
                   (1 << 127) - 1, (1 << 128) - 1, (1 << 255) - 1, (1 << 256) - 1]
cdef long long _CLO[3]
cdef long long _CHI[3]
_CLO[0] = -(1LL << 31); _CHI[0] = (1LL << 31) - 1
_CLO[1] = 0;            _CHI[1] = (1LL << 32) - 1
_CLO[2] = -9223372036854775807LL - 1; _CHI[2] = 9223372036854775807LL


cdef class CArena:
    cdef unsigned char *buf
    cdef Py_ssize_t cap
    cdef public Py_ssize_t top
    cdef long long ncount[6]
    cdef long long nbytes[6]
    cdef public object trace
    cdef public bint debug
    cdef list _starts
    cdef list _ends

    def __cinit__(self, data=(), Py_ssize_t static_end=8, trace=False, debug=False,
                  Py_ssize_t capacity=1 << 16):
        self.cap = max(capacity, static_end * 2)
        self.buf = <unsigned char *>malloc(self.cap)
        if self.buf == NULL:
            raise MemoryError()
        memset(self.buf, 0, self.cap)
        self.top = static_end
        for i in range(6):
            self.ncount[i] = 0
            self.nbytes[i] = 0
        self.trace = [] if trace else None
        self.debug = debug
        self._starts = []
        self._ends = []
        for addr, raw in data:
            memcpy(self.buf + <Py_ssize_t>addr, PyBytes_AS_STRING(raw), len(raw))
            self._starts.append(addr)
            self._ends.append(addr + len(raw))

    def __dealloc__(self):
        free(self.buf)

    property counts:
        def __get__(self):
            return [self.ncount[i] for i in range(6)]

    property sizes:
        def __get__(self):
            return [self.nbytes[i] for i in range(6)]

    def stats(self):
        return {c: {"count": self.ncount[i], "bytes": self.nbytes[i]}
                for i, c in enumerate(CATEGORIES)}

    cdef inline void _grow(self, Py_ssize_t need) except *:
        cdef Py_ssize_t ncap = self.cap * 2
        cdef unsigned char *nb
        if ncap < need:
            ncap = need
        nb = <unsigned char *>realloc(self.buf, ncap)
        if nb == NULL:
            raise MemoryError()
        memset(nb + self.cap, 0, ncap - self.cap)
        self.buf = nb
        self.cap = ncap

    cpdef Py_ssize_t alloc(self, Py_ssize_t size, int cat) except -1:
        cdef Py_ssize_t a = self.top
        if a + size > self.cap:
            self._grow(a + size)
        self.top = a + size
        self.ncount[cat] += 1
        self.nbytes[cat] += size
        if self.trace is not None:
            self.trace.append((CATEGORIES[cat], size))
        if self.debug:
            self._starts.append(a)
            self._ends.append(a + size)
        return a

    def note(self, int cat, Py_ssize_t size=0):
        self.ncount[cat] += 1
        self.nbytes[cat] += size
        if self.trace is not None:
            self.trace.append((CATEGORIES[cat], size))

    cpdef check(self, Py_ssize_t addr, Py_ssize_t n):
        i = bisect_right(self._starts, addr) - 1
        if addr <= 0 or i < 0 or addr + n > self._ends[i]:
            raise InternalError(f"out-of-bounds access of {n} byte(s) at address {addr}")

    cdef inline int _bounds(self, Py_ssize_t addr, Py_ssize_t n) except -1:
        if addr < 0 or addr + n > self.top:
            raise InternalError(f"out-of-bounds access of {n} byte(s) at address {addr}")
        if self.debug:
            self.check(addr, n)
        return 0

    cpdef bytes read(self, Py_ssize_t addr, Py_ssize_t n):
        self._bounds(addr, n)
        return PyBytes_FromStringAndSize(<char *>(self.buf + addr), n)

    cpdef write(self, Py_ssize_t addr, bytes raw):
        cdef Py_ssize_t n = len(raw)
        self._bounds(addr, n)
        memcpy(self.buf + addr, PyBytes_AS_STRING(raw), n)

    cpdef object load(self, Py_ssize_t addr, int mk):
        cdef int32_t i32
        cdef uint32_t u32
        cdef int64_t i64
        cdef uint64_t u64, u64b
        cdef unsigned char *p = self.buf + addr
        if mk == 0:
            self._bounds(addr, 1)
            return p[0]
        if mk == 1:
            self._bounds(addr, 4)
            memcpy(&i32, p, 4)
            return i32
        if mk == 2:
            self._bounds(addr, 4)
            memcpy(&u32, p, 4)
            return u32
        if mk == 3:
            self._bounds(addr, 8)
            memcpy(&i64, p, 8)
            return i64
        if mk == 4 or mk == 9:
            self._bounds(addr, 8)
            memcpy(&u64, p, 8)
            return u64
        if mk <= 8:
            n = 16 if mk <= 6 else 32
            self._bounds(addr, n)
            return int.from_bytes(PyBytes_FromStringAndSize(<char *>p, n), "little",
                                  signed=(mk % 2 == 1))
        if mk == 10:
            self._bounds(addr, 16)
            memcpy(&u64, p, 8)
            memcpy(&u64b, p + 8, 8)
            return (u64, u64b)
        self._bounds(addr, mk - 16)
        return PyBytes_FromStringAndSize(<char *>p, mk - 16)

    cpdef store(self, Py_ssize_t addr, int mk, object v):
        cdef int32_t i32
        cdef uint32_t u32
        cdef int64_t i64
        cdef uint64_t u64
        cdef unsigned char *p = self.buf + addr
        cdef bytes raw
        if mk == 0:
            self._bounds(addr, 1)
            p[0] = <unsigned char>(<int>v)
        elif mk == 1:
            self._bounds(addr, 4)
            i32 = v
            memcpy(p, &i32, 4)
        elif mk == 2:
            self._bounds(addr, 4)
            u32 = v
            memcpy(p, &u32, 4)
        elif mk == 3:
            self._bounds(addr, 8)
            i64 = v
            memcpy(p, &i64, 8)
        elif mk == 4 or mk == 9:
            self._bounds(addr, 8)
            u64 = v
            memcpy(p, &u64, 8)
        elif mk <= 8:
            n = 16 if mk <= 6 else 32
            self._bounds(addr, n)
            raw = (<object>v).to_bytes(n, "little", signed=(mk % 2 == 1))
            memcpy(p, PyBytes_AS_STRING(raw), n)
        elif mk == 10:
            self._bounds(addr, 16)
            u64 = v[0]
            memcpy(p, &u64, 8)
            u64 = v[1]
            memcpy(p + 8, &u64, 8)
        else:
            raw = v
            self._bounds(addr, mk - 16)
            memcpy(p, PyBytes_AS_STRING(raw), mk - 16)

    cpdef Py_ssize_t new_bool(self, bint b) except -1:
        cdef Py_ssize_t a = self.alloc(1, C_ADT)
        self.buf[a] = 0 if b else 1
        return a

    cdef inline bint bytes_equal(self, tuple x, tuple y) except -1:
        cdef Py_ssize_t n = x[1], m = y[1], a = x[0], b = y[0]
        if n != m:
            return False
        self._bounds(a, n)
        self._bounds(b, n)
        return memcmp(self.buf + a, self.buf + b, n) == 0


cdef class _Code:
    cdef long long *c
    cdef Py_ssize_t n

    def __cinit__(self, list code):
        self.n = len(code)
        self.c = <long long *>malloc(max(self.n, 1) * sizeof(long long))
        if self.c == NULL:
            raise MemoryError()
        for i in range(self.n):
            self.c[i] = code[i]

    def __dealloc__(self):
        free(self.c)


cdef _Code _code_of(img):
    cc = getattr(img, "_ccode", None)
    if cc is None:
        cc = _Code(img.code)
        img._ccode = cc
    return <_Code>cc


def run(ctx, Py_ssize_t fid, list args):
    """Execute function ``fid``; returns its result register (None if void)."""
    img = ctx.image
    cdef _Code cc = _code_of(img)
    cdef long long *code = cc.c
    cdef list consts = img.consts
    funcs = img.functions
    cdef Py_ssize_t nfun = len(funcs)
    cdef list f_pc = [f.pc for f in funcs]
    cdef list f_nregs = [f.nregs for f in funcs]
    cdef list f_counted = [bool(f.counted) for f in funcs]
    cdef list f_sig = [f.sig for f in funcs]
    cdef list tables = img.tables
    cdef Py_ssize_t ntables = len(tables)
    cdef CArena arena = ctx.arena
    cdef list rtcalls = ctx.runtime.calls
    cdef long long stack_limit = ctx.stack_limit
    cdef long long step_limit = ctx.step_limit
    cdef long long steps = ctx.steps
    cdef long long depth = 0
    cdef bint counted
    cdef list regs, nr, cargs
    cdef list saved = []
    cdef long long *fpc = NULL
    cdef long long *fdst = NULL
    cdef char *fcnt = NULL
    cdef Py_ssize_t nframes = 0, fcap = 0
    cdef long long pc, op, o, k, opk, d, n, i, p, target, callee, base, m
    cdef long long x, y, r
    cdef object a, b, v, res
    cdef Py_ssize_t addr

    regs = [None] * <Py_ssize_t>f_nregs[fid]
    for i in range(len(args)):
        regs[i] = args[i]
    counted = f_counted[fid]
    if counted:
        depth = 1
        if depth > stack_limit:
            raise stack_overflow(stack_limit)
    pc = f_pc[fid]
    try:
        while True:
            steps += 1
            if steps > step_limit:
                raise step_limit_error(step_limit)
            op = code[pc]
            if op == LOAD:
                regs[code[pc + 1]] = arena.load(<Py_ssize_t>regs[code[pc + 2]] + code[pc + 3],
                                                <int>code[pc + 4])
                pc += 5
            elif op == MOV:
                regs[code[pc + 1]] = regs[code[pc + 2]]
                pc += 3
            elif op == CONST:
                regs[code[pc + 1]] = consts[code[pc + 2]]
                pc += 3
            elif op == ARITHOP:
                a = regs[code[pc + 2]]
                b = regs[code[pc + 3]]
                opk = code[pc + 4]
                o = opk >> 3
                k = opk & 7
                if k <= 2 and o <= 2:
                    x = a
                    y = b
                    if mv_arith64(<int>o, x, y, &r) or r < _CLO[k] or r > _CHI[k]:
                        arith(_OPS[o], k != 1, 32 if k <= 1 else 64, a, b)
                        raise InternalError("overflow not detected")
                    res = r
                else:
                    if o == 0:
                        res = a + b
                    elif o == 1:
                        res = a - b
                    elif o == 2:
                        res = a * b
                    else:
                        res = arith(_OPS[o], _KINDS[k][0] == "i", _KINDS[k][1], a, b)
                    if res < _LO[k] or res > _HI[k]:
                        arith(_OPS[o], _KINDS[k][0] == "i", _KINDS[k][1], a, b)
                regs[code[pc + 1]] = res
                pc += 5
            elif op == ICALL:
                callee = regs[code[pc + 2]]
                n = code[pc + 4]
                if callee < 0 or callee >= nfun or <long long>f_sig[callee] != code[pc + 3]:
                    raise InternalError("indirect call target does not match the call signature")
                nr = [None] * <Py_ssize_t>f_nregs[callee]
                base = pc + 5
                for i in range(n):
                    nr[i] = regs[code[base + i]]
                if nframes == fcap:
                    fcap = fcap * 2 + 64
                    fpc = <long long *>realloc(fpc, fcap * sizeof(long long))
                    fdst = <long long *>realloc(fdst, fcap * sizeof(long long))
                    fcnt = <char *>realloc(fcnt, fcap)
                    if fpc == NULL or fdst == NULL or fcnt == NULL:
                        raise MemoryError()
                fpc[nframes] = base + n
                fdst[nframes] = code[pc + 1]
                fcnt[nframes] = counted
                nframes += 1
                saved.append(regs)
                counted = f_counted[callee]
                if counted:
                    depth += 1
                    if depth > stack_limit:
                        raise stack_overflow(stack_limit)
                regs = nr
                pc = f_pc[callee]
            elif op == SWITCH:
                x = regs[code[pc + 1]]
                n = code[pc + 2]
                p = pc + 3
                target = code[p + 2 * n]
                for i in range(n):
                    if code[p] == x:
                        target = code[p + 1]
                        break
                    p += 2
                pc = target
            elif op == BR:
                pc = code[pc + 1]
            elif op == RET or op == RETV:
                v = regs[code[pc + 1]] if op == RET else None
                if counted:
                    depth -= 1
                if nframes == 0:
                    return v
                nframes -= 1
                regs = saved.pop()
                pc = fpc[nframes]
                d = fdst[nframes]
                counted = fcnt[nframes]
                if d >= 0:
                    regs[d] = v
            elif op == FST:
                regs[code[pc + 1]] = (<tuple>regs[code[pc + 2]])[0]
                pc += 3
            elif op == SND:
                regs[code[pc + 1]] = (<tuple>regs[code[pc + 2]])[1]
                pc += 3
            elif op == STORE:
                arena.store(<Py_ssize_t>regs[code[pc + 1]] + code[pc + 2], <int>code[pc + 4],
                            regs[code[pc + 3]])
                pc += 5
            elif op == MKPAIR:
                regs[code[pc + 1]] = (regs[code[pc + 2]], regs[code[pc + 3]])
                pc += 4
            elif op == NEWOBJ:
                addr = arena.alloc(code[pc + 2], C_ADT)
                arena.buf[addr] = <unsigned char>code[pc + 3]
                regs[code[pc + 1]] = addr
                pc += 4
            elif op == EQ:
                a = regs[code[pc + 2]]
                b = regs[code[pc + 3]]
                if code[pc + 4] == 1:
                    regs[code[pc + 1]] = arena.new_bool(arena.bytes_equal(a, b))
                else:
                    regs[code[pc + 1]] = arena.new_bool(a == b)
                pc += 5
            elif op == LT:
                regs[code[pc + 1]] = arena.new_bool(regs[code[pc + 2]] < regs[code[pc + 3]])
                pc += 5
            elif op == FNADDR or op == TABADDR:
                regs[code[pc + 1]] = code[pc + 2]
                pc += 3
            elif op == ALLOC:
                regs[code[pc + 1]] = arena.alloc(code[pc + 2], C_ENV)
                pc += 3
            elif op == ALLOCA:
                regs[code[pc + 1]] = arena.alloc(code[pc + 2], C_ALLOCA)
                pc += 3
            elif op == DISPATCH:
                x = regs[code[pc + 2]]
                v = (<dict>tables[x]).get(code[pc + 3]) if 0 <= x < ntables else None
                if v is None:
                    raise InternalError("type application has no table entry")
                regs[code[pc + 1]] = v
                pc += 4
            elif op == RTCALL:
                n = code[pc + 3]
                base = pc + 4
                cargs = [regs[code[base + i]] for i in range(n)]
                m = code[base + n]
                meta = [code[base + n + 1 + i] for i in range(m)]
                v = rtcalls[code[pc + 2]](cargs, meta)
                d = code[pc + 1]
                if d >= 0:
                    regs[d] = v
                pc = base + n + 1 + m
            elif op == UNREACHABLE:
                raise InternalError("match failure")
            else:
                raise InternalError(f"bad opcode {op} at {pc}")
    finally:
        ctx.steps = steps
        free(fpc)
        free(fdst)
        free(fcnt)
