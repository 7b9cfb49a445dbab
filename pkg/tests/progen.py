"""Random generator of well-typed expression programs.

Type-directed: ``expr(ty, env, depth)`` produces source text of type ``ty``
using variables from ``env``. Programs exercise closures, partial
application, polymorphic helpers at several instantiations, ADTs, maps,
strings and every integer width, and may raise runtime errors
(overflow, division by zero) on purpose.
"""

from __future__ import annotations

import random

INTS = ["Int32", "Uint32", "Int64", "Uint64", "Int128", "Uint128", "Int256", "Uint256"]
BASE = INTS + ["String", "Bool", "ByStr20"]

PREAMBLE = """\
let pid = tfun 'A => fun (x : 'A) => x
let papply = tfun 'A => tfun 'B => fun (f : 'A -> 'B) => fun (x : 'A) => f x
let pchoose = tfun 'A => fun (b : Bool) => fun (x : 'A) => fun (y : 'A) =>
  match b with
  | True => x
  | False => y
  end
let phead = tfun 'A => fun (d : 'A) => fun (l : List 'A) =>
  match l with
  | Cons h _ => h
  | Nil => d
  end
"""


def _width(t) -> int:
    return int(t[4:] if t.startswith("U") else t[3:])


def _bounds(t):
    w = _width(t)
    if t.startswith("U"):
        return 0, (1 << w) - 1
    return -(1 << (w - 1)), (1 << (w - 1)) - 1


def show(t) -> str:
    if isinstance(t, str):
        return t
    head = t[0]
    if head == "fun":
        return f"{atom(t[1])} -> {show(t[2])}"
    return " ".join([head] + [atom(a) for a in t[1:]])


def atom(t) -> str:
    s = show(t)
    return f"({s})" if " " in s else s


class Gen:
    def __init__(self, seed: int, max_depth: int = 4):
        self.r = random.Random(seed)
        self.max_depth = max_depth
        self.n = 0

    def fresh(self, hint="v") -> str:
        self.n += 1
        return f"{hint}{self.n}"

    # -- types
    def base(self):
        return self.r.choice(BASE)

    def rtype(self, depth=2):
        r = self.r.random()
        if depth <= 0 or r < 0.55:
            return self.base()
        if r < 0.65:
            return ("Option", self.rtype(depth - 1))
        if r < 0.75:
            return ("List", self.rtype(depth - 1))
        if r < 0.85:
            return ("Pair", self.rtype(depth - 1), self.rtype(depth - 1))
        if r < 0.92:
            return ("Map", "String", self.rtype(depth - 1))
        return ("fun", self.base(), self.rtype(depth - 1))

    # -- literals
    def int_lit(self, t):
        lo, hi = _bounds(t)
        r = self.r.random()
        if r < 0.1:
            v = hi
        elif r < 0.2:
            v = lo
        elif r < 0.6:
            v = self.r.randint(max(lo, -20), min(hi, 20))
        else:
            v = self.r.randint(lo, hi) >> self.r.randint(0, _width(t))
            v = max(lo, min(hi, v))
        return f"({t} {v})"

    def literal(self, t):
        if t in INTS:
            return self.int_lit(t)
        if t == "String":
            return '"' + self.r.choice(["", "a", "xyz", "héllo", "0", "K"]) + '"'
        if t == "Bool":
            return self.r.choice(["True", "False"])
        if t == "ByStr20":
            return f"(ByStr20 0x{self.r.getrandbits(160):040x})"
        raise ValueError(t)

    # -- expressions
    def expr(self, t, env, depth):
        cands = [n for n, vt in env if vt == t]
        if depth >= self.max_depth or self.r.random() < 0.15:
            if cands and self.r.random() < 0.7:
                return self.r.choice(cands)
            return self.leaf(t, env, depth)
        choices = [self.let_in, self.poly, self.apply_fn, self.match_option]
        if isinstance(t, str):
            choices += [self.base_op] * 3
        else:
            choices += [self.structured] * 2
        return self.r.choice(choices)(t, env, depth)

    def leaf(self, t, env, depth):
        if isinstance(t, str):
            return self.literal(t)
        return self.structured(t, env, depth)

    def sub(self, t, env, depth):
        return f"({self.expr(t, env, depth + 1)})"

    def let_in(self, t, env, depth):
        bt = self.rtype(1)
        x = self.fresh()
        bound = self.expr(bt, env, depth + 1)
        body = self.expr(t, env + [(x, bt)], depth + 1)
        return f"let {x} = {bound} in\n{body}"

    def tapp(self, fn, targs, args):
        """``@fn targs args`` with every argument let-bound first: after type
        arguments a parenthesized value could be read as a type."""
        names, lets = [], []
        for a in args:
            n = self.fresh("a")
            names.append(n)
            lets.append(f"let {n} = {a} in\n")
        ts = " ".join(atom(t) for t in targs)
        return "".join(lets) + f"@{fn} {ts} {' '.join(names)}"

    def poly(self, t, env, depth):
        k = self.r.randrange(4)
        if k == 0:
            return self.tapp("pid", [t], [self.sub(t, env, depth)])
        if k == 1:
            at = self.base()
            f = self.fun_value(at, t, env, depth)
            return self.tapp("papply", [at, t], [f, self.sub(at, env, depth)])
        if k == 2:
            return self.tapp("pchoose", [t], [self.sub("Bool", env, depth),
                                              self.sub(t, env, depth), self.sub(t, env, depth)])
        return self.tapp("phead", [t], [self.sub(t, env, depth),
                                        self.sub(("List", t), env, depth)])

    def fun_value(self, a, b, env, depth):
        x = self.fresh("x")
        return f"fun ({x} : {show(a)}) => {self.expr(b, env + [(x, a)], depth + 1)}"

    def apply_fn(self, t, env, depth):
        fns = [(n, vt) for n, vt in env
               if isinstance(vt, tuple) and vt[0] == "fun" and vt[2] == t]
        if fns and self.r.random() < 0.6:
            f, ft = self.r.choice(fns)
            return f"{f} {self.sub(ft[1], env, depth)}"
        # a let-bound curried two-argument function, used saturated or partially
        a, b = self.base(), self.base()
        f, x, y = self.fresh("f"), self.fresh("x"), self.fresh("y")
        body = self.expr(t, env + [(x, a), (y, b)], depth + 1)
        ga = self.sub(a, env, depth)
        gb = self.sub(b, env, depth)
        use = (f"{f} {ga} {gb}" if self.r.random() < 0.5 else
               f"let {y}p = {f} {ga} in {y}p {gb}")
        return f"let {f} = fun ({x} : {show(a)}, {y} : {show(b)}) =>\n  {body}\nin {use}"

    def match_option(self, t, env, depth):
        et = self.rtype(1)
        s, v = self.fresh("s"), self.fresh("v")
        scrut = self.expr(("Option", et), env, depth + 1)
        some = self.expr(t, env + [(v, et)], depth + 1)
        none = self.expr(t, env, depth + 1)
        return (f"let {s} = {scrut} in\nmatch {s} with\n| Some {v} => {some}\n"
                f"| None => {none}\nend")

    def base_op(self, t, env, depth):
        r = self.r.random()
        if t in INTS:
            if r < 0.6:
                op = self.r.choice(["add", "sub", "mul", "add", "div", "rem"])
                return f"builtin {op} {self.sub(t, env, depth)} {self.sub(t, env, depth)}"
            if r < 0.8:
                lt = self.fresh("l")
                xs = self.sub(("List", t), env, depth)
                n = self.tapp("list_length", [t], [lt])
                h = self.tapp("phead", [t], [self.sub(t, env, depth), lt])
                return f"let {lt} = {xs} in\nlet {lt}n = {n} in\n{h}"
            return self.literal(t)
        if t == "String":
            if r < 0.5:
                return f"builtin concat {self.sub(t, env, depth)} {self.sub(t, env, depth)}"
            it = self.r.choice(INTS)
            return f"builtin to_string {self.sub(it, env, depth)}"
        if t == "Bool":
            if r < 0.3:
                it = self.r.choice(INTS)
                return f"builtin lt {self.sub(it, env, depth)} {self.sub(it, env, depth)}"
            if r < 0.6:
                et = self.r.choice(INTS + ["String", "ByStr20"])
                return f"builtin eq {self.sub(et, env, depth)} {self.sub(et, env, depth)}"
            if r < 0.8:
                return f"andb {self.sub(t, env, depth)} (negb {self.sub(t, env, depth)})"
            mt = ("Map", "String", self.base())
            return f"builtin contains {self.sub(mt, env, depth)} {self.sub('String', env, depth)}"
        return self.literal(t)

    def structured(self, t, env, depth):
        if isinstance(t, str):
            return self.literal(t)
        head = t[0]
        r = self.r.random()
        if head == "Option":
            if r < 0.4:
                return f"None {{{atom(t[1])}}}"
            if r < 0.8:
                return f"Some {{{atom(t[1])}}} {self.sub(t[1], env, depth)}"
            mt = ("Map", "String", t[1])
            return f"builtin get {self.sub(mt, env, depth)} {self.sub('String', env, depth)}"
        if head == "List":
            el = atom(t[1])
            if r < 0.3:
                return f"Nil {{{el}}}"
            if r < 0.75 or depth >= self.max_depth:
                return f"Cons {{{el}}} {self.sub(t[1], env, depth)} {self.sub(t, env, depth)}"
            if r < 0.88:
                return self.tapp("list_reverse", [t[1]], [self.sub(t, env, depth)])
            a = self.base()
            f = self.fun_value(a, t[1], env, depth)
            return self.tapp("list_map", [a, t[1]], [f, self.sub(("List", a), env, depth)])
        if head == "Pair":
            return (f"Pair {{{atom(t[1])} {atom(t[2])}}} {self.sub(t[1], env, depth)} "
                    f"{self.sub(t[2], env, depth)}")
        if head == "Map":
            if r < 0.3 or depth >= self.max_depth:
                return f"Emp {atom(t[1])} {atom(t[2])}"
            if r < 0.85:
                return (f"builtin put {self.sub(t, env, depth)} {self.sub(t[1], env, depth)} "
                        f"{self.sub(t[2], env, depth)}")
            return f"builtin remove {self.sub(t, env, depth)} {self.sub(t[1], env, depth)}"
        if head == "fun":
            return self.fun_value(t[1], t[2], env, depth)
        raise ValueError(t)

    def program(self) -> str:
        t = self.rtype(2)
        if isinstance(t, tuple) and t[0] == "fun" and self.r.random() < 0.8:
            # mostly observe functions by applying them
            body = f"let g = {self.expr(t, [], 0)} in g {self.sub(t[1], [], 1)}"
        else:
            body = self.expr(t, [], 0)
        return PREAMBLE + "\n" + body + "\n"


def generate(seed: int, max_depth: int = 4) -> str:
    return Gen(seed, max_depth).program()
