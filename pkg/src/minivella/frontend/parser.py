"""Lexer and recursive-descent parser for the surface syntax."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Optional

from minivella.core import (
    ADTDecl, ADTType, App, Binder, Builtin, Constr, ConstructorPat, Contract, Field, Fix,
    Fun, FunType, Forall, LibDef, Let, Lit, Loc, MapType, Match, Msg, Program, SBind, SEvent,
    SLoad, SMapDelete, SMapExists, SMapGet, SMapPut, SMatch, SSend, SStore, STRING, TApp,
    TFun, Transition, TypeVar, Var, Wildcard, ByStrXType, BUILTIN_ADTS, prim_type_named,
)


@dataclass
class Diagnostic:
    severity: str
    message: str
    loc: Loc

    def format(self, filename: str = "<input>") -> str:
        return f"{filename}:{self.loc.line}:{self.loc.col}: {self.severity}: {self.message}"


class CompileError(Exception):
    """Raised with one or more diagnostics."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(f"{d.loc}: {d.message}" for d in self.diagnostics))


KEYWORDS = {
    "let", "in", "fun", "tfun", "fix", "match", "with", "end", "type", "of", "builtin",
    "forall", "contract", "field", "transition", "library", "send", "event", "delete",
    "exists",
}

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>\(\*)
  | (?P<hex>0x[0-9a-fA-F]*)
  | (?P<int>-?[0-9]+)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<tvar>'[A-Za-z_][A-Za-z0-9_]*)
  | (?P<cid>[A-Z][A-Za-z0-9_]*)
  | (?P<id>[a-z_$][A-Za-z0-9_$]*)
  | (?P<sym>=>|->|<-|:=|[=|:;,.(){}\[\]@])
""", re.VERBOSE)


@dataclass
class Token:
    kind: str
    text: str
    loc: Loc


def tokenize(text: str) -> list:
    tokens = []
    pos, line, line_start = 0, 1, 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        loc = Loc(line, pos - line_start + 1)
        if m is None:
            raise CompileError([Diagnostic("error", f"unexpected character {text[pos]!r}", loc)])
        kind = m.lastgroup
        if kind == "comment":
            depth, j = 1, m.end()
            while depth and j < n:
                if text.startswith("(*", j):
                    depth += 1
                    j += 2
                elif text.startswith("*)", j):
                    depth -= 1
                    j += 2
                else:
                    j += 1
            if depth:
                raise CompileError([Diagnostic("error", "unterminated comment", loc)])
            end = j
        else:
            end = m.end()
            if kind == "id" and m.group() in KEYWORDS:
                kind = "kw"
            if kind != "ws":
                tokens.append(Token(kind, m.group(), loc))
        chunk = text[pos:end]
        nl = chunk.count("\n")
        if nl:
            line += nl
            line_start = pos + chunk.rfind("\n") + 1
        pos = end
    tokens.append(Token("eof", "", Loc(line, pos - line_start + 1)))
    return tokens


class Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0
        self.scrut_counter = 0
        self.constructors = {c for d in BUILTIN_ADTS for c, _ in d.constructors}

    # -- token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k=1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, kind, text=None) -> bool:
        t = self.tok
        return t.kind == kind and (text is None or t.text == text)

    def at_sym(self, text) -> bool:
        return self.at("sym", text)

    def at_kw(self, text) -> bool:
        return self.at("kw", text)

    def advance(self) -> Token:
        t = self.tok
        self.i += 1
        return t

    def error(self, msg, tok: Optional[Token] = None):
        tok = tok or self.tok
        shown = tok.text if tok.kind != "eof" else "end of input"
        raise CompileError([Diagnostic("error", f"{msg} (found {shown!r})", tok.loc)])

    def expect(self, kind, text=None) -> Token:
        if not self.at(kind, text):
            self.error(f"expected {text or kind}")
        return self.advance()

    def expect_sym(self, text) -> Token:
        return self.expect("sym", text)

    def expect_kw(self, text) -> Token:
        return self.expect("kw", text)

    # -- types
    def parse_type(self):
        if self.at_kw("forall"):
            self.advance()
            tv = self.expect("tvar").text
            self.expect_sym(".")
            return Forall(tv, self.parse_type())
        if self.at_sym("(") :
            # n-ary arrow: (A, B) -> C
            save = self.i
            self.advance()
            first = self.parse_type()
            if self.at_sym(","):
                params = [first]
                while self.at_sym(","):
                    self.advance()
                    params.append(self.parse_type())
                self.expect_sym(")")
                self.expect_sym("->")
                return FunType(tuple(params), self.parse_type())
            self.i = save
        t = self.parse_type_app()
        if self.at_sym("->"):
            self.advance()
            return FunType((t,), self.parse_type())
        return t

    def parse_type_app(self):
        if self.at("cid"):
            tok = self.advance()
            name = tok.text
            if name == "Map":
                k = self.parse_type_atom()
                v = self.parse_type_atom()
                return MapType(k, v)
            prim = prim_type_named(name)
            if prim is not None:
                return prim
            args = []
            while self._type_atom_start():
                args.append(self.parse_type_atom())
            return ADTType(name, tuple(args))
        return self.parse_type_atom()

    def _type_atom_start(self) -> bool:
        return self.at("cid") or self.at("tvar") or self.at_sym("(")

    def _type_arg_start(self) -> bool:
        # after `@f`, a known constructor name starts a value argument
        if self.at("cid"):
            return self.tok.text not in self.constructors
        return self.at("tvar") or self.at_sym("(")

    def parse_type_atom(self):
        if self.at("tvar"):
            return TypeVar(self.advance().text)
        if self.at("cid"):
            name = self.advance().text
            if name == "Map":
                self.error("Map type needs parentheses here")
            prim = prim_type_named(name)
            return prim if prim is not None else ADTType(name, ())
        if self.at_sym("("):
            self.advance()
            t = self.parse_type()
            self.expect_sym(")")
            return t
        self.error("expected a type")

    # -- expressions
    def parse_expr(self):
        t = self.tok
        loc = t.loc
        if self.at_kw("let"):
            self.advance()
            name = self.expect("id").text
            decl = None
            if self.at_sym(":"):
                self.advance()
                decl = self.parse_type()
            self.expect_sym("=")
            bound = self.parse_expr()
            self.expect_kw("in")
            body = self.parse_expr()
            return Let(name, decl, bound, body, loc=loc)
        if self.at_kw("fun"):
            self.advance()
            params = self.parse_params()
            self.expect_sym("=>")
            body = self.parse_expr()
            # multi-parameter sugar is curried: fun (a : A, b : B) => e
            for p in reversed(params[1:]):
                body = Fun((p,), body, loc=loc)
            return Fun(params[:1], body, loc=loc)
        if self.at_kw("tfun"):
            self.advance()
            tv = self.expect("tvar").text
            self.expect_sym("=>")
            return TFun(tv, self.parse_expr(), loc=loc)
        if self.at_kw("fix"):
            self.advance()
            self.expect_sym("(")
            name = self.expect("id").text
            self.expect_sym(":")
            ft = self.parse_type()
            self.expect_sym(")")
            self.expect_sym("=>")
            return Fix(name, ft, self.parse_expr(), loc=loc)
        if self.at_kw("match"):
            return self.parse_match_expr()
        if self.at_kw("builtin"):
            self.advance()
            op = self.expect("id").text
            args = []
            while self._atom_start():
                args.append(self.parse_atom())
            return Builtin(op, tuple(args), loc=loc)
        if self.at_sym("@"):
            self.advance()
            fn = self.parse_atom()
            e = fn
            if not self._type_atom_start():
                self.error("expected a type argument")
            while self._type_arg_start():
                save = self.i
                try:
                    targ = self.parse_type_atom()
                except CompileError:
                    self.i = save
                    break
                e = TApp(e, targ, loc=loc)
            while self._atom_start():
                e = App(e, (self.parse_atom(),), loc=loc)
            return e
        if self.at("cid"):
            return self.parse_constr_or_lit()
        if self.at("kw") and t.text in {"in", "with", "end", "of"}:
            self.error("expected an expression")
        head = self.parse_atom()
        e = head
        while self._atom_start():
            e = App(e, (self.parse_atom(),), loc=loc)
        return e

    def parse_params(self):
        self.expect_sym("(")
        params = []
        while True:
            name = self.expect("id").text
            self.expect_sym(":")
            params.append((name, self.parse_type()))
            if self.at_sym(","):
                self.advance()
                continue
            break
        self.expect_sym(")")
        return tuple(params)

    def parse_constr_or_lit(self):
        tok = self.advance()
        name = tok.text
        prim = prim_type_named(name)
        if name == "Emp":
            k = self.parse_type_atom()
            v = self.parse_type_atom()
            return Builtin("emp", (), (k, v), loc=tok.loc)
        if prim is not None:
            if self.at("int"):
                return Lit(int(self.advance().text), prim, loc=tok.loc)
            if self.at("hex"):
                return _hex_lit(self.advance(), prim)
            self.error(f"expected a literal after {name}")
        targs = []
        if self.at_sym("{"):
            self.advance()
            while not self.at_sym("}"):
                targs.append(self.parse_type_atom())
            self.advance()
        args = []
        while self._atom_start():
            args.append(self.parse_atom())
        return Constr(name, tuple(targs), tuple(args), loc=tok.loc)

    def _atom_start(self) -> bool:
        t = self.tok
        return (t.kind in ("id", "string", "hex", "cid")
                or (t.kind == "sym" and t.text in ("(", "{")))

    def parse_atom(self):
        t = self.tok
        if t.kind == "id":
            self.advance()
            return Var(t.text, loc=t.loc)
        if t.kind == "string":
            self.advance()
            return Lit(json.loads(t.text), STRING, loc=t.loc)
        if t.kind == "hex":
            self.advance()
            return _hex_lit(t, None)
        if t.kind == "cid":
            self.advance()
            if prim_type_named(t.text) is not None or t.text == "Emp":
                self.error("literal needs parentheses in argument position", t)
            return Constr(t.text, (), (), loc=t.loc)
        if self.at_sym("{"):
            return self.parse_msg()
        if self.at_sym("("):
            self.advance()
            e = self.parse_expr()
            self.expect_sym(")")
            return e
        self.error("expected an expression")

    def parse_msg(self):
        loc = self.expect_sym("{").loc
        fields = []
        while not self.at_sym("}"):
            name = self.expect("id").text
            self.expect_sym(":")
            fields.append((name, self.parse_atom()))
            if self.at_sym(";"):
                self.advance()
            elif not self.at_sym("}"):
                self.error("expected ';' or '}' in message")
        self.advance()
        return Msg(tuple(fields), loc=loc)

    def parse_match_expr(self):
        loc = self.expect_kw("match").loc
        scrut = self.parse_expr()
        self.expect_kw("with")
        arms = []
        while self.at_sym("|"):
            self.advance()
            p = self.parse_pattern()
            self.expect_sym("=>")
            arms.append((p, self.parse_expr()))
        self.expect_kw("end")
        if isinstance(scrut, Var):
            return Match(scrut.name, tuple(arms), loc=loc)
        name = f"$s{self.scrut_counter}"
        self.scrut_counter += 1
        return Let(name, None, scrut, Match(name, tuple(arms), loc=loc), loc=loc)

    def parse_pattern(self):
        if self.at("cid"):
            name = self.advance().text
            subs = []
            while self.at("cid") or self.at("id") or self.at_sym("("):
                subs.append(self.parse_subpattern())
            return ConstructorPat(name, tuple(subs))
        return self.parse_subpattern()

    def parse_subpattern(self):
        if self.at("id"):
            name = self.advance().text
            return Wildcard() if name == "_" else Binder(name)
        if self.at("cid"):
            return ConstructorPat(self.advance().text, ())
        if self.at_sym("("):
            self.advance()
            p = self.parse_pattern()
            self.expect_sym(")")
            return p
        self.error("expected a pattern")

    # -- statements
    def parse_stmts(self, terminators):
        stmts = []
        while not (self.tok.kind in ("kw", "sym") and self.tok.text in terminators):
            stmts.append(self.parse_stmt())
            if self.at_sym(";"):
                self.advance()
                continue
            break
        return tuple(stmts)

    def parse_stmt(self):
        t = self.tok
        if self.at_kw("match"):
            self.advance()
            scrut = self.expect("id").text
            self.expect_kw("with")
            arms = []
            while self.at_sym("|"):
                self.advance()
                p = self.parse_pattern()
                self.expect_sym("=>")
                arms.append((p, self.parse_stmts({"|", "end"})))
            self.expect_kw("end")
            return SMatch(scrut, tuple(arms), loc=t.loc)
        if self.at_kw("send"):
            self.advance()
            return SSend(self.expect("id").text, loc=t.loc)
        if self.at_kw("event"):
            self.advance()
            return SEvent(self.expect("id").text, loc=t.loc)
        if self.at_kw("delete"):
            self.advance()
            f = self.expect("id").text
            key = self._index()
            return SMapDelete(f, key, loc=t.loc)
        name = self.expect("id").text
        if self.at_sym("<-"):
            self.advance()
            if self.at_kw("exists"):
                self.advance()
                f = self.expect("id").text
                return SMapExists(name, f, self._index(), loc=t.loc)
            f = self.expect("id").text
            if self.at_sym("["):
                return SMapGet(name, f, self._index(), loc=t.loc)
            return SLoad(name, f, loc=t.loc)
        if self.at_sym(":="):
            self.advance()
            return SStore(name, self.expect("id").text, loc=t.loc)
        if self.at_sym("["):
            key = self._index()
            self.expect_sym(":=")
            return SMapPut(name, key, self.expect("id").text, loc=t.loc)
        if self.at_sym("="):
            self.advance()
            return SBind(name, self.parse_expr(), loc=t.loc)
        self.error("expected a statement")

    def _index(self) -> str:
        self.expect_sym("[")
        key = self.expect("id").text
        self.expect_sym("]")
        return key

    # -- top level
    def parse_program(self) -> Program:
        adts, lib = [], []
        main = contract = None
        if self.at_kw("library"):
            self.advance()
            self.expect("cid")
        while True:
            if self.at_kw("type"):
                adts.append(self.parse_adt())
            elif self.at_kw("let"):
                loc = self.advance().loc
                name = self.expect("id").text
                decl = None
                if self.at_sym(":"):
                    self.advance()
                    decl = self.parse_type()
                self.expect_sym("=")
                bound = self.parse_expr()
                if self.at_kw("in"):
                    self.advance()
                    main = Let(name, decl, bound, self.parse_expr(), loc=loc)
                    break
                lib.append(LibDef(name, decl, bound, loc=loc))
            else:
                break
        if main is None:
            if self.at_kw("contract"):
                contract = self.parse_contract()
            elif not self.at("eof"):
                main = self.parse_expr()
        if not self.at("eof"):
            self.error("unexpected trailing input")
        return Program(tuple(adts), tuple(lib), main, contract)

    def parse_adt(self) -> ADTDecl:
        loc = self.expect_kw("type").loc
        name = self.expect("cid").text
        tparams = []
        while self.at("tvar"):
            tparams.append(self.advance().text)
        self.expect_sym("=")
        constrs = []
        while self.at_sym("|"):
            self.advance()
            cname = self.expect("cid").text
            fields = []
            if self.at_kw("of"):
                self.advance()
                while self._type_atom_start():
                    fields.append(self.parse_type_atom())
            constrs.append((cname, tuple(fields)))
        if not constrs:
            self.error("type declaration needs at least one constructor")
        self.constructors.update(c for c, _ in constrs)
        return ADTDecl(name, tuple(tparams), tuple(constrs), loc=loc)

    def parse_contract(self) -> Contract:
        loc = self.expect_kw("contract").loc
        name = self.expect("cid").text
        self.expect_sym("(")
        self.expect_sym(")")
        fields, transitions = [], []
        while self.at_kw("field"):
            floc = self.advance().loc
            fname = self.expect("id").text
            self.expect_sym(":")
            ft = self.parse_type()
            self.expect_sym("=")
            fields.append(Field(fname, ft, self.parse_expr(), loc=floc))
        while self.at_kw("transition"):
            tloc = self.advance().loc
            tname = self.expect("cid").text
            params = ()
            if self.at_sym("(") and self.peek().kind == "sym" and self.peek().text == ")":
                self.advance()
                self.advance()
            else:
                params = self.parse_params()
            body = self.parse_stmts({"end"})
            self.expect_kw("end")
            transitions.append(Transition(tname, params, body, loc=tloc))
        return Contract(name, tuple(fields), tuple(transitions), loc=loc)


def _hex_lit(tok: Token, declared):
    digits = tok.text[2:]
    if len(digits) % 2 or not digits:
        raise CompileError([Diagnostic("error", "byte string literal needs an even, non-zero "
                                                "number of hex digits", tok.loc)])
    value = bytes.fromhex(digits)
    t = declared if declared is not None else ByStrXType(len(value))
    return Lit(value, t, loc=tok.loc)


def parse(text: str) -> Program:
    """Parse a whole program; raises CompileError carrying diagnostics."""
    return Parser(text).parse_program()


def parse_expr(text: str):
    p = Parser(text)
    e = p.parse_expr()
    if not p.at("eof"):
        p.error("unexpected trailing input")
    return e


def parse_type(text: str):
    p = Parser(text)
    t = p.parse_type()
    if not p.at("eof"):
        p.error("unexpected trailing input")
    return t
