"""
Line-oriented ontology DSL: parser and writer.

    concept NAME.            role NAME.            individual NAME.
    axiom CEXPR subclassof CEXPR.
    axiom CEXPR equivalent CEXPR.
    assert NAME : CNAME.     assert NAME RX NAME.

CEXPR is built from names, top, bottom, not, and, or, "forall RX . X", "exists RX . X"
and parentheses; RX is a role name or inv(NAME). Precedence is not > and > or, and a
quantifier takes a single unary operand, so compound fillers need parentheses.
Declarations may appear anywhere in the file; every name must be declared.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Optional

from src.dl.syntax import (
    BOTTOM,
    TOP,
    And,
    Assertion,
    Atomic,
    Bottom,
    ConceptAssertion,
    ConceptExpr,
    EquivalentTo,
    Exists,
    Forall,
    KnowledgeGraphInput,
    Not,
    Ontology,
    Or,
    RoleAssertion,
    RoleExpr,
    SubClassOf,
    Top,
)
from src.errors import DslSyntaxError, DuplicateDeclarationError, UnknownNameError, UnsupportedConstructError

logger = logging.getLogger(__name__)

KEYWORDS = frozenset(
    {
        "concept", "role", "individual", "axiom", "assert", "top", "bottom", "not", "and", "or",
        "forall", "exists", "subclassof", "equivalent", "subroleof",
    }
)

_TOKEN = re.compile(r'\s*(?:(inv\()|([A-Za-z_][A-Za-z0-9_\-]*)|("[^"\n]*")|([().:]))')
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_\-]*\Z")


@dataclass(frozen=True)
class _Tok:
    kind: str  # "inv" | "name" | "quoted" | "punct" | "end"
    text: str
    line: int
    col: int


def _tokenize_line(text: str, lineno: int) -> list[_Tok]:
    code = text.split("#", 1)[0].rstrip()
    toks: list[_Tok] = []
    pos = 0
    while pos < len(code):
        m = _TOKEN.match(code, pos)
        if m is None:
            bad = len(code) - len(code[pos:].lstrip())
            raise DslSyntaxError(f"unexpected character {code[bad]!r}", lineno, bad + 1)
        kind = ("inv", "name", "quoted", "punct")[m.lastindex - 1]
        start = m.start(m.lastindex)
        toks.append(_Tok(kind, m.group(m.lastindex), lineno, start + 1))
        pos = m.end()
    toks.append(_Tok("end", "", lineno, len(code) + 1))
    return toks


class _LineParser:
    def __init__(self, toks: list[_Tok], concepts: set[str], roles: set[str]) -> None:
        self.toks = toks
        self.i = 0
        self.concepts = concepts
        self.roles = roles

    # -- token helpers --
    def peek(self) -> _Tok:
        return self.toks[self.i]

    def next(self) -> _Tok:
        tok = self.toks[self.i]
        if tok.kind != "end":
            self.i += 1
        return tok

    def error(self, msg: str, tok: Optional[_Tok] = None) -> DslSyntaxError:
        tok = tok or self.peek()
        return DslSyntaxError(msg, tok.line, tok.col)

    def expect(self, text: str) -> _Tok:
        tok = self.next()
        if tok.text != text or tok.kind == "quoted":
            shown = tok.text or "end of line"
            raise self.error(f"expected {text!r}, found {shown!r}", tok)
        return tok

    def at(self, text: str) -> bool:
        tok = self.peek()
        return tok.kind in ("name", "punct") and tok.text == text

    def finish(self) -> None:
        self.expect(".")
        if self.peek().kind != "end":
            raise self.error("statement must end the line")

    def identifier(self, what: str) -> str:
        tok = self.next()
        if tok.kind == "quoted" and what == "individual":
            return tok.text[1:-1]
        if tok.kind != "name" or tok.text in KEYWORDS:
            raise self.error(f"expected {what} name", tok)
        return tok.text

    # -- grammar --
    def role(self) -> RoleExpr:
        if self.peek().kind == "inv":
            self.next()
            name = self.identifier("role")
            self.expect(")")
            inverted = True
        else:
            name = self.identifier("role")
            inverted = False
        if name not in self.roles:
            raise UnknownNameError(f"line {self.toks[0].line}: unknown role {name!r}")
        return RoleExpr(name, inverted)

    def expr(self) -> ConceptExpr:
        out = self.conj()
        while self.at("or"):
            self.next()
            out = Or(out, self.conj())
        return out

    def conj(self) -> ConceptExpr:
        out = self.unary()
        while self.at("and"):
            self.next()
            out = And(out, self.unary())
        return out

    def unary(self) -> ConceptExpr:
        if self.at("not"):
            self.next()
            return Not(self.unary())
        if self.at("forall") or self.at("exists"):
            quant = self.next().text
            role = self.role()
            self.expect(".")
            filler = self.unary()
            return Forall(role, filler) if quant == "forall" else Exists(role, filler)
        return self.primary()

    def primary(self) -> ConceptExpr:
        tok = self.peek()
        if self.at("("):
            self.next()
            inner = self.expr()
            self.expect(")")
            return inner
        if self.at("top"):
            self.next()
            return TOP
        if self.at("bottom"):
            self.next()
            return BOTTOM
        name = self.identifier("concept")
        if name not in self.concepts:
            raise UnknownNameError(f"line {tok.line}, column {tok.col}: unknown concept {name!r}")
        return Atomic(name)


def parse_ontology(text: str) -> tuple[Ontology, KnowledgeGraphInput]:
    """Parse DSL source into an ontology and the ABox it carries."""
    lines = [(n, _tokenize_line(line, n)) for n, line in enumerate(text.splitlines(), start=1)]
    lines = [(n, toks) for n, toks in lines if toks[0].kind != "end"]

    concepts: list[str] = []
    roles: list[str] = []
    individuals: list[str] = []
    declared: dict[str, str] = {}
    for n, toks in lines:
        head = toks[0]
        if head.kind != "name" or head.text not in ("concept", "role", "individual", "axiom", "assert"):
            raise DslSyntaxError(f"unknown statement {head.text!r}", n, head.col)
        if head.text in ("concept", "role", "individual"):
            p = _LineParser(toks, set(), set())
            p.next()
            name = p.identifier(head.text)
            p.finish()
            if name in declared:
                raise DuplicateDeclarationError(
                    f"line {n}: {name!r} already declared as {declared[name]}"
                )
            declared[name] = head.text
            {"concept": concepts, "role": roles, "individual": individuals}[head.text].append(name)

    concept_set, role_set, indiv_set = set(concepts), set(roles), set(individuals)
    tbox: list[SubClassOf] = []
    abox: list[Assertion] = []
    for n, toks in lines:
        head = toks[0].text
        p = _LineParser(toks, concept_set, role_set)
        p.next()
        if head == "axiom":
            if any(t.kind == "name" and t.text == "subroleof" for t in toks):
                raise UnsupportedConstructError(f"line {n}: role inclusion is unsupported in ALCI pipeline")
            lhs = p.expr()
            kw = p.next()
            if kw.text not in ("subclassof", "equivalent") or kw.kind != "name":
                raise p.error("expected 'subclassof' or 'equivalent'", kw)
            rhs = p.expr()
            p.finish()
            if kw.text == "equivalent":
                tbox.extend(EquivalentTo(lhs, rhs).expand())
            else:
                tbox.append(SubClassOf(lhs, rhs))
        elif head == "assert":
            subject = p.identifier("individual")
            if p.at(":"):
                p.next()
                cname = p.identifier("concept")
                if cname not in concept_set:
                    raise UnknownNameError(f"line {n}: unknown concept {cname!r}")
                abox.append(ConceptAssertion(cname, subject))
                names = [subject]
            else:
                role = p.role()
                obj = p.identifier("individual")
                abox.append(RoleAssertion(role, subject, obj))
                names = [subject, obj]
            p.finish()
            for name in names:
                if name not in indiv_set:
                    raise UnknownNameError(f"line {n}: unknown individual {name!r}")

    onto = Ontology(tuple(concepts), tuple(roles), tuple(tbox))
    kg = KnowledgeGraphInput(tuple(individuals), tuple(abox))
    logger.debug("Parsed %d concepts, %d roles, %d axioms, %d assertions", len(concepts), len(roles), len(tbox), len(abox))
    return onto, kg


# ---- writer ----


def _unary(e: ConceptExpr) -> str:
    if isinstance(e, (And, Or)):
        return f"({render_concept(e)})"
    return render_concept(e)


def render_concept(e: ConceptExpr) -> str:
    """Render an expression so that parsing the text yields the same tree."""
    if isinstance(e, Atomic):
        return e.name
    if isinstance(e, Top):
        return "top"
    if isinstance(e, Bottom):
        return "bottom"
    if isinstance(e, Not):
        return f"not {_unary(e.operand)}"
    if isinstance(e, (Exists, Forall)):
        quant = "exists" if isinstance(e, Exists) else "forall"
        return f"{quant} {e.role} . {_unary(e.filler)}"
    if isinstance(e, And):
        left = f"({render_concept(e.left)})" if isinstance(e.left, Or) else render_concept(e.left)
        return f"{left} and {_unary(e.right)}"
    if isinstance(e, Or):
        right = f"({render_concept(e.right)})" if isinstance(e.right, Or) else render_concept(e.right)
        return f"{render_concept(e.left)} or {right}"
    raise TypeError(f"not a concept expression: {e!r}")


def _individual(name: str) -> str:
    if _IDENT.match(name) and name not in KEYWORDS:
        return name
    return f'"{name}"'


def serialize_ontology(onto: Ontology, kg: Optional[KnowledgeGraphInput] = None) -> str:
    out = [f"concept {c}." for c in onto.concepts]
    out += [f"role {r}." for r in onto.roles]
    out += [f"axiom {render_concept(ax.lhs)} subclassof {render_concept(ax.rhs)}." for ax in onto.tbox]
    if kg is not None:
        out += [f"individual {_individual(i)}." for i in kg.individuals]
        for a in kg.abox:
            if isinstance(a, ConceptAssertion):
                out.append(f"assert {_individual(a.individual)} : {a.concept}.")
            else:
                out.append(f"assert {_individual(a.subject)} {a.role} {_individual(a.object)}.")
    return "\n".join(out) + ("\n" if out else "")
