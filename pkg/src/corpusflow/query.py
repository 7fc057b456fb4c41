"""Boolean keyword search over an inverted index.

Grammar (operators are case-sensitive uppercase; adjacency is implicit AND):

    query   := or
    or      := and ("OR" and)*
    and     := unary (("AND")? unary)*
    unary   := "NOT" unary | primary
    primary := term | '"' phrase '"' | term'*' | "(" query ")"

Terms are lowercased with the tokenizer shared with the embedding module, so
search terms and embedded tokens agree. A term that tokenizes to several
tokens (e.g. ``don't``) behaves as a phrase. Negation is evaluated as set
difference against its positive AND-siblings, never against the whole corpus;
queries with no positive support anywhere are rejected as PureNegation.

Results are ordered by match-term count descending (number of distinct
positive leaf predicates the document satisfies), then ingest_seq ascending.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass
from pathlib import Path

from .corpus import Corpus
from .errors import MalformedRecord, ParseError, PureNegation
from .tokens import tokenize

# --- AST ----------------------------------------------------------------------


@dataclass(frozen=True)
class Term:
    token: str


@dataclass(frozen=True)
class Phrase:
    tokens: tuple[str, ...]


@dataclass(frozen=True)
class Prefix:
    stem: str


@dataclass(frozen=True)
class And:
    children: tuple


@dataclass(frozen=True)
class Or:
    children: tuple


@dataclass(frozen=True)
class Not:
    child: object


QueryAst = Term | Phrase | Prefix | And | Or | Not


# --- lexer ---------------------------------------------------------------------

_LPAREN = "("
_RPAREN = ")"
_OPERATORS = ("AND", "OR", "NOT")


@dataclass(frozen=True)
class _Tok:
    kind: str  # LPAREN RPAREN AND OR NOT WORD QUOTED
    text: str
    pos: int


def _lex(text: str) -> list[_Tok]:
    toks: list[_Tok] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch == _LPAREN or ch == _RPAREN:
            toks.append(_Tok("LPAREN" if ch == _LPAREN else "RPAREN", ch, i))
            i += 1
            continue
        if ch == '"':
            end = text.find('"', i + 1)
            if end < 0:
                raise ParseError("unterminated phrase quote", position=i, expected=('"',))
            toks.append(_Tok("QUOTED", text[i + 1 : end], i))
            i = end + 1
            continue
        start = i
        while i < n and not text[i].isspace() and text[i] not in '()"':
            i += 1
        word = text[start:i]
        if word in _OPERATORS:
            toks.append(_Tok(word, word, start))
        else:
            toks.append(_Tok("WORD", word, start))
    return toks


# --- parser --------------------------------------------------------------------


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _lex(text)
        self.i = 0

    def peek(self) -> _Tok | None:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def take(self) -> _Tok:
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of query", position=len(self.text), expected=("term",))
        self.i += 1
        return tok

    def parse(self) -> QueryAst:
        if not self.toks:
            raise ParseError("empty query", position=0, expected=("term",))
        ast = self.parse_or()
        tok = self.peek()
        if tok is not None:
            raise ParseError(f"unexpected {tok.text!r}", position=tok.pos, expected=("end of query",))
        return ast

    def parse_or(self) -> QueryAst:
        children = [self.parse_and()]
        while (tok := self.peek()) is not None and tok.kind == "OR":
            self.take()
            children.append(self.parse_and())
        return children[0] if len(children) == 1 else Or(tuple(children))

    def parse_and(self) -> QueryAst:
        children = [self.parse_unary()]
        while (tok := self.peek()) is not None and tok.kind not in ("OR", "RPAREN"):
            if tok.kind == "AND":
                self.take()
                tok2 = self.peek()
                if tok2 is None or tok2.kind in ("OR", "RPAREN", "AND"):
                    pos = tok2.pos if tok2 else len(self.text)
                    raise ParseError("expected operand after AND", position=pos, expected=("term",))
            children.append(self.parse_unary())
        return children[0] if len(children) == 1 else And(tuple(children))

    def parse_unary(self) -> QueryAst:
        tok = self.peek()
        if tok is not None and tok.kind == "NOT":
            self.take()
            inner = self.parse_unary()
            if isinstance(inner, Not):  # NOT NOT x == x
                return inner.child
            return Not(inner)
        return self.parse_primary()

    def parse_primary(self) -> QueryAst:
        tok = self.take()
        if tok.kind == "LPAREN":
            inner = self.parse_or()
            closing = self.peek()
            if closing is None or closing.kind != "RPAREN":
                pos = closing.pos if closing else len(self.text)
                raise ParseError("expected ')'", position=pos, expected=(")",))
            self.take()
            return inner
        if tok.kind == "QUOTED":
            tokens = tuple(tokenize(tok.text))
            if not tokens:
                raise ParseError("phrase has no indexable tokens", position=tok.pos, expected=("term",))
            return Phrase(tokens)
        if tok.kind == "WORD":
            word = tok.text
            if word.endswith("*"):
                stems = tokenize(word[:-1])
                if len(stems) != 1:
                    raise ParseError(
                        "prefix wildcard needs a single token stem", position=tok.pos, expected=("term*",)
                    )
                return Prefix(stems[0])
            tokens = tuple(tokenize(word))
            if not tokens:
                raise ParseError(f"term {word!r} has no indexable tokens", position=tok.pos, expected=("term",))
            if len(tokens) == 1:
                return Term(tokens[0])
            return Phrase(tokens)
        raise ParseError(f"unexpected {tok.text!r}", position=tok.pos, expected=("term", "(", '"'))


def _check_evaluable(node: QueryAst) -> None:
    """Reject query shapes that would require negation against the whole corpus.

    A NOT is only evaluable as set difference against positive AND-siblings,
    so every AND needs at least one positive child and every OR branch must
    stand on its own.
    """
    if isinstance(node, (Term, Phrase, Prefix)):
        return
    if isinstance(node, Not):
        raise PureNegation("negation without a positive sibling")
    if isinstance(node, And):
        positives = [c for c in node.children if not isinstance(c, Not)]
        if not positives:
            raise PureNegation("AND has no positive operand")
        for c in positives:
            _check_evaluable(c)
        for c in node.children:
            if isinstance(c, Not):
                _check_evaluable(c.child)
        return
    if isinstance(node, Or):
        for c in node.children:
            _check_evaluable(c)
        return
    raise TypeError(node)


def parse_query(text: str) -> QueryAst:
    ast = _Parser(text).parse()
    _check_evaluable(ast)
    return ast


# --- inverted index --------------------------------------------------------------


class InvertedIndex:
    """token -> posting list of (doc index, positions), built over title+body.

    Positions number the title tokens 0..m-1 and the body tokens from m+1,
    leaving a one-slot gap so phrases never match across the boundary.
    Posting lists are in ingest order. The index is immutable after build.
    """

    def __init__(self) -> None:
        self.postings: dict[str, list[tuple[int, tuple[int, ...]]]] = {}
        self.doc_ids: list[str] = []
        self._sorted_tokens: list[str] = []

    @classmethod
    def build(cls, corpus: Corpus) -> "InvertedIndex":
        index = cls()
        index.doc_ids = corpus.doc_ids()
        for doc_idx, doc in enumerate(corpus.iter_documents()):
            title_toks = tokenize(doc.title)
            body_toks = tokenize(doc.body)
            positions: dict[str, list[int]] = {}
            for p, tok in enumerate(title_toks):
                positions.setdefault(tok, []).append(p)
            base = len(title_toks) + 1
            for p, tok in enumerate(body_toks):
                positions.setdefault(tok, []).append(base + p)
            for tok in sorted(positions):
                index.postings.setdefault(tok, []).append((doc_idx, tuple(positions[tok])))
        index._sorted_tokens = sorted(index.postings)
        return index

    def tokens_with_prefix(self, stem: str) -> list[str]:
        toks = self._sorted_tokens
        lo = bisect_left(toks, stem)
        out = []
        for j in range(lo, len(toks)):
            if not toks[j].startswith(stem):
                break
            out.append(toks[j])
        return out

    def docs_for_token(self, token: str) -> list[int]:
        return [d for d, _ in self.postings.get(token, ())]

    # --- persistence (format documented here; version byte first) ---

    FORMAT_VERSION = 1
    _MAGIC = b"TIDX"

    def save(self, path: str | Path) -> None:
        out = bytearray()
        out += self._MAGIC
        out.append(self.FORMAT_VERSION)
        _write_varint(out, len(self.doc_ids))
        for doc_id in self.doc_ids:
            raw = doc_id.encode("utf-8")
            _write_varint(out, len(raw))
            out += raw
        _write_varint(out, len(self._sorted_tokens))
        for tok in self._sorted_tokens:
            raw = tok.encode("utf-8")
            _write_varint(out, len(raw))
            out += raw
            plist = self.postings[tok]
            _write_varint(out, len(plist))
            prev_doc = 0
            for doc_idx, positions in plist:
                _write_varint(out, doc_idx - prev_doc)
                prev_doc = doc_idx
                _write_varint(out, len(positions))
                prev_pos = 0
                for p in positions:
                    _write_varint(out, p - prev_pos)
                    prev_pos = p
        Path(path).write_bytes(bytes(out))

    @classmethod
    def load(cls, path: str | Path) -> "InvertedIndex":
        raw = Path(path).read_bytes()
        if raw[:4] != cls._MAGIC:
            raise MalformedRecord(f"{path} is not an index file (bad magic)")
        if raw[4] != cls.FORMAT_VERSION:
            raise MalformedRecord(f"unsupported index format version {raw[4]}")
        index = cls()
        pos = 5
        n_docs, pos = _read_varint(raw, pos)
        for _ in range(n_docs):
            ln, pos = _read_varint(raw, pos)
            index.doc_ids.append(raw[pos : pos + ln].decode("utf-8"))
            pos += ln
        n_tokens, pos = _read_varint(raw, pos)
        for _ in range(n_tokens):
            ln, pos = _read_varint(raw, pos)
            tok = raw[pos : pos + ln].decode("utf-8")
            pos += ln
            n_post, pos = _read_varint(raw, pos)
            plist = []
            doc_idx = 0
            for _ in range(n_post):
                delta, pos = _read_varint(raw, pos)
                doc_idx += delta
                n_pos, pos = _read_varint(raw, pos)
                positions = []
                p = 0
                for _ in range(n_pos):
                    d, pos = _read_varint(raw, pos)
                    p += d
                    positions.append(p)
                plist.append((doc_idx, tuple(positions)))
            index.postings[tok] = plist
        index._sorted_tokens = sorted(index.postings)
        return index


def _write_varint(out: bytearray, value: int) -> None:
    while True:
        b = value & 0x7F
        value >>= 7
        if value:
            out.append(b | 0x80)
        else:
            out.append(b)
            return


def _read_varint(raw: bytes, pos: int) -> tuple[int, int]:
    shift = 0
    value = 0
    while True:
        b = raw[pos]
        pos += 1
        value |= (b & 0x7F) << shift
        if not (b & 0x80):
            return value, pos
        shift += 7


def build_index(corpus: Corpus) -> InvertedIndex:
    return InvertedIndex.build(corpus)


# --- execution -------------------------------------------------------------------


def normalize(node: QueryAst) -> QueryAst:
    """Rewrite Not(Not(x)) -> x so double negation holds for built ASTs too."""
    if isinstance(node, Not):
        child = normalize(node.child)
        if isinstance(child, Not):
            return child.child
        return Not(child)
    if isinstance(node, And):
        return And(tuple(normalize(c) for c in node.children))
    if isinstance(node, Or):
        return Or(tuple(normalize(c) for c in node.children))
    return node


def _eval(node: QueryAst, index: InvertedIndex) -> set[int]:
    if isinstance(node, Term):
        return set(index.docs_for_token(node.token))
    if isinstance(node, Prefix):
        docs: set[int] = set()
        for tok in index.tokens_with_prefix(node.stem):
            docs.update(index.docs_for_token(tok))
        return docs
    if isinstance(node, Phrase):
        return _eval_phrase(node.tokens, index)
    if isinstance(node, And):
        positives = [c for c in node.children if not isinstance(c, Not)]
        negatives = [c for c in node.children if isinstance(c, Not)]
        result = _eval(positives[0], index)
        for child in positives[1:]:
            result &= _eval(child, index)
        for neg in negatives:
            result -= _eval(neg.child, index)
        return result
    if isinstance(node, Or):
        result: set[int] = set()
        for child in node.children:
            result |= _eval(child, index)
        return result
    if isinstance(node, Not):
        raise PureNegation("negation outside an AND context")
    raise TypeError(node)


def _eval_phrase(tokens: tuple[str, ...], index: InvertedIndex) -> set[int]:
    if len(tokens) == 1:
        return set(index.docs_for_token(tokens[0]))
    per_token: list[dict[int, tuple[int, ...]]] = []
    for tok in tokens:
        plist = index.postings.get(tok)
        if not plist:
            return set()
        per_token.append(dict(plist))
    candidates = set(per_token[0])
    for d in per_token[1:]:
        candidates &= set(d)
    out: set[int] = set()
    for doc in candidates:
        starts = set(per_token[0][doc])
        for offset, d in enumerate(per_token[1:], start=1):
            starts = {p for p in starts if (p + offset) in d[doc]}
            if not starts:
                break
        if starts:
            out.add(doc)
    return out


def _positive_leaves(node: QueryAst, acc: list[QueryAst]) -> None:
    """Collect leaf predicates not under any Not, for match-count ordering."""
    if isinstance(node, (Term, Phrase, Prefix)):
        acc.append(node)
    elif isinstance(node, (And, Or)):
        for c in node.children:
            _positive_leaves(c, acc)
    # Not subtrees contribute nothing


def execute_query(ast: QueryAst, index: InvertedIndex) -> list[str]:
    ast = normalize(ast)
    matched = _eval(ast, index)
    if not matched:
        return []
    leaves: list[QueryAst] = []
    _positive_leaves(ast, leaves)
    distinct = list(dict.fromkeys(leaves))
    counts = {doc: 0 for doc in matched}
    for leaf in distinct:
        for doc in _eval(leaf, index) & matched:
            counts[doc] += 1
    ordered = sorted(matched, key=lambda d: (-counts[d], d))
    return [index.doc_ids[d] for d in ordered]
