"""MiniLang frontend: a small imperative language for modeling
logging-heavy code.

Grammar (whitespace-insensitive, `//` line comments):

    unit      := { annot? method }
    annot     := "component" STRING
    method    := "void" IDENT "(" ")" block
    block     := "{" { stmt } "}"
    stmt      := log | invoke | assign | ifst | whilest | "return" ";"
    log       := "log" "(" LEVEL "," part { "+" part } ")" ";"
    part      := STRING | IDENT
    invoke    := IDENT "(" ")" ";"
    assign    := IDENT "=" STRING ";"
    ifst      := "if" "(" cond ")" block [ "else" block ]
    whilest   := "while" "(" cond ")" block
    cond      := "true" | "false" | [ "!" ] IDENT

LEVEL is one of info/warn/error.  STRING is double-quoted with `\\"` and
`\\\\` escapes.  IDENT is `[A-Za-z_][A-Za-z0-9_]*`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import LogsynthError

KEYWORDS = frozenset(
    {"void", "component", "log", "if", "else", "while", "return", "true", "false"}
)
LEVELS = ("info", "warn", "error")

_PUNCT = "{}();=+!,"


class ParseError(LogsynthError):
    """Syntax or structural error in a MiniLang source unit."""

    def __init__(self, line: int, column: int, message: str,
                 path: str | None = None):
        prefix = f"{path}:" if path else ""
        super().__init__(f"{prefix}{line}:{column}: {message}")
        self.line = line
        self.column = column
        self.message = message
        self.path = path


@dataclass(frozen=True)
class SourceUnit:
    path: str
    text: str

    def __post_init__(self):
        if not self.path:
            raise ValueError("SourceUnit.path must be non-empty")


# ── AST ──────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class StrLit:
    text: str


@dataclass(frozen=True)
class VarRef:
    name: str


@dataclass(frozen=True)
class Condition:
    """A branch guard: a boolean variable, its negation, or a literal.

    var=None encodes the literals: negated=False is `true`,
    negated=True is `false`.
    """

    var: str | None = None
    negated: bool = False


COND_TRUE = Condition(None, False)
COND_FALSE = Condition(None, True)


@dataclass(frozen=True)
class LogCall:
    level: str
    parts: tuple[StrLit | VarRef, ...]
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Invoke:
    target: str


@dataclass(frozen=True)
class Assign:
    var: str
    value: str


@dataclass(frozen=True)
class If:
    cond: Condition
    then: tuple["Statement", ...]
    orelse: tuple["Statement", ...] | None = None


@dataclass(frozen=True)
class While:
    cond: Condition
    body: tuple["Statement", ...]


@dataclass(frozen=True)
class Return:
    pass


Statement = LogCall | Invoke | Assign | If | While | Return


@dataclass(frozen=True)
class AstMethod:
    name: str
    body: tuple[Statement, ...]
    component: str | None = None


# ── Lexer ────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class Token:
    kind: str  # IDENT, KEYWORD, STRING, PUNCT, EOF
    text: str
    line: int
    column: int


def _tokenize(unit: SourceUnit) -> list[Token]:
    text = unit.text
    toks: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if c == "/" and i + 1 < n and text[i + 1] == "/":
            while i < n and text[i] != "\n":
                i += 1
            continue
        start_line, start_col = line, col
        if c == '"':
            i += 1
            col += 1
            out: list[str] = []
            while True:
                if i >= n or text[i] == "\n":
                    raise ParseError(start_line, start_col, "unterminated string literal")
                ch = text[i]
                if ch == "\\":
                    if i + 1 >= n:
                        raise ParseError(start_line, start_col, "unterminated string literal")
                    esc = text[i + 1]
                    if esc == '"':
                        out.append('"')
                    elif esc == "\\":
                        out.append("\\")
                    else:
                        raise ParseError(line, col, f"invalid escape '\\{esc}' in string")
                    i += 2
                    col += 2
                    continue
                if ch == '"':
                    i += 1
                    col += 1
                    break
                out.append(ch)
                i += 1
                col += 1
            toks.append(Token("STRING", "".join(out), start_line, start_col))
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            kind = "KEYWORD" if word in KEYWORDS else "IDENT"
            toks.append(Token(kind, word, start_line, start_col))
            col += j - i
            i = j
            continue
        if c in _PUNCT:
            toks.append(Token("PUNCT", c, start_line, start_col))
            i += 1
            col += 1
            continue
        raise ParseError(line, col, f"unexpected character {c!r}")
    toks.append(Token("EOF", "", line, col))
    return toks


# ── Parser ───────────────────────────────────────────────────────────

class _Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.pos = 0

    def _cur(self) -> Token:
        return self.toks[self.pos]

    def _advance(self) -> Token:
        tok = self.toks[self.pos]
        if tok.kind != "EOF":
            self.pos += 1
        return tok

    def _error(self, message: str) -> ParseError:
        tok = self._cur()
        return ParseError(tok.line, tok.column, message)

    def _expect_punct(self, ch: str) -> Token:
        tok = self._cur()
        if tok.kind != "PUNCT" or tok.text != ch:
            raise self._error(f"expected '{ch}', found {tok.text or 'end of file'!r}")
        return self._advance()

    def _expect_keyword(self, word: str) -> Token:
        tok = self._cur()
        if tok.kind != "KEYWORD" or tok.text != word:
            raise self._error(f"expected '{word}', found {tok.text or 'end of file'!r}")
        return self._advance()

    def _expect_ident(self, what: str = "identifier") -> Token:
        tok = self._cur()
        if tok.kind != "IDENT":
            raise self._error(f"expected {what}, found {tok.text or 'end of file'!r}")
        return self._advance()

    def _at_punct(self, ch: str) -> bool:
        tok = self._cur()
        return tok.kind == "PUNCT" and tok.text == ch

    def _at_keyword(self, word: str) -> bool:
        tok = self._cur()
        return tok.kind == "KEYWORD" and tok.text == word

    # unit := { annot? method }
    def parse_unit(self) -> list[AstMethod]:
        methods: list[AstMethod] = []
        seen: dict[str, int] = {}
        while self._cur().kind != "EOF":
            component = None
            if self._at_keyword("component"):
                self._advance()
                tok = self._cur()
                if tok.kind != "STRING":
                    raise self._error("expected component name string")
                component = tok.text
                self._advance()
            name_tok = self._cur()
            method = self._parse_method(component)
            if method.name in seen:
                raise ParseError(
                    name_tok.line, name_tok.column,
                    f"duplicate method name '{method.name}'",
                )
            seen[method.name] = 1
            methods.append(method)
        return methods

    # method := "void" IDENT "(" ")" block
    def _parse_method(self, component: str | None) -> AstMethod:
        self._expect_keyword("void")
        name = self._expect_ident("method name").text
        self._expect_punct("(")
        self._expect_punct(")")
        body = self._parse_block()
        return AstMethod(name, body, component)

    def _parse_block(self) -> tuple[Statement, ...]:
        self._expect_punct("{")
        stmts: list[Statement] = []
        while not self._at_punct("}"):
            if self._cur().kind == "EOF":
                raise self._error("expected '}', found end of file")
            stmts.append(self._parse_statement())
        self._advance()
        return tuple(stmts)

    def _parse_statement(self) -> Statement:
        if self._at_keyword("log"):
            return self._parse_log()
        if self._at_keyword("if"):
            return self._parse_if()
        if self._at_keyword("while"):
            return self._parse_while()
        if self._at_keyword("return"):
            self._advance()
            self._expect_punct(";")
            return Return()
        tok = self._cur()
        if tok.kind != "IDENT":
            raise self._error(f"expected statement, found {tok.text or 'end of file'!r}")
        self._advance()
        if self._at_punct("("):
            self._advance()
            self._expect_punct(")")
            self._expect_punct(";")
            return Invoke(tok.text)
        if self._at_punct("="):
            self._advance()
            val = self._cur()
            if val.kind != "STRING":
                raise self._error("expected string literal on right-hand side")
            self._advance()
            self._expect_punct(";")
            return Assign(tok.text, val.text)
        raise self._error("expected '(' or '=' after identifier")

    # log := "log" "(" LEVEL "," part { "+" part } ")" ";"
    def _parse_log(self) -> LogCall:
        kw = self._expect_keyword("log")
        self._expect_punct("(")
        level_tok = self._cur()
        if level_tok.kind != "IDENT" or level_tok.text not in LEVELS:
            raise self._error("expected log level (info, warn, or error)")
        self._advance()
        self._expect_punct(",")
        parts: list[StrLit | VarRef] = [self._parse_part()]
        while self._at_punct("+"):
            self._advance()
            parts.append(self._parse_part())
        self._expect_punct(")")
        self._expect_punct(";")
        return LogCall(level_tok.text, tuple(parts), line=kw.line)

    def _parse_part(self) -> StrLit | VarRef:
        tok = self._cur()
        if tok.kind == "STRING":
            self._advance()
            return StrLit(tok.text)
        if tok.kind == "IDENT":
            self._advance()
            return VarRef(tok.text)
        raise self._error("expected string literal or variable in log message")

    def _parse_if(self) -> If:
        self._expect_keyword("if")
        self._expect_punct("(")
        cond = self._parse_cond()
        self._expect_punct(")")
        then = self._parse_block()
        orelse = None
        if self._at_keyword("else"):
            self._advance()
            orelse = self._parse_block()
        return If(cond, then, orelse)

    def _parse_while(self) -> While:
        self._expect_keyword("while")
        self._expect_punct("(")
        cond = self._parse_cond()
        self._expect_punct(")")
        body = self._parse_block()
        return While(cond, body)

    # cond := "true" | "false" | [ "!" ] IDENT
    def _parse_cond(self) -> Condition:
        if self._at_keyword("true"):
            self._advance()
            return COND_TRUE
        if self._at_keyword("false"):
            self._advance()
            return COND_FALSE
        negated = False
        if self._at_punct("!"):
            self._advance()
            negated = True
        name = self._expect_ident("condition variable").text
        return Condition(name, negated)


def parse_unit(source: SourceUnit) -> list[AstMethod]:
    """Parse one source unit into its method declarations, in order.

    Raises ParseError at the first syntax error; duplicate method names
    are also a ParseError.
    """
    return _Parser(_tokenize(source)).parse_unit()


def parse_units(sources: list[SourceUnit]) -> list[AstMethod]:
    """Parse several units; method names must be unique across all of them.
    Errors carry the offending unit's path."""
    methods: list[AstMethod] = []
    seen: dict[str, str] = {}
    for src in sources:
        try:
            parsed = parse_unit(src)
        except ParseError as exc:
            raise ParseError(exc.line, exc.column, exc.message,
                             path=src.path) from None
        for m in parsed:
            if m.name in seen:
                raise ParseError(
                    1, 1, f"duplicate method name '{m.name}' "
                    f"(already declared in {seen[m.name]})", path=src.path,
                )
            seen[m.name] = src.path
            methods.append(m)
    return methods


# ── Pretty printer (round-trip support) ──────────────────────────────

def _escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def _fmt_cond(cond: Condition) -> str:
    if cond.var is None:
        return "false" if cond.negated else "true"
    return ("!" if cond.negated else "") + cond.var


def _fmt_stmt(stmt: Statement, indent: int, out: list[str]) -> None:
    pad = "    " * indent
    if isinstance(stmt, LogCall):
        parts = " + ".join(
            f'"{_escape(p.text)}"' if isinstance(p, StrLit) else p.name
            for p in stmt.parts
        )
        out.append(f"{pad}log({stmt.level}, {parts});")
    elif isinstance(stmt, Invoke):
        out.append(f"{pad}{stmt.target}();")
    elif isinstance(stmt, Assign):
        out.append(f'{pad}{stmt.var} = "{_escape(stmt.value)}";')
    elif isinstance(stmt, If):
        out.append(f"{pad}if ({_fmt_cond(stmt.cond)}) {{")
        for s in stmt.then:
            _fmt_stmt(s, indent + 1, out)
        if stmt.orelse is None:
            out.append(f"{pad}}}")
        else:
            out.append(f"{pad}}} else {{")
            for s in stmt.orelse:
                _fmt_stmt(s, indent + 1, out)
            out.append(f"{pad}}}")
    elif isinstance(stmt, While):
        out.append(f"{pad}while ({_fmt_cond(stmt.cond)}) {{")
        for s in stmt.body:
            _fmt_stmt(s, indent + 1, out)
        out.append(f"{pad}}}")
    elif isinstance(stmt, Return):
        out.append(f"{pad}return;")
    else:  # pragma: no cover
        raise TypeError(f"unknown statement {stmt!r}")


def pretty_print(methods: list[AstMethod]) -> str:
    """Render methods back to parseable MiniLang source."""
    out: list[str] = []
    for m in methods:
        if m.component is not None:
            out.append(f'component "{_escape(m.component)}"')
        out.append(f"void {m.name}() {{")
        for s in m.body:
            _fmt_stmt(s, 1, out)
        out.append("}")
        out.append("")
    return "\n".join(out)
