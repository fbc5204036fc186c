//! Text syntax: a shared lexer and parsers/printers for schemas,
//! mappings, instances, merge rules, and problem configuration files.
//!
//! Identifiers with spaces or punctuation are double-quoted
//! (`"MASP Calc. Step 1"`); string literals are single-quoted; `x.f` is
//! sugar for `f(x)`.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::eqlogic::{quote_ident, Context, Equation, FuncSymbol, SortKind, Term, Theory};
use crate::instance::{Bounds, Instance};
use crate::integrate::HornRule;
use crate::literal::Literal;
use crate::schema::{Schema, SchemaMapping};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("syntax error at line {line}: {msg}")]
pub struct SyntaxError {
    pub line: usize,
    pub msg: String,
}

fn err<T>(line: usize, msg: impl Into<String>) -> Result<T, SyntaxError> {
    Err(SyntaxError { line, msg: msg.into() })
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Num(String),
    Arrow,
    Sym(char),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    start: usize,
    end: usize,
}

fn lex(text: &str) -> Result<Vec<Token>, SyntaxError> {
    let bytes: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line = 1;
    while i < bytes.len() {
        let c = bytes[i];
        if c == '\n' {
            line += 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '#' {
            while i < bytes.len() && bytes[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        if c == '"' || c == '\'' {
            let quote = c;
            i += 1;
            let mut s = String::new();
            loop {
                if i >= bytes.len() {
                    return err(line, "unterminated quote");
                }
                if bytes[i] == '\\' && i + 1 < bytes.len() {
                    s.push(bytes[i + 1]);
                    i += 2;
                    continue;
                }
                if bytes[i] == quote {
                    i += 1;
                    break;
                }
                if bytes[i] == '\n' {
                    line += 1;
                }
                s.push(bytes[i]);
                i += 1;
            }
            let tok = if quote == '"' { Tok::Ident(s) } else { Tok::Str(s) };
            out.push(Token { tok, line, start, end: i });
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && i + 1 < bytes.len() && bytes[i + 1].is_ascii_digit())
        {
            let mut s = String::new();
            let mut seen_dot = c == '.';
            s.push(c);
            i += 1;
            while i < bytes.len()
                && (bytes[i].is_ascii_digit() || (bytes[i] == '.' && !seen_dot))
            {
                // A dot only joins the number when digits follow; `1.f`
                // stays `1` `.` `f`.
                if bytes[i] == '.' {
                    if i + 1 >= bytes.len() || !bytes[i + 1].is_ascii_digit() {
                        break;
                    }
                    seen_dot = true;
                }
                s.push(bytes[i]);
                i += 1;
            }
            out.push(Token { tok: Tok::Num(s), line, start, end: i });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let mut s = String::new();
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == '_') {
                s.push(bytes[i]);
                i += 1;
            }
            out.push(Token { tok: Tok::Ident(s), line, start, end: i });
            continue;
        }
        if c == '-' && i + 1 < bytes.len() && bytes[i + 1] == '>' {
            out.push(Token { tok: Tok::Arrow, line, start, end: i + 2 });
            i += 2;
            continue;
        }
        if "(){},;:.=*+-&[]|".contains(c) {
            out.push(Token { tok: Tok::Sym(c), line, start, end: i + 1 });
            i += 1;
            continue;
        }
        return err(line, format!("unexpected character {c:?}"));
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    /// When set, `[Col]` / `[FK.Col]` references are allowed in terms and
    /// denote applications to the row variable `x` of this entity sort.
    row_sort: Option<String>,
}

impl Parser {
    fn new(text: &str) -> Result<Self, SyntaxError> {
        Ok(Parser { toks: lex(text)?, pos: 0, row_sort: None })
    }

    fn line(&self) -> usize {
        self.toks.get(self.pos).map(|t| t.line).unwrap_or_else(|| {
            self.toks.last().map(|t| t.line).unwrap_or(1)
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek2(&self) -> Option<&Tok> {
        self.toks.get(self.pos + 1).map(|t| &t.tok)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|t| t.tok.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn eat_sym(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, c: char) -> Result<(), SyntaxError> {
        if self.eat_sym(c) {
            Ok(())
        } else {
            err(self.line(), format!("expected {c:?}, found {:?}", self.peek()))
        }
    }

    fn eat_arrow(&mut self) -> bool {
        if self.peek() == Some(&Tok::Arrow) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_arrow(&mut self) -> Result<(), SyntaxError> {
        if self.eat_arrow() {
            Ok(())
        } else {
            err(self.line(), format!("expected \"->\", found {:?}", self.peek()))
        }
    }

    fn expect_ident(&mut self) -> Result<String, SyntaxError> {
        match self.next() {
            Some(Tok::Ident(s)) => Ok(s),
            other => err(self.line(), format!("expected identifier, found {other:?}")),
        }
    }

    /// Consume the keyword `kw` (an unquoted identifier).
    fn eat_kw(&mut self, kw: &str) -> bool {
        if let Some(Tok::Ident(s)) = self.peek() {
            if s == kw {
                self.pos += 1;
                return true;
            }
        }
        false
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), SyntaxError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            err(self.line(), format!("expected keyword {kw}, found {:?}", self.peek()))
        }
    }

    // ---- terms ---------------------------------------------------------

    /// Parse a term; bare names become constants, later re-bound to
    /// variables by `bind_vars`.
    fn term(&mut self) -> Result<Term, SyntaxError> {
        let mut t = self.term_mul()?;
        loop {
            if self.eat_sym('+') {
                let r = self.term_mul()?;
                t = Term::app("+", vec![t, r]);
            } else if self.peek() == Some(&Tok::Sym('-')) {
                self.pos += 1;
                let r = self.term_mul()?;
                t = Term::app("-", vec![t, r]);
            } else {
                return Ok(t);
            }
        }
    }

    fn term_mul(&mut self) -> Result<Term, SyntaxError> {
        let mut t = self.term_postfix()?;
        while self.eat_sym('*') {
            let r = self.term_postfix()?;
            t = Term::app("*", vec![t, r]);
        }
        Ok(t)
    }

    fn term_postfix(&mut self) -> Result<Term, SyntaxError> {
        let mut t = self.term_primary()?;
        while self.peek() == Some(&Tok::Sym('.')) {
            // `x.f` is `f(x)`.
            self.pos += 1;
            let f = self.expect_ident()?;
            t = Term::app(&f, vec![t]);
        }
        Ok(t)
    }

    fn term_primary(&mut self) -> Result<Term, SyntaxError> {
        let line = self.line();
        match self.next() {
            Some(Tok::Num(n)) => match n.parse() {
                Ok(d) => Ok(Term::Lit(Literal::Num(d))),
                Err(_) => err(line, format!("bad number {n}")),
            },
            Some(Tok::Str(s)) => Ok(Term::Lit(Literal::Str(s))),
            Some(Tok::Sym('-')) => {
                let t = self.term_postfix()?;
                match t {
                    Term::Lit(Literal::Num(d)) => Ok(Term::Lit(Literal::Num(d.neg()))),
                    other => Ok(Term::app("-", vec![Term::num("0"), other])),
                }
            }
            Some(Tok::Sym('(')) => {
                let t = self.term()?;
                self.expect_sym(')')?;
                Ok(t)
            }
            Some(Tok::Sym('[')) => {
                let Some(sort) = self.row_sort.clone() else {
                    return err(line, "[...] references are only allowed in cell formulas");
                };
                let mut names = Vec::new();
                loop {
                    names.push(self.expect_ident()?);
                    if self.eat_sym(']') {
                        break;
                    }
                    self.expect_sym('.')?;
                }
                // `[id]` is the row itself.
                let mut t = Term::var("x", &sort);
                if names == ["id"] {
                    return Ok(t);
                }
                for n in names {
                    t = Term::app(&n, vec![t]);
                }
                Ok(t)
            }
            Some(Tok::Ident(name)) => {
                if name == "true" {
                    return Ok(Term::Lit(Literal::Bool(true)));
                }
                if name == "false" {
                    return Ok(Term::Lit(Literal::Bool(false)));
                }
                if self.eat_sym('(') {
                    let mut args = Vec::new();
                    if !self.eat_sym(')') {
                        loop {
                            args.push(self.term()?);
                            if self.eat_sym(')') {
                                break;
                            }
                            self.expect_sym(',')?;
                        }
                    }
                    Ok(Term::App(name, args))
                } else {
                    Ok(Term::constant(&name))
                }
            }
            other => err(line, format!("expected a term, found {other:?}")),
        }
    }

    /// `x : S, y : T` up to (and consuming) the closing `.`.
    fn bindings(&mut self) -> Result<Context, SyntaxError> {
        let mut vars = Vec::new();
        loop {
            let v = self.expect_ident()?;
            self.expect_sym(':')?;
            let s = self.expect_ident()?;
            vars.push((v, s));
            if self.eat_sym(',') {
                continue;
            }
            self.expect_sym('.')?;
            break;
        }
        Context::new(vars).map_err(|e| SyntaxError { line: self.line(), msg: e.to_string() })
    }
}

/// Rebind constants that name context variables.
pub fn bind_vars(t: &Term, ctx: &Context) -> Term {
    match t {
        Term::App(f, args) if args.is_empty() => match ctx.sort_of(f) {
            Some(s) => Term::var(f, s),
            None => t.clone(),
        },
        Term::App(f, args) => {
            Term::App(f.clone(), args.iter().map(|a| bind_vars(a, ctx)).collect())
        }
        _ => t.clone(),
    }
}

fn typed_equation(
    th: &Theory,
    ctx: Context,
    lhs: Term,
    rhs: Term,
    line: usize,
) -> Result<Equation, SyntaxError> {
    let lhs = bind_vars(&lhs, &ctx);
    let rhs = bind_vars(&rhs, &ctx);
    let sort = th
        .typecheck(&ctx, &lhs)
        .map_err(|e| SyntaxError { line, msg: e.to_string() })?;
    let rsort = th
        .typecheck(&ctx, &rhs)
        .map_err(|e| SyntaxError { line, msg: e.to_string() })?;
    if sort != rsort {
        return err(line, format!("equation sides have sorts {sort} and {rsort}"));
    }
    Ok(Equation { ctx, lhs, rhs, sort })
}

// ---- schemas -----------------------------------------------------------

/// Parse `schema S = { entities ...; foreign_keys ...; attributes ...;
/// equations ...; }` over the given type side.
pub fn parse_schema(text: &str, typeside: &Theory) -> Result<Schema, SyntaxError> {
    let mut p = Parser::new(text)?;
    p.expect_kw("schema")?;
    let name = p.expect_ident()?;
    p.expect_sym('=')?;
    p.expect_sym('{')?;
    let mut schema = Schema::new(&name, typeside.clone());
    // (ctx, lhs, rhs, line) resolved once all symbols are declared
    let mut raw_eqs = Vec::new();
    while !p.eat_sym('}') {
        if p.eat_kw("entities") {
            loop {
                let e = p.expect_ident()?;
                schema.add_entity(&e);
                if p.eat_sym(',') {
                    continue;
                }
                p.expect_sym(';')?;
                break;
            }
        } else if p.eat_kw("foreign_keys") || p.eat_kw("attributes") {
            loop {
                let f = p.expect_ident()?;
                p.expect_sym(':')?;
                let src = p.expect_ident()?;
                p.expect_arrow()?;
                let dst = p.expect_ident()?;
                if schema.has_entity(&dst) {
                    schema.add_fk(&f, &src, &dst);
                } else {
                    schema.add_attr(&f, &src, &dst);
                }
                if p.eat_sym(',') {
                    continue;
                }
                p.expect_sym(';')?;
                break;
            }
        } else if p.eat_kw("equations") {
            if p.eat_sym(';') {
                continue;
            }
            loop {
                let line = p.line();
                p.expect_kw("forall")?;
                let ctx = p.bindings()?;
                let lhs = p.term()?;
                p.expect_sym('=')?;
                let rhs = p.term()?;
                raw_eqs.push((ctx, lhs, rhs, line));
                if p.eat_sym(',') {
                    continue;
                }
                p.expect_sym(';')?;
                break;
            }
        } else {
            return err(p.line(), format!("unexpected token {:?} in schema body", p.peek()));
        }
    }
    let th = schema.theory();
    for (ctx, lhs, rhs, line) in raw_eqs {
        schema.constraints.push(typed_equation(&th, ctx, lhs, rhs, line)?);
    }
    Ok(schema)
}

pub fn print_schema(s: &Schema) -> String {
    let mut out = format!("schema {} = {{\n", quote_ident(&s.name));
    if !s.entities.is_empty() {
        let list: Vec<String> = s.entities.iter().map(|e| quote_ident(e)).collect();
        out.push_str(&format!("  entities {};\n", list.join(", ")));
    }
    if !s.fks.is_empty() {
        let list: Vec<String> = s
            .fks
            .iter()
            .map(|(f, (a, b))| format!("{} : {} -> {}", quote_ident(f), quote_ident(a), quote_ident(b)))
            .collect();
        out.push_str(&format!("  foreign_keys\n    {};\n", list.join(",\n    ")));
    }
    if !s.attrs.is_empty() {
        let list: Vec<String> = s
            .attrs
            .iter()
            .map(|(f, (a, b))| format!("{} : {} -> {}", quote_ident(f), quote_ident(a), quote_ident(b)))
            .collect();
        out.push_str(&format!("  attributes\n    {};\n", list.join(",\n    ")));
    }
    if !s.constraints.is_empty() {
        let list: Vec<String> = s
            .constraints
            .iter()
            .map(|eq| {
                let ctx: Vec<String> = eq
                    .ctx
                    .vars()
                    .iter()
                    .map(|(v, s)| format!("{} : {}", quote_ident(v), quote_ident(s)))
                    .collect();
                format!("forall {} . {} = {}", ctx.join(", "), eq.lhs, eq.rhs)
            })
            .collect();
        out.push_str(&format!("  equations\n    {};\n", list.join(",\n    ")));
    }
    out.push_str("}\n");
    out
}

// ---- mappings ----------------------------------------------------------

/// Parse `mapping F : S -> T = { Entity -> Entity; sym -> lambda x, term; }`.
pub fn parse_mapping(
    text: &str,
    src: &Schema,
    tgt: &Schema,
) -> Result<SchemaMapping, SyntaxError> {
    let mut p = Parser::new(text)?;
    p.expect_kw("mapping")?;
    let name = p.expect_ident()?;
    p.expect_sym(':')?;
    let sname = p.expect_ident()?;
    p.expect_arrow()?;
    let tname = p.expect_ident()?;
    p.expect_sym('=')?;
    p.expect_sym('{')?;
    if sname != src.name || tname != tgt.name {
        return err(p.line(), format!("mapping {name} declares {sname} -> {tname}"));
    }
    let mut m = SchemaMapping {
        name,
        source: sname,
        target: tname,
        ..Default::default()
    };
    // Collect symbol entries first; lambda sorts need the entity map.
    let mut raw_syms: Vec<(String, String, Term, usize)> = Vec::new();
    while !p.eat_sym('}') {
        let lhs = p.expect_ident()?;
        p.expect_arrow()?;
        if src.has_entity(&lhs) {
            let rhs = p.expect_ident()?;
            m.entity_map.insert(lhs, rhs);
        } else {
            let line = p.line();
            p.expect_kw("lambda")?;
            let var = p.expect_ident()?;
            p.expect_sym(',')?;
            let body = p.term()?;
            raw_syms.push((lhs, var, body, line));
        }
        p.expect_sym(';')?;
    }
    for (sym, var, body, line) in raw_syms {
        let Some((dom, _)) = src.symbols().find(|(n, _)| **n == sym).map(|(_, d)| d) else {
            return err(line, format!("{sym} is not a symbol of {}", src.name));
        };
        let Some(fdom) = m.entity_map.get(dom) else {
            return err(line, format!("entity {dom} not mapped before symbol {sym}"));
        };
        if !tgt.has_entity(fdom) {
            return err(line, format!("{fdom} is not an entity of {}", tgt.name));
        }
        let ctx = Context::single(&var, fdom);
        m.symbol_map.insert(sym, (var, bind_vars(&body, &ctx)));
    }
    Ok(m)
}

pub fn print_mapping(m: &SchemaMapping) -> String {
    let mut out = format!(
        "mapping {} : {} -> {} = {{\n",
        quote_ident(&m.name),
        quote_ident(&m.source),
        quote_ident(&m.target)
    );
    for (e, fe) in &m.entity_map {
        out.push_str(&format!("  {} -> {};\n", quote_ident(e), quote_ident(fe)));
    }
    for (f, (var, body)) in &m.symbol_map {
        out.push_str(&format!(
            "  {} -> lambda {}, {};\n",
            quote_ident(f),
            quote_ident(var),
            body
        ));
    }
    out.push_str("}\n");
    out
}

// ---- instances ---------------------------------------------------------

/// Parse `instance I : S = { generators g1 g2 : E, x : Float; equations
/// t = t, ...; }`.
pub fn parse_instance(text: &str, schema: &Schema) -> Result<Instance, SyntaxError> {
    let mut p = Parser::new(text)?;
    p.expect_kw("instance")?;
    let name = p.expect_ident()?;
    p.expect_sym(':')?;
    let sname = p.expect_ident()?;
    p.expect_sym('=')?;
    p.expect_sym('{')?;
    if sname != schema.name {
        return err(p.line(), format!("instance {name} declares schema {sname}"));
    }
    let mut inst = Instance::new(&name, schema.clone());
    while !p.eat_sym('}') {
        if p.eat_kw("generators") {
            if p.eat_sym(';') {
                continue;
            }
            loop {
                let mut names = Vec::new();
                while let Some(Tok::Ident(_)) = p.peek() {
                    names.push(p.expect_ident()?);
                    if p.peek() == Some(&Tok::Sym(':')) {
                        break;
                    }
                }
                let line = p.line();
                p.expect_sym(':')?;
                let sort = p.expect_ident()?;
                if names.is_empty() {
                    return err(line, "generator group without names");
                }
                for n in names {
                    inst.add_generator(&n, &sort)
                        .map_err(|e| SyntaxError { line, msg: e.to_string() })?;
                }
                if p.eat_sym(',') {
                    continue;
                }
                p.expect_sym(';')?;
                break;
            }
        } else if p.eat_kw("equations") {
            if p.eat_sym(';') {
                continue;
            }
            loop {
                let line = p.line();
                let lhs = p.term()?;
                p.expect_sym('=')?;
                let rhs = p.term()?;
                inst.add_equation(lhs, rhs)
                    .map_err(|e| SyntaxError { line, msg: e.to_string() })?;
                if p.eat_sym(',') {
                    continue;
                }
                p.expect_sym(';')?;
                break;
            }
        } else {
            return err(p.line(), format!("unexpected token {:?} in instance body", p.peek()));
        }
    }
    Ok(inst)
}

pub fn print_instance(i: &Instance) -> String {
    let mut out = format!(
        "instance {} : {} = {{\n",
        quote_ident(&i.name),
        quote_ident(&i.schema.name)
    );
    if !i.generators.is_empty() {
        // Group generators by sort, in sort order.
        let mut by_sort: BTreeMap<&String, Vec<&String>> = BTreeMap::new();
        for (g, s) in &i.generators {
            by_sort.entry(s).or_default().push(g);
        }
        let groups: Vec<String> = by_sort
            .iter()
            .map(|(s, gs)| {
                let names: Vec<String> = gs.iter().map(|g| quote_ident(g)).collect();
                format!("{} : {}", names.join(" "), quote_ident(s))
            })
            .collect();
        out.push_str(&format!("  generators\n    {};\n", groups.join(",\n    ")));
    }
    if !i.equations.is_empty() {
        let eqs: Vec<String> =
            i.equations.iter().map(|(l, r)| format!("{l} = {r}")).collect();
        out.push_str(&format!("  equations\n    {};\n", eqs.join(",\n    ")));
    }
    out.push_str("}\n");
    out
}

// ---- merge rules -------------------------------------------------------

/// Parse a `rules { ... }` block (or a bare rule list) over a schema:
/// `name : forall x : E, y : E2 . p = q & r = s -> x = y;`
pub fn parse_rules(text: &str, schema: &Schema) -> Result<Vec<HornRule>, SyntaxError> {
    let mut p = Parser::new(text)?;
    let braced = p.eat_kw("rules");
    if braced {
        p.expect_sym('{')?;
    }
    let th = schema.theory();
    let mut out = Vec::new();
    loop {
        if braced && p.eat_sym('}') {
            break;
        }
        if p.at_end() {
            if braced {
                return err(p.line(), "missing closing brace in rules block");
            }
            break;
        }
        let mut name = format!("rule{}", out.len() + 1);
        if let (Some(Tok::Ident(n)), Some(Tok::Sym(':'))) = (p.peek(), p.peek2()) {
            if n != "forall" {
                name = n.clone();
                p.pos += 2;
            }
        }
        let line = p.line();
        p.expect_kw("forall")?;
        let ctx = p.bindings()?;
        let mut premises = Vec::new();
        let conclusion;
        loop {
            let lhs = bind_vars(&p.term()?, &ctx);
            p.expect_sym('=')?;
            let rhs = bind_vars(&p.term()?, &ctx);
            for t in [&lhs, &rhs] {
                th.typecheck(&ctx, t)
                    .map_err(|e| SyntaxError { line, msg: e.to_string() })?;
            }
            if p.eat_sym('&') {
                premises.push((lhs, rhs));
                continue;
            }
            if p.eat_arrow() {
                premises.push((lhs, rhs));
                let clhs = bind_vars(&p.term()?, &ctx);
                p.expect_sym('=')?;
                let crhs = bind_vars(&p.term()?, &ctx);
                conclusion = (clhs, crhs);
                break;
            }
            return err(p.line(), "expected & or -> in rule");
        }
        p.expect_sym(';')?;
        out.push(HornRule { name, ctx, premises, conclusion });
    }
    Ok(out)
}

// ---- ground equation blocks ---------------------------------------------

/// Parse `extra_equations { t = t; ... }` (or a bare list) against a
/// theory that already contains the relevant generator constants.
pub fn parse_ground_equations(
    text: &str,
    th: &Theory,
) -> Result<Vec<(Term, Term)>, SyntaxError> {
    let mut p = Parser::new(text)?;
    let braced = p.eat_kw("extra_equations");
    if braced {
        p.expect_sym('{')?;
    }
    let mut out = Vec::new();
    loop {
        if braced && p.eat_sym('}') {
            break;
        }
        if p.at_end() {
            if braced {
                return err(p.line(), "missing closing brace");
            }
            break;
        }
        let line = p.line();
        let lhs = p.term()?;
        p.expect_sym('=')?;
        let rhs = p.term()?;
        for t in [&lhs, &rhs] {
            th.typecheck(&Context::empty(), t)
                .map_err(|e| SyntaxError { line, msg: e.to_string() })?;
        }
        out.push((lhs, rhs));
        p.expect_sym(';')?;
    }
    Ok(out)
}

// ---- theories ------------------------------------------------------------

/// Parse a bare theory: `theory T = { sorts S, entity E; symbols
/// f : S1 * S2 -> S; equations forall ... ; }`. Entity sorts are marked
/// with the keyword `entity` before the name.
pub fn parse_theory(text: &str) -> Result<Theory, SyntaxError> {
    let mut p = Parser::new(text)?;
    p.expect_kw("theory")?;
    let name = p.expect_ident()?;
    p.expect_sym('=')?;
    p.expect_sym('{')?;
    let mut th = Theory::new(&name);
    let mut raw_eqs = Vec::new();
    while !p.eat_sym('}') {
        if p.eat_kw("sorts") {
            loop {
                let kind = if p.eat_kw("entity") { SortKind::Entity } else { SortKind::Type };
                let line = p.line();
                let s = p.expect_ident()?;
                th.add_sort(&s, kind)
                    .map_err(|e| SyntaxError { line, msg: e.to_string() })?;
                if p.eat_sym(',') {
                    continue;
                }
                p.expect_sym(';')?;
                break;
            }
        } else if p.eat_kw("symbols") {
            loop {
                let line = p.line();
                let f = p.expect_ident()?;
                p.expect_sym(':')?;
                let mut args = Vec::new();
                if !p.eat_arrow() {
                    loop {
                        args.push(p.expect_ident()?);
                        if p.eat_sym('*') {
                            continue;
                        }
                        p.expect_arrow()?;
                        break;
                    }
                }
                let result = p.expect_ident()?;
                let refs: Vec<&str> = args.iter().map(String::as_str).collect();
                th.add_symbol(FuncSymbol::new(&f, &refs, &result))
                    .map_err(|e| SyntaxError { line, msg: e.to_string() })?;
                if p.eat_sym(',') {
                    continue;
                }
                p.expect_sym(';')?;
                break;
            }
        } else if p.eat_kw("equations") {
            loop {
                let line = p.line();
                let ctx = if p.eat_kw("forall") { p.bindings()? } else { Context::empty() };
                let lhs = p.term()?;
                p.expect_sym('=')?;
                let rhs = p.term()?;
                raw_eqs.push((ctx, lhs, rhs, line));
                if p.eat_sym(',') {
                    continue;
                }
                p.expect_sym(';')?;
                break;
            }
        } else {
            return err(p.line(), format!("unexpected token {:?} in theory body", p.peek()));
        }
    }
    for (ctx, lhs, rhs, line) in raw_eqs {
        let eq = typed_equation(&th, ctx, lhs, rhs, line)?;
        th.add_equation(eq)
            .map_err(|e| SyntaxError { line, msg: e.to_string() })?;
    }
    Ok(th)
}

// ---- problem configuration -----------------------------------------------

/// Parsed problem configuration: file references plus raw blocks that
/// can only be resolved once the schemas are loaded.
#[derive(Clone, Debug, Default)]
pub struct ProblemConfig {
    /// schema name -> file path
    pub schemas: Vec<(String, String)>,
    /// (mapping name, source, target, path)
    pub mappings: Vec<(String, String, String, String)>,
    /// (instance name, schema, path)
    pub instances: Vec<(String, String, String)>,
    /// (workbook name, path)
    pub workbooks: Vec<(String, String)>,
    pub rename: BTreeMap<String, String>,
    /// raw `rules { ... }` source, parsed against the colimit schema
    pub rules_src: Option<String>,
    /// raw `extra_equations { ... }` source
    pub extra_src: Option<String>,
    pub bounds: Bounds,
    pub vc_mode: String,
    pub waive_vcs: bool,
    pub with_strings: bool,
    pub output: Option<String>,
}

/// Slice out the source text of a braced block starting at the current
/// `{`, including the keyword that precedes it.
fn raw_block(p: &mut Parser, text: &str, kw_start: usize) -> Result<String, SyntaxError> {
    p.expect_sym('{')?;
    let mut depth = 1;
    while depth > 0 {
        match p.next() {
            Some(Tok::Sym('{')) => depth += 1,
            Some(Tok::Sym('}')) => depth -= 1,
            Some(_) => {}
            None => return err(p.line(), "unterminated block"),
        }
    }
    let end = p.toks[p.pos - 1].end;
    Ok(text[kw_start..end].to_string())
}

pub fn parse_config(text: &str) -> Result<ProblemConfig, SyntaxError> {
    let mut p = Parser::new(text)?;
    let mut cfg = ProblemConfig { vc_mode: "symbolic".into(), ..Default::default() };
    while !p.at_end() {
        let kw_start = p.toks[p.pos].start;
        let line = p.line();
        let kw = p.expect_ident()?;
        match kw.as_str() {
            "schema" => {
                let name = p.expect_ident()?;
                p.expect_sym('=')?;
                let path = expect_str(&mut p)?;
                cfg.schemas.push((name, path));
            }
            "mapping" => {
                let name = p.expect_ident()?;
                p.expect_sym(':')?;
                let src = p.expect_ident()?;
                p.expect_arrow()?;
                let tgt = p.expect_ident()?;
                p.expect_sym('=')?;
                let path = expect_str(&mut p)?;
                cfg.mappings.push((name, src, tgt, path));
            }
            "instance" => {
                let name = p.expect_ident()?;
                p.expect_sym(':')?;
                let schema = p.expect_ident()?;
                p.expect_sym('=')?;
                let path = expect_str(&mut p)?;
                cfg.instances.push((name, schema, path));
            }
            "workbook" => {
                let name = p.expect_ident()?;
                p.expect_sym('=')?;
                let path = expect_str(&mut p)?;
                cfg.workbooks.push((name, path));
            }
            "rename" => {
                p.expect_sym('{')?;
                while !p.eat_sym('}') {
                    let from = p.expect_ident()?;
                    p.expect_arrow()?;
                    let to = p.expect_ident()?;
                    p.expect_sym(';')?;
                    cfg.rename.insert(from, to);
                }
            }
            "rules" => cfg.rules_src = Some(raw_block(&mut p, text, kw_start)?),
            "extra_equations" => cfg.extra_src = Some(raw_block(&mut p, text, kw_start)?),
            "bounds" => {
                p.expect_sym('{')?;
                while !p.eat_sym('}') {
                    let key = p.expect_ident()?;
                    p.expect_sym('=')?;
                    let val = match p.next() {
                        Some(Tok::Num(n)) => n
                            .parse::<usize>()
                            .map_err(|_| SyntaxError { line, msg: format!("bad bound {n}") })?,
                        other => return err(line, format!("expected number, found {other:?}")),
                    };
                    match key.as_str() {
                        "max_rounds" => cfg.bounds.max_rounds = val,
                        "max_fresh" => cfg.bounds.max_fresh = val,
                        other => return err(line, format!("unknown bound {other}")),
                    }
                    p.expect_sym(';')?;
                }
            }
            "vc_mode" => {
                p.expect_sym('=')?;
                let mode = p.expect_ident()?;
                if mode != "symbolic" && mode != "model" {
                    return err(line, format!("vc_mode must be symbolic or model, got {mode}"));
                }
                cfg.vc_mode = mode;
            }
            "waive_vcs" => {
                p.expect_sym('=')?;
                cfg.waive_vcs = p.expect_ident()? == "true";
            }
            "with_strings" => {
                p.expect_sym('=')?;
                cfg.with_strings = p.expect_ident()? == "true";
            }
            "output" => {
                p.expect_sym('=')?;
                cfg.output = Some(expect_str(&mut p)?);
            }
            other => return err(line, format!("unknown config key {other}")),
        }
    }
    Ok(cfg)
}

// ---- cell formula helpers (workbook format) -------------------------------

/// Parse a single cell expression; `[...]` references denote lookups from
/// the row variable of `entity`.
pub(crate) fn parse_cell_expr(text: &str, entity: &str) -> Result<Term, SyntaxError> {
    let mut p = Parser::new(text)?;
    p.row_sort = Some(entity.to_string());
    let t = p.term()?;
    if !p.at_end() {
        return err(p.line(), format!("trailing input after formula: {:?}", p.peek()));
    }
    Ok(t)
}

/// Parse `(lhs = rhs)` or `lhs = rhs` as a ground equation cell.
pub(crate) fn parse_eq_pair(text: &str) -> Result<(Term, Term), SyntaxError> {
    let mut p = Parser::new(text)?;
    let wrapped = p.eat_sym('(');
    let lhs = p.term()?;
    p.expect_sym('=')?;
    let rhs = p.term()?;
    if wrapped {
        p.expect_sym(')')?;
    }
    if !p.at_end() {
        return err(p.line(), "trailing input after equation");
    }
    Ok((lhs, rhs))
}

/// Parse `lhs = rhs` with `[...]` row references over `entity`.
pub(crate) fn parse_witness_expr(
    text: &str,
    entity: &str,
) -> Result<(Term, Term), SyntaxError> {
    let mut p = Parser::new(text)?;
    p.row_sort = Some(entity.to_string());
    let lhs = p.term()?;
    p.expect_sym('=')?;
    let rhs = p.term()?;
    if !p.at_end() {
        return err(p.line(), "trailing input after witness equation");
    }
    Ok((lhs, rhs))
}

fn expect_str(p: &mut Parser) -> Result<String, SyntaxError> {
    match p.next() {
        Some(Tok::Str(s)) | Some(Tok::Ident(s)) => Ok(s),
        other => err(p.line(), format!("expected quoted path, found {other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::typeside::{excel_typeside, FLOAT};

    fn ts() -> Theory {
        excel_typeside(false)
    }

    #[test]
    fn parse_schema_with_quoted_names() {
        let src = r#"
schema A = {
  entities "Header Info", "Casing Section";
  foreign_keys casing : "Header Info" -> "Casing Section";
  attributes "Water Depth" : "Header Info" -> Float,
             "RKB Height" : "Header Info" -> Float,
             "RKB-ML" : "Header Info" -> Float;
  equations
    forall x : "Header Info" . "RKB-ML"(x) = "Water Depth"(x) + "RKB Height"(x);
}
"#;
        let s = parse_schema(src, &ts()).unwrap();
        assert_eq!(s.entities.len(), 2);
        assert!(s.fks.contains_key("casing"));
        assert_eq!(s.attrs.len(), 3);
        assert_eq!(s.constraints.len(), 1);
        assert!(s.validate().is_empty());
    }

    #[test]
    fn dot_sugar_and_decimals() {
        let src = r#"
schema B = {
  entities K;
  attributes tvd : K -> Float, ch : K -> Float;
  equations forall x : K . ch(x) = 0.052 * x.tvd;
}
"#;
        let s = parse_schema(src, &ts()).unwrap();
        let eq = &s.constraints[0];
        assert_eq!(
            eq.rhs,
            Term::app(
                "*",
                vec![Term::num("0.052"), Term::app("tvd", vec![Term::var("x", "K")])]
            )
        );
    }

    #[test]
    fn schema_roundtrips_through_printer() {
        let src = r#"
schema A = {
  entities E, F;
  foreign_keys f : E -> F;
  attributes v : E -> Float, w : F -> Float;
  equations forall x : E . v(x) = w(f(x)) * 2;
}
"#;
        let s = parse_schema(src, &ts()).unwrap();
        let printed = print_schema(&s);
        let s2 = parse_schema(&printed, &ts()).unwrap();
        assert_eq!(print_schema(&s2), printed);
        assert_eq!(s2.constraints, s.constraints);
    }

    #[test]
    fn parse_mapping_with_lambda() {
        let srca = r#"
schema O = {
  entities Step1;
  attributes pb : Step1 -> Float, seventy : Step1 -> Float;
}
"#;
        let srcb = r#"
schema A = {
  entities "MASP Calc. Step 1", "Casing Section";
  foreign_keys "Casing Section" : "MASP Calc. Step 1" -> "Casing Section";
  attributes "Burst Rating" : "Casing Section" -> Float,
             "De-Rated Percent" : "MASP Calc. Step 1" -> Float;
}
"#;
        let o = parse_schema(srca, &ts()).unwrap();
        let a = parse_schema(srcb, &ts()).unwrap();
        let msrc = r#"
mapping MA : O -> A = {
  Step1 -> "MASP Calc. Step 1";
  pb -> lambda x, "Burst Rating"("Casing Section"(x));
  seventy -> lambda x, "De-Rated Percent"(x);
}
"#;
        let m = parse_mapping(msrc, &o, &a).unwrap();
        assert!(m.validate(&o, &a).is_empty());
        let printed = print_mapping(&m);
        let m2 = parse_mapping(&printed, &o, &a).unwrap();
        assert_eq!(print_mapping(&m2), printed);
    }

    #[test]
    fn parse_instance_and_roundtrip() {
        let s = parse_schema(
            "schema P = { entities Person; attributes age : Person -> Float; }",
            &ts(),
        )
        .unwrap();
        let src = r#"
instance I : P = {
  generators p1 p2 p3 : Person, x y : Float;
  equations age(p1) = 20, age(p2) = x, age(p3) = y, x + y = 20;
}
"#;
        let i = parse_instance(src, &s).unwrap();
        assert_eq!(i.generators.len(), 5);
        assert_eq!(i.equations.len(), 4);
        let m = i.saturate().unwrap();
        assert_eq!(m.row_count("Person"), 3);
        let printed = print_instance(&i);
        let i2 = parse_instance(&printed, &s).unwrap();
        assert_eq!(print_instance(&i2), printed);
    }

    #[test]
    fn parse_rules_block() {
        let s = parse_schema(
            r#"schema S = { entities H; attributes "Well Name" : H -> String; }"#,
            &ts(),
        )
        .unwrap();
        let rules = parse_rules(
            r#"rules {
  headers : forall x : H, y : H . x."Well Name" = y."Well Name" -> x = y;
}"#,
            &s,
        )
        .unwrap();
        assert_eq!(rules.len(), 1);
        assert_eq!(rules[0].name, "headers");
        assert_eq!(rules[0].premises.len(), 1);
        assert_eq!(rules[0].conclusion.0, Term::var("x", "H"));
    }

    #[test]
    fn parse_config_with_blocks() {
        let src = r#"
# mini integration setup
schema A = "a.schema"
schema O = "o.schema"
mapping MA : O -> A = "ma.mapping"
instance IA : A = "ia.instance"
rename { "A_X__B_Y" -> XY; }
rules { r : forall x : XY, y : XY . v(x) = v(y) -> x = y; }
extra_equations { v("IA.r") = 3; }
bounds { max_rounds = 500; max_fresh = 2000; }
vc_mode = model
waive_vcs = true
output = "out"
"#;
        let cfg = parse_config(src).unwrap();
        assert_eq!(cfg.schemas.len(), 2);
        assert_eq!(cfg.mappings[0].1, "O");
        assert_eq!(cfg.rename["A_X__B_Y"], "XY");
        assert!(cfg.rules_src.as_deref().unwrap().starts_with("rules"));
        assert!(cfg.extra_src.as_deref().unwrap().contains("IA.r"));
        assert_eq!(cfg.bounds.max_rounds, 500);
        assert_eq!(cfg.vc_mode, "model");
        assert!(cfg.waive_vcs);
        assert_eq!(cfg.output.as_deref(), Some("out"));
    }

    #[test]
    fn parse_theory_block() {
        let src = r#"
theory T = {
  sorts Num, entity E;
  symbols plus : Num * Num -> Num, a : -> Num, f : E -> Num;
  equations forall x : Num . plus(x, a) = x;
}
"#;
        let th = parse_theory(src).unwrap();
        assert_eq!(th.sorts.len(), 2);
        assert_eq!(th.symbols.len(), 3);
        assert_eq!(th.equations.len(), 1);
    }

    #[test]
    fn error_has_line_number() {
        let bad = "schema A = {\n  entities E\n}";
        let e = parse_schema(bad, &ts()).unwrap_err();
        assert_eq!(e.line, 3);
    }

    #[test]
    fn negative_literal_and_subtraction() {
        let s = parse_schema(
            "schema S = { entities E; attributes v : E -> Float, w : E -> Float; equations forall x : E . w(x) = -2 * v(x) - 1; }",
            &ts(),
        )
        .unwrap();
        let eq = &s.constraints[0];
        assert_eq!(
            eq.rhs,
            Term::app(
                "-",
                vec![
                    Term::app("*", vec![Term::num("-2"), Term::app("v", vec![Term::var("x", "E")])]),
                    Term::num("1")
                ]
            )
        );
        assert_eq!(s.theory().typecheck(&eq.ctx, &eq.rhs).unwrap(), FLOAT);
    }
}
