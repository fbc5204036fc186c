//! Workbooks in categorical normal form: a plain-text stand-in for .xlsx.
//!
//! A workbook is a sequence of `[Table]` blocks. The first row of a block
//! is the header: the `id` column, then data columns `Name : Type`,
//! foreign keys `Name -> Target`, and schema-level witness columns
//! `witness lhs = rhs`. Cells are `|`-separated; formulas start with `=`
//! and reference the row through `[Col]` / `[FK.Col]` paths. Type-algebra
//! nulls live in single-column tables named after their type, with ground
//! equations in a companion `<Type>Eqs` table.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::eqlogic::{quote_ident, Context, Equation, SortKind, Term, TermError, Theory};
use crate::instance::{Instance, InstanceModel, SaturateError, Value};
use crate::literal::Literal;
use crate::schema::Schema;
use crate::syntax::{self, SyntaxError};
use crate::typeside::ARITH_OPS;

#[derive(Clone, Debug, PartialEq)]
pub struct Workbook {
    pub tables: Vec<SheetTable>,
}

impl Workbook {
    pub fn table(&self, name: &str) -> Option<&SheetTable> {
        self.tables.iter().find(|t| t.name == name)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SheetTable {
    pub name: String,
    pub columns: Vec<Column>,
    pub rows: Vec<SheetRow>,
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Column {
    pub name: String,
    pub kind: ColKind,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ColKind {
    Fk(String),
    Data(String),
    /// A boolean-valued schema equation over the row variable.
    Witness(Term, Term),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SheetRow {
    pub id: String,
    pub cells: Vec<Cell>,
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Empty,
    Lit(Literal),
    /// A row-id of another table (fk cell) or a null name (data cell).
    Ref(String),
    /// `= expr` — a formula over the row.
    Formula(Term),
    /// `=(lhs = rhs)` — a ground equation cell in a `<Type>Eqs` table.
    EqPair(Term, Term),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SheetError {
    #[error("line {line}: duplicate table {name}")]
    DuplicateTable { line: usize, name: String },
    #[error("line {line}: duplicate row id {id}")]
    DuplicateRowId { line: usize, id: String },
    #[error("line {line}: foreign key cell {id} has no matching row in {target}")]
    DanglingForeignKey { line: usize, id: String, target: String },
    #[error("line {line}: malformed formula: {msg}")]
    MalformedFormula { line: usize, msg: String },
    #[error("line {line}: {msg}")]
    NormalForm { line: usize, msg: String },
}

// ---- parsing ---------------------------------------------------------------

fn header_column(cell: &str, entity: &str, line: usize) -> Result<Column, SheetError> {
    let trimmed = cell.trim();
    if let Some(rest) = trimmed.strip_prefix("witness ") {
        let (lhs, rhs) = syntax::parse_witness_expr(rest, entity).map_err(|e| {
            SheetError::MalformedFormula { line, msg: e.to_string() }
        })?;
        return Ok(Column { name: format!("{lhs} = {rhs}"), kind: ColKind::Witness(lhs, rhs) });
    }
    // `Name : Type` or `Name -> Target`, with possibly quoted names.
    if let Some((l, r)) = split_top(trimmed, "->") {
        return Ok(Column {
            name: unquote(l.trim(), line)?,
            kind: ColKind::Fk(unquote(r.trim(), line)?),
        });
    }
    if let Some((l, r)) = split_top(trimmed, ":") {
        return Ok(Column {
            name: unquote(l.trim(), line)?,
            kind: ColKind::Data(unquote(r.trim(), line)?),
        });
    }
    Err(SheetError::NormalForm {
        line,
        msg: format!("column header must be `Name : Type`, `Name -> Target`, or `witness ...`: {trimmed}"),
    })
}

/// Split on a separator that occurs outside double quotes.
fn split_top<'a>(s: &'a str, sep: &str) -> Option<(&'a str, &'a str)> {
    let mut in_quote = false;
    let chars: Vec<char> = s.chars().collect();
    let sepc: Vec<char> = sep.chars().collect();
    let mut byte = 0;
    for i in 0..chars.len() {
        if chars[i] == '"' {
            in_quote = !in_quote;
        }
        if !in_quote && chars[i..].starts_with(&sepc[..]) {
            return Some((&s[..byte], &s[byte + sep.len()..]));
        }
        byte += chars[i].len_utf8();
    }
    None
}

fn unquote(s: &str, line: usize) -> Result<String, SheetError> {
    let t = s.trim();
    if let Some(body) = t.strip_prefix('"').and_then(|x| x.strip_suffix('"')) {
        return Ok(body.replace("\\\"", "\""));
    }
    if t.is_empty() || !t.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
        return Err(SheetError::NormalForm { line, msg: format!("bad identifier {t:?}") });
    }
    Ok(t.to_string())
}

fn parse_cell(text: &str, entity: &str, line: usize) -> Result<Cell, SheetError> {
    let t = text.trim();
    if t.is_empty() {
        return Ok(Cell::Empty);
    }
    if let Some(rest) = t.strip_prefix('=') {
        if let Ok(term) = syntax::parse_cell_expr(rest, entity) {
            return Ok(Cell::Formula(term));
        }
        return match syntax::parse_eq_pair(rest) {
            Ok((l, r)) => Ok(Cell::EqPair(l, r)),
            Err(e) => Err(SheetError::MalformedFormula { line, msg: e.to_string() }),
        };
    }
    match syntax::parse_cell_expr(t, entity) {
        Ok(Term::Lit(l)) => Ok(Cell::Lit(l)),
        Ok(Term::App(n, args)) if args.is_empty() => Ok(Cell::Ref(n)),
        Ok(other) => Err(SheetError::NormalForm {
            line,
            msg: format!("plain cells hold literals or row references, not {other}"),
        }),
        Err(e) => Err(SheetError::MalformedFormula { line, msg: e.to_string() }),
    }
}

/// Parse the workbook text format. All structural and normal-form
/// violations are collected and reported with their line numbers.
pub fn parse_workbook(text: &str) -> Result<Workbook, Vec<SheetError>> {
    let mut errors = Vec::new();
    let mut tables: Vec<SheetTable> = Vec::new();
    let mut current: Option<SheetTable> = None;
    let mut want_header = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        if l.starts_with('[') && l.ends_with(']') {
            if let Some(t) = current.take() {
                tables.push(t);
            }
            let name = l[1..l.len() - 1].trim().to_string();
            if name.is_empty() {
                errors.push(SheetError::NormalForm { line, msg: "empty table name".into() });
            }
            current = Some(SheetTable { name, columns: Vec::new(), rows: Vec::new(), line });
            want_header = true;
            continue;
        }
        let Some(table) = current.as_mut() else {
            errors.push(SheetError::NormalForm {
                line,
                msg: "content before the first [Table] header".into(),
            });
            continue;
        };
        let cells: Vec<&str> = raw.split('|').collect();
        if want_header {
            want_header = false;
            if cells[0].trim() != "id" {
                errors.push(SheetError::NormalForm {
                    line,
                    msg: "first header column must be `id`".into(),
                });
            }
            for c in &cells[1..] {
                match header_column(c, &table.name.clone(), line) {
                    Ok(col) => table.columns.push(col),
                    Err(e) => errors.push(e),
                }
            }
            continue;
        }
        let id = match unquote(cells[0], line) {
            Ok(id) => id,
            Err(e) => {
                errors.push(e);
                continue;
            }
        };
        let mut row = SheetRow { id, cells: Vec::new(), line };
        for k in 0..table.columns.len() {
            let text = cells.get(k + 1).copied().unwrap_or("");
            match parse_cell(text, &table.name.clone(), line) {
                Ok(c) => row.cells.push(c),
                Err(e) => {
                    errors.push(e);
                    row.cells.push(Cell::Empty);
                }
            }
        }
        if cells.len() > table.columns.len() + 1
            && cells[table.columns.len() + 1..].iter().any(|c| !c.trim().is_empty())
        {
            errors.push(SheetError::NormalForm { line, msg: "row wider than header".into() });
        }
        table.rows.push(row);
    }
    if let Some(t) = current.take() {
        tables.push(t);
    }
    validate(&tables, &mut errors);
    if errors.is_empty() {
        Ok(Workbook { tables })
    } else {
        Err(errors)
    }
}

fn validate(tables: &[SheetTable], errors: &mut Vec<SheetError>) {
    let mut names = BTreeSet::new();
    for t in tables {
        if !names.insert(&t.name) {
            errors.push(SheetError::DuplicateTable { line: t.line, name: t.name.clone() });
        }
    }
    // row-id sets, and which tables are single-column (type tables)
    let mut ids: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut single: BTreeSet<&str> = BTreeSet::new();
    for t in tables {
        let set = ids.entry(&t.name).or_default();
        for r in &t.rows {
            if !set.insert(&r.id) {
                errors.push(SheetError::DuplicateRowId { line: r.line, id: r.id.clone() });
            }
        }
        if t.columns.is_empty() {
            single.insert(&t.name);
        }
    }
    for t in tables {
        for r in &t.rows {
            for (k, cell) in r.cells.iter().enumerate() {
                match (&t.columns[k].kind, cell) {
                    (ColKind::Fk(target), Cell::Ref(id)) => {
                        let ok = ids.get(target.as_str()).is_some_and(|s| s.contains(id.as_str()));
                        if !ok {
                            errors.push(SheetError::DanglingForeignKey {
                                line: r.line,
                                id: id.clone(),
                                target: target.clone(),
                            });
                        }
                    }
                    (ColKind::Fk(_), Cell::Lit(_)) => {
                        errors.push(SheetError::NormalForm {
                            line: r.line,
                            msg: "literal in a foreign key column".into(),
                        });
                    }
                    (ColKind::Data(_), Cell::Ref(id)) => {
                        // row-ids are identifiers, not data: a data cell may
                        // only reference a type-table row (a null).
                        let is_null = single
                            .iter()
                            .any(|t2| ids.get(*t2).is_some_and(|s| s.contains(id.as_str())));
                        if !is_null {
                            errors.push(SheetError::NormalForm {
                                line: r.line,
                                msg: format!("row id {id} used as a data value"),
                            });
                        }
                    }
                    (ColKind::Witness(_, _), Cell::Lit(Literal::Bool(_)) | Cell::Empty) => {}
                    (ColKind::Witness(_, _), _) => {
                        errors.push(SheetError::NormalForm {
                            line: r.line,
                            msg: "witness cells hold booleans".into(),
                        });
                    }
                    _ => {}
                }
            }
        }
    }
}

// ---- printing ---------------------------------------------------------------

fn render_path(t: &Term) -> Option<Vec<String>> {
    match t {
        Term::Var(_, _) => Some(Vec::new()),
        Term::App(f, args) if args.len() == 1 && !ARITH_OPS.contains(&f.as_str()) => {
            let mut path = render_path(&args[0])?;
            path.push(f.clone());
            Some(path)
        }
        _ => None,
    }
}

/// Render a formula term back into cell syntax. Inverse of
/// `parse_cell_expr` up to whitespace.
pub fn render_expr(t: &Term) -> String {
    if let Some(path) = render_path(t) {
        if path.is_empty() {
            return "[id]".into();
        }
        let parts: Vec<String> = path.iter().map(|p| quote_ident(p)).collect();
        return format!("[{}]", parts.join("."));
    }
    match t {
        Term::Lit(l) => l.to_string(),
        Term::Var(_, _) => "[id]".into(),
        Term::App(f, args) => {
            if args.len() == 2 && ["+", "-", "*"].contains(&f.as_str()) {
                format!("({} {} {})", render_expr(&args[0]), f, render_expr(&args[1]))
            } else if args.is_empty() {
                quote_ident(f)
            } else {
                let parts: Vec<String> = args.iter().map(render_expr).collect();
                format!("{}({})", quote_ident(f), parts.join(", "))
            }
        }
    }
}

fn cell_text(c: &Cell) -> String {
    match c {
        Cell::Empty => String::new(),
        Cell::Lit(l) => l.to_string(),
        Cell::Ref(n) => quote_ident(n),
        Cell::Formula(t) => format!("={}", render_expr(t)),
        Cell::EqPair(l, r) => format!("=({} = {})", render_expr(l), render_expr(r)),
    }
}

pub fn print_workbook(w: &Workbook) -> String {
    let mut out = String::new();
    for (k, t) in w.tables.iter().enumerate() {
        if k > 0 {
            out.push('\n');
        }
        out.push_str(&format!("[{}]\n", t.name));
        let mut header = vec!["id".to_string()];
        for c in &t.columns {
            header.push(match &c.kind {
                ColKind::Fk(target) => {
                    format!("{} -> {}", quote_ident(&c.name), quote_ident(target))
                }
                ColKind::Data(ty) => format!("{} : {}", quote_ident(&c.name), quote_ident(ty)),
                ColKind::Witness(l, r) => {
                    format!("witness {} = {}", render_expr(l), render_expr(r))
                }
            });
        }
        out.push_str(&header.join(" | "));
        out.push('\n');
        for r in &t.rows {
            let mut cells = vec![quote_ident(&r.id)];
            for c in &r.cells {
                cells.push(cell_text(c));
            }
            out.push_str(cells.join(" | ").trim_end());
            out.push('\n');
        }
    }
    out
}

// ---- import -----------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImportIssue {
    /// Some rows share the column formula, others differ; the column is
    /// imported as plain data.
    MixedFormulaColumn { table: String, column: String },
}

#[derive(Debug, Error)]
pub enum ImportError {
    #[error(transparent)]
    Term(#[from] TermError),
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("{0}")]
    Shape(String),
}

enum TableKind {
    Entity,
    TypeTable(String),
    EqTable,
}

fn classify(t: &SheetTable, typeside: &Theory) -> TableKind {
    let is_type = |n: &str| typeside.sorts.get(n) == Some(&SortKind::Type);
    if t.columns.is_empty() && is_type(&t.name) {
        return TableKind::TypeTable(t.name.clone());
    }
    if let Some(prefix) = t.name.strip_suffix("Eqs") {
        if is_type(prefix) && t.columns.len() == 1 {
            return TableKind::EqTable;
        }
    }
    TableKind::Entity
}

/// Lift a workbook to a schema plus a presenting instance. Columns whose
/// rows all carry the same formula become universally quantified schema
/// equations; their cells are dropped (the chase re-derives them).
pub fn import_olog(
    name: &str,
    w: &Workbook,
    typeside: &Theory,
) -> Result<(Schema, Instance, Vec<ImportIssue>), ImportError> {
    let mut schema = Schema::new(name, typeside.clone());
    let mut issues = Vec::new();

    for t in &w.tables {
        if let TableKind::Entity = classify(t, typeside) {
            schema.add_entity(&t.name);
        }
    }
    for t in &w.tables {
        if !schema.has_entity(&t.name) {
            continue;
        }
        for c in &t.columns {
            match &c.kind {
                ColKind::Fk(target) => schema.add_fk(&c.name, &t.name, target),
                ColKind::Data(ty) => schema.add_attr(&c.name, &t.name, ty),
                ColKind::Witness(_, _) => {}
            }
        }
    }

    // Equations: witness columns and same-formula lifting.
    let mut definitional: BTreeSet<(String, usize)> = BTreeSet::new();
    let mut mixed: BTreeSet<(String, usize)> = BTreeSet::new();
    {
        let th = schema.theory();
        for t in &w.tables {
            if !schema.has_entity(&t.name) {
                continue;
            }
            let ctx = Context::single("x", &t.name);
            for (k, c) in t.columns.iter().enumerate() {
                match &c.kind {
                    ColKind::Witness(lhs, rhs) => {
                        schema.constraints.push(make_equation(&th, &ctx, lhs, rhs)?);
                    }
                    _ => {
                        let formulas: Vec<&Term> = t
                            .rows
                            .iter()
                            .filter_map(|r| match &r.cells[k] {
                                Cell::Formula(f) => Some(f),
                                _ => None,
                            })
                            .collect();
                        if formulas.is_empty() {
                            continue;
                        }
                        let all_same = formulas.len() == t.rows.len()
                            && formulas.iter().all(|f| *f == formulas[0]);
                        if all_same {
                            let lhs = Term::app(&c.name, vec![Term::var("x", &t.name)]);
                            schema
                                .constraints
                                .push(make_equation(&th, &ctx, &lhs, formulas[0])?);
                            definitional.insert((t.name.clone(), k));
                        } else {
                            issues.push(ImportIssue::MixedFormulaColumn {
                                table: t.name.clone(),
                                column: c.name.clone(),
                            });
                            mixed.insert((t.name.clone(), k));
                        }
                    }
                }
            }
        }
    }

    let mut inst = Instance::new(name, schema.clone());
    for t in &w.tables {
        match classify(t, typeside) {
            TableKind::TypeTable(sort) => {
                for r in &t.rows {
                    inst.add_generator(&r.id, &sort)?;
                }
            }
            TableKind::Entity => {
                for r in &t.rows {
                    inst.add_generator(&r.id, &t.name)?;
                }
            }
            TableKind::EqTable => {}
        }
    }
    for t in &w.tables {
        match classify(t, typeside) {
            TableKind::Entity => {
                for r in &t.rows {
                    for (k, c) in t.columns.iter().enumerate() {
                        if matches!(c.kind, ColKind::Witness(_, _)) {
                            continue;
                        }
                        let key = (t.name.clone(), k);
                        if definitional.contains(&key) {
                            continue;
                        }
                        let lhs = Term::app(&c.name, vec![Term::constant(&r.id)]);
                        match &r.cells[k] {
                            Cell::Lit(l) => inst.add_equation(lhs, Term::Lit(l.clone()))?,
                            Cell::Ref(n) => inst.add_equation(lhs, Term::constant(n))?,
                            // formulas in a mixed column carry no value
                            Cell::Formula(_) if mixed.contains(&key) => {}
                            Cell::Formula(f) => {
                                return Err(ImportError::Shape(format!(
                                    "unexpected formula {f} in column {} of {}",
                                    c.name, t.name
                                )));
                            }
                            Cell::EqPair(_, _) => {
                                return Err(ImportError::Shape(format!(
                                    "equation cell outside an Eqs table in {}",
                                    t.name
                                )));
                            }
                            Cell::Empty => {}
                        }
                    }
                }
            }
            TableKind::EqTable => {
                for r in &t.rows {
                    match &r.cells[0] {
                        Cell::EqPair(l, r2) => inst.add_equation(l.clone(), r2.clone())?,
                        Cell::Empty => {}
                        other => {
                            return Err(ImportError::Shape(format!(
                                "equation table {} holds non-equation cell {other:?}",
                                t.name
                            )));
                        }
                    }
                }
            }
            TableKind::TypeTable(_) => {}
        }
    }
    Ok((schema, inst, issues))
}

fn make_equation(
    th: &Theory,
    ctx: &Context,
    lhs: &Term,
    rhs: &Term,
) -> Result<Equation, ImportError> {
    let sort = th.typecheck(ctx, lhs)?;
    let rsort = th.typecheck(ctx, rhs)?;
    if sort != rsort {
        return Err(ImportError::Shape(format!(
            "equation sides {lhs} = {rhs} have sorts {sort} and {rsort}"
        )));
    }
    Ok(Equation { ctx: ctx.clone(), lhs: lhs.clone(), rhs: rhs.clone(), sort })
}

// ---- export -----------------------------------------------------------------

fn contains_symbol(t: &Term, f: &str) -> bool {
    match t {
        Term::App(g, args) => g == f || args.iter().any(|a| contains_symbol(a, f)),
        _ => false,
    }
}

fn value_to_term(m: &InstanceModel, v: &Value, names: &BTreeMap<Term, String>) -> Term {
    match m.resolve(v) {
        Value::Lit(l) => Term::Lit(l),
        Value::Null(i) => {
            let label = m.null_label_term(i);
            match names.get(&label) {
                Some(n) => Term::constant(n),
                None => label,
            }
        }
        Value::Op(f, args) => {
            Term::App(f, args.iter().map(|a| value_to_term(m, a, names)).collect())
        }
    }
}

fn value_sort(m: &InstanceModel, v: &Value) -> String {
    match m.resolve(v) {
        Value::Lit(l) => l.sort_name().to_string(),
        Value::Null(i) => m.null_sort(i).to_string(),
        Value::Op(f, args) => match f.as_str() {
            "concat" | "floatToString" => "String".to_string(),
            _ if ARITH_OPS.contains(&f.as_str()) => "Float".to_string(),
            _ => args
                .first()
                .map(|a| value_sort(m, a))
                .unwrap_or_else(|| "Float".to_string()),
        },
    }
}

/// Render a saturated, consistent model back as a workbook: entity tables
/// with definitional formulas and witness columns, plus type and equation
/// tables for the type algebra.
pub fn export_olog(s: &Schema, m: &InstanceModel) -> Workbook {
    // Names for open nulls: constant labels keep their name, attribute
    // labels get n1, n2, ... in sorted label order.
    let opens = m.open_nulls();
    let mut names: BTreeMap<Term, String> = BTreeMap::new();
    let mut used: BTreeSet<String> = opens
        .iter()
        .filter_map(|(t, _)| match t {
            Term::App(n, args) if args.is_empty() => Some(n.clone()),
            _ => None,
        })
        .collect();
    let mut counter = 0;
    for (label, _) in &opens {
        let name = match label {
            Term::App(n, args) if args.is_empty() => n.clone(),
            _ => loop {
                counter += 1;
                let cand = format!("n{counter}");
                if !used.contains(&cand) {
                    used.insert(cand.clone());
                    break cand;
                }
            },
        };
        names.insert(label.clone(), name);
    }

    let mut tables = Vec::new();
    for e in &s.entities {
        let rows = m.rows_of(e);
        // Split constraints into definitional column formulas and
        // boolean witness columns. Empty tables keep everything in the
        // header (the "phantom row" alternative).
        let mut defs: BTreeMap<String, &Equation> = BTreeMap::new();
        let mut wits: Vec<&Equation> = Vec::new();
        for eq in s.constraints_of(e) {
            let mut taken = false;
            if !rows.is_empty() {
                if let Term::App(f, args) = &eq.lhs {
                    let is_col = s
                        .symbols()
                        .any(|(n, (dom, _))| n == f && dom == e);
                    if args.len() == 1
                        && matches!(args[0], Term::Var(_, _))
                        && is_col
                        && !defs.contains_key(f)
                        && !contains_symbol(&eq.rhs, f)
                    {
                        defs.insert(f.clone(), eq);
                        taken = true;
                    }
                }
            }
            if !taken {
                wits.push(eq);
            }
        }
        let mut columns = Vec::new();
        for (f, target) in s.fks_of(e) {
            columns.push(Column { name: f.to_string(), kind: ColKind::Fk(target.to_string()) });
        }
        for (a, ty) in s.attrs_of(e) {
            columns.push(Column { name: a.to_string(), kind: ColKind::Data(ty.to_string()) });
        }
        for eq in &wits {
            columns.push(Column {
                name: format!("{} = {}", eq.lhs, eq.rhs),
                kind: ColKind::Witness(eq.lhs.clone(), eq.rhs.clone()),
            });
        }

        // row ids: generator-named rows keep their constant, fresh rows
        // get r1, r2, ... in canonical order.
        let mut taken: BTreeSet<String> = rows
            .iter()
            .filter_map(|&r| match m.row_term(r) {
                Term::App(n, args) if args.is_empty() => Some(n.clone()),
                _ => None,
            })
            .collect();
        let mut fresh = 0;
        let mut row_ids: BTreeMap<usize, String> = BTreeMap::new();
        for &r in &rows {
            let id = match m.row_term(r) {
                Term::App(n, args) if args.is_empty() => n.clone(),
                _ => loop {
                    fresh += 1;
                    let cand = format!("r{fresh}");
                    if !taken.contains(&cand) {
                        taken.insert(cand.clone());
                        break cand;
                    }
                },
            };
            row_ids.insert(r, id);
        }
        // ids of fk targets come from their own tables; collect lazily
        let target_id = |row: usize| -> String {
            match m.row_term(row) {
                Term::App(n, args) if args.is_empty() => n.clone(),
                t => format!("r?{t}"), // patched below for cross-table fresh rows
            }
        };

        let mut sheet_rows = Vec::new();
        for &r in &rows {
            let mut cells = Vec::new();
            for c in &columns {
                cells.push(match &c.kind {
                    ColKind::Fk(_) => match defs.get(&c.name) {
                        Some(eq) => Cell::Formula(eq.rhs.clone()),
                        None => match m.fk_of(r, &c.name) {
                            Some(t) => Cell::Ref(target_id(t)),
                            None => Cell::Empty,
                        },
                    },
                    ColKind::Data(_) => match defs.get(&c.name) {
                        Some(eq) => Cell::Formula(eq.rhs.clone()),
                        None => match m.attr_of(r, &c.name) {
                            None => Cell::Empty,
                            Some(v) => match m.resolve(&v) {
                                Value::Lit(l) => Cell::Lit(l),
                                Value::Null(i) => {
                                    let label = m.null_label_term(i);
                                    match names.get(&label) {
                                        Some(n) => Cell::Ref(n.clone()),
                                        None => Cell::Empty,
                                    }
                                }
                                op @ Value::Op(_, _) => {
                                    Cell::Formula(value_to_term(m, &op, &names))
                                }
                            },
                        },
                    },
                    ColKind::Witness(_, _) => Cell::Lit(Literal::Bool(true)),
                });
            }
            sheet_rows.push(SheetRow { id: row_ids[&r].clone(), cells, line: 0 });
        }
        tables.push(SheetTable { name: e.clone(), columns, rows: sheet_rows, line: 0 });
    }

    // fresh rows referenced across tables share the per-table r{k} ids;
    // rebuild fk cells that pointed at fresh rows using the actual maps.
    let mut global_ids: BTreeMap<Term, String> = BTreeMap::new();
    for (t, e) in tables.iter().zip(&s.entities) {
        for (r, row) in m.rows_of(e).iter().zip(&t.rows) {
            global_ids.insert(m.row_term(*r).clone(), row.id.clone());
        }
    }
    for (t, e) in tables.iter_mut().zip(s.entities.clone()) {
        for (r, row) in m.rows_of(&e).iter().zip(&mut t.rows) {
            for (k, c) in t.columns.iter().enumerate() {
                if let ColKind::Fk(_) = &c.kind {
                    if let Cell::Ref(_) = &row.cells[k] {
                        if let Some(tr) = m.fk_of(*r, &c.name) {
                            row.cells[k] = Cell::Ref(global_ids[m.row_term(tr)].clone());
                        }
                    }
                }
            }
        }
    }

    // type tables and equation tables
    let mut by_sort: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (label, sort) in &opens {
        by_sort.entry(sort.clone()).or_default().push(names[label].clone());
    }
    for (sort, nulls) in &by_sort {
        tables.push(SheetTable {
            name: sort.clone(),
            columns: Vec::new(),
            rows: nulls
                .iter()
                .map(|n| SheetRow { id: n.clone(), cells: Vec::new(), line: 0 })
                .collect(),
            line: 0,
        });
    }
    let mut eqs_by_sort: BTreeMap<String, Vec<(Term, Term)>> = BTreeMap::new();
    for (a, b) in &m.residuals {
        let sort = value_sort(m, a);
        eqs_by_sort
            .entry(sort)
            .or_default()
            .push((value_to_term(m, a, &names), value_to_term(m, b, &names)));
    }
    for (sort, eqs) in &eqs_by_sort {
        let rows = eqs
            .iter()
            .enumerate()
            .map(|(k, (l, r))| SheetRow {
                id: format!("e{}", k + 1),
                cells: vec![Cell::EqPair(l.clone(), r.clone())],
                line: 0,
            })
            .collect();
        tables.push(SheetTable {
            name: format!("{sort}Eqs"),
            columns: vec![Column { name: "eq".into(), kind: ColKind::Data("Bool".into()) }],
            rows,
            line: 0,
        });
    }
    Workbook { tables }
}

#[derive(Debug, Error)]
pub enum RoundtripError {
    #[error(transparent)]
    Import(#[from] ImportError),
    #[error(transparent)]
    Saturate(#[from] SaturateError),
}

/// import → saturate → export. Identity (after `print_workbook`) on
/// workbooks that are already in canonical form.
pub fn roundtrip(w: &Workbook, typeside: &Theory) -> Result<Workbook, RoundtripError> {
    let (schema, inst, _issues) = import_olog("roundtrip", w, typeside)?;
    let model = inst.saturate()?;
    Ok(export_olog(&schema, &model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::typeside::excel_typeside;

    fn ts() -> Theory {
        excel_typeside(false)
    }

    const PERSON: &str = "\
[Person]
id | Age : Float
p1 | 20
p2 | x
p3 | y

[Float]
id
x
y

[FloatEqs]
id | eq : Bool
e1 | =(20 = (x + y))
";

    #[test]
    fn two_table_fk_parses() {
        let w = parse_workbook(
            "[A]\nid | f -> B | v : Float\na1 | b1 | 3\n\n[B]\nid | w : Float\nb1 | 4\n",
        )
        .unwrap();
        assert_eq!(w.tables.len(), 2);
        assert_eq!(
            w.tables[0].columns[0].kind,
            ColKind::Fk("B".into())
        );
        assert_eq!(w.tables[0].rows[0].cells[0], Cell::Ref("b1".into()));
    }

    #[test]
    fn dangling_fk_rejected() {
        let errs = parse_workbook(
            "[A]\nid | f -> B\na1 | nope\n\n[B]\nid | w : Float\nb1 | 4\n",
        )
        .unwrap_err();
        assert!(errs
            .iter()
            .any(|e| matches!(e, SheetError::DanglingForeignKey { id, .. } if id == "nope")));
    }

    #[test]
    fn duplicate_row_id_rejected() {
        let errs =
            parse_workbook("[A]\nid | v : Float\na1 | 1\na1 | 2\n").unwrap_err();
        assert!(errs.iter().any(|e| matches!(e, SheetError::DuplicateRowId { .. })));
    }

    #[test]
    fn row_id_as_data_value_rejected() {
        let errs = parse_workbook(
            "[A]\nid | v : Float\na1 | b1\n\n[B]\nid | w : Float\nb1 | 4\n",
        )
        .unwrap_err();
        assert!(errs.iter().any(
            |e| matches!(e, SheetError::NormalForm { msg, .. } if msg.contains("data value"))
        ));
    }

    #[test]
    fn person_type_algebra_imports() {
        let w = parse_workbook(PERSON).unwrap();
        let (schema, inst, issues) = import_olog("P", &w, &ts()).unwrap();
        assert!(issues.is_empty());
        assert_eq!(schema.entities, vec!["Person".to_string()]);
        assert_eq!(inst.generators.get("x").map(String::as_str), Some("Float"));
        let m = inst.saturate().unwrap();
        assert_eq!(m.row_count("Person"), 3);
        assert_eq!(m.open_nulls().len(), 2);
        assert_eq!(m.residuals.len(), 1);
    }

    #[test]
    fn person_roundtrips_verbatim() {
        let w = parse_workbook(PERSON).unwrap();
        let w2 = roundtrip(&w, &ts()).unwrap();
        assert_eq!(print_workbook(&w2), PERSON);
    }

    #[test]
    fn same_formula_column_lifts_to_equation() {
        let src = "\
[Step1]
id | cs -> Casing | derated : Float | burst : Float
s1 | c1 | 0.7 | =([cs.rating] * [derated])
s2 | c2 | 0.7 | =([cs.rating] * [derated])

[Casing]
id | rating : Float
c1 | 8000
c2 | 7000
";
        let w = parse_workbook(src).unwrap();
        let (schema, inst, issues) = import_olog("A", &w, &ts()).unwrap();
        assert!(issues.is_empty());
        assert_eq!(schema.constraints.len(), 1);
        let eq = &schema.constraints[0];
        assert_eq!(eq.lhs, Term::app("burst", vec![Term::var("x", "Step1")]));
        // cells of a definitional column are dropped; the chase rebuilds them
        assert!(!inst.equations.iter().any(|(l, _)| contains_symbol(l, "burst")));
        let m = inst.saturate().unwrap();
        let s1 = m.generator_row("s1").unwrap();
        let v = m.attr_of(s1, "burst").unwrap();
        assert_eq!(m.display_value(&v), "5600");
    }

    #[test]
    fn mixed_formula_column_demoted_to_data() {
        let src = "\
[T]
id | a : Float | b : Float
t1 | 1 | =([a] * 2)
t2 | 2 | 7
";
        let w = parse_workbook(src).unwrap();
        let (schema, inst, issues) = import_olog("M", &w, &ts()).unwrap();
        assert_eq!(
            issues,
            vec![ImportIssue::MixedFormulaColumn { table: "T".into(), column: "b".into() }]
        );
        assert!(schema.constraints.is_empty());
        // the literal cell still imports; the formula cell contributes nothing
        let m = inst.saturate().unwrap();
        let t2 = m.generator_row("t2").unwrap();
        assert_eq!(m.display_value(&m.attr_of(t2, "b").unwrap()), "7");
        let t1 = m.generator_row("t1").unwrap();
        assert!(matches!(m.attr_of(t1, "b"), None | Some(Value::Null(_))));
    }

    #[test]
    fn export_free_model_has_no_witness_columns() {
        let src = "\
[A]
id | f -> B | v : Float
a1 | b1 | 3

[B]
id | w : Float
b1 | 4
";
        let w = parse_workbook(src).unwrap();
        let w2 = roundtrip(&w, &ts()).unwrap();
        for t in &w2.tables {
            assert!(t.columns.iter().all(|c| !matches!(c.kind, ColKind::Witness(_, _))));
        }
        assert_eq!(print_workbook(&w2), src);
    }

    #[test]
    fn non_definitional_equation_exports_as_witness() {
        let src = "\
[Step1]
id | shoe -> Well | deep -> Well
s1 | w1 | w1

[Well]
id | name : String
w1 | 'W-1'
";
        let w = parse_workbook(src).unwrap();
        let (mut schema, inst, _) = import_olog("S", &w, &ts()).unwrap();
        let th = schema.theory();
        let ctx = Context::single("x", "Step1");
        let x = Term::var("x", "Step1");
        let lhs = Term::app("name", vec![Term::app("shoe", vec![x.clone()])]);
        let rhs = Term::app("name", vec![Term::app("deep", vec![x])]);
        schema.constraints.push(make_equation(&th, &ctx, &lhs, &rhs).unwrap());
        let model = Instance { schema: schema.clone(), ..inst }.saturate().unwrap();
        let out = export_olog(&schema, &model);
        let step1 = out.table("Step1").unwrap();
        let wit: Vec<&Column> = step1
            .columns
            .iter()
            .filter(|c| matches!(c.kind, ColKind::Witness(_, _)))
            .collect();
        assert_eq!(wit.len(), 1);
        assert_eq!(step1.rows[0].cells.last(), Some(&Cell::Lit(Literal::Bool(true))));
        // witness headers survive a reparse
        let printed = print_workbook(&out);
        let w3 = parse_workbook(&printed).unwrap();
        let (s3, _, _) = import_olog("S", &w3, &ts()).unwrap();
        assert_eq!(s3.constraints.len(), schema.constraints.len());
    }

    #[test]
    fn empty_table_keeps_equations_in_header() {
        let src = "\
[E]
id | v : Float | witness [v] = ([v] * 1)
";
        let w = parse_workbook(src).unwrap();
        let (schema, inst, _) = import_olog("E", &w, &ts()).unwrap();
        assert_eq!(schema.constraints.len(), 1);
        let model = inst.saturate().unwrap();
        let out = export_olog(&schema, &model);
        assert!(out.table("E").unwrap().rows.is_empty());
        assert_eq!(
            out.table("E")
                .unwrap()
                .columns
                .iter()
                .filter(|c| matches!(c.kind, ColKind::Witness(_, _)))
                .count(),
            1
        );
    }

    #[test]
    fn formula_renders_back_to_same_text() {
        let cases = [
            "([Casing.rating] * [derated])",
            "MAX([a], ([b] + 1))",
            "(0.052 * [tvd])",
            "[id]",
            "\"RKB TVD\"([id])",
        ];
        for c in cases {
            let t = syntax::parse_cell_expr(c, "E").unwrap();
            let back = render_expr(&t);
            let t2 = syntax::parse_cell_expr(&back, "E").unwrap();
            assert_eq!(t, t2, "case {c} rendered as {back}");
        }
    }
}
