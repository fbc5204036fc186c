//! Instances (presentations by generators and ground equations) and their
//! saturated models: chase-style totalization of foreign keys, labelled
//! nulls for missing attribute values, row merging with a replayable
//! trace, plus sigma/delta data migration and data mappings.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::eqlogic::{
    ground_congruence, Context, FuncSymbol, Term, TermError, Theory, Verdict,
};
use crate::literal::Literal;
use crate::schema::{Schema, SchemaMapping, VcStatus, VerificationCondition};
use crate::typeside::{self, ARITH_OPS};

/// An instance presentation: named generators and ground equations over
/// them.
#[derive(Clone, Debug)]
pub struct Instance {
    pub name: String,
    pub schema: Schema,
    /// generator name -> sort (entity or type)
    pub generators: BTreeMap<String, String>,
    pub equations: Vec<(Term, Term)>,
}

impl Instance {
    pub fn new(name: &str, schema: Schema) -> Self {
        Instance {
            name: name.to_string(),
            schema,
            generators: BTreeMap::new(),
            equations: Vec::new(),
        }
    }

    pub fn add_generator(&mut self, name: &str, sort: &str) -> Result<(), TermError> {
        let th = self.schema.theory();
        if !th.sorts.contains_key(sort) {
            return Err(TermError::UnknownSort(sort.to_string()));
        }
        match self.generators.get(name) {
            Some(s) if s != sort => Err(TermError::SymbolClash(name.to_string())),
            _ => {
                self.generators.insert(name.to_string(), sort.to_string());
                Ok(())
            }
        }
    }

    /// Schema theory extended with the generators as constants and the
    /// instance equations as ground axioms.
    pub fn theory(&self) -> Theory {
        let mut th = self.schema.theory();
        th = th.extend(&format!("{}[{}]", th.name, self.name));
        for (g, s) in &self.generators {
            th.add_symbol(FuncSymbol::constant(g, s)).ok();
        }
        th
    }

    pub fn add_equation(&mut self, lhs: Term, rhs: Term) -> Result<(), TermError> {
        let th = self.theory();
        let ls = th.typecheck(&Context::empty(), &lhs)?;
        let rs = th.typecheck(&Context::empty(), &rhs)?;
        if ls != rs {
            return Err(TermError::SortMismatch {
                place: format!("instance equation {lhs} = {rhs}"),
                expected: ls,
                got: rs,
            });
        }
        self.equations.push((lhs, rhs));
        Ok(())
    }

    pub fn saturate(&self) -> Result<InstanceModel, SaturateError> {
        self.saturate_with(Bounds::default())
    }

    pub fn saturate_with(&self, bounds: Bounds) -> Result<InstanceModel, SaturateError> {
        InstanceModel::build(self, bounds)
    }
}

/// Resource bounds for the chase.
#[derive(Clone, Copy, Debug)]
pub struct Bounds {
    pub max_rounds: usize,
    pub max_fresh: usize,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds { max_rounds: 10_000, max_fresh: 100_000 }
    }
}

/// A value in the type algebra of a model: a literal, a labelled null, or
/// an irreducible operation over such.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Value {
    Lit(Literal),
    Null(usize),
    Op(String, Vec<Value>),
}

/// Where a labelled null came from: a type-sorted generator, or the
/// missing value of an attribute at a row.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum NullLabel {
    Named(String),
    Attr(String, Term),
}

impl NullLabel {
    /// The ground term a null stands for; used for display and replay.
    pub fn term(&self) -> Term {
        match self {
            NullLabel::Named(g) => Term::constant(g),
            NullLabel::Attr(a, row) => Term::app(a, vec![row.clone()]),
        }
    }
}

#[derive(Clone, Debug)]
struct NullNode {
    parent: usize,
    label: NullLabel,
    sort: String,
    binding: Option<Value>,
}

#[derive(Clone, Debug)]
struct Row {
    parent: usize,
    entity: String,
    term: Term,
    fks: BTreeMap<String, usize>,
    attrs: BTreeMap<String, Value>,
}

/// Two distinct literals forced equal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Clash {
    pub lhs: Literal,
    pub rhs: Literal,
    pub context: String,
}

impl fmt::Display for Clash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {} ({})", self.lhs, self.rhs, self.context)
    }
}

/// One step of the saturation trace.
#[derive(Clone, Debug)]
pub enum MergeEvent {
    RowMerge { kept: Term, dropped: Term, reason: String },
    NullBind { null: Term, value: Term, reason: String },
    FreshRow { term: Term, entity: String },
    Clash { lhs: Literal, rhs: Literal, reason: String },
}

impl fmt::Display for MergeEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MergeEvent::RowMerge { kept, dropped, reason } => {
                write!(f, "merge rows {dropped} into {kept} [{reason}]")
            }
            MergeEvent::NullBind { null, value, reason } => {
                write!(f, "bind {null} := {value} [{reason}]")
            }
            MergeEvent::FreshRow { term, entity } => {
                write!(f, "fresh row {term} : {entity}")
            }
            MergeEvent::Clash { lhs, rhs, reason } => {
                write!(f, "clash {lhs} = {rhs} [{reason}]")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum SaturateError {
    #[error("instance is inconsistent: {}", .0.clashes[0])]
    Inconsistent(Box<InstanceModel>),
    #[error("chase did not terminate after {rounds} round(s), {fresh} fresh row(s): {}",
            by_entity.iter().map(|(e, n)| format!("{e}: {n}")).collect::<Vec<_>>().join(", "))]
    NonTermination {
        rounds: usize,
        fresh: usize,
        by_entity: BTreeMap<String, usize>,
    },
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("term {0} does not denote a row of the model")]
    NoRow(String),
    #[error("term {0} does not denote a value")]
    NoValue(String),
    #[error("unbound variable {0} during evaluation")]
    Unbound(String),
}

/// A saturated model: equivalence classes of rows with total foreign keys
/// and attribute values, a type algebra of labelled nulls with residual
/// equations, and the trace that produced it.
#[derive(Clone, Debug)]
pub struct InstanceModel {
    pub schema: Schema,
    rows: Vec<Row>,
    nulls: Vec<NullNode>,
    pub residuals: Vec<(Value, Value)>,
    pub clashes: Vec<Clash>,
    pub trace: Vec<MergeEvent>,
    gen_rows: BTreeMap<String, usize>,
    gen_nulls: BTreeMap<String, usize>,
    fresh_rows: usize,
    /// The presenting equations, kept for replay.
    inputs: Vec<(Term, Term)>,
    entity_eqs: Vec<(Term, Term)>,
    value_eqs: Vec<(Term, Term)>,
}

impl InstanceModel {
    fn empty(schema: Schema) -> Self {
        InstanceModel {
            schema,
            rows: Vec::new(),
            nulls: Vec::new(),
            residuals: Vec::new(),
            clashes: Vec::new(),
            trace: Vec::new(),
            gen_rows: BTreeMap::new(),
            gen_nulls: BTreeMap::new(),
            fresh_rows: 0,
            inputs: Vec::new(),
            entity_eqs: Vec::new(),
            value_eqs: Vec::new(),
        }
    }

    fn find_row(&self, mut i: usize) -> usize {
        while self.rows[i].parent != i {
            i = self.rows[i].parent;
        }
        i
    }

    fn find_null(&self, mut i: usize) -> usize {
        while self.nulls[i].parent != i {
            i = self.nulls[i].parent;
        }
        i
    }

    fn new_row(&mut self, entity: &str, term: Term, fresh: bool) -> usize {
        let i = self.rows.len();
        self.rows.push(Row {
            parent: i,
            entity: entity.to_string(),
            term: term.clone(),
            fks: BTreeMap::new(),
            attrs: BTreeMap::new(),
        });
        if fresh {
            self.fresh_rows += 1;
            self.trace.push(MergeEvent::FreshRow { term, entity: entity.to_string() });
        }
        i
    }

    fn new_null(&mut self, label: NullLabel, sort: &str) -> usize {
        let i = self.nulls.len();
        self.nulls.push(NullNode { parent: i, label, sort: sort.to_string(), binding: None });
        i
    }

    /// Resolve a value through null bindings and reduce operations.
    pub fn resolve(&self, v: &Value) -> Value {
        match v {
            Value::Lit(_) => v.clone(),
            Value::Null(i) => {
                let r = self.find_null(*i);
                match &self.nulls[r].binding {
                    Some(b) => self.resolve(&b.clone()),
                    None => Value::Null(r),
                }
            }
            Value::Op(f, args) => {
                let args: Vec<Value> = args.iter().map(|a| self.resolve(a)).collect();
                reduce_op(f, args)
            }
        }
    }

    fn occurs(&self, root: usize, v: &Value) -> bool {
        match v {
            Value::Lit(_) => false,
            Value::Null(i) => self.find_null(*i) == root,
            Value::Op(_, args) => args.iter().any(|a| self.occurs(root, a)),
        }
    }

    /// Unify two values. Returns true when anything changed.
    fn unify_values(&mut self, a: &Value, b: &Value, reason: &str) -> bool {
        let a = self.resolve(a);
        let b = self.resolve(b);
        if a == b {
            return false;
        }
        match (&a, &b) {
            (Value::Lit(x), Value::Lit(y)) => {
                let clash = Clash {
                    lhs: x.clone(),
                    rhs: y.clone(),
                    context: reason.to_string(),
                };
                if !self.clashes.contains(&clash) {
                    self.trace.push(MergeEvent::Clash {
                        lhs: x.clone(),
                        rhs: y.clone(),
                        reason: reason.to_string(),
                    });
                    self.clashes.push(clash);
                    return true;
                }
                false
            }
            (Value::Null(n), Value::Null(m)) => {
                let (rn, rm) = (self.find_null(*n), self.find_null(*m));
                // Representative: the lesser label.
                let keep = if self.nulls[rn].label <= self.nulls[rm].label { rn } else { rm };
                let drop = if keep == rn { rm } else { rn };
                self.nulls[drop].parent = keep;
                self.trace.push(MergeEvent::NullBind {
                    null: self.nulls[drop].label.term(),
                    value: self.nulls[keep].label.term(),
                    reason: reason.to_string(),
                });
                true
            }
            (Value::Null(n), other) | (other, Value::Null(n)) => {
                let rn = self.find_null(*n);
                if self.occurs(rn, other) {
                    self.push_residual(a.clone(), b.clone())
                } else {
                    self.nulls[rn].binding = Some(other.clone());
                    self.trace.push(MergeEvent::NullBind {
                        null: self.nulls[rn].label.term(),
                        value: self.value_term(other),
                        reason: reason.to_string(),
                    });
                    true
                }
            }
            _ => self.push_residual(a, b),
        }
    }

    fn push_residual(&mut self, a: Value, b: Value) -> bool {
        let pair = if a <= b { (a, b) } else { (b, a) };
        if self.residuals.contains(&pair) {
            false
        } else {
            self.residuals.push(pair);
            true
        }
    }

    /// Merge two row classes, moving foreign keys and attribute values.
    fn merge_rows(&mut self, a: usize, b: usize, reason: &str) -> bool {
        let (ra, rb) = (self.find_row(a), self.find_row(b));
        if ra == rb {
            return false;
        }
        let keep = if self.rows[ra].term <= self.rows[rb].term { ra } else { rb };
        let drop = if keep == ra { rb } else { ra };
        self.trace.push(MergeEvent::RowMerge {
            kept: self.rows[keep].term.clone(),
            dropped: self.rows[drop].term.clone(),
            reason: reason.to_string(),
        });
        self.rows[drop].parent = keep;
        let fks = std::mem::take(&mut self.rows[drop].fks);
        let attrs = std::mem::take(&mut self.rows[drop].attrs);
        for (f, t) in fks {
            match self.rows[keep].fks.get(&f) {
                Some(&t2) => {
                    self.merge_rows(t, t2, &format!("congruence on {f}"));
                }
                None => {
                    self.rows[keep].fks.insert(f, t);
                }
            }
        }
        for (a, v) in attrs {
            match self.rows[keep].attrs.get(&a).cloned() {
                Some(v2) => {
                    self.unify_values(&v, &v2, &format!("congruence on {a}"));
                }
                None => {
                    self.rows[keep].attrs.insert(a, v);
                }
            }
        }
        true
    }

    /// Foreign-key image of a row, creating a fresh row when missing.
    fn fk_image(&mut self, row: usize, fk: &str) -> usize {
        let r = self.find_row(row);
        if let Some(&t) = self.rows[r].fks.get(fk) {
            return self.find_row(t);
        }
        let target = self.schema.fks[fk].1.clone();
        let term = Term::app(fk, vec![self.rows[r].term.clone()]);
        let t = self.new_row(&target, term, true);
        self.rows[r].fks.insert(fk.to_string(), t);
        t
    }

    /// Attribute value at a row, creating a labelled null when missing.
    fn attr_value(&mut self, row: usize, attr: &str) -> Value {
        let r = self.find_row(row);
        if let Some(v) = self.rows[r].attrs.get(attr) {
            return v.clone();
        }
        let sort = self.schema.attrs[attr].1.clone();
        let label = NullLabel::Attr(attr.to_string(), self.rows[r].term.clone());
        let n = self.new_null(label, &sort);
        let v = Value::Null(n);
        self.rows[r].attrs.insert(attr.to_string(), v.clone());
        v
    }

    /// Evaluate an entity-sorted term, creating rows as needed.
    fn eval_row_mut(
        &mut self,
        t: &Term,
        env: &BTreeMap<String, usize>,
    ) -> Result<usize, EvalError> {
        match t {
            Term::Var(v, _) => env
                .get(v)
                .map(|&r| self.find_row(r))
                .ok_or_else(|| EvalError::Unbound(v.clone())),
            Term::App(f, args) if args.is_empty() && self.gen_rows.contains_key(f) => {
                Ok(self.find_row(self.gen_rows[f]))
            }
            Term::App(f, args) if args.len() == 1 && self.schema.fks.contains_key(f) => {
                let r = self.eval_row_mut(&args[0], env)?;
                Ok(self.fk_image(r, f))
            }
            _ => Err(EvalError::NoRow(t.to_string())),
        }
    }

    /// Evaluate a type-sorted term to a value, creating nulls as needed.
    fn eval_value_mut(
        &mut self,
        t: &Term,
        env: &BTreeMap<String, usize>,
    ) -> Result<Value, EvalError> {
        match t {
            Term::Lit(l) => Ok(Value::Lit(l.clone())),
            Term::App(f, args) if args.is_empty() && self.gen_nulls.contains_key(f) => {
                Ok(Value::Null(self.gen_nulls[f]))
            }
            Term::App(f, args) if args.len() == 1 && self.schema.attrs.contains_key(f) => {
                let r = self.eval_row_mut(&args[0], env)?;
                Ok(self.attr_value(r, f))
            }
            Term::App(f, args)
                if ARITH_OPS.contains(&f.as_str())
                    || f == "concat"
                    || f == "floatToString" =>
            {
                let vals = args
                    .iter()
                    .map(|a| self.eval_value_mut(a, env))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(reduce_op(f, vals))
            }
            _ => Err(EvalError::NoValue(t.to_string())),
        }
    }

    /// Read-only evaluation on a saturated model (no creation).
    pub fn eval_row(&self, t: &Term, env: &BTreeMap<String, usize>) -> Result<usize, EvalError> {
        match t {
            Term::Var(v, _) => env
                .get(v)
                .map(|&r| self.find_row(r))
                .ok_or_else(|| EvalError::Unbound(v.clone())),
            Term::App(f, args) if args.is_empty() && self.gen_rows.contains_key(f) => {
                Ok(self.find_row(self.gen_rows[f]))
            }
            Term::App(f, args) if args.len() == 1 && self.schema.fks.contains_key(f) => {
                let r = self.eval_row(&args[0], env)?;
                let r = self.find_row(r);
                self.rows[r]
                    .fks
                    .get(f)
                    .map(|&t| self.find_row(t))
                    .ok_or_else(|| EvalError::NoRow(t.to_string()))
            }
            _ => Err(EvalError::NoRow(t.to_string())),
        }
    }

    pub fn eval_value(&self, t: &Term, env: &BTreeMap<String, usize>) -> Result<Value, EvalError> {
        match t {
            Term::Lit(l) => Ok(Value::Lit(l.clone())),
            Term::App(f, args) if args.is_empty() && self.gen_nulls.contains_key(f) => {
                Ok(self.resolve(&Value::Null(self.gen_nulls[f])))
            }
            Term::App(f, args) if args.len() == 1 && self.schema.attrs.contains_key(f) => {
                let r = self.eval_row(&args[0], env)?;
                self.rows[r]
                    .attrs
                    .get(f)
                    .map(|v| self.resolve(v))
                    .ok_or_else(|| EvalError::NoValue(t.to_string()))
            }
            Term::App(f, args)
                if ARITH_OPS.contains(&f.as_str())
                    || f == "concat"
                    || f == "floatToString" =>
            {
                let vals = args
                    .iter()
                    .map(|a| self.eval_value(a, env))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(reduce_op(f, vals))
            }
            _ => Err(EvalError::NoValue(t.to_string())),
        }
    }

    fn build(inst: &Instance, bounds: Bounds) -> Result<InstanceModel, SaturateError> {
        let mut m = InstanceModel::empty(inst.schema.clone());
        m.inputs = inst.equations.clone();
        let th = inst.theory();

        for (g, sort) in &inst.generators {
            if inst.schema.has_entity(sort) {
                let r = m.new_row(sort, Term::constant(g), false);
                m.gen_rows.insert(g.clone(), r);
            } else {
                let n = m.new_null(NullLabel::Named(g.clone()), sort);
                m.gen_nulls.insert(g.clone(), n);
            }
        }

        // Classify instance equations by sort once.
        for (l, r) in &inst.equations {
            let is_entity = th
                .typecheck(&Context::empty(), l)
                .map(|s| inst.schema.has_entity(&s))
                .unwrap_or(false);
            if is_entity {
                m.entity_eqs.push((l.clone(), r.clone()));
            } else {
                m.value_eqs.push((l.clone(), r.clone()));
            }
        }

        m.chase(bounds)?;

        if m.clashes.is_empty() {
            Ok(m)
        } else {
            Err(SaturateError::Inconsistent(Box::new(m)))
        }
    }

    /// Run the chase to fixpoint on the current state. Used both for the
    /// initial saturation and to re-close after external row merges.
    pub fn chase(&mut self, bounds: Bounds) -> Result<(), SaturateError> {
        let m = self;
        let empty_env = BTreeMap::new();
        let entity_eqs = m.entity_eqs.clone();
        let value_eqs = m.value_eqs.clone();
        let mut rounds = 0;
        loop {
            rounds += 1;
            if rounds > bounds.max_rounds || m.fresh_rows > bounds.max_fresh {
                return Err(m.non_termination(rounds));
            }
            let mut changed = false;

            for (l, r) in &entity_eqs {
                let (a, b) = match (m.eval_row_mut(l, &empty_env), m.eval_row_mut(r, &empty_env)) {
                    (Ok(a), Ok(b)) => (a, b),
                    _ => continue,
                };
                changed |= m.merge_rows(a, b, &format!("{l} = {r}"));
            }
            for (l, r) in &value_eqs {
                let (a, b) =
                    match (m.eval_value_mut(l, &empty_env), m.eval_value_mut(r, &empty_env)) {
                        (Ok(a), Ok(b)) => (a, b),
                        _ => continue,
                    };
                changed |= m.unify_values(&a, &b, &format!("{l} = {r}"));
            }

            // Totalize foreign keys and attributes.
            for i in 0..m.rows.len() {
                if m.rows[i].parent != i {
                    continue;
                }
                let entity = m.rows[i].entity.clone();
                let fks: Vec<String> =
                    m.schema.fks_of(&entity).iter().map(|(f, _)| f.to_string()).collect();
                for fk in fks {
                    let r = m.find_row(i);
                    if !m.rows[r].fks.contains_key(&fk) {
                        m.fk_image(r, &fk);
                        changed = true;
                        if m.fresh_rows > bounds.max_fresh {
                            return Err(m.non_termination(rounds));
                        }
                    }
                }
                let attrs: Vec<String> =
                    m.schema.attrs_of(&entity).iter().map(|(a, _)| a.to_string()).collect();
                for attr in attrs {
                    let r = m.find_row(i);
                    if !m.rows[r].attrs.contains_key(&attr) {
                        m.attr_value(r, &attr);
                        changed = true;
                    }
                }
            }

            // Data integrity constraints at every row.
            for c in m.schema.constraints.clone() {
                let (var, entity) = {
                    let vs = c.ctx.vars();
                    (vs[0].0.clone(), vs[0].1.clone())
                };
                let is_entity_eq = m.schema.has_entity(&c.sort);
                for i in 0..m.rows.len() {
                    if m.rows[i].parent != i || m.rows[i].entity != entity {
                        continue;
                    }
                    let mut env = BTreeMap::new();
                    env.insert(var.clone(), i);
                    let reason = format!("{c} @ {}", m.rows[m.find_row(i)].term);
                    if is_entity_eq {
                        if let (Ok(a), Ok(b)) =
                            (m.eval_row_mut(&c.lhs, &env), m.eval_row_mut(&c.rhs, &env))
                        {
                            changed |= m.merge_rows(a, b, &reason);
                        }
                    } else if let (Ok(a), Ok(b)) =
                        (m.eval_value_mut(&c.lhs, &env), m.eval_value_mut(&c.rhs, &env))
                    {
                        changed |= m.unify_values(&a, &b, &reason);
                    }
                    if m.fresh_rows > bounds.max_fresh {
                        return Err(m.non_termination(rounds));
                    }
                }
            }

            // Re-examine residual equations under new bindings. Progress
            // means the residual set changed or a bind/clash happened.
            let before = std::mem::take(&mut m.residuals);
            let trace_len = m.trace.len();
            for (a, b) in &before {
                let (ra, rb) = (m.resolve(a), m.resolve(b));
                if ra == rb {
                    continue;
                }
                m.unify_values(&ra, &rb, "residual");
            }
            let mut now = m.residuals.clone();
            now.sort();
            let mut old = before;
            old.sort();
            if now != old || m.trace.len() != trace_len {
                changed = true;
            }

            if !changed {
                break;
            }
        }
        Ok(())
    }

    fn non_termination(&self, rounds: usize) -> SaturateError {
        let mut by_entity = BTreeMap::new();
        for i in 0..self.rows.len() {
            if self.rows[i].parent == i {
                *by_entity.entry(self.rows[i].entity.clone()).or_insert(0usize) += 1;
            }
        }
        SaturateError::NonTermination { rounds, fresh: self.fresh_rows, by_entity }
    }

    /// Merge two row classes from outside the chase (e.g. a merge rule).
    pub fn merge(&mut self, a: usize, b: usize, reason: &str) -> bool {
        self.merge_rows(a, b, reason)
    }

    /// Unify two values from outside the chase.
    pub fn unify(&mut self, a: &Value, b: &Value, reason: &str) -> bool {
        self.unify_values(a, b, reason)
    }

    /// Root row indices of an entity, sorted by canonical term.
    pub fn rows_of(&self, entity: &str) -> Vec<usize> {
        let mut out: Vec<usize> = (0..self.rows.len())
            .filter(|&i| self.rows[i].parent == i && self.rows[i].entity == entity)
            .collect();
        out.sort_by(|&a, &b| self.rows[a].term.cmp(&self.rows[b].term));
        out
    }

    pub fn row_count(&self, entity: &str) -> usize {
        self.rows_of(entity).len()
    }

    pub fn row_term(&self, row: usize) -> &Term {
        &self.rows[self.find_row(row)].term
    }

    pub fn row_entity(&self, row: usize) -> &str {
        &self.rows[self.find_row(row)].entity
    }

    pub fn fk_of(&self, row: usize, fk: &str) -> Option<usize> {
        self.rows[self.find_row(row)].fks.get(fk).map(|&t| self.find_row(t))
    }

    pub fn attr_of(&self, row: usize, attr: &str) -> Option<Value> {
        self.rows[self.find_row(row)].attrs.get(attr).map(|v| self.resolve(v))
    }

    pub fn generator_row(&self, name: &str) -> Option<usize> {
        self.gen_rows.get(name).map(|&r| self.find_row(r))
    }

    /// The ground term a resolved value stands for.
    pub fn value_term(&self, v: &Value) -> Term {
        match self.resolve(v) {
            Value::Lit(l) => Term::Lit(l),
            Value::Null(n) => self.nulls[self.find_null(n)].label.term(),
            Value::Op(f, args) => {
                Term::App(f, args.iter().map(|a| self.value_term(a)).collect())
            }
        }
    }

    pub fn display_value(&self, v: &Value) -> String {
        match self.resolve(v) {
            Value::Null(_) => format!("?{}", self.value_term(v)),
            other => self.value_term(&other).to_string(),
        }
    }

    pub fn null_sort(&self, i: usize) -> &str {
        &self.nulls[self.find_null(i)].sort
    }

    pub fn null_label_term(&self, i: usize) -> Term {
        self.nulls[self.find_null(i)].label.term()
    }

    /// Unbound null classes, as (label term, sort), sorted.
    pub fn open_nulls(&self) -> Vec<(Term, String)> {
        let mut out: Vec<(Term, String)> = (0..self.nulls.len())
            .filter(|&i| self.nulls[i].parent == i && self.nulls[i].binding.is_none())
            .map(|i| (self.nulls[i].label.term(), self.nulls[i].sort.clone()))
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// All ground facts of the model as term equations; feeding these to
    /// `ground_congruence` replays every identification the chase made.
    pub fn ground_equations(&self) -> Vec<(Term, Term)> {
        let mut out = self.inputs.clone();
        for ev in &self.trace {
            if let MergeEvent::RowMerge { kept, dropped, .. } = ev {
                out.push((dropped.clone(), kept.clone()));
            }
        }
        for (g, &r) in &self.gen_rows {
            out.push((Term::constant(g), self.rows[self.find_row(r)].term.clone()));
        }
        for i in 0..self.rows.len() {
            if self.rows[i].parent != i {
                continue;
            }
            let rt = self.rows[i].term.clone();
            for (fk, &t) in &self.rows[i].fks {
                let tt = self.rows[self.find_row(t)].term.clone();
                out.push((Term::app(fk, vec![rt.clone()]), tt));
            }
            for (attr, v) in &self.rows[i].attrs {
                out.push((Term::app(attr, vec![rt.clone()]), self.value_term(v)));
            }
        }
        for i in 0..self.nulls.len() {
            let root = self.find_null(i);
            if root != i {
                out.push((self.nulls[i].label.term(), self.nulls[root].label.term()));
            }
            if let Some(b) = &self.nulls[root].binding {
                out.push((self.nulls[root].label.term(), self.value_term(b)));
            }
        }
        for (a, b) in &self.residuals {
            out.push((self.value_term(a), self.value_term(b)));
        }
        out
    }

    /// Deterministic textual form; equal strings mean equal models.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let mut entities = self.schema.entities.clone();
        entities.sort();
        for e in &entities {
            for i in self.rows_of(e) {
                s.push_str(&format!("{} {}\n", e, self.rows[i].term));
                for (fk, _) in self.schema.fks_of(e) {
                    if let Some(t) = self.fk_of(i, fk) {
                        s.push_str(&format!("  {fk} -> {}\n", self.rows[t].term));
                    }
                }
                for (attr, _) in self.schema.attrs_of(e) {
                    if let Some(v) = self.attr_of(i, attr) {
                        s.push_str(&format!("  {attr} = {}\n", self.display_value(&v)));
                    }
                }
            }
        }
        let nulls = self.open_nulls();
        if !nulls.is_empty() {
            s.push_str("nulls\n");
            for (t, sort) in nulls {
                s.push_str(&format!("  ?{t} : {sort}\n"));
            }
        }
        let mut res: Vec<String> = self
            .residuals
            .iter()
            .map(|(a, b)| format!("  {} = {}", self.display_value(a), self.display_value(b)))
            .collect();
        res.sort();
        res.dedup();
        if !res.is_empty() {
            s.push_str("equations\n");
            for r in res {
                s.push_str(&r);
                s.push('\n');
            }
        }
        s
    }
}

/// Exact evaluation of a type-side operation over values; irreducible
/// applications stay symbolic.
fn reduce_op(f: &str, args: Vec<Value>) -> Value {
    if args.len() == 2 && ARITH_OPS.contains(&f) {
        if let (Value::Lit(Literal::Num(a)), Value::Lit(Literal::Num(b))) = (&args[0], &args[1]) {
            let v = match f {
                "+" => a.add(b),
                "-" => a.sub(b),
                "*" => a.mul(b),
                "MAX" => a.max(b),
                "MIN" => a.min(b),
                _ => unreachable!(),
            };
            return Value::Lit(Literal::Num(v));
        }
    }
    if f == "concat" && args.len() == 2 {
        if let (Value::Lit(Literal::Str(a)), Value::Lit(Literal::Str(b))) = (&args[0], &args[1]) {
            return Value::Lit(Literal::Str(format!("{a}{b}")));
        }
    }
    if f == "floatToString" && args.len() == 1 {
        if let Value::Lit(Literal::Num(d)) = &args[0] {
            return Value::Lit(Literal::Str(d.to_string()));
        }
    }
    Value::Op(f.to_string(), args)
}

/// Push an instance forward along a schema mapping: same generators at
/// mapped sorts, equations translated.
pub fn sigma(
    m: &SchemaMapping,
    inst: &Instance,
    src: &Schema,
    tgt: &Schema,
) -> Result<Instance, TermError> {
    let morphism = m.to_morphism(src);
    let mut out = Instance::new(&inst.name, tgt.clone());
    for (g, sort) in &inst.generators {
        let tsort = if src.has_entity(sort) {
            m.entity_map
                .get(sort)
                .ok_or_else(|| TermError::UnmappedSort(sort.clone()))?
                .clone()
        } else {
            sort.clone()
        };
        out.add_generator(g, &tsort)?;
    }
    let tgt_th = out.theory();
    for (l, r) in &inst.equations {
        let tl = morphism.translate(&tgt_th, l)?;
        let tr = morphism.translate(&tgt_th, r)?;
        out.add_equation(tl, tr)?;
    }
    Ok(out)
}

/// Pull a saturated model back along a schema mapping: the rows of `F(e)`
/// become the rows of `e`, with fks and attrs given by the mapped terms.
pub fn delta(
    m: &SchemaMapping,
    model: &InstanceModel,
    src: &Schema,
) -> Result<InstanceModel, EvalError> {
    let mut out = InstanceModel::empty(src.clone());
    out.nulls = model.nulls.clone();
    out.gen_nulls = model.gen_nulls.clone();
    out.residuals = model.residuals.clone();

    // (source entity, target root) -> new row
    let mut index: BTreeMap<(String, usize), usize> = BTreeMap::new();
    for e in &src.entities {
        let fe = m.entity_map.get(e).ok_or_else(|| EvalError::NoRow(e.clone()))?;
        for r in model.rows_of(fe) {
            let i = out.new_row(e, model.rows[r].term.clone(), false);
            index.insert((e.clone(), r), i);
        }
    }
    for (sym, (dom, cod)) in src.symbols() {
        let (var, body) = m
            .symbol_map
            .get(sym)
            .ok_or_else(|| EvalError::NoValue(sym.clone()))?;
        let fe = &m.entity_map[dom];
        for r in model.rows_of(fe) {
            let i = index[&(dom.clone(), r)];
            let mut env = BTreeMap::new();
            env.insert(var.clone(), r);
            if src.has_entity(cod) {
                let t = model.eval_row(body, &env)?;
                let j = index[&(cod.clone(), t)];
                out.rows[i].fks.insert(sym.clone(), j);
            } else {
                let v = model.eval_value(body, &env)?;
                out.rows[i].attrs.insert(sym.clone(), v);
            }
        }
    }
    Ok(out)
}

/// Disjoint union of instances over one schema; generators are prefixed
/// with their instance name to keep them apart.
pub fn coproduct(instances: &[&Instance], schema: &Schema) -> Result<Instance, TermError> {
    let name = instances.iter().map(|i| i.name.as_str()).collect::<Vec<_>>().join("+");
    let mut out = Instance::new(&name, schema.clone());
    for inst in instances {
        let rename: BTreeMap<String, String> = inst
            .generators
            .keys()
            .map(|g| (g.clone(), format!("{}.{}", inst.name, g)))
            .collect();
        for (g, s) in &inst.generators {
            out.add_generator(&rename[g], s)?;
        }
        for (l, r) in &inst.equations {
            out.add_equation(rename_constants(l, &rename), rename_constants(r, &rename))?;
        }
    }
    Ok(out)
}

/// Rewrite generator constants according to `map`.
pub fn rename_constants(t: &Term, map: &BTreeMap<String, String>) -> Term {
    match t {
        Term::App(f, args) => {
            let name = if args.is_empty() {
                map.get(f).cloned().unwrap_or_else(|| f.clone())
            } else {
                f.clone()
            };
            Term::App(name, args.iter().map(|a| rename_constants(a, map)).collect())
        }
        _ => t.clone(),
    }
}

/// A data mapping between instances over one schema: each source
/// generator is sent to a closed term of the target.
#[derive(Clone, Debug, Default)]
pub struct DataMapping {
    pub name: String,
    pub source: String,
    pub target: String,
    pub gen_map: BTreeMap<String, Term>,
}

impl DataMapping {
    pub fn apply(&self, t: &Term) -> Term {
        match t {
            Term::App(f, args) if args.is_empty() => {
                self.gen_map.get(f).cloned().unwrap_or_else(|| t.clone())
            }
            Term::App(f, args) => {
                Term::App(f.clone(), args.iter().map(|a| self.apply(a)).collect())
            }
            _ => t.clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MappingViolation {
    pub equation: String,
    pub detail: String,
}

/// Check that a data mapping is a homomorphism: every source equation,
/// transported along the mapping, holds in the target's saturated model.
pub fn check_data_mapping(
    h: &DataMapping,
    source: &Instance,
    target: &InstanceModel,
) -> Vec<MappingViolation> {
    let mut out = Vec::new();
    let env = BTreeMap::new();
    let ground = target.ground_equations();
    for (l, r) in &source.equations {
        let hl = h.apply(l);
        let hr = h.apply(r);
        let ok = match (target.eval_row(&hl, &env), target.eval_row(&hr, &env)) {
            (Ok(a), Ok(b)) => a == b,
            _ => match (target.eval_value(&hl, &env), target.eval_value(&hr, &env)) {
                (Ok(a), Ok(b)) => {
                    a == b
                        || ground_congruence(
                            &ground,
                            (&target.value_term(&a), &target.value_term(&b)),
                            &typeside::reduce,
                        ) == Verdict::Proved
                }
                _ => false,
            },
        };
        if !ok {
            out.push(MappingViolation {
                equation: format!("{l} = {r}"),
                detail: format!("image {hl} = {hr} does not hold in {}", h.target),
            });
        }
    }
    out
}

/// Discharge verification conditions by evaluating both sides at every
/// row of a saturated model of the target schema.
pub fn check_vcs_on_model(vcs: &mut [VerificationCondition], model: &InstanceModel) {
    for vc in vcs.iter_mut() {
        if vc.status == VcStatus::Proved {
            continue;
        }
        let vars = vc.conjecture.ctx.vars();
        if vars.len() != 1 {
            vc.status = VcStatus::Unknown;
            vc.detail = "conjecture is not single-variable".into();
            continue;
        }
        let (var, entity) = (vars[0].0.clone(), vars[0].1.clone());
        let is_entity_eq = model.schema.has_entity(&vc.conjecture.sort);
        let mut failures = Vec::new();
        for r in model.rows_of(&entity) {
            let mut env = BTreeMap::new();
            env.insert(var.clone(), r);
            let ok = if is_entity_eq {
                match (
                    model.eval_row(&vc.conjecture.lhs, &env),
                    model.eval_row(&vc.conjecture.rhs, &env),
                ) {
                    (Ok(a), Ok(b)) => a == b,
                    _ => false,
                }
            } else {
                match (
                    model.eval_value(&vc.conjecture.lhs, &env),
                    model.eval_value(&vc.conjecture.rhs, &env),
                ) {
                    (Ok(a), Ok(b)) => a == b,
                    _ => false,
                }
            };
            if !ok {
                failures.push(model.row_term(r).to_string());
            }
        }
        if failures.is_empty() {
            vc.status = VcStatus::ProvedOnModel;
            vc.detail = format!("holds at all {} row(s)", model.row_count(&entity));
        } else {
            vc.status = VcStatus::Unknown;
            vc.detail = format!("fails at rows: {}", failures.join(", "));
        }
    }
}
