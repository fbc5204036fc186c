//! Multi-sorted equational logic: sorts, signatures, terms, theories,
//! substitution, translation along derived signature morphisms, and a
//! ground congruence-closure decision procedure.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use thiserror::Error;

use crate::literal::Literal;

/// Whether a sort classifies type-side values or entity rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SortKind {
    Type,
    Entity,
}

/// A typed function symbol `f : s1 * ... * sk -> s`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FuncSymbol {
    pub name: String,
    pub arg_sorts: Vec<String>,
    pub result_sort: String,
}

impl FuncSymbol {
    pub fn new(name: &str, args: &[&str], result: &str) -> Self {
        FuncSymbol {
            name: name.to_string(),
            arg_sorts: args.iter().map(|s| s.to_string()).collect(),
            result_sort: result.to_string(),
        }
    }

    pub fn constant(name: &str, sort: &str) -> Self {
        Self::new(name, &[], sort)
    }
}

/// Terms over a signature. Literals carry their own sort.
#[derive(Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Var(String, String),
    App(String, Vec<Term>),
    Lit(Literal),
}

impl Term {
    pub fn var(name: &str, sort: &str) -> Term {
        Term::Var(name.to_string(), sort.to_string())
    }

    pub fn app(symbol: &str, args: Vec<Term>) -> Term {
        Term::App(symbol.to_string(), args)
    }

    pub fn constant(symbol: &str) -> Term {
        Term::App(symbol.to_string(), vec![])
    }

    pub fn num(s: &str) -> Term {
        Term::Lit(Literal::num(s))
    }

    pub fn size(&self) -> usize {
        match self {
            Term::Var(..) | Term::Lit(_) => 1,
            Term::App(_, args) => 1 + args.iter().map(Term::size).sum::<usize>(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Term::Var(..) | Term::Lit(_) => 1,
            Term::App(_, args) => 1 + args.iter().map(Term::depth).max().unwrap_or(0),
        }
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::Var(..) => false,
            Term::Lit(_) => true,
            Term::App(_, args) => args.iter().all(Term::is_ground),
        }
    }

    pub fn free_vars(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut Vec<(String, String)>) {
        match self {
            Term::Var(n, s) => {
                if !out.iter().any(|(m, _)| m == n) {
                    out.push((n.clone(), s.clone()));
                }
            }
            Term::App(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
            Term::Lit(_) => {}
        }
    }

    pub fn subterms(&self) -> Vec<&Term> {
        let mut out = vec![self];
        if let Term::App(_, args) = self {
            for a in args {
                out.extend(a.subterms());
            }
        }
        out
    }
}

// Total order: size first, then shape, then symbol name, then arguments.
// Used to pick canonical equivalence-class representatives.
impl Ord for Term {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        use std::cmp::Ordering;
        match self.size().cmp(&other.size()) {
            Ordering::Equal => {}
            ord => return ord,
        }
        fn rank(t: &Term) -> u8 {
            match t {
                Term::Lit(_) => 0,
                Term::Var(..) => 1,
                Term::App(..) => 2,
            }
        }
        match rank(self).cmp(&rank(other)) {
            Ordering::Equal => {}
            ord => return ord,
        }
        match (self, other) {
            (Term::Lit(a), Term::Lit(b)) => a.cmp(b),
            (Term::Var(n1, s1), Term::Var(n2, s2)) => (n1, s1).cmp(&(n2, s2)),
            (Term::App(f, xs), Term::App(g, ys)) => f.cmp(g).then_with(|| xs.cmp(ys)),
            _ => unreachable!(),
        }
    }
}

impl PartialOrd for Term {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Quote an identifier for display when it is not a plain word.
pub fn quote_ident(name: &str) -> String {
    let plain = !name.is_empty()
        && name.chars().next().unwrap().is_ascii_alphabetic()
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    if plain {
        name.to_string()
    } else {
        format!("\"{}\"", name.replace('"', "\\\""))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Var(n, _) => write!(f, "{}", quote_ident(n)),
            Term::Lit(l) => write!(f, "{l}"),
            Term::App(sym, args) => {
                if args.len() == 2 && matches!(sym.as_str(), "+" | "-" | "*") {
                    return write!(f, "({} {sym} {})", args[0], args[1]);
                }
                write!(f, "{}", quote_ident(sym))?;
                if !args.is_empty() {
                    write!(f, "(")?;
                    for (i, a) in args.iter().enumerate() {
                        if i > 0 {
                            write!(f, ", ")?;
                        }
                        write!(f, "{a}")?;
                    }
                    write!(f, ")")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Typing context: ordered variable/sort pairs, no duplicates.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Context {
    vars: Vec<(String, String)>,
}

impl Context {
    pub fn empty() -> Self {
        Context { vars: Vec::new() }
    }

    pub fn new(vars: Vec<(String, String)>) -> Result<Self, TermError> {
        let mut seen = std::collections::HashSet::new();
        for (v, _) in &vars {
            if !seen.insert(v.clone()) {
                return Err(TermError::DuplicateVariable(v.clone()));
            }
        }
        Ok(Context { vars })
    }

    pub fn single(var: &str, sort: &str) -> Self {
        Context { vars: vec![(var.to_string(), sort.to_string())] }
    }

    pub fn sort_of(&self, var: &str) -> Option<&str> {
        self.vars.iter().find(|(v, _)| v == var).map(|(_, s)| s.as_str())
    }

    pub fn vars(&self) -> &[(String, String)] {
        &self.vars
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }
}

/// A universally quantified equation `forall ctx, lhs = rhs : sort`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Equation {
    pub ctx: Context,
    pub lhs: Term,
    pub rhs: Term,
    pub sort: String,
}

impl fmt::Display for Equation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.ctx.is_empty() {
            write!(f, "forall ")?;
            for (i, (v, s)) in self.ctx.vars().iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{}:{}", quote_ident(v), quote_ident(s))?;
            }
            write!(f, ". ")?;
        }
        write!(f, "{} = {}", self.lhs, self.rhs)
    }
}

/// Errors raised by term formation and manipulation.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TermError {
    #[error("unknown symbol {0}")]
    UnknownSymbol(String),
    #[error("unknown sort {0}")]
    UnknownSort(String),
    #[error("symbol {symbol}: expected {expected} arguments, got {got}")]
    ArityMismatch { symbol: String, expected: usize, got: usize },
    #[error("sort mismatch at {place}: expected {expected}, got {got}")]
    SortMismatch { place: String, expected: String, got: String },
    #[error("unbound variable {0}")]
    UnboundVariable(String),
    #[error("variable {0} bound twice in context")]
    DuplicateVariable(String),
    #[error("no binding for variable {0} in substitution")]
    MissingBinding(String),
    #[error("symbol {0} not mapped by morphism")]
    UnmappedSymbol(String),
    #[error("sort {0} not mapped by morphism")]
    UnmappedSort(String),
    #[error("symbol {0} already declared with a different signature")]
    SymbolClash(String),
    #[error("sort {0} already declared with a different kind")]
    SortClash(String),
    #[error("theory extension removed declarations")]
    NonExtension,
}

/// A theory: sorts, symbols, equations, with optional extension lineage.
///
/// Extensions are stored flattened; `parent` records the name of the theory
/// this one extends, and `extend` enforces add-only growth.
#[derive(Clone, Debug, Default)]
pub struct Theory {
    pub name: String,
    pub sorts: BTreeMap<String, SortKind>,
    pub symbols: BTreeMap<String, FuncSymbol>,
    pub equations: Vec<Equation>,
    pub parent: Option<String>,
}

impl Theory {
    pub fn new(name: &str) -> Self {
        Theory { name: name.to_string(), ..Default::default() }
    }

    pub fn add_sort(&mut self, name: &str, kind: SortKind) -> Result<(), TermError> {
        match self.sorts.get(name) {
            Some(k) if *k != kind => Err(TermError::SortClash(name.to_string())),
            _ => {
                self.sorts.insert(name.to_string(), kind);
                Ok(())
            }
        }
    }

    pub fn add_symbol(&mut self, sym: FuncSymbol) -> Result<(), TermError> {
        for s in sym.arg_sorts.iter().chain(std::iter::once(&sym.result_sort)) {
            if !self.sorts.contains_key(s) {
                return Err(TermError::UnknownSort(s.clone()));
            }
        }
        match self.symbols.get(&sym.name) {
            Some(prev) if *prev != sym => Err(TermError::SymbolClash(sym.name.clone())),
            _ => {
                self.symbols.insert(sym.name.clone(), sym);
                Ok(())
            }
        }
    }

    pub fn add_equation(&mut self, eq: Equation) -> Result<(), TermError> {
        let ls = self.typecheck(&eq.ctx, &eq.lhs)?;
        let rs = self.typecheck(&eq.ctx, &eq.rhs)?;
        if ls != rs || ls != eq.sort {
            return Err(TermError::SortMismatch {
                place: format!("equation {} = {}", eq.lhs, eq.rhs),
                expected: ls,
                got: rs,
            });
        }
        self.equations.push(eq);
        Ok(())
    }

    /// Build an extension of this theory under a new name.
    pub fn extend(&self, name: &str) -> Theory {
        let mut t = self.clone();
        t.parent = Some(self.name.clone());
        t.name = name.to_string();
        t
    }

    /// Check that `other` extends `self` (adds, never removes).
    pub fn is_extended_by(&self, other: &Theory) -> bool {
        self.sorts.iter().all(|(n, k)| other.sorts.get(n) == Some(k))
            && self.symbols.iter().all(|(n, s)| other.symbols.get(n) == Some(s))
            && self.equations.iter().all(|e| other.equations.contains(e))
    }

    pub fn symbol(&self, name: &str) -> Option<&FuncSymbol> {
        self.symbols.get(name)
    }

    /// Infer the unique sort of `t` in context `ctx`, or report why not.
    pub fn typecheck(&self, ctx: &Context, t: &Term) -> Result<String, TermError> {
        match t {
            Term::Lit(l) => Ok(l.sort_name().to_string()),
            Term::Var(name, sort) => match ctx.sort_of(name) {
                None => Err(TermError::UnboundVariable(name.clone())),
                Some(s) if s == sort => Ok(s.to_string()),
                Some(s) => Err(TermError::SortMismatch {
                    place: format!("variable {name}"),
                    expected: s.to_string(),
                    got: sort.clone(),
                }),
            },
            Term::App(f, args) => {
                let sym = self
                    .symbols
                    .get(f)
                    .ok_or_else(|| TermError::UnknownSymbol(f.clone()))?;
                if sym.arg_sorts.len() != args.len() {
                    return Err(TermError::ArityMismatch {
                        symbol: f.clone(),
                        expected: sym.arg_sorts.len(),
                        got: args.len(),
                    });
                }
                for (i, (arg, want)) in args.iter().zip(&sym.arg_sorts).enumerate() {
                    let got = self.typecheck(ctx, arg)?;
                    if &got != want {
                        return Err(TermError::SortMismatch {
                            place: format!("argument {} of {f}", i + 1),
                            expected: want.clone(),
                            got,
                        });
                    }
                }
                Ok(sym.result_sort.clone())
            }
        }
    }
}

/// Capture-free simultaneous substitution. Every free variable of `t`
/// must be bound in `env`.
pub fn substitute(t: &Term, env: &BTreeMap<String, Term>) -> Result<Term, TermError> {
    match t {
        Term::Lit(_) => Ok(t.clone()),
        Term::Var(name, _) => env
            .get(name)
            .cloned()
            .ok_or_else(|| TermError::MissingBinding(name.clone())),
        Term::App(f, args) => {
            let args = args
                .iter()
                .map(|a| substitute(a, env))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Term::App(f.clone(), args))
        }
    }
}

/// Derived signature morphism: sorts to sorts, symbols to open terms
/// written with one bound variable per argument.
#[derive(Clone, Debug, Default)]
pub struct TheoryMorphism {
    pub name: String,
    pub source: String,
    pub target: String,
    pub sort_map: BTreeMap<String, String>,
    /// symbol -> (bound variable names, body term over those variables)
    pub symbol_map: BTreeMap<String, (Vec<String>, Term)>,
}

impl TheoryMorphism {
    pub fn identity(theory: &Theory) -> Self {
        let mut m = TheoryMorphism {
            name: format!("id_{}", theory.name),
            source: theory.name.clone(),
            target: theory.name.clone(),
            ..Default::default()
        };
        for s in theory.sorts.keys() {
            m.sort_map.insert(s.clone(), s.clone());
        }
        for (name, sym) in &theory.symbols {
            let vars: Vec<String> =
                (0..sym.arg_sorts.len()).map(|i| format!("v{i}")).collect();
            let args = vars
                .iter()
                .zip(&sym.arg_sorts)
                .map(|(v, s)| Term::Var(v.clone(), s.clone()))
                .collect();
            m.symbol_map.insert(name.clone(), (vars, Term::App(name.clone(), args)));
        }
        m
    }

    pub fn map_sort(&self, sort: &str) -> Result<&str, TermError> {
        self.sort_map
            .get(sort)
            .map(String::as_str)
            .ok_or_else(|| TermError::UnmappedSort(sort.to_string()))
    }

    /// Homomorphic extension of the morphism to terms.
    ///
    /// Symbols absent from `symbol_map` but present identically in the
    /// target theory (the type side, which mappings fix pointwise) pass
    /// through unchanged.
    pub fn translate(&self, target: &Theory, t: &Term) -> Result<Term, TermError> {
        match t {
            Term::Lit(_) => Ok(t.clone()),
            Term::Var(name, sort) => {
                Ok(Term::Var(name.clone(), self.map_sort(sort)?.to_string()))
            }
            Term::App(f, args) => {
                let targs = args
                    .iter()
                    .map(|a| self.translate(target, a))
                    .collect::<Result<Vec<_>, _>>()?;
                match self.symbol_map.get(f) {
                    Some((vars, body)) => {
                        let env: BTreeMap<String, Term> =
                            vars.iter().cloned().zip(targs).collect();
                        substitute(body, &env)
                    }
                    None if target.symbols.contains_key(f) => {
                        Ok(Term::App(f.clone(), targs))
                    }
                    None => Err(TermError::UnmappedSymbol(f.clone())),
                }
            }
        }
    }

    pub fn translate_context(&self, ctx: &Context) -> Result<Context, TermError> {
        let vars = ctx
            .vars()
            .iter()
            .map(|(v, s)| Ok((v.clone(), self.map_sort(s)?.to_string())))
            .collect::<Result<Vec<_>, TermError>>()?;
        Context::new(vars)
    }

    pub fn translate_equation(
        &self,
        target: &Theory,
        eq: &Equation,
    ) -> Result<Equation, TermError> {
        let ctx = self.translate_context(&eq.ctx)?;
        let lhs = self.translate(target, &eq.lhs)?;
        let rhs = self.translate(target, &eq.rhs)?;
        let sort = target.typecheck(&ctx, &lhs)?;
        Ok(Equation { ctx, lhs, rhs, sort })
    }
}

/// Result of a (semi-)decision procedure: a definite proof or no answer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Proved,
    Unknown,
}

const CONGRUENCE_ROUND_CAP: usize = 10_000;

/// Ground congruence closure.
///
/// Decides whether `goal` follows from the ground `equations` under the
/// smallest congruence containing them, with every term additionally
/// normalized through `normalize` (the type-side reducer) before and
/// during closure. All inputs must be closed.
pub fn ground_congruence(
    equations: &[(Term, Term)],
    goal: (&Term, &Term),
    normalize: &dyn Fn(&Term) -> Term,
) -> Verdict {
    let mut cc = Congruence::new(normalize);
    for (l, r) in equations {
        let a = cc.add(l);
        let b = cc.add(r);
        cc.merge(a, b);
    }
    let gl = cc.add(goal.0);
    let gr = cc.add(goal.1);
    if !cc.close() {
        return Verdict::Unknown;
    }
    if cc.find(gl) == cc.find(gr) {
        Verdict::Proved
    } else {
        Verdict::Unknown
    }
}

struct Congruence<'a> {
    normalize: &'a dyn Fn(&Term) -> Term,
    parent: Vec<usize>,
    /// least term known for each class root
    rep: Vec<Term>,
    ids: HashMap<Term, usize>,
    terms: Vec<Term>,
}

impl<'a> Congruence<'a> {
    fn new(normalize: &'a dyn Fn(&Term) -> Term) -> Self {
        Congruence {
            normalize,
            parent: Vec::new(),
            rep: Vec::new(),
            ids: HashMap::new(),
            terms: Vec::new(),
        }
    }

    fn add(&mut self, t: &Term) -> usize {
        let t = (self.normalize)(t);
        self.add_normalized(&t)
    }

    fn add_normalized(&mut self, t: &Term) -> usize {
        if let Some(&id) = self.ids.get(t) {
            return id;
        }
        if let Term::App(_, args) = t {
            for a in args {
                self.add_normalized(a);
            }
        }
        let id = self.parent.len();
        self.parent.push(id);
        self.rep.push(t.clone());
        self.ids.insert(t.clone(), id);
        self.terms.push(t.clone());
        id
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn merge(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let keep = if self.rep[ra] <= self.rep[rb] { ra } else { rb };
        let drop = if keep == ra { rb } else { ra };
        self.parent[drop] = keep;
        true
    }

    /// Run congruence + normalization to fixpoint. Returns false when the
    /// round cap is hit (caller reports Unknown).
    fn close(&mut self) -> bool {
        for _ in 0..CONGRUENCE_ROUND_CAP {
            let mut changed = false;

            // Congruence: identical symbols with congruent arguments.
            let n = self.terms.len();
            for i in 0..n {
                for j in (i + 1)..n {
                    let congruent = match (&self.terms[i], &self.terms[j]) {
                        (Term::App(f, xs), Term::App(g, ys))
                            if f == g && xs.len() == ys.len() =>
                        {
                            let pairs: Vec<(usize, usize)> = xs
                                .iter()
                                .zip(ys)
                                .map(|(x, y)| (self.ids[x], self.ids[y]))
                                .collect();
                            pairs.iter().all(|&(x, y)| {
                                let (fx, fy) = (self.find(x), self.find(y));
                                fx == fy
                            })
                        }
                        _ => false,
                    };
                    if congruent && self.merge(i, j) {
                        changed = true;
                    }
                }
            }

            // Rebuild: replace arguments by class representatives and
            // re-normalize; merge the result with the original.
            for i in 0..self.terms.len() {
                let rebuilt = match self.terms[i].clone() {
                    Term::App(f, args) => {
                        let mut new_args = Vec::with_capacity(args.len());
                        for a in &args {
                            let id = self.ids[a];
                            let root = self.find(id);
                            new_args.push(self.rep[root].clone());
                        }
                        Term::App(f, new_args)
                    }
                    other => other,
                };
                let normalized = (self.normalize)(&rebuilt);
                let j = self.add_normalized(&normalized);
                if self.merge(i, j) {
                    changed = true;
                }
                // Refresh class representative with the smaller term.
                let root = self.find(i);
                if normalized < self.rep[root] {
                    self.rep[root] = normalized;
                    changed = true;
                }
            }

            if !changed {
                return true;
            }
        }
        false
    }
}
