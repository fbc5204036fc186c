//! Schemas on the built-in type side, schema mappings (derived signature
//! morphisms that fix the type side), and functoriality verification
//! conditions.

use std::collections::BTreeMap;
use std::fmt;

use crate::eqlogic::{
    Context, Equation, FuncSymbol, SortKind, Term, TermError, Theory, TheoryMorphism,
};
use crate::typeside::{self, Symbolic};

/// A schema: entities, foreign keys, attributes, and single-variable
/// data integrity constraints, all extending the type side.
#[derive(Clone, Debug)]
pub struct Schema {
    pub name: String,
    pub typeside: Theory,
    pub entities: Vec<String>,
    /// fk name -> (source entity, target entity)
    pub fks: BTreeMap<String, (String, String)>,
    /// attr name -> (source entity, type)
    pub attrs: BTreeMap<String, (String, String)>,
    pub constraints: Vec<Equation>,
}

impl Schema {
    pub fn new(name: &str, typeside: Theory) -> Self {
        Schema {
            name: name.to_string(),
            typeside,
            entities: Vec::new(),
            fks: BTreeMap::new(),
            attrs: BTreeMap::new(),
            constraints: Vec::new(),
        }
    }

    pub fn add_entity(&mut self, name: &str) {
        if !self.entities.iter().any(|e| e == name) {
            self.entities.push(name.to_string());
        }
    }

    pub fn has_entity(&self, name: &str) -> bool {
        self.entities.iter().any(|e| e == name)
    }

    pub fn add_fk(&mut self, name: &str, src: &str, dst: &str) {
        self.fks.insert(name.to_string(), (src.to_string(), dst.to_string()));
    }

    pub fn add_attr(&mut self, name: &str, src: &str, ty: &str) {
        self.attrs.insert(name.to_string(), (src.to_string(), ty.to_string()));
    }

    /// All unary symbols (fks then attrs) with their (domain, codomain).
    pub fn symbols(&self) -> impl Iterator<Item = (&String, (&String, &String))> {
        self.fks
            .iter()
            .map(|(n, (s, d))| (n, (s, d)))
            .chain(self.attrs.iter().map(|(n, (s, d))| (n, (s, d))))
    }

    /// The underlying theory: type side extended with entities, unary
    /// symbols, and constraints.
    pub fn theory(&self) -> Theory {
        let mut th = self.typeside.extend(&self.name);
        for e in &self.entities {
            th.add_sort(e, SortKind::Entity).ok();
        }
        for (n, (s, d)) in &self.fks {
            th.add_symbol(FuncSymbol::new(n, &[s], d)).ok();
        }
        for (n, (s, d)) in &self.attrs {
            th.add_symbol(FuncSymbol::new(n, &[s], d)).ok();
        }
        for c in &self.constraints {
            th.add_equation(c.clone()).ok();
        }
        th
    }

    pub fn fks_of(&self, entity: &str) -> Vec<(&str, &str)> {
        self.fks
            .iter()
            .filter(|(_, (s, _))| s == entity)
            .map(|(n, (_, d))| (n.as_str(), d.as_str()))
            .collect()
    }

    pub fn attrs_of(&self, entity: &str) -> Vec<(&str, &str)> {
        self.attrs
            .iter()
            .filter(|(_, (s, _))| s == entity)
            .map(|(n, (_, d))| (n.as_str(), d.as_str()))
            .collect()
    }

    pub fn constraints_of(&self, entity: &str) -> Vec<&Equation> {
        self.constraints
            .iter()
            .filter(|c| c.ctx.vars().first().map(|(_, s)| s.as_str()) == Some(entity))
            .collect()
    }

    /// Structural validation: entity/type references resolve, symbols are
    /// unary entity-domained, constraints are single-entity-variable with
    /// both sides well formed at one sort.
    pub fn validate(&self) -> Vec<SchemaIssue> {
        let mut issues = Vec::new();
        let th = self.theory();
        for (n, (s, d)) in &self.fks {
            if !self.has_entity(s) {
                issues.push(SchemaIssue::NonUnarySymbol {
                    symbol: n.clone(),
                    detail: format!("foreign key domain {s} is not an entity"),
                });
            }
            if !self.has_entity(d) {
                issues.push(SchemaIssue::NonUnarySymbol {
                    symbol: n.clone(),
                    detail: format!("foreign key target {d} is not an entity"),
                });
            }
        }
        for (n, (s, d)) in &self.attrs {
            if !self.has_entity(s) {
                issues.push(SchemaIssue::NonUnarySymbol {
                    symbol: n.clone(),
                    detail: format!("attribute domain {s} is not an entity"),
                });
            }
            if self.typeside.sorts.get(d) != Some(&SortKind::Type) {
                issues.push(SchemaIssue::NonUnarySymbol {
                    symbol: n.clone(),
                    detail: format!("attribute codomain {d} is not a type"),
                });
            }
        }
        for c in &self.constraints {
            let vars = c.ctx.vars();
            let shape_ok = vars.len() == 1 && self.has_entity(&vars[0].1);
            if !shape_ok {
                issues.push(SchemaIssue::BadConstraintShape {
                    equation: c.to_string(),
                    detail: "constraint context must be a single entity variable".into(),
                });
                continue;
            }
            if let Err(e) = th
                .typecheck(&c.ctx, &c.lhs)
                .and_then(|ls| th.typecheck(&c.ctx, &c.rhs).map(|rs| (ls, rs)))
                .and_then(|(ls, rs)| {
                    if ls == rs {
                        Ok(())
                    } else {
                        Err(TermError::SortMismatch {
                            place: "constraint".into(),
                            expected: ls,
                            got: rs,
                        })
                    }
                })
            {
                issues.push(SchemaIssue::BadConstraintShape {
                    equation: c.to_string(),
                    detail: e.to_string(),
                });
            }
        }
        issues
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SchemaIssue {
    NonUnarySymbol { symbol: String, detail: String },
    BadConstraintShape { equation: String, detail: String },
}

impl fmt::Display for SchemaIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemaIssue::NonUnarySymbol { symbol, detail } => {
                write!(f, "symbol {symbol}: {detail}")
            }
            SchemaIssue::BadConstraintShape { equation, detail } => {
                write!(f, "constraint {equation}: {detail}")
            }
        }
    }
}

/// A schema mapping: entities to entities, fks/attrs to single-variable
/// terms, identity on the type side.
#[derive(Clone, Debug, Default)]
pub struct SchemaMapping {
    pub name: String,
    pub source: String,
    pub target: String,
    pub entity_map: BTreeMap<String, String>,
    /// symbol -> (bound variable, body term over target schema)
    pub symbol_map: BTreeMap<String, (String, Term)>,
}

impl SchemaMapping {
    pub fn identity(schema: &Schema) -> Self {
        let mut m = SchemaMapping {
            name: format!("id_{}", schema.name),
            source: schema.name.clone(),
            target: schema.name.clone(),
            ..Default::default()
        };
        for e in &schema.entities {
            m.entity_map.insert(e.clone(), e.clone());
        }
        for (n, (s, _)) in schema.symbols() {
            m.symbol_map.insert(
                n.clone(),
                ("x".to_string(), Term::app(n, vec![Term::var("x", s)])),
            );
        }
        m
    }

    /// The theory morphism this mapping denotes (identity on types).
    pub fn to_morphism(&self, src: &Schema) -> TheoryMorphism {
        let mut m = TheoryMorphism {
            name: self.name.clone(),
            source: self.source.clone(),
            target: self.target.clone(),
            ..Default::default()
        };
        for s in src.typeside.sorts.keys() {
            m.sort_map.insert(s.clone(), s.clone());
        }
        for (e, fe) in &self.entity_map {
            m.sort_map.insert(e.clone(), fe.clone());
        }
        for (sym, (var, body)) in &self.symbol_map {
            m.symbol_map.insert(sym.clone(), (vec![var.clone()], body.clone()));
        }
        m
    }

    /// Totality and sort-correctness of entity and symbol assignments.
    pub fn validate(&self, src: &Schema, tgt: &Schema) -> Vec<MappingIssue> {
        let mut issues = Vec::new();
        let tgt_th = tgt.theory();
        for e in &src.entities {
            match self.entity_map.get(e) {
                None => issues.push(MappingIssue::UnmappedEntity(e.clone())),
                Some(fe) if !tgt.has_entity(fe) => {
                    issues.push(MappingIssue::SortMismatch {
                        place: format!("entity {e}"),
                        detail: format!("{fe} is not an entity of {}", tgt.name),
                    });
                }
                Some(_) => {}
            }
        }
        for (sym, (dom, cod)) in src.symbols() {
            let Some((var, body)) = self.symbol_map.get(sym) else {
                issues.push(MappingIssue::UnmappedSymbol(sym.clone()));
                continue;
            };
            let Some(fdom) = self.entity_map.get(dom) else {
                continue; // already reported as unmapped entity
            };
            let want_cod = if src.has_entity(cod) {
                match self.entity_map.get(cod) {
                    Some(fc) => fc.clone(),
                    None => continue,
                }
            } else {
                cod.clone()
            };
            let ctx = Context::single(var, fdom);
            match tgt_th.typecheck(&ctx, body) {
                Ok(got) if got == want_cod => {}
                Ok(got) => issues.push(MappingIssue::SortMismatch {
                    place: format!("symbol {sym}"),
                    detail: format!("image has sort {got}, expected {want_cod}"),
                }),
                Err(e) => issues.push(MappingIssue::SortMismatch {
                    place: format!("symbol {sym}"),
                    detail: e.to_string(),
                }),
            }
        }
        issues
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MappingIssue {
    UnmappedEntity(String),
    UnmappedSymbol(String),
    SortMismatch { place: String, detail: String },
}

impl fmt::Display for MappingIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MappingIssue::UnmappedEntity(e) => write!(f, "entity {e} not mapped"),
            MappingIssue::UnmappedSymbol(s) => write!(f, "symbol {s} not mapped"),
            MappingIssue::SortMismatch { place, detail } => write!(f, "{place}: {detail}"),
        }
    }
}

/// Status of a verification condition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VcStatus {
    Proved,
    ProvedOnModel,
    Unknown,
}

impl fmt::Display for VcStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VcStatus::Proved => write!(f, "Proved"),
            VcStatus::ProvedOnModel => write!(f, "ProvedOnModel"),
            VcStatus::Unknown => write!(f, "Unknown"),
        }
    }
}

/// One functoriality obligation: a source equation and its translation
/// into the target schema.
#[derive(Clone, Debug)]
pub struct VerificationCondition {
    pub id: String,
    pub source_eq: Equation,
    pub conjecture: Equation,
    pub status: VcStatus,
    pub detail: String,
}

/// One VC per source-schema equation; the conjecture is the equation
/// translated along the mapping.
pub fn generate_functoriality_vcs(
    m: &SchemaMapping,
    src: &Schema,
    tgt: &Schema,
) -> Result<Vec<VerificationCondition>, TermError> {
    let morphism = m.to_morphism(src);
    let tgt_th = tgt.theory();
    src.constraints
        .iter()
        .enumerate()
        .map(|(i, eq)| {
            let conjecture = morphism.translate_equation(&tgt_th, eq)?;
            Ok(VerificationCondition {
                id: format!("{}_vc{:02}", m.name, i),
                source_eq: eq.clone(),
                conjecture,
                status: VcStatus::Unknown,
                detail: String::new(),
            })
        })
        .collect()
}

/// Discharge VCs symbolically against the target schema's theory.
pub fn check_vcs_symbolic(vcs: &mut [VerificationCondition], tgt: &Schema) {
    let th = tgt.theory();
    for vc in vcs.iter_mut() {
        match typeside::decide_equal_symbolic(&th, &vc.conjecture) {
            Symbolic::Proved => {
                vc.status = VcStatus::Proved;
                vc.detail.clear();
            }
            Symbolic::Unknown { rewrite_bound_exceeded } => {
                vc.status = VcStatus::Unknown;
                vc.detail = if rewrite_bound_exceeded {
                    "rewrite bound exceeded".into()
                } else {
                    "normal forms differ".into()
                };
            }
        }
    }
}
