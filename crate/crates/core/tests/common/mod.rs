//! Shared test support: fixture paths, and independent oracles that
//! re-derive results by brute force so the library can be checked
//! against something it does not share code with.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use ologs::eqlogic::Term;
use ologs::instance::{Instance, SaturateError, Value};
use ologs::integrate::{colimit_schemas, mediating_mapping, SchemaDiagram};
use ologs::literal::{Decimal, Literal};
use ologs::schema::{Schema, SchemaMapping};
use ologs::typeside::{excel_typeside, FLOAT};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

pub fn read_fixture(rel: &str) -> String {
    let p = fixture(rel);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

// ---- naive least-congruence oracle -----------------------------------------
//
// A deliberately simple-minded account of saturation for one family of
// instances: a single entity E with a total foreign key f : E -> E given
// explicitly on every generator, an attribute v : E -> Float, and ground
// identifications between generators. The least congruence is computed
// by fixpoint over the finite generator set, with no shared machinery.

pub struct RandomCase {
    pub instance: Instance,
    pub n: usize,
    /// f(g_i) = g_{sigma[i]}
    pub sigma: Vec<usize>,
    /// v(g_i) = literal
    pub vals: Vec<(usize, i64)>,
    /// g_i = g_j
    pub ids: Vec<(usize, usize)>,
}

pub fn loop_schema() -> Schema {
    let mut s = Schema::new("L", excel_typeside(false));
    s.add_entity("E");
    s.add_fk("f", "E", "E");
    s.add_attr("v", "E", FLOAT);
    s
}

pub fn random_case(seed: u64) -> RandomCase {
    let mut rng = StdRng::seed_from_u64(seed);
    let n = rng.gen_range(1..=8);
    let schema = loop_schema();
    let mut inst = Instance::new("R", schema);
    for i in 0..n {
        inst.add_generator(&format!("g{i}"), "E").unwrap();
    }
    let mut sigma = Vec::new();
    for i in 0..n {
        let j = rng.gen_range(0..n);
        sigma.push(j);
        inst.add_equation(
            Term::app("f", vec![Term::constant(&format!("g{i}"))]),
            Term::constant(&format!("g{j}")),
        )
        .unwrap();
    }
    let mut vals = Vec::new();
    for i in 0..n {
        if rng.gen_bool(0.5) {
            let k = rng.gen_range(1..=4i64);
            vals.push((i, k));
            inst.add_equation(
                Term::app("v", vec![Term::constant(&format!("g{i}"))]),
                Term::num(&k.to_string()),
            )
            .unwrap();
        }
    }
    let mut ids = Vec::new();
    for _ in 0..rng.gen_range(0..=n / 2) {
        let i = rng.gen_range(0..n);
        let j = rng.gen_range(0..n);
        ids.push((i, j));
        inst.add_equation(
            Term::constant(&format!("g{i}")),
            Term::constant(&format!("g{j}")),
        )
        .unwrap();
    }
    RandomCase { instance: inst, n, sigma, vals, ids }
}

struct Uf(Vec<usize>);

impl Uf {
    fn new(n: usize) -> Self {
        Uf((0..n).collect())
    }
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (a, b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        self.0[a.max(b)] = a.min(b);
        true
    }
}

pub struct NaiveOutcome {
    /// class representative per generator index
    pub class: Vec<usize>,
    /// representative -> forced literal, when any
    pub value: BTreeMap<usize, i64>,
    /// two distinct literals forced onto one class
    pub clash: bool,
}

/// Least congruence on the generators: close the identifications under
/// "equal arguments give equal f-images" until nothing moves, then pool
/// the attribute literals per class.
pub fn naive_congruence(case: &RandomCase) -> NaiveOutcome {
    let mut uf = Uf::new(case.n);
    for &(i, j) in &case.ids {
        uf.union(i, j);
    }
    loop {
        let mut changed = false;
        for i in 0..case.n {
            for j in (i + 1)..case.n {
                if uf.find(i) == uf.find(j) && uf.union(case.sigma[i], case.sigma[j]) {
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let class: Vec<usize> = (0..case.n).map(|i| uf.find(i)).collect();
    let mut pools: BTreeMap<usize, BTreeSet<i64>> = BTreeMap::new();
    for &(i, k) in &case.vals {
        pools.entry(class[i]).or_default().insert(k);
    }
    let clash = pools.values().any(|s| s.len() > 1);
    let value = pools
        .into_iter()
        .filter(|(_, s)| s.len() == 1)
        .map(|(c, s)| (c, *s.iter().next().unwrap()))
        .collect();
    NaiveOutcome { class, value, clash }
}

/// Saturate one random instance and compare it point for point with the
/// naive oracle. Returns a description of the first disagreement.
pub fn check_saturate_vs_oracle(seed: u64) -> Result<(), String> {
    let case = random_case(seed);
    let oracle = naive_congruence(&case);
    let model = match case.instance.saturate() {
        Ok(m) => {
            if oracle.clash {
                return Err(format!("seed {seed}: oracle clashes, saturate succeeded"));
            }
            m
        }
        Err(SaturateError::Inconsistent(_)) => {
            return if oracle.clash {
                Ok(())
            } else {
                Err(format!("seed {seed}: saturate clashes, oracle is consistent"))
            };
        }
        Err(e) => return Err(format!("seed {seed}: saturate failed: {e}")),
    };
    let classes: BTreeSet<usize> = oracle.class.iter().copied().collect();
    if model.row_count("E") != classes.len() {
        return Err(format!(
            "seed {seed}: {} rows, oracle has {} classes",
            model.row_count("E"),
            classes.len()
        ));
    }
    let row = |i: usize| model.generator_row(&format!("g{i}")).expect("generator row");
    for i in 0..case.n {
        for j in (i + 1)..case.n {
            let same = oracle.class[i] == oracle.class[j];
            if (row(i) == row(j)) != same {
                return Err(format!("seed {seed}: g{i}/g{j} partition mismatch"));
            }
        }
        if model.fk_of(row(i), "f") != Some(row(case.sigma[i])) {
            return Err(format!("seed {seed}: f(g{i}) mismatch"));
        }
        let want = oracle.value.get(&oracle.class[i]);
        match (model.attr_of(row(i), "v"), want) {
            (Some(Value::Lit(Literal::Num(d))), Some(&k)) => {
                if d != Decimal::from_int(k) {
                    return Err(format!("seed {seed}: v(g{i}) = {d}, oracle says {k}"));
                }
            }
            (Some(Value::Lit(l)), None) => {
                return Err(format!("seed {seed}: v(g{i}) = {l}, oracle has no value"));
            }
            (_, Some(&k)) => {
                return Err(format!("seed {seed}: v(g{i}) undetermined, oracle says {k}"));
            }
            (_, None) => {}
        }
    }
    Ok(())
}

// ---- brute-force initiality oracle ------------------------------------------
//
// For the two-entity inverse-loop schema (p : P -> Q, q : Q -> P with
// q(p(x)) = x and p(q(y)) = y, one generator a : P), enumerate every
// model with at most two elements per entity and check that the chased
// model admits exactly one homomorphism into each of them.

pub fn check_pq_initiality(model: &ologs::instance::InstanceModel) -> Result<usize, String> {
    let p_rows = model.rows_of("P");
    let q_rows = model.rows_of("Q");
    let a = model.generator_row("a").ok_or("no row for generator a")?;
    let mut checked = 0usize;
    for sp in 1..=2usize {
        for sq in 1..=2usize {
            // all functions p : [sp] -> [sq] and q : [sq] -> [sp]
            for pf in all_funcs(sp, sq) {
                for qf in all_funcs(sq, sp) {
                    let inverse = (0..sp).all(|x| qf[pf[x]] == x)
                        && (0..sq).all(|y| pf[qf[y]] == y);
                    if !inverse {
                        continue;
                    }
                    for a_img in 0..sp {
                        let homs =
                            count_homs(model, &p_rows, &q_rows, a, &pf, &qf, a_img)?;
                        if homs != 1 {
                            return Err(format!(
                                "model sp={sp} sq={sq} p={pf:?} q={qf:?} a={a_img}: \
                                 {homs} homomorphisms, expected exactly 1"
                            ));
                        }
                        checked += 1;
                    }
                }
            }
        }
    }
    Ok(checked)
}

fn all_funcs(dom: usize, cod: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..dom {
        out = out
            .into_iter()
            .flat_map(|f| {
                (0..cod).map(move |y| {
                    let mut g = f.clone();
                    g.push(y);
                    g
                })
            })
            .collect();
    }
    out
}

/// Homomorphisms from the chased model determined by the generator
/// image: propagate along p and q from `a` and count the consistent
/// total assignments (0 when propagation contradicts itself or leaves a
/// row unreachable, since an unreachable row would allow several images).
fn count_homs(
    model: &ologs::instance::InstanceModel,
    p_rows: &[usize],
    q_rows: &[usize],
    a: usize,
    pf: &[usize],
    qf: &[usize],
    a_img: usize,
) -> Result<usize, String> {
    let mut img: BTreeMap<usize, usize> = BTreeMap::new();
    img.insert(a, a_img);
    let mut queue = vec![a];
    while let Some(r) = queue.pop() {
        let i = img[&r];
        let (fk, f): (&str, &[usize]) = if p_rows.contains(&r) {
            ("p", pf)
        } else {
            ("q", qf)
        };
        let Some(next) = model.fk_of(r, fk) else {
            return Err(format!("row {r} has no {fk} image in the chased model"));
        };
        let want = f[i];
        match img.get(&next) {
            Some(&have) if have != want => return Ok(0),
            Some(_) => {}
            None => {
                img.insert(next, want);
                queue.push(next);
            }
        }
    }
    let total = p_rows.iter().chain(q_rows).all(|r| img.contains_key(r));
    Ok(if total { 1 } else { 0 })
}

// ---- exhaustive pushout universal property ----------------------------------

fn entity_mapping(name: &str, src: &str, tgt: &str, pairs: &[(&str, &str)]) -> SchemaMapping {
    let mut m = SchemaMapping {
        name: name.into(),
        source: src.into(),
        target: tgt.into(),
        ..Default::default()
    };
    for (a, b) in pairs {
        m.entity_map.insert((*a).to_string(), (*b).to_string());
    }
    m
}

/// Enumerate every cocone out of a fixed span into targets of up to
/// three entities and check that each one factors through the computed
/// colimit by exactly one mapping. Returns the number of cocones tried.
pub fn check_pushout_universal() -> Result<usize, String> {
    let ts = excel_typeside(false);
    let mut o = Schema::new("O", ts.clone());
    o.add_entity("X");
    o.add_entity("Y");
    let mut a = Schema::new("A", ts.clone());
    for e in ["A1", "A2", "A3"] {
        a.add_entity(e);
    }
    let mut b = Schema::new("B", ts.clone());
    for e in ["B1", "B2"] {
        b.add_entity(e);
    }
    let mut diagram = SchemaDiagram::default();
    diagram.schemas.insert("O".into(), o);
    diagram.schemas.insert("A".into(), a);
    diagram.schemas.insert("B".into(), b);
    diagram
        .mappings
        .push(entity_mapping("F", "O", "A", &[("X", "A1"), ("Y", "A2")]));
    diagram
        .mappings
        .push(entity_mapping("G", "O", "B", &[("X", "B1"), ("Y", "B2")]));
    let colimit = colimit_schemas(&diagram, &BTreeMap::new()).map_err(|e| e.to_string())?;

    let a_ents = ["A1", "A2", "A3"];
    let b_ents = ["B1", "B2"];
    let mut cocones = 0usize;
    for k in 1..=3usize {
        let t_ents: Vec<String> = (1..=k).map(|i| format!("T{i}")).collect();
        let mut t = Schema::new("T", ts.clone());
        for e in &t_ents {
            t.add_entity(e);
        }
        for fa in all_funcs(a_ents.len(), k) {
            for fb in all_funcs(b_ents.len(), k) {
                // cocone condition: the two legs agree on the overlap
                if fa[0] != fb[0] || fa[1] != fb[1] {
                    continue;
                }
                cocones += 1;
                let ma_pairs: Vec<(&str, &str)> = a_ents
                    .iter()
                    .zip(&fa)
                    .map(|(e, &i)| (*e, t_ents[i].as_str()))
                    .collect();
                let mb_pairs: Vec<(&str, &str)> = b_ents
                    .iter()
                    .zip(&fb)
                    .map(|(e, &i)| (*e, t_ents[i].as_str()))
                    .collect();
                let mut cocone = BTreeMap::new();
                cocone.insert("A".to_string(), entity_mapping("CA", "A", "T", &ma_pairs));
                cocone.insert("B".to_string(), entity_mapping("CB", "B", "T", &mb_pairs));
                let Some(m) = mediating_mapping(&colimit, &diagram, &cocone, &t) else {
                    return Err(format!("no mediating mapping for fa={fa:?} fb={fb:?}"));
                };
                // the mediating mapping must make both triangles commute
                for (sink, leg) in &cocone {
                    let inj = &colimit.injections[sink];
                    for (e, img) in &leg.entity_map {
                        let via = m.entity_map.get(&inj.entity_map[e]);
                        if via != Some(img) {
                            return Err(format!(
                                "triangle over {sink} breaks at {e}: {via:?} != {img}"
                            ));
                        }
                    }
                }
                // and it must be the only mapping that does
                let cls: Vec<&String> = colimit.schema.entities.iter().collect();
                let mut matching = 0usize;
                for u in all_funcs(cls.len(), k) {
                    let assign: BTreeMap<&String, &str> = cls
                        .iter()
                        .zip(&u)
                        .map(|(c, &i)| (*c, t_ents[i].as_str()))
                        .collect();
                    let commutes = cocone.iter().all(|(sink, leg)| {
                        let inj = &colimit.injections[sink];
                        leg.entity_map.iter().all(|(e, img)| {
                            assign[&inj.entity_map[e]] == img.as_str()
                        })
                    });
                    if commutes {
                        matching += 1;
                        let same = assign
                            .iter()
                            .all(|(c, i)| m.entity_map.get(*c).map(String::as_str) == Some(*i));
                        if !same {
                            return Err(format!(
                                "a second factorization exists for fa={fa:?} fb={fb:?}"
                            ));
                        }
                    }
                }
                if matching != 1 {
                    return Err(format!(
                        "{matching} factorizations for fa={fa:?} fb={fb:?}, expected 1"
                    ));
                }
            }
        }
    }
    Ok(cocones)
}

// ---- independent TPTP FOF syntax validator ----------------------------------

#[derive(Debug, PartialEq)]
enum Tok {
    LWord(String),
    UWord(String),
    Punct(char),
    Bang,
    Question,
    Eq,
    Neq,
    Tilde,
    And,
    Or,
    Implies,
    Iff,
}

fn tokenize_tptp(text: &str) -> Result<Vec<Tok>, String> {
    let mut toks = Vec::new();
    let b: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        match c {
            '%' => {
                while i < b.len() && b[i] != '\n' {
                    i += 1;
                }
            }
            c if c.is_whitespace() => i += 1,
            '(' | ')' | '[' | ']' | ',' | ':' | '.' => {
                toks.push(Tok::Punct(c));
                i += 1;
            }
            '!' => {
                if b.get(i + 1) == Some(&'=') {
                    toks.push(Tok::Neq);
                    i += 2;
                } else {
                    toks.push(Tok::Bang);
                    i += 1;
                }
            }
            '?' => {
                toks.push(Tok::Question);
                i += 1;
            }
            '=' => {
                if b.get(i + 1) == Some(&'>') {
                    toks.push(Tok::Implies);
                    i += 2;
                } else {
                    toks.push(Tok::Eq);
                    i += 1;
                }
            }
            '<' => {
                if b.get(i + 1) == Some(&'=') && b.get(i + 2) == Some(&'>') {
                    toks.push(Tok::Iff);
                    i += 3;
                } else {
                    return Err(format!("stray '<' at {i}"));
                }
            }
            '~' => {
                toks.push(Tok::Tilde);
                i += 1;
            }
            '&' => {
                toks.push(Tok::And);
                i += 1;
            }
            '|' => {
                toks.push(Tok::Or);
                i += 1;
            }
            c if c.is_ascii_lowercase() => {
                let start = i;
                while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == '_') {
                    i += 1;
                }
                toks.push(Tok::LWord(b[start..i].iter().collect()));
            }
            c if c.is_ascii_uppercase() => {
                let start = i;
                while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == '_') {
                    i += 1;
                }
                toks.push(Tok::UWord(b[start..i].iter().collect()));
            }
            other => return Err(format!("illegal character {other:?} at {i}")),
        }
    }
    Ok(toks)
}

struct TptpParser {
    toks: Vec<Tok>,
    pos: usize,
}

impl TptpParser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Result<&Tok, String> {
        let t = self.toks.get(self.pos).ok_or("unexpected end of input")?;
        self.pos += 1;
        Ok(t)
    }

    fn punct(&mut self, c: char) -> Result<(), String> {
        match self.next()? {
            Tok::Punct(p) if *p == c => Ok(()),
            t => Err(format!("expected {c:?}, got {t:?}")),
        }
    }

    fn lword(&mut self) -> Result<String, String> {
        match self.next()? {
            Tok::LWord(w) => Ok(w.clone()),
            t => Err(format!("expected lower word, got {t:?}")),
        }
    }

    fn formula(&mut self, bound: &mut Vec<String>) -> Result<(), String> {
        self.unitary(bound)?;
        // one associative connective level is all FOF allows unparenthesized
        match self.peek() {
            Some(Tok::And) | Some(Tok::Or) => {
                let first = if matches!(self.peek(), Some(Tok::And)) { Tok::And } else { Tok::Or };
                while self.peek() == Some(&first) {
                    self.pos += 1;
                    self.unitary(bound)?;
                }
                Ok(())
            }
            Some(Tok::Implies) | Some(Tok::Iff) => {
                self.pos += 1;
                self.unitary(bound)?;
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn unitary(&mut self, bound: &mut Vec<String>) -> Result<(), String> {
        match self.peek() {
            Some(Tok::Bang) | Some(Tok::Question) => {
                self.pos += 1;
                self.punct('[')?;
                let mut fresh = 0usize;
                loop {
                    match self.next()? {
                        Tok::UWord(v) => {
                            bound.push(v.clone());
                            fresh += 1;
                        }
                        t => return Err(format!("expected variable, got {t:?}")),
                    }
                    match self.next()? {
                        Tok::Punct(',') => continue,
                        Tok::Punct(']') => break,
                        t => return Err(format!("expected , or ], got {t:?}")),
                    }
                }
                self.punct(':')?;
                self.unitary(bound)?;
                bound.truncate(bound.len() - fresh);
                Ok(())
            }
            Some(Tok::Tilde) => {
                self.pos += 1;
                self.unitary(bound)
            }
            Some(Tok::Punct('(')) => {
                self.pos += 1;
                self.formula(bound)?;
                self.punct(')')
            }
            _ => self.atom(bound),
        }
    }

    fn atom(&mut self, bound: &mut Vec<String>) -> Result<(), String> {
        self.term(bound)?;
        match self.next()? {
            Tok::Eq | Tok::Neq => {}
            t => return Err(format!("expected = or !=, got {t:?}")),
        }
        self.term(bound)
    }

    fn term(&mut self, bound: &mut Vec<String>) -> Result<(), String> {
        match self.next()? {
            Tok::UWord(v) => {
                if !bound.contains(v) {
                    return Err(format!("unbound variable {v}"));
                }
                Ok(())
            }
            Tok::LWord(_) => {
                if self.peek() == Some(&Tok::Punct('(')) {
                    self.pos += 1;
                    loop {
                        self.term(bound)?;
                        match self.next()? {
                            Tok::Punct(',') => continue,
                            Tok::Punct(')') => break,
                            t => return Err(format!("expected , or ), got {t:?}")),
                        }
                    }
                }
                Ok(())
            }
            t => Err(format!("expected term, got {t:?}")),
        }
    }
}

/// Validate one TPTP file against the FOF syntax: a sequence of
/// `fof(name, role, closed-formula).` statements with at least one
/// conjecture. Comments (`%`) are skipped. All formulas must be closed.
pub fn validate_tptp(text: &str) -> Result<(), String> {
    let toks = tokenize_tptp(text)?;
    let mut p = TptpParser { toks, pos: 0 };
    let mut statements = 0usize;
    let mut conjectures = 0usize;
    while p.peek().is_some() {
        match p.lword()?.as_str() {
            "fof" => {}
            w => return Err(format!("expected fof, got {w}")),
        }
        p.punct('(')?;
        p.lword()?; // statement name
        p.punct(',')?;
        match p.lword()?.as_str() {
            "axiom" | "hypothesis" | "definition" | "lemma" => {}
            "conjecture" => conjectures += 1,
            r => return Err(format!("unknown role {r}")),
        }
        p.punct(',')?;
        let mut bound = Vec::new();
        p.formula(&mut bound)?;
        p.punct(')')?;
        p.punct('.')?;
        statements += 1;
    }
    if statements == 0 {
        return Err("no statements".into());
    }
    if conjectures == 0 {
        return Err("no conjecture".into());
    }
    Ok(())
}
