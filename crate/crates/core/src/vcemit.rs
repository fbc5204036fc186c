//! Verification-condition output: TPTP problem files for automated
//! provers, plus consistency/freeness reports in Markdown.

use std::collections::BTreeMap;
use std::fmt;

use crate::eqlogic::{ground_congruence, Equation, Term, Verdict};
use crate::instance::InstanceModel;
use crate::literal::Literal;
use crate::schema::{Schema, VerificationCondition};
use crate::typeside;

/// One TPTP problem: the target theory as axioms, one conjecture.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TptpProblem {
    pub id: String,
    pub text: String,
}

/// Deterministic identifier-safe mangling for symbol names.
fn mangle_raw(name: &str) -> String {
    match name {
        "+" => return "plus".into(),
        "-" => return "minus".into(),
        "*" => return "times".into(),
        _ => {}
    }
    let mut s = String::new();
    let mut last_us = false;
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            s.push(c.to_ascii_lowercase());
            last_us = false;
        } else if !last_us && !s.is_empty() {
            s.push('_');
            last_us = true;
        }
    }
    let s = s.trim_end_matches('_').to_string();
    if s.is_empty() || !s.chars().next().unwrap().is_ascii_alphabetic() {
        format!("f{s}")
    } else {
        s
    }
}

/// A collision-free symbol table built in sorted order.
struct Mangler {
    map: BTreeMap<String, String>,
}

impl Mangler {
    fn new(names: impl Iterator<Item = String>) -> Self {
        let mut map = BTreeMap::new();
        let mut taken: BTreeMap<String, usize> = BTreeMap::new();
        let mut sorted: Vec<String> = names.collect();
        sorted.sort();
        sorted.dedup();
        for n in sorted {
            let base = mangle_raw(&n);
            let count = taken.entry(base.clone()).or_insert(0);
            *count += 1;
            let m = if *count == 1 { base } else { format!("{base}_{count}") };
            map.insert(n, m);
        }
        Mangler { map }
    }

    fn get(&self, name: &str) -> String {
        self.map.get(name).cloned().unwrap_or_else(|| mangle_raw(name))
    }
}

fn mangle_literal(l: &Literal) -> String {
    match l {
        Literal::Num(d) => {
            format!("n{}", d.to_string().replace('-', "m").replace('.', "_"))
        }
        Literal::Str(s) => format!("str_{}", mangle_raw(s)),
        Literal::Bool(b) => format!("b{b}"),
    }
}

fn tptp_term(t: &Term, vars: &BTreeMap<String, String>, m: &Mangler) -> String {
    match t {
        Term::Lit(l) => mangle_literal(l),
        Term::Var(v, _) => vars[v].clone(),
        Term::App(f, args) => {
            if args.is_empty() {
                m.get(f)
            } else {
                let parts: Vec<String> =
                    args.iter().map(|a| tptp_term(a, vars, m)).collect();
                format!("{}({})", m.get(f), parts.join(","))
            }
        }
    }
}

fn tptp_formula(eq: &Equation, m: &Mangler) -> String {
    let vars: BTreeMap<String, String> = eq
        .ctx
        .vars()
        .iter()
        .enumerate()
        .map(|(i, (v, _))| (v.clone(), format!("X{i}")))
        .collect();
    let body = format!(
        "{} = {}",
        tptp_term(&eq.lhs, &vars, m),
        tptp_term(&eq.rhs, &vars, m)
    );
    if vars.is_empty() {
        body
    } else {
        let mut names: Vec<&String> = vars.values().collect();
        names.sort();
        let list: Vec<String> = names.iter().map(|s| s.to_string()).collect();
        format!("! [{}] : ( {} )", list.join(","), body)
    }
}

fn term_symbols(t: &Term, out: &mut Vec<String>) {
    if let Term::App(f, args) = t {
        out.push(f.clone());
        for a in args {
            term_symbols(a, out);
        }
    }
}

/// One problem file per VC: every equation of the target theory (schema
/// constraints plus the ring and MAX/MIN axioms) becomes an axiom; the
/// translated overlap equation becomes the conjecture.
pub fn emit_tptp(vcs: &[VerificationCondition], target: &Schema) -> Vec<TptpProblem> {
    let th = target.theory();
    let mut names: Vec<String> = Vec::new();
    for eq in &th.equations {
        term_symbols(&eq.lhs, &mut names);
        term_symbols(&eq.rhs, &mut names);
    }
    for vc in vcs {
        term_symbols(&vc.conjecture.lhs, &mut names);
        term_symbols(&vc.conjecture.rhs, &mut names);
    }
    let mangler = Mangler::new(names.into_iter());
    let mut out = Vec::new();
    for vc in vcs {
        let mut text = String::new();
        text.push_str(&format!("% Problem {}\n", vc.id));
        text.push_str(&format!("% Source equation: {}\n", vc.source_eq));
        for (k, eq) in th.equations.iter().enumerate() {
            text.push_str(&format!(
                "fof(ax{:03}, axiom, {}).\n",
                k + 1,
                tptp_formula(eq, &mangler)
            ));
        }
        text.push_str(&format!(
            "fof({}, conjecture, {}).\n",
            mangle_raw(&vc.id),
            tptp_formula(&vc.conjecture, &mangler)
        ));
        out.push(TptpProblem { id: vc.id.clone(), text });
    }
    out
}

// ---- consistency -----------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConsistencyVerdict {
    Consistent,
    Inconsistent,
    /// No non-definitional equations anywhere: consistent by construction.
    FreeTheory,
}

impl fmt::Display for ConsistencyVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConsistencyVerdict::Consistent => write!(f, "Consistent"),
            ConsistencyVerdict::Inconsistent => write!(f, "Inconsistent"),
            ConsistencyVerdict::FreeTheory => write!(f, "FreeTheory"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ClashRecord {
    pub lhs: Literal,
    pub rhs: Literal,
    pub context: String,
    /// The merge steps that led to the clash, in derivation order.
    pub trace: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct ConsistencyReport {
    pub verdict: ConsistencyVerdict,
    pub clashes: Vec<ClashRecord>,
    /// The ground facts a replay needs; feeding them to
    /// `ground_congruence` re-derives every clash.
    pub ground_facts: Vec<(Term, Term)>,
}

/// A schema is free/definitional when every constraint defines one
/// column outright and no column is defined twice.
pub fn is_free_schema(s: &Schema) -> bool {
    let mut defined: Vec<&String> = Vec::new();
    for eq in &s.constraints {
        let Term::App(f, args) = &eq.lhs else {
            return false;
        };
        if args.len() != 1 || !matches!(args[0], Term::Var(_, _)) {
            return false;
        }
        if !s.symbols().any(|(n, _)| n == f) {
            return false;
        }
        if defined.contains(&f) || contains_symbol(&eq.rhs, f) {
            return false;
        }
        defined.push(f);
    }
    true
}

fn contains_symbol(t: &Term, f: &str) -> bool {
    match t {
        Term::App(g, args) => g == f || args.iter().any(|a| contains_symbol(a, f)),
        _ => false,
    }
}

/// Inspect a saturated (or failed) model for literal clashes and classify
/// the presenting theory.
pub fn consistency_check(m: &InstanceModel) -> ConsistencyReport {
    let trace: Vec<String> = m.trace.iter().map(|ev| format!("{ev:?}")).collect();
    let clashes: Vec<ClashRecord> = m
        .clashes
        .iter()
        .map(|c| ClashRecord {
            lhs: c.lhs.clone(),
            rhs: c.rhs.clone(),
            context: c.context.clone(),
            trace: trace.clone(),
        })
        .collect();
    let verdict = if !clashes.is_empty() {
        ConsistencyVerdict::Inconsistent
    } else if is_free_schema(&m.schema) && m.residuals.is_empty() {
        ConsistencyVerdict::FreeTheory
    } else {
        ConsistencyVerdict::Consistent
    };
    ConsistencyReport { verdict, clashes, ground_facts: m.ground_equations() }
}

/// Replay a recorded clash from the ground facts alone.
pub fn replay_clash(report: &ConsistencyReport, clash: &ClashRecord) -> Verdict {
    ground_congruence(
        &report.ground_facts,
        (&Term::Lit(clash.lhs.clone()), &Term::Lit(clash.rhs.clone())),
        &|t| typeside::reduce(t),
    )
}

// ---- reports ---------------------------------------------------------------

pub fn consistency_markdown(r: &ConsistencyReport) -> String {
    let mut out = String::new();
    out.push_str("# Consistency report\n\n");
    out.push_str(&format!("Verdict: **{}**\n", r.verdict));
    if !r.clashes.is_empty() {
        out.push_str("\n## Clashes\n\n");
        for c in &r.clashes {
            out.push_str(&format!("- `{}` = `{}` ({})\n", c.lhs, c.rhs, c.context));
        }
    }
    out
}

pub fn vc_markdown(vcs: &[VerificationCondition]) -> String {
    let mut out = String::new();
    out.push_str("# Verification conditions\n\n");
    if vcs.is_empty() {
        out.push_str("No equations to check.\n");
        return out;
    }
    for vc in vcs {
        out.push_str(&format!("## {}\n\n", vc.id));
        out.push_str(&format!("- source: `{}`\n", vc.source_eq));
        out.push_str(&format!("- conjecture: `{}`\n", vc.conjecture));
        out.push_str(&format!("- status: **{}**\n", vc.status));
        if !vc.detail.is_empty() {
            out.push_str(&format!("- detail: {}\n", vc.detail));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eqlogic::Context;
    use crate::instance::Instance;
    use crate::schema::{generate_functoriality_vcs, SchemaMapping, VcStatus};
    use crate::typeside::excel_typeside;

    fn people_schema() -> Schema {
        let mut s = Schema::new("P", excel_typeside(false));
        s.add_entity("Person");
        s.add_attr("age", "Person", "Float");
        s
    }

    fn alice_bob(ages_equal: bool) -> Instance {
        let mut i = Instance::new("ab", people_schema());
        i.add_generator("alice", "Person").unwrap();
        i.add_generator("bob", "Person").unwrap();
        let age = |n: &str| Term::app("age", vec![Term::constant(n)]);
        i.add_equation(age("alice"), Term::num("20")).unwrap();
        i.add_equation(age("bob"), Term::num(if ages_equal { "20" } else { "30" }))
            .unwrap();
        i.add_equation(Term::constant("alice"), Term::constant("bob")).unwrap();
        i
    }

    #[test]
    fn alice_bob_clash_detected_and_replayable() {
        let err = alice_bob(false).saturate().unwrap_err();
        let model = match err {
            crate::instance::SaturateError::Inconsistent(m) => *m,
            other => panic!("expected inconsistency, got {other:?}"),
        };
        let report = consistency_check(&model);
        assert_eq!(report.verdict, ConsistencyVerdict::Inconsistent);
        let clash = &report.clashes[0];
        let mut pair = [clash.lhs.to_string(), clash.rhs.to_string()];
        pair.sort();
        assert_eq!(pair, ["20", "30"]);
        assert!(!clash.trace.is_empty());
        assert_eq!(replay_clash(&report, clash), Verdict::Proved);
    }

    #[test]
    fn equal_ages_consistent() {
        let model = alice_bob(true).saturate().unwrap();
        let report = consistency_check(&model);
        // the schema is free but the instance merge leaves no residuals,
        // so the free classifier fires
        assert_ne!(report.verdict, ConsistencyVerdict::Inconsistent);
    }

    #[test]
    fn rerun_reproduces_identical_clash_set() {
        let run = || {
            let err = alice_bob(false).saturate().unwrap_err();
            let model = match err {
                crate::instance::SaturateError::Inconsistent(m) => *m,
                other => panic!("unexpected {other:?}"),
            };
            consistency_check(&model)
                .clashes
                .iter()
                .map(|c| format!("{}={} [{}]", c.lhs, c.rhs, c.context))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn free_schema_classified() {
        let mut s = people_schema();
        let ctx = Context::single("x", "Person");
        s.add_attr("double", "Person", "Float");
        let lhs = Term::app("double", vec![Term::var("x", "Person")]);
        let rhs = Term::app(
            "*",
            vec![Term::num("2"), Term::app("age", vec![Term::var("x", "Person")])],
        );
        s.constraints.push(Equation { ctx, lhs, rhs, sort: "Float".into() });
        assert!(is_free_schema(&s));
        let mut i = Instance::new("f", s);
        i.add_generator("p", "Person").unwrap();
        i.add_equation(
            Term::app("age", vec![Term::constant("p")]),
            Term::num("21"),
        )
        .unwrap();
        let m = i.saturate().unwrap();
        let report = consistency_check(&m);
        assert_eq!(report.verdict, ConsistencyVerdict::FreeTheory);
    }

    #[test]
    fn non_definitional_schema_not_free() {
        let mut s = people_schema();
        let ctx = Context::single("x", "Person");
        let age = Term::app("age", vec![Term::var("x", "Person")]);
        let lhs = Term::app("*", vec![age.clone(), age.clone()]);
        let rhs = Term::app("*", vec![age.clone(), Term::app("*", vec![age.clone(), age])]);
        s.constraints.push(Equation { ctx, lhs, rhs, sort: "Float".into() });
        assert!(!is_free_schema(&s));
    }

    #[test]
    fn emit_one_problem_per_vc() {
        let src = people_schema();
        let mut tgt = people_schema();
        tgt.name = "Q".into();
        let mut src2 = src.clone();
        let ctx = Context::single("x", "Person");
        let age = Term::app("age", vec![Term::var("x", "Person")]);
        for k in 0..3 {
            src2.constraints.push(Equation {
                ctx: ctx.clone(),
                lhs: Term::app("+", vec![age.clone(), Term::num(&k.to_string())]),
                rhs: Term::app("+", vec![Term::num(&k.to_string()), age.clone()]),
                sort: "Float".into(),
            });
        }
        let m = SchemaMapping {
            name: "M".into(),
            source: "P".into(),
            target: "Q".into(),
            entity_map: [("Person".to_string(), "Person".to_string())].into(),
            symbol_map: [(
                "age".to_string(),
                ("x".to_string(), Term::app("age", vec![Term::var("x", "Person")])),
            )]
            .into(),
        };
        let vcs = generate_functoriality_vcs(&m, &src2, &tgt).unwrap();
        let probs = emit_tptp(&vcs, &tgt);
        assert_eq!(probs.len(), 3);
        assert!(probs[0].text.contains("conjecture"));
        assert!(probs[0].text.lines().filter(|l| l.starts_with("fof(ax")).count() > 3);
        // deterministic
        assert_eq!(probs, emit_tptp(&vcs, &tgt));
        assert!(emit_tptp(&[], &tgt).is_empty());
        let _ = VcStatus::Unknown;
    }

    #[test]
    fn mangling_is_collision_free_and_stable() {
        let m = Mangler::new(
            ["Burst Rating", "burst_rating", "Burst  Rating", "+", "MAX"]
                .into_iter()
                .map(String::from),
        );
        let mut seen: Vec<String> = ["Burst Rating", "burst_rating", "Burst  Rating"]
            .iter()
            .map(|n| m.get(n))
            .collect();
        assert_eq!(m.get("+"), "plus");
        assert_eq!(m.get("MAX"), "max");
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 3);
        for s in &seen {
            assert!(s.chars().next().unwrap().is_ascii_lowercase());
            assert!(s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_'));
        }
    }

    #[test]
    fn literal_mangling() {
        assert_eq!(mangle_literal(&Literal::num("0.052")), "n0_052");
        assert_eq!(mangle_literal(&Literal::num("-4.75")), "nm4_75");
        assert_eq!(mangle_literal(&Literal::Bool(true)), "btrue");
        assert_eq!(mangle_literal(&Literal::Str("W-1".into())), "str_w_1");
    }
}
