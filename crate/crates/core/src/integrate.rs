//! Schema colimits over a diagram of mappings, Horn-style merge rules,
//! the end-to-end integration pipeline, and data exchange with diff
//! reports.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::eqlogic::{substitute, Context, Equation, Term, TermError};
use crate::instance::{
    check_data_mapping, coproduct, delta, rename_constants, sigma, Bounds, DataMapping,
    Instance, InstanceModel, MappingViolation, SaturateError, Value,
};
use crate::schema::{MappingIssue, Schema, SchemaMapping};

/// A finite diagram of schemas and mappings between them.
#[derive(Clone, Debug, Default)]
pub struct SchemaDiagram {
    pub schemas: BTreeMap<String, Schema>,
    pub mappings: Vec<SchemaMapping>,
}

impl SchemaDiagram {
    /// Nodes with no outgoing mapping; their entities and symbols appear
    /// in the colimit directly. Other nodes (overlaps) only identify.
    pub fn sinks(&self) -> Vec<&String> {
        self.schemas
            .keys()
            .filter(|n| !self.mappings.iter().any(|m| &m.source == *n))
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum ColimitError {
    #[error("mapping {mapping} refers to unknown schema {schema}")]
    UnknownSchema { mapping: String, schema: String },
    #[error("mapping {mapping} is invalid: {issues:?}")]
    InvalidMapping { mapping: String, issues: Vec<MappingIssue> },
    #[error("colimit construction failed: {0}")]
    Term(#[from] TermError),
    #[error("mapping graph has a cycle involving {0}")]
    Cyclic(String),
}

/// A colimit schema together with the injection from every node and the
/// entity classes that were identified.
#[derive(Clone, Debug)]
pub struct Colimit {
    pub schema: Schema,
    pub injections: BTreeMap<String, SchemaMapping>,
    /// class name -> members (schema, entity)
    pub classes: BTreeMap<String, Vec<(String, String)>>,
}

/// Compute the colimit of a schema diagram: disjoint union of the sink
/// schemas with entities identified along the mappings. Symbols are kept
/// apart under `{schema}.{symbol}` names; overlap symbols contribute
/// equations identifying their images. `rename` substitutes nicer names
/// for generated entity and symbol names.
pub fn colimit_schemas(
    diagram: &SchemaDiagram,
    rename: &BTreeMap<String, String>,
) -> Result<Colimit, ColimitError> {
    for m in &diagram.mappings {
        let src = diagram.schemas.get(&m.source).ok_or_else(|| ColimitError::UnknownSchema {
            mapping: m.name.clone(),
            schema: m.source.clone(),
        })?;
        let tgt = diagram.schemas.get(&m.target).ok_or_else(|| ColimitError::UnknownSchema {
            mapping: m.name.clone(),
            schema: m.target.clone(),
        })?;
        let issues = m.validate(src, tgt);
        if !issues.is_empty() {
            return Err(ColimitError::InvalidMapping { mapping: m.name.clone(), issues });
        }
    }

    // Union-find over (schema, entity) pairs.
    let mut nodes: Vec<(String, String)> = Vec::new();
    let mut index: BTreeMap<(String, String), usize> = BTreeMap::new();
    for (sname, s) in &diagram.schemas {
        for e in &s.entities {
            let key = (sname.clone(), e.clone());
            index.insert(key.clone(), nodes.len());
            nodes.push(key);
        }
    }
    let mut parent: Vec<usize> = (0..nodes.len()).collect();
    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for m in &diagram.mappings {
        for (e, fe) in &m.entity_map {
            let a = index[&(m.source.clone(), e.clone())];
            let b = index[&(m.target.clone(), fe.clone())];
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra] = rb;
            }
        }
    }

    let sink_names: Vec<String> = diagram.sinks().into_iter().cloned().collect();
    let is_sink = |n: &str| sink_names.iter().any(|s| s == n);

    // Group into classes and name them.
    let mut groups: BTreeMap<usize, Vec<(String, String)>> = BTreeMap::new();
    for (i, key) in nodes.iter().enumerate() {
        groups.entry(find(&mut parent, i)).or_default().push(key.clone());
    }
    let pick = |raw: String| rename.get(&raw).cloned().unwrap_or(raw);
    let mut class_name: BTreeMap<(String, String), String> = BTreeMap::new();
    let mut classes: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
    for members in groups.values() {
        let mut sink_members: Vec<&(String, String)> =
            members.iter().filter(|(s, _)| is_sink(s)).collect();
        sink_members.sort();
        let named: Vec<&(String, String)> = if sink_members.is_empty() {
            members.iter().collect()
        } else {
            sink_members
        };
        let raw = if named.len() >= 2 {
            named.iter().map(|(s, e)| format!("{s}_{e}")).collect::<Vec<_>>().join("__")
        } else {
            format!("{}.{}", named[0].0, named[0].1)
        };
        let name = pick(raw);
        for m in members {
            class_name.insert(m.clone(), name.clone());
        }
        classes.insert(name, members.clone());
    }

    // Assemble the colimit schema: entities, then sink symbols.
    let typeside = diagram
        .schemas
        .values()
        .next()
        .map(|s| s.typeside.clone())
        .unwrap_or_else(|| crate::typeside::excel_typeside(false));
    let mut out = Schema::new("colimit", typeside);
    for name in classes.keys() {
        out.add_entity(name);
    }
    let mut injections: BTreeMap<String, SchemaMapping> = BTreeMap::new();
    for sname in &sink_names {
        let s = &diagram.schemas[sname];
        let mut inj = SchemaMapping {
            name: format!("into_{sname}"),
            source: sname.clone(),
            target: out.name.clone(),
            ..Default::default()
        };
        for e in &s.entities {
            inj.entity_map
                .insert(e.clone(), class_name[&(sname.clone(), e.clone())].clone());
        }
        for (f, (dom, cod)) in s.symbols() {
            let name = pick(format!("{sname}.{f}"));
            let cdom = class_name[&(sname.clone(), dom.clone())].clone();
            if s.has_entity(cod) {
                out.add_fk(&name, &cdom, &class_name[&(sname.clone(), cod.clone())]);
            } else {
                out.add_attr(&name, &cdom, cod);
            }
            inj.symbol_map.insert(
                f.clone(),
                ("x".to_string(), Term::app(&name, vec![Term::var("x", &cdom)])),
            );
        }
        injections.insert(sname.clone(), inj);
    }

    // Equations: sink constraints transported along the injections.
    let th = out.theory();
    for sname in &sink_names {
        let s = &diagram.schemas[sname];
        let morphism = injections[sname].to_morphism(s);
        for eq in &s.constraints {
            out.constraints.push(morphism.translate_equation(&th, eq)?);
        }
    }

    // Injections for overlap nodes: compose with the first outgoing edge.
    // Also add, for each pair of edges out of an overlap, the equations
    // identifying the two images of every overlap symbol. Nodes are
    // processed once all their edge targets have injections.
    let mut pending: Vec<String> =
        diagram.schemas.keys().filter(|n| !is_sink(n)).cloned().collect();
    while !pending.is_empty() {
        let before = pending.len();
        let mut next = Vec::new();
        for oname in pending {
            let ready = diagram
                .mappings
                .iter()
                .filter(|m| m.source == oname)
                .all(|m| injections.contains_key(&m.target));
            if !ready {
                next.push(oname);
                continue;
            }
            process_overlap(&oname, diagram, &class_name, &th, &mut out, &mut injections)?;
        }
        pending = next;
        if pending.len() == before {
            return Err(ColimitError::Cyclic(pending.join(", ")));
        }
    }

    Ok(Colimit { schema: out, injections, classes })
}

/// Build the composite injection for one overlap node and push the
/// equations identifying the images of its symbols.
fn process_overlap(
    oname: &str,
    diagram: &SchemaDiagram,
    class_name: &BTreeMap<(String, String), String>,
    th: &crate::eqlogic::Theory,
    out: &mut Schema,
    injections: &mut BTreeMap<String, SchemaMapping>,
) -> Result<(), ColimitError> {
    {
        let o = &diagram.schemas[oname];
        let mut edges: Vec<SchemaMapping> = diagram
            .mappings
            .iter()
            .filter(|m| &m.source == oname)
            .cloned()
            .collect();
        edges.sort_by(|a, b| a.name.cmp(&b.name));
        // iota_target(edge(f)), as a single-variable term over the colimit.
        let images = |injections: &BTreeMap<String, SchemaMapping>,
                      edge: &SchemaMapping,
                      f: &str|
         -> Result<(String, Term), ColimitError> {
            let tgt_schema = &diagram.schemas[&edge.target];
            let morphism = injections[&edge.target].to_morphism(tgt_schema);
            let (var, body) = &edge.symbol_map[f];
            let dom = &o.symbols().find(|(n, _)| n.as_str() == f).unwrap().1 .0;
            let fdom = &edge.entity_map[dom.as_str()];
            let class = class_name[&(edge.target.clone(), fdom.clone())].clone();
            let translated = morphism.translate(th, body)?;
            let mut env = BTreeMap::new();
            env.insert(var.clone(), Term::var("x", &class));
            for (v, s) in translated.free_vars() {
                env.entry(v.clone()).or_insert(Term::Var(v, s));
            }
            Ok((class, substitute(&translated, &env)?))
        };

        if let Some(first) = edges.first() {
            let mut inj = SchemaMapping {
                name: format!("into_{oname}"),
                source: oname.to_string(),
                target: out.name.clone(),
                ..Default::default()
            };
            for e in &o.entities {
                inj.entity_map
                    .insert(e.clone(), class_name[&(oname.to_string(), e.clone())].clone());
            }
            for (f, _) in o.symbols() {
                let (_, body) = images(injections, first, f)?;
                inj.symbol_map.insert(f.clone(), ("x".to_string(), body));
            }
            injections.insert(oname.to_string(), inj);
        }

        for i in 0..edges.len() {
            for j in (i + 1)..edges.len() {
                for (f, (_, cod)) in o.symbols() {
                    let (class, lhs) = images(injections, &edges[i], f)?;
                    let (_, rhs) = images(injections, &edges[j], f)?;
                    if lhs == rhs {
                        continue;
                    }
                    let sort = if o.has_entity(cod) {
                        class_name[&(oname.to_string(), cod.clone())].clone()
                    } else {
                        cod.clone()
                    };
                    out.constraints.push(Equation {
                        ctx: Context::single("x", &class),
                        lhs,
                        rhs,
                        sort,
                    });
                }
            }
        }
    }
    Ok(())
}

/// The unique mapping out of the colimit induced by a commuting cocone
/// (one mapping per sink into a common target), when the cocone respects
/// the identifications.
pub fn mediating_mapping(
    colimit: &Colimit,
    diagram: &SchemaDiagram,
    cocone: &BTreeMap<String, SchemaMapping>,
    target: &Schema,
) -> Option<SchemaMapping> {
    let mut out = SchemaMapping {
        name: "mediating".into(),
        source: colimit.schema.name.clone(),
        target: target.name.clone(),
        ..Default::default()
    };
    for (class, members) in &colimit.classes {
        let mut image: Option<String> = None;
        for (s, e) in members {
            let Some(m) = cocone.get(s) else { continue };
            let img = m.entity_map.get(e)?.clone();
            match &image {
                None => image = Some(img),
                Some(prev) if *prev != img => return None,
                _ => {}
            }
        }
        out.entity_map.insert(class.clone(), image?);
    }
    // Every colimit symbol comes from exactly one sink symbol.
    for sink in diagram.sinks() {
        let s = &diagram.schemas[sink];
        let inj = &colimit.injections[sink];
        let m = cocone.get(sink)?;
        for (f, _) in s.symbols() {
            let (_, inj_body) = &inj.symbol_map[f];
            // inj_body is `colsym(x)`; map colsym to the cocone's image of f.
            if let Term::App(colsym, _) = inj_body {
                let (var, body) = m.symbol_map.get(f)?.clone();
                out.symbol_map.entry(colsym.clone()).or_insert((var, body));
            }
        }
    }
    Some(out)
}

/// A Horn-style merge rule: when all premises hold under an assignment of
/// the context variables to rows, the conclusion is enforced.
#[derive(Clone, Debug)]
pub struct HornRule {
    pub name: String,
    pub ctx: Context,
    pub premises: Vec<(Term, Term)>,
    pub conclusion: (Term, Term),
}

impl fmt::Display for HornRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: ", self.name)?;
        for (i, (l, r)) in self.premises.iter().enumerate() {
            if i > 0 {
                write!(f, " & ")?;
            }
            write!(f, "{l} = {r}")?;
        }
        write!(f, " -> {} = {}", self.conclusion.0, self.conclusion.1)
    }
}

/// One pass of rule application over all assignments. Returns whether
/// anything changed. The model should be re-chased afterwards.
pub fn apply_merge_rules(rules: &[HornRule], model: &mut InstanceModel) -> bool {
    let mut changed = false;
    for rule in rules {
        let vars = rule.ctx.vars().to_vec();
        // All assignments of rule variables to rows of their entities.
        let domains: Vec<Vec<usize>> =
            vars.iter().map(|(_, e)| model.rows_of(e)).collect();
        if domains.iter().any(|d| d.is_empty()) {
            continue;
        }
        let mut idx = vec![0usize; vars.len()];
        loop {
            let env: BTreeMap<String, usize> = vars
                .iter()
                .enumerate()
                .map(|(k, (v, _))| (v.clone(), domains[k][idx[k]]))
                .collect();
            if rule.premises.iter().all(|(l, r)| holds(model, l, r, &env)) {
                let (l, r) = &rule.conclusion;
                changed |= enforce(model, l, r, &env, &rule.name);
            }
            // Advance the odometer.
            let mut k = 0;
            loop {
                if k == idx.len() {
                    break;
                }
                idx[k] += 1;
                if idx[k] < domains[k].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == idx.len() {
                break;
            }
        }
    }
    changed
}

fn holds(model: &InstanceModel, l: &Term, r: &Term, env: &BTreeMap<String, usize>) -> bool {
    match (model.eval_row(l, env), model.eval_row(r, env)) {
        (Ok(a), Ok(b)) => return a == b,
        (Err(_), Err(_)) => {}
        _ => return false,
    }
    match (model.eval_value(l, env), model.eval_value(r, env)) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

fn enforce(
    model: &mut InstanceModel,
    l: &Term,
    r: &Term,
    env: &BTreeMap<String, usize>,
    reason: &str,
) -> bool {
    if let (Ok(a), Ok(b)) = (model.eval_row(l, env), model.eval_row(r, env)) {
        return model.merge(a, b, reason);
    }
    if let (Ok(a), Ok(b)) = (model.eval_value(l, env), model.eval_value(r, env)) {
        return model.unify(&a, &b, reason);
    }
    false
}

/// Everything needed to run an integration.
#[derive(Clone, Debug)]
pub struct IntegrationProblem {
    pub diagram: SchemaDiagram,
    /// instances keyed by the sink schema they live on
    pub instances: BTreeMap<String, Instance>,
    pub rules: Vec<HornRule>,
    pub rename: BTreeMap<String, String>,
    /// extra ground equations over the merged instance (generator names
    /// already prefixed with their instance name)
    pub extra_equations: Vec<(Term, Term)>,
    pub bounds: Bounds,
}

pub struct IntegrationResult {
    pub colimit: Colimit,
    pub merged: InstanceModel,
    /// the instance actually saturated (colimit schema, renamed generators)
    pub merged_instance: Instance,
    pub inclusions: BTreeMap<String, DataMapping>,
    pub violations: Vec<(String, MappingViolation)>,
}

#[derive(Debug, Error)]
pub enum IntegrateError {
    #[error(transparent)]
    Colimit(#[from] ColimitError),
    #[error(transparent)]
    Term(#[from] TermError),
    #[error(transparent)]
    Saturate(#[from] SaturateError),
    #[error("no instance given for sink schema {0}")]
    MissingInstance(String),
}

/// Fig-2 pipeline: colimit the schemas, push every instance into the
/// colimit, take the coproduct, saturate, then alternate merge rules with
/// re-chasing until nothing changes.
pub fn integrate(problem: &IntegrationProblem) -> Result<IntegrationResult, IntegrateError> {
    let colimit = colimit_schemas(&problem.diagram, &problem.rename)?;
    let mut pushed: Vec<Instance> = Vec::new();
    for sink in problem.diagram.sinks() {
        let inst = problem
            .instances
            .get(sink)
            .ok_or_else(|| IntegrateError::MissingInstance(sink.clone()))?;
        let src = &problem.diagram.schemas[sink];
        pushed.push(sigma(&colimit.injections[sink], inst, src, &colimit.schema)?);
    }
    let pushed_refs: Vec<&Instance> = pushed.iter().collect();
    let mut merged_instance = coproduct(&pushed_refs, &colimit.schema)?;
    for (l, r) in &problem.extra_equations {
        merged_instance.add_equation(l.clone(), r.clone())?;
    }

    let mut merged = merged_instance.saturate_with(problem.bounds)?;
    for _ in 0..problem.bounds.max_rounds {
        if !apply_merge_rules(&problem.rules, &mut merged) {
            break;
        }
        merged.chase(problem.bounds)?;
        if !merged.clashes.is_empty() {
            return Err(IntegrateError::Saturate(SaturateError::Inconsistent(Box::new(merged))));
        }
    }

    // Inclusions: each pushed instance embeds via its prefixed generators.
    let mut inclusions = BTreeMap::new();
    let mut violations = Vec::new();
    for inst in &pushed {
        let mut h = DataMapping {
            name: format!("k_{}", inst.name),
            source: inst.name.clone(),
            target: merged_instance.name.clone(),
            ..Default::default()
        };
        for g in inst.generators.keys() {
            h.gen_map
                .insert(g.clone(), Term::constant(&format!("{}.{}", inst.name, g)));
        }
        for v in check_data_mapping(&h, inst, &merged) {
            violations.push((inst.name.clone(), v));
        }
        inclusions.insert(inst.name.clone(), h);
    }

    Ok(IntegrationResult { colimit, merged, merged_instance, inclusions, violations })
}

/// Per-entity account of what exchange changed for one source instance.
#[derive(Clone, Debug, Default)]
pub struct EntityDiff {
    pub rows_before: usize,
    pub rows_after: usize,
    pub gained_rows: Vec<String>,
    pub filled_values: Vec<String>,
    pub changed_values: Vec<String>,
}

impl EntityDiff {
    pub fn is_empty(&self) -> bool {
        self.rows_before == self.rows_after
            && self.gained_rows.is_empty()
            && self.filled_values.is_empty()
            && self.changed_values.is_empty()
    }
}

#[derive(Clone, Debug, Default)]
pub struct ExchangeReport {
    pub schema: String,
    pub entities: BTreeMap<String, EntityDiff>,
}

impl ExchangeReport {
    pub fn is_empty(&self) -> bool {
        self.entities.values().all(EntityDiff::is_empty)
    }
}

impl fmt::Display for ExchangeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "exchange into {}", self.schema)?;
        for (e, d) in &self.entities {
            writeln!(f, "  {e}: {} -> {} rows", d.rows_before, d.rows_after)?;
            for g in &d.gained_rows {
                writeln!(f, "    + row {g}")?;
            }
            for v in &d.filled_values {
                writeln!(f, "    filled {v}")?;
            }
            for v in &d.changed_values {
                writeln!(f, "    changed {v}")?;
            }
        }
        Ok(())
    }
}

/// Pull the merged model back to one source schema and report what the
/// original instance gained.
pub fn exchange(
    result: &IntegrationResult,
    diagram: &SchemaDiagram,
    sink: &str,
    original: &Instance,
) -> Result<(InstanceModel, ExchangeReport), IntegrateError> {
    let src = &diagram.schemas[sink];
    let inj = &result.colimit.injections[sink];
    let back = delta(inj, &result.merged, src).map_err(|e| {
        IntegrateError::Term(TermError::UnknownSymbol(e.to_string()))
    })?;
    let before = original.saturate_with(Bounds::default())?;

    let mut report = ExchangeReport { schema: sink.to_string(), ..Default::default() };
    let morphism = inj.to_morphism(src);
    let col_th = result.merged_instance.theory();
    let rename: BTreeMap<String, String> = original
        .generators
        .keys()
        .map(|g| (g.clone(), format!("{}.{}", original.name, g)))
        .collect();

    for e in &src.entities {
        let mut d = EntityDiff {
            rows_before: before.row_count(e),
            rows_after: back.row_count(e),
            ..Default::default()
        };
        let fe = &inj.entity_map[e];
        let mut matched: Vec<usize> = Vec::new();
        for rb in before.rows_of(e) {
            // Image of this row in the merged model: translate its
            // canonical term and evaluate.
            let term = rename_constants(before.row_term(rb), &rename);
            let image = morphism.translate(&col_th, &term)?;
            let Ok(rm) = result.merged.eval_row(&image, &BTreeMap::new()) else {
                continue;
            };
            matched.push(rm);
            // Find the delta-side row carrying the same canonical term.
            let Some(ra) = back
                .rows_of(e)
                .into_iter()
                .find(|&i| back.row_term(i) == result.merged.row_term(rm))
            else {
                continue;
            };
            for (attr, _) in src.attrs_of(e) {
                let vb = before.attr_of(rb, attr);
                let va = back.attr_of(ra, attr);
                match (vb, va) {
                    (Some(Value::Null(_)), Some(new)) if !matches!(new, Value::Null(_)) => {
                        d.filled_values.push(format!(
                            "{attr}({}) = {}",
                            before.row_term(rb),
                            back.display_value(&new)
                        ));
                    }
                    (Some(old), Some(new)) => {
                        let old_t = before.value_term(&old);
                        let new_t = back.value_term(&new);
                        if old_t != new_t && !matches!(old, Value::Null(_)) {
                            d.changed_values.push(format!(
                                "{attr}({}): {} -> {}",
                                before.row_term(rb),
                                before.display_value(&old),
                                back.display_value(&new)
                            ));
                        }
                    }
                    _ => {}
                }
            }
        }
        let matched_terms: Vec<&Term> =
            matched.iter().map(|&r| result.merged.row_term(r)).collect();
        for ra in back.rows_of(fe.as_str().eq(e.as_str()).then_some(e).unwrap_or(e)) {
            if !matched_terms.contains(&back.row_term(ra)) {
                d.gained_rows.push(back.row_term(ra).to_string());
            }
        }
        report.entities.insert(e.clone(), d);
    }
    Ok((back, report))
}
