//! Problem-config loading and integration-problem assembly. The CLI is a
//! thin shell over these functions; tests drive them directly.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::eqlogic::FuncSymbol;
use crate::instance::{Bounds, Instance};
use crate::integrate::{colimit_schemas, IntegrationProblem, SchemaDiagram};
use crate::schema::{Schema, SchemaMapping};
use crate::syntax::{
    parse_config, parse_ground_equations, parse_instance, parse_mapping, parse_rules,
    parse_schema, ProblemConfig,
};
use crate::typeside::excel_typeside;

#[derive(Debug, Error)]
#[error("{place}: {msg}")]
pub struct DriverError {
    pub place: String,
    pub msg: String,
}

fn err<T>(place: impl std::fmt::Display, msg: impl std::fmt::Display) -> Result<T, DriverError> {
    Err(DriverError { place: place.to_string(), msg: msg.to_string() })
}

/// Everything a problem config refers to, loaded and cross-checked.
pub struct World {
    pub cfg: ProblemConfig,
    pub schemas: BTreeMap<String, Schema>,
    pub mappings: Vec<SchemaMapping>,
    /// (schema name, instance), in config order
    pub instances: Vec<(String, Instance)>,
}

fn read(path: &Path) -> Result<String, DriverError> {
    fs::read_to_string(path).or_else(|e| err(path.display(), e))
}

pub fn load_world(config: &Path) -> Result<World, DriverError> {
    let text = read(config)?;
    let cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => return err(config.display(), e),
    };
    let base = config.parent().unwrap_or(Path::new(".")).to_path_buf();
    let typeside = excel_typeside(cfg.with_strings);
    let mut schemas = BTreeMap::new();
    for (name, path) in &cfg.schemas {
        let src = read(&base.join(path))?;
        let schema = match parse_schema(&src, &typeside) {
            Ok(s) => s,
            Err(e) => return err(path, e),
        };
        if schema.name != *name {
            return err(path, format!("declares schema {}, config says {name}", schema.name));
        }
        schemas.insert(name.clone(), schema);
    }
    let mut mappings = Vec::new();
    for (name, sname, tname, path) in &cfg.mappings {
        let (Some(src), Some(tgt)) = (schemas.get(sname), schemas.get(tname)) else {
            return err(path, format!("mapping {name}: unknown schema"));
        };
        let text = read(&base.join(path))?;
        let m = match parse_mapping(&text, src, tgt) {
            Ok(m) => m,
            Err(e) => return err(path, e),
        };
        let issues = m.validate(src, tgt);
        if !issues.is_empty() {
            let list: Vec<String> = issues.iter().map(|i| i.to_string()).collect();
            return err(path, list.join("; "));
        }
        mappings.push(m);
    }
    let mut instances = Vec::new();
    for (name, sname, path) in &cfg.instances {
        let Some(schema) = schemas.get(sname) else {
            return err(path, format!("instance {name}: unknown schema {sname}"));
        };
        let text = read(&base.join(path))?;
        match parse_instance(&text, schema) {
            Ok(inst) => instances.push((sname.clone(), inst)),
            Err(e) => return err(path, e),
        }
    }
    Ok(World { cfg, schemas, mappings, instances })
}

/// Assemble the integration problem: rules and extra equations are
/// phrased over the colimit schema, so it is computed here once.
pub fn build_problem(world: &World, bounds: Bounds) -> Result<IntegrationProblem, DriverError> {
    let diagram = SchemaDiagram {
        schemas: world.schemas.clone(),
        mappings: world.mappings.clone(),
    };
    let colimit = match colimit_schemas(&diagram, &world.cfg.rename) {
        Ok(c) => c,
        Err(e) => return err("colimit", e),
    };
    let rules = match &world.cfg.rules_src {
        Some(src) => match parse_rules(src, &colimit.schema) {
            Ok(r) => r,
            Err(e) => return err("rules", e),
        },
        None => Vec::new(),
    };
    let mut instances: BTreeMap<String, Instance> = BTreeMap::new();
    for (sname, inst) in &world.instances {
        instances.insert(sname.clone(), inst.clone());
    }
    let extra_equations = match &world.cfg.extra_src {
        Some(src) => {
            // merged-instance generators appear as `Inst.gen` constants
            let mut th = colimit.schema.theory();
            for (sname, inst) in &world.instances {
                let inj = &colimit.injections[sname];
                for (g, sort) in &inst.generators {
                    let csort =
                        inj.entity_map.get(sort).cloned().unwrap_or_else(|| sort.clone());
                    let _ = th.add_symbol(FuncSymbol::constant(
                        &format!("{}.{}", inst.name, g),
                        &csort,
                    ));
                }
            }
            match parse_ground_equations(src, &th) {
                Ok(eqs) => eqs,
                Err(e) => return err("extra_equations", e),
            }
        }
        None => Vec::new(),
    };
    Ok(IntegrationProblem {
        diagram,
        instances,
        rules,
        rename: world.cfg.rename.clone(),
        extra_equations,
        bounds,
    })
}
