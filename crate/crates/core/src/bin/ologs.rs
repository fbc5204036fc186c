//! Command-line front end: import/export workbooks, check mapping
//! verification conditions, and run the full integration pipeline from a
//! single problem-config file. All outputs are deterministic.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ologs::driver::{build_problem, load_world, World};
use ologs::instance::{check_vcs_on_model, Bounds, SaturateError};
use ologs::integrate::{exchange, integrate, IntegrateError};
use ologs::schema::{
    check_vcs_symbolic, generate_functoriality_vcs, VcStatus, VerificationCondition,
};
use ologs::sheetio::{export_olog, import_olog, parse_workbook, print_workbook};
use ologs::syntax::{parse_instance, parse_schema, print_instance, print_schema};
use ologs::typeside::excel_typeside;
use ologs::vcemit::{consistency_check, consistency_markdown, emit_tptp, vc_markdown};

// exit codes are a stable contract
const EXIT_OK: u8 = 0;
const EXIT_INPUT: u8 = 2;
const EXIT_VC_UNKNOWN: u8 = 3;
const EXIT_INCONSISTENT: u8 = 4;
const EXIT_NONTERMINATING: u8 = 5;

#[derive(Parser)]
#[command(name = "ologs", version, about = "spreadsheets as equational theories and models")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Lift a workbook into a schema file and an instance file
    Import {
        workbook: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        with_strings: bool,
    },
    /// Check functoriality VCs for every mapping in a problem config
    Check {
        config: PathBuf,
        /// symbolic | model
        #[arg(long, default_value = "symbolic")]
        mode: String,
        #[arg(long)]
        emit_tptp: bool,
        /// output directory; defaults to the config's `output` key
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit VCs (report and optional TPTP) without discharging them
    Vc {
        config: PathBuf,
        /// output directory; defaults to the config's `output` key
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        emit_tptp: bool,
    },
    /// Run colimit + chase integration and data exchange
    Integrate {
        config: PathBuf,
        /// output directory; defaults to the config's `output` key
        #[arg(long)]
        out: Option<PathBuf>,
        /// override chase bounds as `max_rounds,max_fresh`
        #[arg(long)]
        bounds: Option<String>,
        #[arg(long)]
        waive_vcs: bool,
        /// symbolic | model
        #[arg(long, default_value = "symbolic")]
        mode: String,
        #[arg(long)]
        emit_tptp: bool,
    },
    /// Saturate an instance and render it as a workbook
    Export {
        schema: PathBuf,
        instance: PathBuf,
        /// output file; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        with_strings: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.cmd {
        Cmd::Import { workbook, out, with_strings } => cmd_import(&workbook, &out, with_strings),
        Cmd::Check { config, mode, emit_tptp, out } => {
            cmd_check(&config, &mode, emit_tptp, out.as_deref())
        }
        Cmd::Vc { config, out, emit_tptp } => cmd_vc(&config, out.as_deref(), emit_tptp),
        Cmd::Integrate { config, out, bounds, waive_vcs, mode, emit_tptp } => {
            cmd_integrate(&config, out.as_deref(), bounds.as_deref(), waive_vcs, &mode, emit_tptp)
        }
        Cmd::Export { schema, instance, out, with_strings } => {
            cmd_export(&schema, &instance, out.as_deref(), with_strings)
        }
    };
    ExitCode::from(code)
}

fn fail(msg: impl std::fmt::Display, code: u8) -> u8 {
    eprintln!("error: {msg}");
    code
}

fn read(path: &Path) -> Result<String, u8> {
    fs::read_to_string(path).map_err(|e| fail(format!("{}: {e}", path.display()), EXIT_INPUT))
}

fn write_out(path: &Path, text: &str) -> Result<(), u8> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)
            .map_err(|e| fail(format!("{}: {e}", dir.display()), EXIT_INPUT))?;
    }
    fs::write(path, text).map_err(|e| fail(format!("{}: {e}", path.display()), EXIT_INPUT))
}

fn cmd_import(workbook: &Path, out: &Path, with_strings: bool) -> u8 {
    let text = match read(workbook) {
        Ok(t) => t,
        Err(c) => return c,
    };
    let wb = match parse_workbook(&text) {
        Ok(w) => w,
        Err(errors) => {
            for e in &errors {
                eprintln!("{}: {e}", workbook.display());
            }
            return EXIT_INPUT;
        }
    };
    let stem = workbook
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "workbook".into());
    let ts = excel_typeside(with_strings);
    let (schema, inst, issues) = match import_olog(&stem, &wb, &ts) {
        Ok(r) => r,
        Err(e) => return fail(e, EXIT_INPUT),
    };
    for issue in &issues {
        eprintln!("warning: {issue:?}");
    }
    let schema_path = out.join(format!("{stem}.schema"));
    let inst_path = out.join(format!("{stem}.instance"));
    if let Err(c) = write_out(&schema_path, &print_schema(&schema)) {
        return c;
    }
    if let Err(c) = write_out(&inst_path, &print_instance(&inst)) {
        return c;
    }
    println!("wrote {}", schema_path.display());
    println!("wrote {}", inst_path.display());
    EXIT_OK
}

fn world_or_fail(config: &Path) -> Result<World, u8> {
    load_world(config).map_err(|e| fail(e, EXIT_INPUT))
}

/// Generate (and optionally discharge) the VCs of every mapping.
fn all_vcs(world: &World, mode: Option<&str>) -> Result<Vec<(String, Vec<VerificationCondition>)>, u8> {
    let mut out = Vec::new();
    for m in &world.mappings {
        let src = &world.schemas[&m.source];
        let tgt = &world.schemas[&m.target];
        let mut vcs = generate_functoriality_vcs(m, src, tgt)
            .map_err(|e| fail(format!("mapping {}: {e}", m.name), EXIT_INPUT))?;
        match mode {
            None => {}
            Some("symbolic") => check_vcs_symbolic(&mut vcs, tgt),
            Some("model") => {
                // symbolic first; remaining Unknowns are checked on the
                // saturated model of the target instance, when one exists
                check_vcs_symbolic(&mut vcs, tgt);
                if vcs.iter().any(|vc| vc.status == VcStatus::Unknown) {
                    let inst = world.instances.iter().find(|(s, _)| *s == m.target);
                    if let Some((_, inst)) = inst {
                        match inst.saturate_with(world.cfg.bounds) {
                            Ok(model) => check_vcs_on_model(&mut vcs, &model),
                            Err(e) => {
                                eprintln!("warning: target model of {}: {e}", m.name);
                            }
                        }
                    }
                }
            }
            Some(other) => {
                return Err(fail(format!("unknown mode {other}"), EXIT_INPUT));
            }
        }
        out.push((m.target.clone(), vcs));
    }
    Ok(out)
}

fn write_vc_outputs(
    world: &World,
    checked: &[(String, Vec<VerificationCondition>)],
    out: &Path,
    tptp: bool,
) -> Result<(), u8> {
    let mut all = Vec::new();
    for (_, vcs) in checked {
        all.extend(vcs.iter().cloned());
    }
    write_out(&out.join("vc_report.md"), &vc_markdown(&all))?;
    if tptp {
        for (target, vcs) in checked {
            for p in emit_tptp(vcs, &world.schemas[target]) {
                write_out(&out.join("tptp").join(format!("{}.p", p.id)), &p.text)?;
            }
        }
    }
    Ok(())
}

/// The output directory: an explicit `--out` wins, otherwise the
/// config's `output` key resolved against the config's directory.
fn resolve_out(flag: Option<&Path>, config: &Path, cfg_output: Option<&str>) -> PathBuf {
    match (flag, cfg_output) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(o)) => config.parent().unwrap_or(Path::new(".")).join(o),
        (None, None) => PathBuf::from("."),
    }
}

fn cmd_check(config: &Path, mode: &str, tptp: bool, out: Option<&Path>) -> u8 {
    let world = match world_or_fail(config) {
        Ok(w) => w,
        Err(c) => return c,
    };
    let out = &resolve_out(out, config, world.cfg.output.as_deref());
    let mode = if mode.is_empty() { world.cfg.vc_mode.clone() } else { mode.to_string() };
    let checked = match all_vcs(&world, Some(&mode)) {
        Ok(c) => c,
        Err(c) => return c,
    };
    if let Err(c) = write_vc_outputs(&world, &checked, out, tptp) {
        return c;
    }
    let mut unknown = 0;
    for (_, vcs) in &checked {
        for vc in vcs {
            println!("{}: {}", vc.id, vc.status);
            if vc.status == VcStatus::Unknown {
                unknown += 1;
            }
        }
    }
    if unknown > 0 {
        eprintln!("{unknown} verification condition(s) unresolved");
        EXIT_VC_UNKNOWN
    } else {
        EXIT_OK
    }
}

fn cmd_vc(config: &Path, out: Option<&Path>, tptp: bool) -> u8 {
    let world = match world_or_fail(config) {
        Ok(w) => w,
        Err(c) => return c,
    };
    let out = &resolve_out(out, config, world.cfg.output.as_deref());
    let checked = match all_vcs(&world, None) {
        Ok(c) => c,
        Err(c) => return c,
    };
    if let Err(c) = write_vc_outputs(&world, &checked, out, tptp) {
        return c;
    }
    let n: usize = checked.iter().map(|(_, v)| v.len()).sum();
    println!("emitted {n} verification condition(s)");
    EXIT_OK
}

fn parse_bounds(flag: Option<&str>, cfg: Bounds) -> Result<Bounds, u8> {
    let Some(s) = flag else { return Ok(cfg) };
    let parts: Vec<&str> = s.split(',').collect();
    let bad = || fail(format!("--bounds wants `max_rounds,max_fresh`, got {s}"), EXIT_INPUT);
    if parts.len() != 2 {
        return Err(bad());
    }
    let max_rounds = parts[0].trim().parse().map_err(|_| bad())?;
    let max_fresh = parts[1].trim().parse().map_err(|_| bad())?;
    Ok(Bounds { max_rounds, max_fresh })
}

fn cmd_integrate(
    config: &Path,
    out: Option<&Path>,
    bounds_flag: Option<&str>,
    waive_flag: bool,
    mode: &str,
    tptp: bool,
) -> u8 {
    let world = match world_or_fail(config) {
        Ok(w) => w,
        Err(c) => return c,
    };
    let out = &resolve_out(out, config, world.cfg.output.as_deref());
    let bounds = match parse_bounds(bounds_flag, world.cfg.bounds) {
        Ok(b) => b,
        Err(c) => return c,
    };

    // gate on the functoriality VCs unless waived
    let waived = waive_flag || world.cfg.waive_vcs;
    if !waived {
        let checked = match all_vcs(&world, Some(mode)) {
            Ok(c) => c,
            Err(c) => return c,
        };
        if let Err(c) = write_vc_outputs(&world, &checked, out, tptp) {
            return c;
        }
        let unresolved: Vec<&str> = checked
            .iter()
            .flat_map(|(_, vcs)| vcs)
            .filter(|vc| vc.status == VcStatus::Unknown)
            .map(|vc| vc.id.as_str())
            .collect();
        if !unresolved.is_empty() {
            eprintln!("unresolved verification conditions: {}", unresolved.join(", "));
            return EXIT_VC_UNKNOWN;
        }
    }

    let problem = match build_problem(&world, bounds) {
        Ok(p) => p,
        Err(e) => return fail(e, EXIT_INPUT),
    };
    let result = match integrate(&problem) {
        Ok(r) => r,
        Err(IntegrateError::Saturate(SaturateError::Inconsistent(model))) => {
            let report = consistency_check(&model);
            let _ = write_out(&out.join("consistency.md"), &consistency_markdown(&report));
            for c in &report.clashes {
                eprintln!("clash: {} = {} ({})", c.lhs, c.rhs, c.context);
            }
            return EXIT_INCONSISTENT;
        }
        Err(IntegrateError::Saturate(e @ SaturateError::NonTermination { .. })) => {
            return fail(e, EXIT_NONTERMINATING);
        }
        Err(e) => return fail(e, EXIT_INPUT),
    };
    for (inst, v) in &result.violations {
        eprintln!("warning: inclusion of {inst}: {v:?}");
    }

    let report = consistency_check(&result.merged);
    if let Err(c) = write_out(&out.join("consistency.md"), &consistency_markdown(&report)) {
        return c;
    }
    if let Err(c) = write_out(&out.join("colimit.schema"), &print_schema(&result.colimit.schema))
    {
        return c;
    }
    let merged_wb = export_olog(&result.colimit.schema, &result.merged);
    if let Err(c) = write_out(&out.join("merged.workbook"), &print_workbook(&merged_wb)) {
        return c;
    }
    for (sname, inst) in &world.instances {
        match exchange(&result, &problem.diagram, sname, inst) {
            Ok((model, diff)) => {
                let schema = &world.schemas[sname];
                let wb = export_olog(schema, &model);
                let base = format!("{}.exchanged", inst.name);
                if let Err(c) =
                    write_out(&out.join(format!("{base}.workbook")), &print_workbook(&wb))
                {
                    return c;
                }
                if let Err(c) =
                    write_out(&out.join(format!("{}.diff.txt", inst.name)), &diff.to_string())
                {
                    return c;
                }
            }
            Err(e) => return fail(format!("exchange into {sname}: {e}"), EXIT_INPUT),
        }
    }
    println!("verdict: {}", report.verdict);
    EXIT_OK
}

fn cmd_export(schema: &Path, instance: &Path, out: Option<&Path>, with_strings: bool) -> u8 {
    let ts = excel_typeside(with_strings);
    let stext = match read(schema) {
        Ok(t) => t,
        Err(c) => return c,
    };
    let s = match parse_schema(&stext, &ts) {
        Ok(s) => s,
        Err(e) => return fail(format!("{}: {e}", schema.display()), EXIT_INPUT),
    };
    let itext = match read(instance) {
        Ok(t) => t,
        Err(c) => return c,
    };
    let inst = match parse_instance(&itext, &s) {
        Ok(i) => i,
        Err(e) => return fail(format!("{}: {e}", instance.display()), EXIT_INPUT),
    };
    let model = match inst.saturate() {
        Ok(m) => m,
        Err(SaturateError::Inconsistent(model)) => {
            let report = consistency_check(&model);
            for c in &report.clashes {
                eprintln!("clash: {} = {} ({})", c.lhs, c.rhs, c.context);
            }
            return EXIT_INCONSISTENT;
        }
        Err(e @ SaturateError::NonTermination { .. }) => {
            return fail(e, EXIT_NONTERMINATING);
        }
    };
    let wb = export_olog(&s, &model);
    let text = print_workbook(&wb);
    match out {
        Some(p) => {
            if let Err(c) = write_out(p, &text) {
                return c;
            }
            println!("wrote {}", p.display());
        }
        None => print!("{text}"),
    }
    EXIT_OK
}
