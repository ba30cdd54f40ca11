use std::fs;
use std::io::Write;
use std::path::Path;

use homog_uc::cell::correctors::{compute_correctors, CorrectorTable};
use homog_uc::cell::identities::check_identities;
use homog_uc::cell::io::{read_table, write_table};
use homog_uc::polyalg::json::tensor_real_to_value;
use homog_uc::verify::study::{minimal_scale_probe, run_scaling_study};
use homog_uc::Error;

use crate::config::RunConfig;
use crate::suite::run_suite;
use crate::{exit, CliError};

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| CliError::Output {
            file: dir.display().to_string(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| CliError::Output {
        file: path.display().to_string(),
        source,
    })
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

/// Input and contract problems are configuration errors; everything else is a
/// solver or runtime failure.
fn classify(e: Error) -> CliError {
    match e {
        Error::Contract(_)
        | Error::TableTooShort { .. }
        | Error::Quadrature(_)
        | Error::Format { .. }
        | Error::DimensionMismatch { .. }
        | Error::Ellipticity { .. } => CliError::Config(e.to_string()),
        _ => CliError::Solver(e),
    }
}

fn compute(cfg: &RunConfig) -> Result<CorrectorTable, CliError> {
    let field = cfg.field_at(cfg.n)?;
    compute_correctors(&field, cfg.m_max, cfg.solver.tol).map_err(CliError::Solver)
}

/// Reuses the table under `output_dir` when it matches the config exactly.
pub fn load_or_compute(cfg: &RunConfig, log: &mut dyn Write) -> Result<CorrectorTable, CliError> {
    let manifest = cfg.table_dir().join("manifest.json");
    if manifest.exists() {
        let t = read_table(&manifest).map_err(classify)?;
        let field = cfg.field_at(cfg.n)?;
        if t.dim() == cfg.d
            && t.n() == cfg.n
            && t.m_max() == cfg.m_max
            && t.tol() == cfg.solver.tol
            && t.field().values() == field.values()
        {
            let _ = writeln!(log, "using corrector table {}", manifest.display());
            return Ok(t);
        }
        let _ = writeln!(log, "stored table does not match the config; recomputing");
    }
    compute(cfg)
}

pub fn cmd_correctors(cfg: &RunConfig, out: &mut dyn Write) -> Result<u8, CliError> {
    let table = compute(cfg)?;
    let dir = cfg.table_dir();
    let manifest = write_table(&dir, &table).map_err(CliError::Solver)?;
    let report = check_identities(&table);
    write_file(&dir.join("identities.json"), &to_json(&report))?;
    let _ = writeln!(out, "wrote {}", manifest.display());
    for m in 1..=table.m_max() {
        if let Some(t) = table.abar(m) {
            let _ = writeln!(out, "a_{m} = {}", tensor_real_to_value(t));
        }
    }
    let _ = writeln!(
        out,
        "identities: {} (threshold {:e})",
        if report.pass { "pass" } else { "FAIL" },
        report.threshold
    );
    Ok(if report.pass { exit::PASS } else { exit::PROPERTY })
}

pub fn cmd_study(cfg: &RunConfig, negative: bool, out: &mut dyn Write) -> Result<u8, CliError> {
    let Some(study) = &cfg.study else {
        return Err(CliError::Config("config has no [study] block".into()));
    };
    let table = load_or_compute(cfg, out)?;
    let report = run_scaling_study(&cfg.scaling_config(study), &table, negative).map_err(classify)?;
    let stem = if negative { "study_negative_control" } else { "study" };
    write_file(&cfg.output_dir.join(format!("{stem}.csv")), &report.to_csv())?;
    write_file(&cfg.output_dir.join(format!("{stem}.json")), &report.summary_json())?;
    for f in &report.r_fits {
        let _ = writeln!(
            out,
            "m = {} seed {}: slope of log|ratio − 1| vs log r = {} ({} points) {}",
            f.m,
            f.seed,
            f.slope.map_or("n/a".into(), |s| format!("{s:.3}")),
            f.points,
            if f.pass { "pass" } else { "FAIL" }
        );
    }
    for c in report.psi_checks.iter().filter(|c| !c.pass) {
        let _ = writeln!(
            out,
            "DEFECT m = {} seed {}: relative |𝒜q| = {:.3e}",
            c.m, c.seed, c.a_harmonic_defect
        );
    }
    for e in &report.errors {
        let _ = writeln!(out, "error: {e}");
    }
    let _ = writeln!(out, "flags: {}", serde_json::to_string(&report.flags).expect("serializable"));
    if let (Some(p), false) = (&cfg.probe, negative) {
        let probe = minimal_scale_probe(
            &table,
            &p.m_list,
            p.seeds,
            study.theta,
            cfg.rng_seed,
            p.steps_per_octave,
        )
        .map_err(classify)?;
        write_file(&cfg.output_dir.join("probe.json"), &to_json(&probe))?;
    }
    let _ = writeln!(out, "study: {}", if report.pass { "pass" } else { "FAIL" });
    Ok(if report.pass { exit::PASS } else { exit::PROPERTY })
}

pub fn cmd_verify(cfg: &RunConfig, negative: bool, out: &mut dyn Write) -> Result<u8, CliError> {
    let report = run_suite(cfg, negative)?;
    let name = if negative { "verify_negative_control.json" } else { "verify.json" };
    let json = to_json(&report);
    write_file(&cfg.output_dir.join(name), &json)?;
    let _ = out.write_all(json.as_bytes());
    Ok(if report.pass { exit::PASS } else { exit::PROPERTY })
}
