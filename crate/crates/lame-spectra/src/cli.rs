//! Command line front end.
//!
//! One command per process: build a mesh, assemble the forms, solve the
//! pencil, run the sector check, or run a registered experiment. Artifacts
//! are buffered in memory and written only when the run has succeeded, so a
//! rejected config never leaves partial files behind. Every artifact embeds
//! a SHA-256 hash of the exact config text that produced it; reruns with the
//! same inputs are byte-identical.
//!
//! Exit codes: 0 on success (experiment PASS included), 1 on numerical
//! failure or an experiment FAIL verdict (a diagnostic `error.json` or the
//! failing report is still written), 2 on usage or validation errors.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::assembly::{assemble_pencil, write_matrix_coordinate, AssembleError};
use crate::experiments::{
    exp_identity_greens, exp_sector_sweep, run_experiment, write_report_csv, ExperimentError,
    ExperimentParams, ExperimentReport, EXPERIMENT_NAMES,
};
use crate::linalg::{frob, CMat};
use crate::mesh::{refine, BoundaryPartition};
use crate::problem::{
    builtin_config, builtin_description, problem_from_config, ProblemSpec, BUILTIN_NAMES,
};
use crate::spectral::{root_chains, sector_check, solve_pencil, SolveOptions, write_spectrum_csv};

#[derive(Parser)]
#[command(
    name = "lame-spectra",
    version,
    about = "Spectral studies of factorized Lame pencils on triangle meshes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the problem mesh and write `mesh.txt`.
    Mesh(ProblemArgs),
    /// Assemble the form pencil and export the matrices in coordinate format.
    Assemble(ProblemArgs),
    /// Solve the form pencil and write `spectrum.csv` with Jordan data.
    Eig(ProblemArgs),
    /// Check the assembled pencil against its spectral sector bound.
    Sector(ProblemArgs),
    /// Run a registered experiment and write its report as CSV and JSON.
    Experiment(ExperimentArgs),
    /// List the built-in problem configurations.
    Builtins,
}

#[derive(Args)]
struct ProblemArgs {
    /// Problem config: a file path, or the name of a built-in problem.
    #[arg(long)]
    config: String,
    /// Output directory for artifacts; created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Eigensolver tolerance.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Eigensolver iteration budget; defaults to 200 per matrix dimension.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Seed for randomized checks.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Extra uniform refinement passes on top of the config's `refine` key.
    #[arg(long, default_value_t = 0)]
    refine: usize,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Registered experiment name, e.g. `exp_sector_sweep`.
    #[arg(long)]
    experiment: String,
    /// Problem override for the experiments that accept one
    /// (`exp_sector_sweep`, `exp_identity_greens`).
    #[arg(long)]
    config: Option<String>,
    /// Output directory for artifacts; created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Seed threaded into the experiment's random draws.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Extra uniform refinement passes on the overriding problem.
    #[arg(long, default_value_t = 0)]
    refine: usize,
}

/// Validation failure: exit 2, nothing written.
struct Invalid(String);

type Artifact = (String, Vec<u8>);

/// What a completed command wants done: files to write, lines for stdout,
/// and the process exit code.
struct Outcome {
    artifacts: Vec<Artifact>,
    summary: Vec<String>,
    code: i32,
}

impl Outcome {
    fn ok() -> Self {
        Outcome { artifacts: Vec::new(), summary: Vec::new(), code: 0 }
    }
}

struct LoadedConfig {
    text: String,
    hash: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Resolves `--config`: built-in names take precedence over paths.
fn load_config(spec: &str) -> Result<LoadedConfig, Invalid> {
    let text = match builtin_config(spec) {
        Some(t) => t.to_string(),
        None => std::fs::read_to_string(spec)
            .map_err(|e| Invalid(format!("cannot read config `{spec}`: {e}")))?,
    };
    let hash = sha256_hex(text.as_bytes());
    Ok(LoadedConfig { text, hash })
}

fn build_problem(cfg: &LoadedConfig, extra_refine: usize) -> Result<ProblemSpec, Invalid> {
    let mut p = problem_from_config(&cfg.text).map_err(|e| Invalid(e.to_string()))?;
    for _ in 0..extra_refine {
        p.mesh = refine(&p.mesh).map_err(|e| Invalid(format!("refinement failed: {e}")))?;
        p.partition = BoundaryPartition::from_tags(&p.mesh);
    }
    Ok(p)
}

fn ensure_out_dir(dir: &Path) -> Result<(), Invalid> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Invalid(format!("cannot create output directory `{}`: {e}", dir.display())))
}

fn error_json(hash: &str, message: &str) -> Artifact {
    let v = serde_json::json!({ "config_hash": hash, "error": message });
    let mut bytes = serde_json::to_string_pretty(&v).expect("diagnostic serialization").into_bytes();
    bytes.push(b'\n');
    ("error.json".to_string(), bytes)
}

fn complex_pairs(zs: &[crate::linalg::C64]) -> Vec<[f64; 2]> {
    zs.iter().map(|z| [z.re, z.im]).collect()
}

fn cmd_mesh(args: &ProblemArgs) -> Result<Outcome, Invalid> {
    ensure_out_dir(&args.out)?;
    let cfg = load_config(&args.config)?;
    let p = build_problem(&cfg, args.refine)?;
    let body = format!("# config_hash {}\n{}", cfg.hash, p.mesh.to_text());
    let mut out = Outcome::ok();
    out.artifacts.push(("mesh.txt".to_string(), body.into_bytes()));
    out.summary.push(format!(
        "mesh: {} vertices, {} triangles, h_max {:.6e}",
        p.mesh.n_vertices(),
        p.mesh.n_triangles(),
        p.mesh.h_max()
    ));
    Ok(out)
}

fn matrix_artifact(name: &str, hash: &str, m: &CMat) -> Result<Artifact, String> {
    let mut bytes = format!("# config_hash {hash}\n").into_bytes();
    write_matrix_coordinate(&mut bytes, m).map_err(|e| e.to_string())?;
    Ok((name.to_string(), bytes))
}

fn cmd_assemble(args: &ProblemArgs) -> Result<Outcome, Invalid> {
    ensure_out_dir(&args.out)?;
    let cfg = load_config(&args.config)?;
    let p = build_problem(&cfg, args.refine)?;
    let mut out = Outcome::ok();
    let (b, a, compact, n) = match assemble_pencil(&p) {
        Ok((_, pencil)) => (pencil.b, pencil.a, pencil.compact, pencil.n),
        // a fully constrained problem assembles to the empty pencil
        Err(AssembleError::EmptySystem) => {
            (CMat::zeros(0, 0), CMat::zeros(0, 0), CMat::zeros(0, 0), 0)
        }
        Err(e) => {
            out.artifacts.push(error_json(&cfg.hash, &e.to_string()));
            out.code = 1;
            return Ok(out);
        }
    };
    for (name, m) in
        [("core_form.mtx", &b), ("perturbed_form.mtx", &a), ("compact_part.mtx", &compact)]
    {
        match matrix_artifact(name, &cfg.hash, m) {
            Ok(art) => out.artifacts.push(art),
            Err(msg) => {
                out.artifacts = vec![error_json(&cfg.hash, &msg)];
                out.code = 1;
                return Ok(out);
            }
        }
    }
    out.summary.push(format!("assembled pencil: {n} degrees of freedom"));
    Ok(out)
}

const SPECTRUM_HEADER: &str = "re,im,residual,cluster_id,alg_mult,chain_len\n";

fn cmd_eig(args: &ProblemArgs) -> Result<Outcome, Invalid> {
    ensure_out_dir(&args.out)?;
    let cfg = load_config(&args.config)?;
    let p = build_problem(&cfg, args.refine)?;
    let mut out = Outcome::ok();
    let pencil = match assemble_pencil(&p) {
        Ok((_, pencil)) => pencil,
        Err(AssembleError::EmptySystem) => {
            let body = format!("# config_hash {}\n{}", cfg.hash, SPECTRUM_HEADER);
            out.artifacts.push(("spectrum.csv".to_string(), body.into_bytes()));
            out.summary.push("empty pencil: no degrees of freedom, no spectrum".to_string());
            return Ok(out);
        }
        Err(e) => {
            out.artifacts.push(error_json(&cfg.hash, &e.to_string()));
            out.code = 1;
            return Ok(out);
        }
    };
    let opts = SolveOptions { tol: args.tol, max_iter: args.max_iter, ..SolveOptions::default() };
    let numerical = |out: &mut Outcome, hash: &str, msg: &str| {
        out.artifacts.push(error_json(hash, msg));
        out.code = 1;
    };
    let sol = match solve_pencil(&pencil.a, &pencil.b, &opts) {
        Ok(s) => s,
        Err(e) => {
            numerical(&mut out, &cfg.hash, &e.to_string());
            return Ok(out);
        }
    };
    let scale = frob(&sol.reduction.c);
    let chains = match root_chains(
        &sol.reduction.c,
        &sol.spectrum,
        opts.cluster_tol_rel * scale,
        opts.rank_tol_rel * scale,
    ) {
        Ok(c) => c,
        Err(e) => {
            numerical(&mut out, &cfg.hash, &e.to_string());
            return Ok(out);
        }
    };
    let mut bytes = format!("# config_hash {}\n", cfg.hash).into_bytes();
    if let Err(e) = write_spectrum_csv(&mut bytes, &sol.spectrum, &chains) {
        numerical(&mut out, &cfg.hash, &e.to_string());
        return Ok(out);
    }
    out.artifacts.push(("spectrum.csv".to_string(), bytes));
    out.summary.push(format!(
        "{} eigenvalues in {} clusters",
        sol.spectrum.eigenvalues.len(),
        chains.clusters.len()
    ));
    if !sol.spectrum.converged {
        let worst = sol.spectrum.residuals.iter().cloned().fold(0.0f64, f64::max);
        out.artifacts.push(error_json(
            &cfg.hash,
            &format!("eigensolver missed the residual tolerance: worst residual {worst:.3e}"),
        ));
        out.code = 1;
    }
    Ok(out)
}

fn cmd_sector(args: &ProblemArgs) -> Result<Outcome, Invalid> {
    ensure_out_dir(&args.out)?;
    let cfg = load_config(&args.config)?;
    let p = build_problem(&cfg, args.refine)?;
    let mut out = Outcome::ok();
    let pencil = match assemble_pencil(&p) {
        Ok((_, pencil)) => pencil,
        Err(AssembleError::EmptySystem) => {
            return Err(Invalid("fully constrained problem has no spectrum to confine".into()))
        }
        Err(e) => {
            out.artifacts.push(error_json(&cfg.hash, &e.to_string()));
            out.code = 1;
            return Ok(out);
        }
    };
    let rep = match sector_check(&pencil, args.tol) {
        Ok(r) => r,
        Err(e) => {
            out.artifacts.push(error_json(&cfg.hash, &e.to_string()));
            out.code = 1;
            return Ok(out);
        }
    };
    let v = serde_json::json!({
        "config_hash": cfg.hash,
        "report": {
            "m": rep.m,
            "compact_norm": rep.compact_norm,
            "angle_bound": rep.angle_bound,
            "max_disc_excess": rep.max_disc_excess,
            "max_angle": rep.max_angle,
            "n_eigenvalues": rep.n_eigenvalues,
            "violations": complex_pairs(&rep.violations),
            "compact_attributed": complex_pairs(&rep.compact_attributed),
            "fredholm_ok": rep.fredholm_ok,
            "completeness_margin": rep.completeness_margin,
        },
    });
    let mut bytes = serde_json::to_string_pretty(&v).expect("report serialization").into_bytes();
    bytes.push(b'\n');
    out.artifacts.push(("sector.json".to_string(), bytes));
    out.summary.push(format!(
        "sector check: relative norm {:.6e}, max angle {:.6}, {} violations",
        rep.m,
        rep.max_angle,
        rep.violations.len()
    ));
    if !rep.violations.is_empty() {
        out.code = 1;
    }
    Ok(out)
}

fn experiment_artifacts(hash: &str, report: &ExperimentReport) -> Result<Vec<Artifact>, String> {
    let mut csv = format!("# config_hash {hash}\n").into_bytes();
    write_report_csv(&mut csv, report).map_err(|e| e.to_string())?;
    let v = serde_json::json!({ "config_hash": hash, "report": report });
    let mut json = serde_json::to_string_pretty(&v).map_err(|e| e.to_string())?.into_bytes();
    json.push(b'\n');
    Ok(vec![(format!("{}.csv", report.name), csv), (format!("{}.json", report.name), json)])
}

fn cmd_experiment(args: &ExperimentArgs) -> Result<Outcome, Invalid> {
    ensure_out_dir(&args.out)?;
    let name = args.experiment.as_str();
    if !EXPERIMENT_NAMES.contains(&name) {
        return Err(Invalid(format!(
            "unknown experiment `{name}`; known: {}",
            EXPERIMENT_NAMES.join(", ")
        )));
    }
    let mut params = ExperimentParams::default();
    params.seed = args.seed;

    let (hash, result) = match &args.config {
        Some(spec) => {
            let cfg = load_config(spec)?;
            let p = build_problem(&cfg, args.refine)?;
            let run = match name {
                "exp_sector_sweep" => {
                    exp_sector_sweep(&p, &params.m_list, params.trials, params.seed)
                }
                "exp_identity_greens" => exp_identity_greens(&p, params.n_pairs, params.seed),
                _ => {
                    return Err(Invalid(format!(
                        "--config applies only to exp_sector_sweep and exp_identity_greens, \
                         not `{name}`"
                    )))
                }
            };
            (cfg.hash, run)
        }
        None => {
            let canonical = format!("experiment = {name}\nseed = {}\n", args.seed);
            (sha256_hex(canonical.as_bytes()), run_experiment(name, &params))
        }
    };

    let mut out = Outcome::ok();
    let report = match result {
        Ok(r) => r,
        // parameter-level rejections happen before any numerics
        Err(e @ (ExperimentError::Parameter(_) | ExperimentError::UnknownName(_))) => {
            return Err(Invalid(e.to_string()))
        }
        Err(ExperimentError::Problem(e)) => return Err(Invalid(e.to_string())),
        Err(e) => {
            out.artifacts.push(error_json(&hash, &e.to_string()));
            out.code = 1;
            return Ok(out);
        }
    };
    match experiment_artifacts(&hash, &report) {
        Ok(mut arts) => out.artifacts.append(&mut arts),
        Err(msg) => {
            out.artifacts = vec![error_json(&hash, &msg)];
            out.code = 1;
            return Ok(out);
        }
    }
    out.summary.push(format!("{}: {}", report.name, report.verdict));
    if !report.passed() {
        out.code = 1;
    }
    Ok(out)
}

fn cmd_builtins() -> Outcome {
    let mut out = Outcome::ok();
    for name in BUILTIN_NAMES {
        let desc = builtin_description(name).unwrap_or("");
        out.summary.push(format!("{name}  {desc}"));
    }
    out
}

fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<Vec<PathBuf>, String> {
    let mut written = Vec::new();
    for (name, bytes) in artifacts {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| format!("writing `{}`: {e}", path.display()))?;
        written.push(path);
    }
    Ok(written)
}

/// Parses `std::env::args`, runs the command, writes artifacts, and returns
/// the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (outcome, out_dir) = match &cli.command {
        Command::Mesh(a) => (cmd_mesh(a), Some(a.out.clone())),
        Command::Assemble(a) => (cmd_assemble(a), Some(a.out.clone())),
        Command::Eig(a) => (cmd_eig(a), Some(a.out.clone())),
        Command::Sector(a) => (cmd_sector(a), Some(a.out.clone())),
        Command::Experiment(a) => (cmd_experiment(a), Some(a.out.clone())),
        Command::Builtins => (Ok(cmd_builtins()), None),
    };
    let outcome = match outcome {
        Ok(o) => o,
        Err(Invalid(msg)) => {
            eprintln!("error: {msg}");
            return 2;
        }
    };
    if let Some(dir) = out_dir {
        match write_artifacts(&dir, &outcome.artifacts) {
            Ok(paths) => {
                for p in paths {
                    println!("wrote {}", p.display());
                }
            }
            Err(msg) => {
                eprintln!("error: {msg}");
                return 1;
            }
        }
    }
    for line in &outcome.summary {
        println!("{line}");
    }
    outcome.code
}
