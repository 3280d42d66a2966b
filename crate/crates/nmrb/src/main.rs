//! Config-driven experiment runner.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use nmrb::analysis::{
    auto_reference_window, coherence_diagnosis, fit_exponential, memory_length_scan,
    rb_nonmarkovianity,
};
use nmrb::asf::{asf_curve_analytical, asf_oracle_clifford_enum, asf_with_identities, ASFCurve,
    AsfPoint, CurveMeta, EngineKind};
use nmrb::config::{markovianize_process, ExperimentConfig, QOrder};
use nmrb::core::proj;
use nmrb::error::NmrbError;
use nmrb::output::{atomic_write, config_hash, scan_csv, write_json, AsfTable, Report};
use nmrb::rbsim::{run_interleaved_identity_scan, run_rb};

#[derive(Parser)]
#[command(name = "nmrb", version, about = "Randomized benchmarking under correlated noise")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Override the config's RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: current directory)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Rayon thread count (falls back to NMRB_THREADS, then all cores)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate ASF curves with the configured engines
    Asf(RunArgs),
    /// Monte-Carlo protocol simulation only
    Simulate(RunArgs),
    /// Exponential fit of the configured model's curve
    Fit(RunArgs),
    /// Identity-fixing memory-length scan
    MemoryScan(RunArgs),
    /// N_q distance to the Markovianized counterpart
    Nonmarkov(RunArgs),
    /// Coherent-vs-dissipative diagnosis from interleaved identities
    Coherence(RunArgs),
}

fn main() {
    let cli = Cli::parse();
    let (name, args) = match &cli.cmd {
        Cmd::Asf(a) => ("asf", a),
        Cmd::Simulate(a) => ("simulate", a),
        Cmd::Fit(a) => ("fit", a),
        Cmd::MemoryScan(a) => ("memory-scan", a),
        Cmd::Nonmarkov(a) => ("nonmarkov", a),
        Cmd::Coherence(a) => ("coherence", a),
    };
    init_threads(args.threads);
    match execute(name, args) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("nmrb {name}: {e}");
            std::process::exit(match e {
                NmrbError::Config(_) | NmrbError::Json(_) | NmrbError::Io(_) => 2,
                _ => 3,
            });
        }
    }
}

fn init_threads(flag: Option<usize>) {
    let n = flag.or_else(|| {
        std::env::var("NMRB_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = n {
        // a second global-pool initialization in the same process is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

struct Ctx {
    cfg: ExperimentConfig,
    hash: String,
    out_dir: PathBuf,
}

impl Ctx {
    fn path(&self, suffix: &str) -> PathBuf {
        self.out_dir.join(format!("{}{suffix}", self.cfg.output.path))
    }

    fn seed(&self) -> u64 {
        self.cfg.run.seed
    }

    fn report<'a, T: serde::Serialize>(&'a self, command: &'a str, result: T) -> Report<'a, T> {
        Report {
            command,
            config_hash: &self.hash,
            seed: self.seed(),
            config: &self.cfg,
            result,
        }
    }
}

fn execute(name: &str, args: &RunArgs) -> nmrb::Result<()> {
    let mut cfg = ExperimentConfig::from_path(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.run.seed = seed;
    }
    if name == "simulate" {
        if cfg.is_direct_model() {
            return Err(NmrbError::Config(
                "simulate: closed-form models have no Monte-Carlo realization".into(),
            ));
        }
        cfg.engines = vec![EngineKind::MonteCarlo];
    }
    let hash = config_hash(&cfg)?;
    let ctx = Ctx {
        out_dir: args.out.clone().unwrap_or_else(|| PathBuf::from(".")),
        cfg,
        hash,
    };
    match name {
        "asf" | "simulate" => cmd_asf(&ctx, name),
        "fit" => cmd_fit(&ctx),
        "memory-scan" => cmd_memory_scan(&ctx),
        "nonmarkov" => cmd_nonmarkov(&ctx),
        "coherence" => cmd_coherence(&ctx),
        _ => unreachable!(),
    }
}

fn require_process(ctx: &Ctx, what: &str) -> nmrb::Result<nmrb::noise::NoiseProcess> {
    if ctx.cfg.is_direct_model() {
        return Err(NmrbError::Config(format!(
            "{what}: not defined for closed-form models"
        )));
    }
    let m_max = *ctx.cfg.run.m_values.last().unwrap();
    ctx.cfg.build_process(m_max)
}

fn markovianized_curve(
    ctx: &Ctx,
    process: &nmrb::noise::NoiseProcess,
    ms: &[usize],
) -> nmrb::Result<ASFCurve> {
    let m_max = *ms.last().unwrap();
    let counterpart = markovianize_process(process, &proj(process.d_e, 0), m_max)?;
    let curve = asf_curve_analytical(&counterpart, ms)?;
    ASFCurve::new(
        curve.points,
        CurveMeta {
            engine: EngineKind::Markovianized,
            seed: Some(ctx.seed()),
            ..CurveMeta::analytical(counterpart.model_id.clone())
        },
    )
}

fn cmd_asf(ctx: &Ctx, command: &str) -> nmrb::Result<()> {
    let cfg = &ctx.cfg;
    let ms = cfg.run.m_values.clone();
    let mut table = AsfTable {
        m_values: ms.clone(),
        analytical: None,
        markovianized: None,
        monte_carlo: None,
    };
    let mut oracle: BTreeMap<usize, f64> = BTreeMap::new();
    if cfg.is_direct_model() {
        table.analytical = Some(cfg.direct_curve()?);
    } else {
        let process = require_process(ctx, command)?;
        for engine in &cfg.engines {
            match engine {
                EngineKind::Analytical => {
                    table.analytical = Some(asf_curve_analytical(&process, &ms)?);
                }
                EngineKind::Markovianized => {
                    table.markovianized = Some(markovianized_curve(ctx, &process, &ms)?);
                }
                EngineKind::MonteCarlo => {
                    table.monte_carlo = Some(run_rb(&process, &cfg.run)?);
                }
                EngineKind::Oracle => {
                    for &m in ms.iter().filter(|&&m| m <= 2) {
                        oracle.insert(m, asf_oracle_clifford_enum(&process, m)?);
                    }
                }
            }
        }
    }
    atomic_write(
        &ctx.path(".csv"),
        table.to_csv(&ctx.hash, ctx.seed()).as_bytes(),
    )?;
    write_json(
        &ctx.path(".json"),
        &ctx.report(
            command,
            json!({
                "engines": cfg.engines,
                "oracle": oracle,
                "analytical": table.analytical,
                "markovianized": table.markovianized,
                "monte_carlo": table.monte_carlo,
            }),
        ),
    )?;
    Ok(())
}

/// The curve a fit or diagnosis should run on: analytical when available,
/// Monte-Carlo otherwise.
fn primary_curve(ctx: &Ctx) -> nmrb::Result<ASFCurve> {
    let cfg = &ctx.cfg;
    if cfg.is_direct_model() {
        return cfg.direct_curve();
    }
    let process = require_process(ctx, "fit")?;
    if cfg.engines.contains(&EngineKind::Analytical) {
        asf_curve_analytical(&process, &cfg.run.m_values)
    } else {
        run_rb(&process, &cfg.run)
    }
}

fn cmd_fit(ctx: &Ctx) -> nmrb::Result<()> {
    let curve = primary_curve(ctx)?;
    let window = match ctx.cfg.analysis.as_ref().and_then(|a| a.fit_window) {
        Some(w) => w,
        None => auto_reference_window(&curve)?,
    };
    let fit = fit_exponential(&curve, Some(window))?;
    write_json(
        &ctx.path("_fit.json"),
        &ctx.report("fit", json!({ "window": window, "fit": fit, "curve": curve })),
    )?;
    Ok(())
}

fn cmd_memory_scan(ctx: &Ctx) -> nmrb::Result<()> {
    let cfg = &ctx.cfg;
    let analysis = cfg.analysis.as_ref().ok_or_else(|| {
        NmrbError::Config("memory-scan: analysis section with scan_k_max required".into())
    })?;
    let k_max = analysis
        .scan_k_max
        .ok_or_else(|| NmrbError::Config("memory-scan: scan_k_max missing".into()))?;
    if k_max == 0 {
        return Err(NmrbError::Config("memory-scan: scan_k_max must be ≥ 1".into()));
    }
    let m_scan = analysis
        .scan_m_max
        .unwrap_or_else(|| *cfg.run.m_values.last().unwrap());
    let rel_tol = analysis.rel_tol.unwrap_or(0.01);
    let process = require_process(ctx, "memory-scan")?;
    let monte_carlo = !cfg.engines.contains(&EngineKind::Analytical);

    let baseline = if monte_carlo {
        run_rb(&process, &cfg.run)?
    } else {
        asf_curve_analytical(&process, &cfg.run.m_values)?
    };
    let window = match analysis.fit_window {
        Some(w) => w,
        None => auto_reference_window(&baseline)?,
    };
    let mut curves: BTreeMap<BTreeSet<usize>, ASFCurve> = BTreeMap::new();
    curves.insert(BTreeSet::new(), baseline);
    for k in 1..=k_max {
        // fix k identities right after the first random gate, so the first
        // effective step carries the k+1-fold composed noise; curves stay
        // indexed by total sequence length, over the same grid as the
        // baseline (identities need k+1 ≤ m)
        let pattern: BTreeSet<usize> = (2..=k + 1).collect();
        let scan_ms: Vec<usize> = cfg
            .run
            .m_values
            .iter()
            .copied()
            .filter(|&m| m > k && m <= m_scan)
            .collect();
        if scan_ms.len() < 4 {
            return Err(NmrbError::Config(format!(
                "memory-scan: fewer than 4 sequence lengths exceed pattern size {k}"
            )));
        }
        let curve = if monte_carlo {
            let mut run = cfg.run.clone();
            run.m_values = scan_ms;
            run.fixed_ids = pattern.clone();
            run_rb(&process, &run)?
        } else {
            use rayon::prelude::*;
            let values: nmrb::Result<Vec<f64>> = scan_ms
                .par_iter()
                .map(|&m| asf_with_identities(&process, m, &pattern))
                .collect();
            let points = scan_ms
                .iter()
                .zip(values?)
                .map(|(&m, value)| AsfPoint {
                    m,
                    value,
                    stderr: None,
                })
                .collect();
            ASFCurve::new(
                points,
                CurveMeta {
                    identity_pattern: pattern.iter().copied().collect(),
                    ..CurveMeta::analytical(process.model_id.clone())
                },
            )?
        };
        curves.insert(pattern, curve);
    }
    let report = memory_length_scan(&curves, window, rel_tol)?;
    let by_k: BTreeMap<usize, ASFCurve> = curves
        .into_iter()
        .map(|(pat, c)| (pat.len(), c))
        .collect();
    atomic_write(
        &ctx.path("_patterns.csv"),
        scan_csv(&by_k, &ctx.hash, ctx.seed()).as_bytes(),
    )?;
    write_json(
        &ctx.path("_scan.json"),
        &ctx.report("memory-scan", json!({ "window": window, "report": report })),
    )?;
    Ok(())
}

fn cmd_nonmarkov(ctx: &Ctx) -> nmrb::Result<()> {
    let cfg = &ctx.cfg;
    let process = require_process(ctx, "nonmarkov")?;
    let ms = cfg.run.m_values.clone();
    let curve = asf_curve_analytical(&process, &ms)?;
    let reference = markovianized_curve(ctx, &process, &ms)?;
    let q_values = cfg
        .analysis
        .as_ref()
        .and_then(|a| a.q_values.clone())
        .unwrap_or_else(|| vec![QOrder(1.0), QOrder(2.0), QOrder(f64::INFINITY)]);
    let table: nmrb::Result<Vec<_>> = q_values
        .iter()
        .map(|q| {
            rb_nonmarkovianity(&curve, &reference, q.0).map(|n| json!({ "q": q, "n_q": n }))
        })
        .collect();
    write_json(
        &ctx.path("_nonmarkov.json"),
        &ctx.report(
            "nonmarkov",
            json!({ "n_q": table?, "curve": curve, "reference": reference }),
        ),
    )?;
    Ok(())
}

fn cmd_coherence(ctx: &Ctx) -> nmrb::Result<()> {
    let cfg = &ctx.cfg;
    let process = require_process(ctx, "coherence")?;
    let depths = cfg
        .analysis
        .as_ref()
        .and_then(|a| a.interleave_depths.clone())
        .unwrap_or_else(|| vec![0, 1, 2]);
    let scan = run_interleaved_identity_scan(&process, &cfg.run, &depths)?;
    let threshold = match cfg.analysis.as_ref().and_then(|a| a.residual_threshold) {
        Some(t) => t,
        None => {
            // calibrate against the Markovianized counterpart run through the
            // same sampling: its residual is pure estimator noise
            let m_max = *cfg.run.m_values.last().unwrap();
            let counterpart = markovianize_process(&process, &proj(process.d_e, 0), m_max)?;
            let mc = run_rb(&counterpart, &cfg.run)?;
            5.0 * fit_exponential(&mc, None)?.max_residual
        }
    };
    let verdict = coherence_diagnosis(&scan, threshold)?;
    let residuals: nmrb::Result<Vec<_>> = scan
        .iter()
        .zip(&depths)
        .map(|(c, &k)| {
            fit_exponential(c, None).map(|f| json!({ "depth": k, "max_residual": f.max_residual }))
        })
        .collect();
    write_json(
        &ctx.path("_coherence.json"),
        &ctx.report(
            "coherence",
            json!({
                "verdict": verdict,
                "residual_threshold": threshold,
                "residuals": residuals?,
                "curves": scan,
            }),
        ),
    )?;
    Ok(())
}
