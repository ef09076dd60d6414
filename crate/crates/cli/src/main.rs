//! `ergocert`: certified convergence rates and truncation error bounds for
//! countable-state Markov kernels.
//!
//! Subcommands:
//!
//! * `drift`   — solve the drift base and print every core constant.
//! * `certify` — run the certification loop, audit the result against the
//!   brute-force oracle, and write `report.csv` + `trace.log`.
//! * `tables`  — recompute the published reference tables and report
//!   deviations.
//!
//! Exit codes: 0 success, 1 error (bad config, model failure), 2 the
//! certification loop exhausted its level cap, 3 a reference-table deviation
//! exceeded its tolerance.

mod plot;
mod tables;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use ergocert_core::bounds::core_constants;
use ergocert_core::certify::{
    build_oracle, run_certification, validate, CertificationParams, WindowPolicy,
};
use ergocert_core::config::{KernelConfig, ResolvedModel, REFERENCE_CONFIG_JSON};
use ergocert_core::kernels::DriftCertificate;
use ergocert_core::models::drift_params;

#[derive(Parser)]
#[command(
    name = "ergocert",
    about = "Certified geometric ergodicity and truncation bounds for countable Markov kernels",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the drift base and print the core constants with provenance.
    Drift(CommonArgs),
    /// Run the certification loop and the oracle audit; write report.csv and trace.log.
    Certify(CertifyArgs),
    /// Recompute the reference tables and report deviations.
    Tables(TablesArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Path to a JSON model configuration; the built-in reference random
    /// walk is used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct CertifyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Initial truncation level (default 5; overrides the config).
    #[arg(long)]
    k0: Option<usize>,
    /// Level cap for the certification loop (default 200).
    #[arg(long)]
    k_cap: Option<usize>,
    /// Fixed spectral window half-width (with --rk selects the fixed
    /// policy; default: grid search).
    #[arg(long)]
    vartheta: Option<f64>,
    /// Fixed certified rate target (with --vartheta selects the fixed policy).
    #[arg(long)]
    rk: Option<f64>,
    /// Fixed rate for the truncated chain (default: max(second
    /// eigenvalue, hat_alpha) + 0.01).
    #[arg(long)]
    rho_k: Option<f64>,
    /// Skip the oracle audit.
    #[arg(long)]
    no_oracle: bool,
    /// Output directory for report.csv, trace.log and plots.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Also write SVG charts of the bound curves.
    #[arg(long)]
    plot: bool,
}

#[derive(Args)]
struct TablesArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Output directory for the table files.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Output format for the table files.
    #[arg(long, default_value = "csv", value_parser = ["csv", "md"])]
    format: String,
}

/// Algorithm section of the JSON config; every field has a default and CLI
/// flags override file values.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct AlgorithmConfig {
    initial_k: Option<usize>,
    k_cap: Option<usize>,
    stride: Option<usize>,
    rho_k: Option<f64>,
    rho_margin: Option<f64>,
    s_cap: Option<usize>,
    vartheta: Option<f64>,
    r_k: Option<f64>,
    horizon: Option<usize>,
    /// Known rate for the full kernel (defaults to the drift factor for the
    /// random-walk family, where the two coincide).
    rho_prior: Option<f64>,
    /// Drift parameters for explicit kernels (derived for random walks).
    delta: Option<f64>,
    l: Option<f64>,
    r_ess_bound: Option<f64>,
    oracle_k_ref: Option<usize>,
    oracle_n_max: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfigFile {
    #[serde(flatten)]
    kernel: KernelConfig,
    #[serde(default)]
    algorithm: AlgorithmConfig,
}

struct LoadedConfig {
    resolved: ResolvedModel,
    algorithm: AlgorithmConfig,
}

fn load_config(common: &CommonArgs) -> Result<LoadedConfig, String> {
    let text = match &common.config {
        Some(path) => std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?,
        None => REFERENCE_CONFIG_JSON.to_string(),
    };
    let parsed: RunConfigFile =
        serde_json::from_str(&text).map_err(|e| format!("config schema error: {e}"))?;
    let resolved = parsed
        .kernel
        .resolve()
        .map_err(|e| format!("config error: {e}"))?;
    Ok(LoadedConfig {
        resolved,
        algorithm: parsed.algorithm,
    })
}

/// Drift data for the resolved model: analytic for the random-walk family,
/// from explicit config values otherwise.
fn drift_for(loaded: &LoadedConfig) -> Result<(DriftCertificate, f64, Option<f64>), String> {
    if let Some((spec, sol)) = &loaded.resolved.walk {
        let cert = drift_params(spec, sol).map_err(|e| format!("drift derivation failed: {e}"))?;
        // For this family the essential spectral radius equals the drift
        // factor, and so does the best geometric rate of the kernel itself.
        let r_ess = loaded.algorithm.r_ess_bound.unwrap_or(cert.delta);
        let rho_prior = loaded.algorithm.rho_prior.or(Some(cert.delta));
        Ok((cert, r_ess, rho_prior))
    } else {
        let (Some(delta), Some(l)) = (loaded.algorithm.delta, loaded.algorithm.l) else {
            return Err("explicit kernels need algorithm.delta and algorithm.l".into());
        };
        let cert = ergocert_core::kernels::verify_drift(
            &loaded.resolved.kernel,
            &loaded.resolved.weight,
            delta,
            l,
            loaded.algorithm.initial_k.unwrap_or(64).max(64),
        )
        .map_err(|e| format!("drift verification failed: {e}"))?;
        let r_ess = loaded.algorithm.r_ess_bound.unwrap_or(delta);
        Ok((cert, r_ess, loaded.algorithm.rho_prior))
    }
}

fn cmd_drift(args: &CommonArgs) -> Result<(), String> {
    let loaded = load_config(args)?;
    let (cert, r_ess, _) = drift_for(&loaded)?;
    let core = core_constants(&cert, r_ess);
    if let Some((_, sol)) = &loaded.resolved.walk {
        println!(
            "gamma_hat   = {:<22} [minimizer of sum_m a_m gamma^m on (1, inf)]",
            sol.gamma_hat
        );
        println!(
            "phi(gamma^) = {:<22} [value at the minimizer]",
            sol.phi_at_gamma_hat
        );
    }
    println!("delta       = {:<22} [drift contraction: PV <= delta V + L]", core.delta);
    println!("L           = {:<22} [drift offset]", core.l);
    println!("A           = {:<22} [A = 1 + L/(1-delta)]", core.a);
    println!("K           = {:<22} [K = max(2(delta+L), 1)]", core.k_const);
    println!("hat_alpha   = {:<22} [max(r_ess bound, delta)]", core.hat_alpha);
    println!("B           = {:<22} [B = L/(1-hat_alpha)]", core.b);
    println!(
        "drift check: {} rows verified, analytic tail = {}",
        cert.rows_checked, cert.analytic_tail
    );
    Ok(())
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), String> {
    std::fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_certify(args: &CertifyArgs) -> Result<ExitCode, String> {
    let loaded = load_config(&args.common)?;
    let (cert, r_ess, rho_prior) = drift_for(&loaded)?;
    let alg = &loaded.algorithm;

    let vartheta = args.vartheta.or(alg.vartheta);
    let rk = args.rk.or(alg.r_k);
    let window = match (vartheta, rk) {
        (Some(vt), Some(r)) => WindowPolicy::Fixed { vartheta: vt, r_k: r },
        (None, None) => WindowPolicy::Grid {
            vartheta_steps: 12,
            r_steps: 12,
            horizon: alg.horizon.unwrap_or(50),
        },
        _ => return Err("--vartheta and --rk must be given together".into()),
    };
    let params = CertificationParams {
        initial_k: args.k0.or(alg.initial_k).unwrap_or(5),
        k_cap: args.k_cap.or(alg.k_cap).unwrap_or(200),
        stride: alg.stride.unwrap_or(1),
        rho_k: args.rho_k.or(alg.rho_k),
        rho_margin: alg.rho_margin.unwrap_or(0.01),
        s_cap: alg.s_cap.unwrap_or(10_000),
        window,
    };

    let run = run_certification(
        &loaded.resolved.kernel,
        &loaded.resolved.weight,
        &cert,
        r_ess,
        rho_prior,
        &params,
    )
    .map_err(|e| format!("certification failed: {e}"))?;

    write_file(&args.out, "trace.log", &run.trace_log())?;

    let Some(report) = &run.report else {
        // Still emit the (empty-result) report file so runs are comparable.
        write_file(
            &args.out,
            "report.csv",
            &format!("{}\n", ergocert_core::BoundReport::csv_header()),
        )?;
        eprintln!(
            "certification exhausted: no level up to {} passed the gate",
            params.k_cap
        );
        return Ok(ExitCode::from(2));
    };

    let csv = format!(
        "{}\n{}\n",
        ergocert_core::BoundReport::csv_header(),
        report.csv_row()
    );
    write_file(&args.out, "report.csv", &csv)?;
    write_file(&args.out, "provenance.log", &report.provenance_log())?;
    println!(
        "accepted k = {} (k1 = {}): rate {} with constant {:.6e}",
        report.k, report.k1, report.r_k, report.c_k
    );
    println!(
        "tv_direct = {:.6e}   tv_from_rate(k) = {:.6e}",
        report.tv_direct, report.tv_from_rate_at_k
    );

    if args.plot {
        let ks: Vec<usize> = (report.n_k.max(5)..=report.k + 20).collect();
        let tv_curve: Vec<(f64, f64)> = ks
            .iter()
            .filter_map(|&n| report.tv_from_rate(n).ok().map(|b| (n as f64, b)))
            .collect();
        let pn_curve: Vec<(f64, f64)> = (0..=300)
            .step_by(5)
            .map(|n| (n as f64, report.pn_bound(n)))
            .collect();
        let svg1 = plot::render_log_chart(
            "stationary truncation error bound vs level",
            "truncation level n",
            &[plot::Curve {
                label: "tv_from_rate(n)",
                points: tv_curve,
                color: "#0066cc",
            }],
        );
        write_file(&args.out, "bound_vs_level.svg", &svg1)?;
        let svg2 = plot::render_log_chart(
            "iterate deviation bound vs time",
            "iteration n",
            &[plot::Curve {
                label: "c_k r_k^(n+1)",
                points: pn_curve,
                color: "#cc3300",
            }],
        );
        write_file(&args.out, "bound_vs_time.svg", &svg2)?;
    }

    if !args.no_oracle {
        let default_ref = loaded
            .resolved
            .weight
            .first_index_reaching(report.core.k_const / 1e-12)
            .unwrap_or(4 * report.k)
            .max(4 * report.k)
            .min(5000);
        let k_ref = alg.oracle_k_ref.unwrap_or(default_ref);
        let n_max = alg.oracle_n_max.unwrap_or(100);
        let oracle = build_oracle(&loaded.resolved.kernel, &loaded.resolved.weight, k_ref, n_max)
            .map_err(|e| format!("oracle construction failed: {e}"))?;
        let summary = validate(report, &oracle, &loaded.resolved.kernel)
            .map_err(|e| format!("oracle audit failed: {e}"))?;
        println!(
            "oracle audit (k_ref = {k_ref}): margins tv_direct {:.3e}, tv_rate {:.3e}, pn {:.3e}",
            summary.tv_direct_margin, summary.tv_rate_margin, summary.min_pn_margin
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_tables(args: &TablesArgs) -> Result<ExitCode, String> {
    if args.common.config.is_some() {
        // The reference tables are defined for the built-in instance; a
        // custom model has nothing to compare against.
        return Err("tables compares against built-in reference values; drop --config".into());
    }
    let ctx = tables::reference_context();
    let reports = tables::all_tables(&ctx);
    let mut all_ok = true;
    for report in &reports {
        let (name, contents) = match args.format.as_str() {
            "md" => (
                format!("{}.md", report.name.split_whitespace().next().unwrap()),
                report.to_markdown(),
            ),
            _ => (
                format!("{}.csv", report.name.split_whitespace().next().unwrap()),
                report.to_csv(),
            ),
        };
        write_file(&args.out, &name, &contents)?;
        let gated = report
            .comparisons
            .iter()
            .filter(|c| c.note.is_none())
            .count();
        println!(
            "{}: {} gated entries, {}",
            report.name,
            gated,
            if report.all_pass() { "all ok" } else { "DEVIATIONS" }
        );
        if !report.all_pass() {
            all_ok = false;
            for f in report.comparisons.iter().filter(|c| !c.passes()) {
                eprintln!(
                    "  DEVIATION {}: computed {} vs reference {} (rel {:.2e} > tol {:.2e})",
                    f.label,
                    f.computed,
                    f.reference,
                    f.deviation(),
                    f.tolerance
                );
            }
        }
    }
    Ok(if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    })
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("ERGOCERT_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let result = match &cli.command {
        Command::Drift(args) => cmd_drift(args).map(|()| ExitCode::SUCCESS),
        Command::Certify(args) => cmd_certify(args),
        Command::Tables(args) => cmd_tables(args),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
