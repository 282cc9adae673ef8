//! Command-line front end.

use crate::error::{OrfError, Result};
use crate::fit::{FitResult, Method};
use crate::io;
use crate::kernels::RngStream;
use crate::mcem::{fit_mcem, parse_schedule, McemConfig};
use crate::model::{Dataset, ItemSpec};
use crate::mom::fit_mom;
use crate::scoring::{eap_scores, predict_all};
use crate::simulate::{item_ids, simulate_dataset, table1_scenario, SimConfig};
use crate::study::{run_study, StudyConfig, StudyMethods, StudyReport, PARAMETER_GROUPS};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "orfem", version, about = "Joint speed and accuracy model for oral reading data")]
pub struct Cli {
    /// TOML file supplying any of the command's options; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset from one of the reference scenarios.
    Simulate(SimulateArgs),
    /// Estimate item and population parameters.
    Fit(FitArgs),
    /// Posterior-mean trait scores under a fitted model.
    Score(ScoreArgs),
    /// Leave-item-out prediction errors for every item.
    PredictLoo(ScoreArgs),
    /// Repeated simulate-and-fit study with error and recovery summaries.
    ReplicateStudy(StudyArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: Option<u8>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub missing_rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub items: Option<PathBuf>,
    #[arg(long)]
    pub responses: Option<PathBuf>,
    /// mom or mcem
    #[arg(long)]
    pub method: Option<String>,
    /// MCEM stages as ITERATIONSxDRAWS, comma separated
    #[arg(long)]
    pub schedule: Option<String>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Directory holding fit.csv and population.csv
    #[arg(long)]
    pub fit: Option<PathBuf>,
    #[arg(long)]
    pub responses: Option<PathBuf>,
    /// Posterior draws per individual
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    #[arg(long)]
    pub scenario: Option<u8>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// mom, mcem or both
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub schedule: Option<String>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    #[arg(long)]
    pub missing_rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Keys accepted in the `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub scenario: Option<u8>,
    pub n: Option<usize>,
    #[serde(alias = "missing_rate")]
    pub missing_rate: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub items: Option<PathBuf>,
    pub responses: Option<PathBuf>,
    pub method: Option<String>,
    pub schedule: Option<String>,
    #[serde(alias = "rel_tol")]
    pub rel_tol: Option<f64>,
    pub fit: Option<PathBuf>,
    pub m: Option<usize>,
    pub replicates: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| OrfError::Io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| OrfError::InvalidParameter(format!("{}: {e}", path.display())))
    }
}

fn required<T>(flag: Option<T>, file: Option<T>, name: &str) -> Result<T> {
    flag.or(file).ok_or_else(|| OrfError::InvalidParameter(format!("--{name} is required")))
}

fn existing(path: PathBuf) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(OrfError::Io(format!("{} does not exist", path.display())))
    }
}

fn out_dir(path: PathBuf) -> Result<PathBuf> {
    std::fs::create_dir_all(&path).map_err(|e| OrfError::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

fn mcem_config(schedule: Option<String>, rel_tol: Option<f64>, seed: u64) -> Result<McemConfig> {
    let mut cfg = McemConfig { seed: RngStream::from_seed(seed), ..McemConfig::default() };
    if let Some(s) = schedule {
        cfg.schedule = parse_schedule(&s)?;
    }
    if let Some(t) = rel_tol {
        cfg.rel_tol = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Process exit code for an error: 2 validation, 3 numeric, 1 other.
pub fn exit_code(err: &OrfError) -> i32 {
    if err.is_validation() {
        2
    } else if err.is_numeric() {
        3
    } else {
        1
    }
}

pub fn error_category(err: &OrfError) -> &'static str {
    match exit_code(err) {
        2 => "validation",
        3 => "numeric",
        _ => "io",
    }
}

/// Runs a parsed command and returns the human-readable report.
pub fn run(cli: Cli) -> Result<String> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Simulate(a) => run_simulate(a, file),
        Command::Fit(a) => run_fit(a, file),
        Command::Score(a) => run_score(a, file),
        Command::PredictLoo(a) => run_predict(a, file),
        Command::ReplicateStudy(a) => run_replicate_study(a, file),
    }
}

pub fn run_simulate(a: SimulateArgs, f: FileConfig) -> Result<String> {
    let scenario = required(a.scenario, f.scenario, "scenario")?;
    let n = required(a.n, f.n, "n")?;
    let missing_rate = a.missing_rate.or(f.missing_rate).unwrap_or(0.0);
    let seed = a.seed.or(f.seed).unwrap_or(0);
    let out = out_dir(required(a.out, f.out, "out")?)?;

    let (items, pop) = table1_scenario(scenario)?;
    let sim = simulate_dataset(&SimConfig { items: items.clone(), pop, n, missing_rate, seed: RngStream::from_seed(seed) })?;
    io::write_items(&out.join("items.csv"), sim.dataset.items())?;
    io::write_responses(&out.join("responses.csv"), &sim.dataset)?;
    io::write_latents(&out.join("latents.csv"), &sim.dataset, &sim.latents)?;
    let truth = out_dir(out.join("truth"))?;
    io::write_params(&truth, &item_ids(items.len()), &items, &pop)?;

    let mut report = format!(
        "simulated scenario {scenario}: {n} individuals, {} items, missing rate {missing_rate}, seed {seed}\n",
        items.len()
    );
    for (spec, rate) in sim.dataset.items().iter().zip(sim.dataset.missing_rates()) {
        let _ = writeln!(report, "  {}: N={} missing {:.3}", spec.id, spec.n_words, rate);
    }
    let _ = writeln!(report, "wrote {}", out.display());
    Ok(report)
}

fn load_data(items: &Path, responses: &Path) -> Result<Dataset> {
    let specs = io::read_items(items)?;
    io::read_responses(responses, &specs)
}

pub fn fit_report(data: &Dataset, fit: &FitResult) -> String {
    let mut s = format!(
        "{} fit: {} individuals, {} items\n",
        fit.method.as_str(),
        data.n_individuals(),
        data.n_items()
    );
    let _ = writeln!(s, "{:<12} {:>4} {:>8} {:>10} {:>10} {:>10} {:>10}", "item", "N", "missing", "a", "b", "alpha", "beta");
    for ((spec, it), rate) in data.items().iter().zip(&fit.items).zip(data.missing_rates()) {
        let _ = writeln!(
            s,
            "{:<12} {:>4} {:>8.3} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            spec.id, spec.n_words, rate, it.a, it.b, it.alpha, it.beta
        );
    }
    let _ = writeln!(
        s,
        "sigma2_tau {:.6}  sigma_theta_tau {:.6}  correlation {:.4}",
        fit.pop.sigma2_tau,
        fit.pop.sigma_theta_tau,
        fit.pop.correlation()
    );
    if let Some(ll) = fit.diagnostics.observed_loglik {
        let _ = writeln!(s, "observed log-likelihood {ll:.4}");
    }
    for flag in &fit.diagnostics.flags {
        let _ = writeln!(s, "note: {flag}");
    }
    s
}

pub fn run_fit(a: FitArgs, f: FileConfig) -> Result<String> {
    let items = existing(required(a.items, f.items, "items")?)?;
    let responses = existing(required(a.responses, f.responses, "responses")?)?;
    let method: Method = a
        .method
        .or(f.method)
        .unwrap_or_else(|| "mcem".into())
        .parse()
        .map_err(OrfError::InvalidParameter)?;
    let seed = a.seed.or(f.seed).unwrap_or(0);
    let mcfg = mcem_config(a.schedule.or(f.schedule), a.rel_tol.or(f.rel_tol), seed)?;
    let out = required(a.out, f.out, "out")?;

    let data = load_data(&items, &responses)?;
    let mut fit = fit_mom(&data)?;
    fit.diagnostics.observed_loglik =
        Some(crate::model::observed_loglik(&data, &fit.items, &fit.pop, crate::mcem::MONITOR_QUAD_ORDER)?);
    if method == Method::Mcem {
        fit = fit_mcem(&data, &fit, &mcfg)?;
    }
    let out = out_dir(out)?;
    io::write_params(&out, &fit.item_ids, &fit.items, &fit.pop)?;
    io::write_trace(&out.join("trace.csv"), &fit)?;
    io::write_moments(&out.join("moments.csv"), &data, &fit)?;
    io::write_diagnostics(&out.join("diagnostics.txt"), &fit)?;
    Ok(fit_report(&data, &fit))
}

fn fit_and_data(fit_dir: &Path, responses: &Path) -> Result<(FitResult, Dataset)> {
    let fit = io::read_fit(fit_dir)?;
    let specs: Vec<ItemSpec> = fit
        .item_ids
        .iter()
        .zip(&fit.items)
        .map(|(id, it)| ItemSpec { id: id.clone(), n_words: it.n_words })
        .collect();
    let data = io::read_responses(responses, &specs)?;
    Ok((fit, data))
}

pub fn run_score(a: ScoreArgs, f: FileConfig) -> Result<String> {
    let fit_dir = existing(required(a.fit, f.fit, "fit")?)?;
    let responses = existing(required(a.responses, f.responses, "responses")?)?;
    let m = a.m.or(f.m).unwrap_or(20);
    let seed = a.seed.or(f.seed).unwrap_or(0);
    let out = required(a.out, f.out, "out")?;
    let (fit, data) = fit_and_data(&fit_dir, &responses)?;
    let scores = eap_scores(&data, &fit, m, seed)?;
    let out = out_dir(out)?;
    io::write_scores(&out.join("scores.csv"), &scores)?;
    Ok(format!("scored {} individuals with M={m}, seed {seed}\nwrote {}\n", scores.rows.len(), out.display()))
}

pub fn run_predict(a: ScoreArgs, f: FileConfig) -> Result<String> {
    let fit_dir = existing(required(a.fit, f.fit, "fit")?)?;
    let responses = existing(required(a.responses, f.responses, "responses")?)?;
    let m = a.m.or(f.m).unwrap_or(20);
    let seed = a.seed.or(f.seed).unwrap_or(0);
    let out = required(a.out, f.out, "out")?;
    let (fit, data) = fit_and_data(&fit_dir, &responses)?;
    let report = predict_all(&data, &fit, m, seed)?;
    let out = out_dir(out)?;
    io::write_predictions(&out.join("predictions.csv"), &report)?;

    let mut s = String::from("leave-item-out prediction error\n");
    let _ = writeln!(s, "{:<12} {:>10} {:>10} {:>10} {:>10}", "item", "Y rspe0", "Y rspe1", "T rspe0", "T rspe1");
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{:<12} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            r.item_id, r.rspe0_count, r.rspe1_count, r.rspe0_time, r.rspe1_time
        );
    }
    let k = report.rows.len() as f64;
    let _ = writeln!(
        s,
        "mean relative decrease: counts {:.3}, times {:.3}",
        report.rows.iter().map(|r| r.rel_decrease_count()).sum::<f64>() / k,
        report.rows.iter().map(|r| r.rel_decrease_time()).sum::<f64>() / k
    );
    Ok(s)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| format!("{v}"))
}

/// Writes `study_table.csv`, `correlations.csv` and `replicates.csv`.
pub fn write_study(out: &Path, report: &StudyReport) -> Result<()> {
    let table = out.join("study_table.csv");
    let mut text = String::from("sample_size,parameter,mom_sqrt_n_ase,mom_sqrt_n_armse,ml_sqrt_n_ase,ml_sqrt_n_armse,mom_excluded,ml_excluded\n");
    for (k, group) in PARAMETER_GROUPS.iter().enumerate() {
        let mom = report.mom.as_ref().map(|m| &m.rows[k]);
        let ml = report.mcem.as_ref().map(|m| &m.rows[k]);
        let _ = writeln!(
            text,
            "{},{group},{},{},{},{},{},{}",
            report.n,
            fmt_opt(mom.map(|r| r.sqrt_n_ase)),
            fmt_opt(mom.map(|r| r.sqrt_n_armse)),
            fmt_opt(ml.map(|r| r.sqrt_n_ase)),
            fmt_opt(ml.map(|r| r.sqrt_n_armse)),
            mom.map_or(String::new(), |r| r.excluded.to_string()),
            ml.map_or(String::new(), |r| r.excluded.to_string()),
        );
    }
    std::fs::write(&table, text).map_err(|e| OrfError::Io(format!("{}: {e}", table.display())))?;

    let cor = out.join("correlations.csv");
    let mut text = String::from("sample_size,method,replicates,cor_theta,cor_tau\n");
    for (name, summary) in [("mom", &report.mom), ("ml", &report.mcem)] {
        if let Some(s) = summary {
            let _ = writeln!(text, "{},{name},{},{},{}", report.n, s.replicates_used, s.mean_cor_theta, s.mean_cor_tau);
        }
    }
    std::fs::write(&cor, text).map_err(|e| OrfError::Io(format!("{}: {e}", cor.display())))?;

    let reps = out.join("replicates.csv");
    let mut text = String::from(
        "replicate,status,mom_loglik,ml_loglik,q_monotone,mom_cor_theta,mom_cor_tau,ml_cor_theta,ml_cor_tau,error\n",
    );
    for o in &report.outcomes {
        let _ = writeln!(
            text,
            "{},{},{},{},{},{},{},{},{},{}",
            o.replicate,
            if o.error.is_some() { "failed" } else { "ok" },
            fmt_opt(o.mom.as_ref().map(|m| m.observed_loglik)),
            fmt_opt(o.mcem.as_ref().map(|m| m.observed_loglik)),
            o.q_monotone().map_or(String::new(), |b| b.to_string()),
            fmt_opt(o.mom.as_ref().map(|m| m.cor_theta).filter(|v| v.is_finite())),
            fmt_opt(o.mom.as_ref().map(|m| m.cor_tau).filter(|v| v.is_finite())),
            fmt_opt(o.mcem.as_ref().map(|m| m.cor_theta)),
            fmt_opt(o.mcem.as_ref().map(|m| m.cor_tau)),
            o.error.as_deref().unwrap_or("").replace([',', '\n'], ";"),
        );
    }
    std::fs::write(&reps, text).map_err(|e| OrfError::Io(format!("{}: {e}", reps.display())))
}

pub fn study_report_text(report: &StudyReport) -> String {
    let mut s = format!("scenario {}, n = {}\n", report.scenario, report.n);
    let _ = writeln!(s, "{:<16} {:>12} {:>12} {:>12} {:>12}", "parameter", "MOM √n ASE", "MOM √n ARMSE", "ML √n ASE", "ML √n ARMSE");
    let cell = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
    for (k, group) in PARAMETER_GROUPS.iter().enumerate() {
        let mom = report.mom.as_ref().map(|m| &m.rows[k]);
        let ml = report.mcem.as_ref().map(|m| &m.rows[k]);
        let _ = writeln!(
            s,
            "{:<16} {:>12} {:>12} {:>12} {:>12}",
            group,
            cell(mom.map(|r| r.sqrt_n_ase)),
            cell(mom.map(|r| r.sqrt_n_armse)),
            cell(ml.map(|r| r.sqrt_n_ase)),
            cell(ml.map(|r| r.sqrt_n_armse))
        );
    }
    for (name, summary) in [("MOM", &report.mom), ("ML", &report.mcem)] {
        if let Some(m) = summary {
            let _ = writeln!(s, "{name}: mean Cor(θ, θ̂) {:.4}, mean Cor(τ, τ̂) {:.4}", m.mean_cor_theta, m.mean_cor_tau);
        }
    }
    let excluded: usize = [&report.mom, &report.mcem].iter().filter_map(|m| m.as_ref()).flat_map(|m| &m.rows).map(|r| r.excluded).sum();
    if excluded > 0 {
        let _ = writeln!(s, "{excluded} non-finite estimate(s) excluded from the averages");
    }
    if report.failures > 0 {
        let _ = writeln!(s, "{} replicate(s) failed and were excluded", report.failures);
    }
    s
}

pub fn run_replicate_study(a: StudyArgs, f: FileConfig) -> Result<String> {
    let scenario = required(a.scenario, f.scenario, "scenario")?;
    let n = required(a.n, f.n, "n")?;
    let replicates = required(a.replicates, f.replicates, "replicates")?;
    let methods: StudyMethods = a
        .method
        .or(f.method)
        .unwrap_or_else(|| "both".into())
        .parse()
        .map_err(OrfError::InvalidParameter)?;
    let seed = a.seed.or(f.seed).unwrap_or(0);
    let out = required(a.out, f.out, "out")?;
    let mut cfg = StudyConfig::new(scenario, n, replicates, methods, seed);
    cfg.mcem = mcem_config(a.schedule.or(f.schedule), a.rel_tol.or(f.rel_tol), seed)?;
    cfg.missing_rate = a.missing_rate.or(f.missing_rate).unwrap_or(0.0);
    let report = run_study(&cfg)?;
    let out = out_dir(out)?;
    write_study(&out, &report)?;
    Ok(study_report_text(&report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&OrfError::InvalidData("x".into())), 2);
        assert_eq!(exit_code(&OrfError::RejectionOverflow { attempts: 1 }), 3);
        assert_eq!(exit_code(&OrfError::Io("x".into())), 1);
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.toml");
        std::fs::write(&cfg, "scenario = 2\nn = 5\nmissing-rate = 0.5\nseed = 9\n").unwrap();
        let out = dir.path().join("sim");
        let cli = Cli::parse_from([
            "orfem",
            "--config",
            cfg.to_str().unwrap(),
            "simulate",
            "--n",
            "7",
            "--missing-rate",
            "0",
            "--out",
            out.to_str().unwrap(),
        ]);
        let report = run(cli).unwrap();
        assert!(report.contains("7 individuals"));
        assert!(report.contains("seed 9"));
        let data = load_data(&out.join("items.csv"), &out.join("responses.csv")).unwrap();
        assert_eq!(data.n_individuals(), 7);
        assert!(data.individuals().iter().all(|p| p.responses.len() == 4));
    }

    #[test]
    fn unknown_config_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.toml");
        std::fs::write(&cfg, "bogus = 1\n").unwrap();
        assert!(matches!(FileConfig::load(&cfg), Err(OrfError::InvalidParameter(_))));
    }

    #[test]
    fn missing_required_option() {
        let cli = Cli::parse_from(["orfem", "simulate", "--n", "5"]);
        let err = run(cli).unwrap_err();
        assert_eq!(exit_code(&err), 2);
        assert!(err.to_string().contains("--scenario"));
    }
}
