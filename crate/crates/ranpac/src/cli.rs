//! Command-line front end.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ranpac_core::feature_store::{synth_generate, synth_xor, CovarianceKind, SynthSpec, XorSpec};
use ranpac_core::protocols::{run, Clock, RunResult};
use serde::{Deserialize, Serialize};

use crate::analysis::{run_theory, theory_summary, write_theory, TheoryConfig};
use crate::config::{load_run_config, load_with_overrides, RunConfig};
use crate::error::{exit, AppError, Result};
use crate::output::{method_label, output_root, summary_text, write_run, Artifact, StagedDir, OUTPUT_ROOT_ENV};
use crate::report::build_report;
use crate::store::{load_dataset, read_store, save_dataset};

#[derive(Debug, Parser)]
#[command(name = "ranpac", version, about = "Random-projection continual-learning heads over frozen features")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic feature store.
    Synth(SynthArgs),
    /// Print a store's manifest and class balance.
    Inspect {
        store: PathBuf,
    },
    /// Run one experiment.
    Run(RunArgs),
    /// Repeat an experiment over several projection sizes.
    SweepM(SweepArgs),
    /// Run a theory report.
    Theory(TheoryArgs),
    /// Tabulate saved results.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON config file.
    #[arg(long)]
    pub config: PathBuf,
    /// Override a config value, e.g. `method.projection.output_dim=2000`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output root directory.
    #[arg(long, env = OUTPUT_ROOT_ENV)]
    pub out: Option<PathBuf>,
    /// Run directory label.
    #[arg(long)]
    pub name: Option<String>,
    #[arg(short, long, conflicts_with = "quiet")]
    pub verbose: bool,
    #[arg(short, long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    /// Projection sizes, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub m: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directories or `result.json` files.
    #[arg(required = true)]
    pub results: Vec<PathBuf>,
    /// Method whose runs anchor the relative error-rate column.
    #[arg(long, default_value = "ncm")]
    pub baseline: String,
    /// Write the table here (`.csv` or markdown); stdout otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    Isotropic,
    Anisotropic,
    Xor,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Destination store directory.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON generator config; replaces the flags below.
    #[arg(long, conflicts_with = "kind")]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "isotropic")]
    pub kind: SynthKind,
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    /// Defaults to `--per-class`.
    #[arg(long)]
    pub val_per_class: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub mean_scale: f64,
    #[arg(long, default_value_t = 0.9)]
    pub rho: f64,
    #[arg(long, default_value_t = 1)]
    pub domains: usize,
    #[arg(long, default_value_t = 2)]
    pub noise_dims: usize,
    #[arg(long, default_value_t = 0.1)]
    pub noise_std: f64,
    #[arg(long, default_value_t = 0.2)]
    pub margin: f64,
    #[arg(long, default_value_t = 1000)]
    pub train: usize,
    #[arg(long, default_value_t = 1000)]
    pub val: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum SynthConfig {
    Gaussian(SynthSpec),
    Xor(XorSpec),
}

impl SynthArgs {
    fn to_config(&self) -> SynthConfig {
        match self.kind {
            SynthKind::Xor => SynthConfig::Xor(XorSpec {
                noise_dims: self.noise_dims,
                noise_std: self.noise_std,
                margin: self.margin,
                train: self.train,
                val: self.val,
                seed: self.seed,
            }),
            kind => SynthConfig::Gaussian(SynthSpec {
                classes: self.classes,
                dim: self.dim,
                train_per_class: self.per_class,
                val_per_class: self.val_per_class.unwrap_or(self.per_class),
                mean_scale: self.mean_scale,
                covariance: if kind == SynthKind::Anisotropic { CovarianceKind::Anisotropic { rho: self.rho } } else { CovarianceKind::Isotropic },
                domains: self.domains,
                seed: self.seed,
            }),
        }
    }
}

/// Wall-clock seconds since construction.
pub struct WallClock(Instant);

impl WallClock {
    pub fn new() -> Self {
        WallClock(Instant::now())
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for WallClock {
    fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Verbosity {
    Quiet,
    Normal,
    Verbose,
}

impl Common {
    fn verbosity(&self) -> Verbosity {
        if self.quiet {
            Verbosity::Quiet
        } else if self.verbose {
            Verbosity::Verbose
        } else {
            Verbosity::Normal
        }
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::CONFIG } else { exit::OK };
        }
    };
    match execute(cli.command) {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(&a),
        Command::Inspect { store } => inspect(&store),
        Command::Run(a) => run_cmd(&a.common).map(|_| ()),
        Command::SweepM(a) => sweep(&a).map(|_| ()),
        Command::Theory(a) => theory(&a.common).map(|_| ()),
        Command::Report(a) => report(&a),
    }
}

fn synth(a: &SynthArgs) -> Result<()> {
    let cfg = match &a.config {
        Some(p) => load_with_overrides::<SynthConfig>(p, &[])?,
        None => a.to_config(),
    };
    let ds = match &cfg {
        SynthConfig::Gaussian(s) => synth_generate(s),
        SynthConfig::Xor(s) => synth_xor(s),
    }
    .map_err(|e| AppError::Config(e.to_string()))?;
    let m = save_dataset(&a.out, &ds)?;
    println!("wrote {} samples ({} classes, L={}) to {}", m.total_samples(), m.num_classes, m.feature_dim, a.out.display());
    Ok(())
}

fn inspect(store: &Path) -> Result<()> {
    let (manifest, records) = read_store(store)?;
    println!("{}", serde_json::to_string_pretty(&manifest).map_err(|e| AppError::Data(e.to_string()))?);
    let mut per_split: BTreeMap<String, Vec<u64>> = BTreeMap::new();
    let mut per_domain: BTreeMap<u32, u64> = BTreeMap::new();
    for (i, rec) in records.enumerate() {
        let rec = rec?;
        let split = manifest
            .splits
            .iter()
            .find(|s| manifest.split_range(&s.name).is_some_and(|r| r.contains(&i)))
            .map_or("?".to_string(), |s| s.name.clone());
        per_split.entry(split).or_insert_with(|| vec![0; manifest.num_classes])[rec.label as usize] += 1;
        if let Some(d) = rec.domain_id {
            *per_domain.entry(d).or_default() += 1;
        }
    }
    for (split, counts) in &per_split {
        let min = counts.iter().min().copied().unwrap_or(0);
        let max = counts.iter().max().copied().unwrap_or(0);
        let empty = counts.iter().filter(|&&c| c == 0).count();
        println!("{split}: {} samples, per-class min {min} max {max}, {empty} empty classes", counts.iter().sum::<u64>());
    }
    for (d, n) in &per_domain {
        let name = manifest.domains.as_ref().and_then(|v| v.get(*d as usize)).map_or("?", String::as_str);
        println!("domain {d} ({name}): {n} samples");
    }
    Ok(())
}

fn experiment(cfg: &RunConfig, verbosity: Verbosity) -> Result<RunResult> {
    let ds = load_dataset(&cfg.dataset)?;
    if verbosity >= Verbosity::Verbose {
        eprintln!("loaded {} ({} samples, L={}, K={})", cfg.dataset.display(), ds.records.len(), ds.feature_dim(), ds.num_classes());
    }
    let clock = WallClock::new();
    let result = run(&ds, &cfg.experiment, &clock)?;
    if verbosity >= Verbosity::Verbose {
        for (t, tm) in result.timings.iter().enumerate() {
            eprintln!("task {}: train {:.3}s solve {:.3}s eval {:.3}s", t + 1, tm.train_s, tm.solve_s, tm.eval_s);
        }
    }
    Ok(result)
}

fn label(common: &Common, cfg_name: Option<&str>, fallback: String) -> String {
    common.name.clone().or_else(|| cfg_name.map(str::to_string)).unwrap_or(fallback)
}

/// Runs one experiment and returns its committed run directory.
pub fn run_cmd(common: &Common) -> Result<PathBuf> {
    let mut cfg = load_run_config(&common.config, &common.overrides)?;
    if common.name.is_some() {
        cfg.name = common.name.clone();
    }
    let verbosity = common.verbosity();
    let result = experiment(&cfg, verbosity)?;
    let ds = load_dataset(&cfg.dataset)?;
    let dir = StagedDir::create(&output_root(common.out.as_deref()), &label(common, cfg.name.as_deref(), method_label(&cfg.experiment.method)))?;
    if let Err(e) = write_run(&dir, &cfg, &result, &ds) {
        dir.abandon();
        return Err(e);
    }
    let path = dir.commit()?;
    if verbosity >= Verbosity::Normal {
        print!("{}", summary_text(&cfg, &result));
        println!("results in {}", path.display());
    }
    Ok(path)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m: usize,
    pub result: RunResult,
}

/// Runs the experiment once per projection size and returns the run directory.
pub fn sweep(a: &SweepArgs) -> Result<PathBuf> {
    let base = load_run_config(&a.common.config, &a.common.overrides)?;
    if base.experiment.method.projection().is_none() {
        return Err(AppError::Config(format!("method {} has no projection to sweep", base.experiment.method.name())));
    }
    if a.m.contains(&0) {
        return Err(AppError::Config("projection sizes must be positive".into()));
    }
    let verbosity = a.common.verbosity();
    let mut rows = Vec::with_capacity(a.m.len());
    for &m in &a.m {
        let mut cfg = base.clone();
        if let Some(p) = cfg.experiment.method.projection_mut() {
            p.output_dim = m;
        }
        let result = experiment(&cfg, verbosity)?;
        if verbosity >= Verbosity::Normal {
            println!("M={m:<6} A_T={:.2}%", 100.0 * result.final_accuracy().unwrap_or(0.0));
        }
        rows.push(SweepRow { m, result });
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| AppError::Data(e.to_string());
    w.write_record(["m", "final_accuracy", "final_forgetting", "final_lambda"]).map_err(csv_err)?;
    for r in &rows {
        w.write_record([
            r.m.to_string(),
            r.result.final_accuracy().map(|v| v.to_string()).unwrap_or_default(),
            r.result.final_forgetting().map(|v| v.to_string()).unwrap_or_default(),
            r.result.lambdas.last().copied().flatten().map(|v| v.to_string()).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    let csv = w.into_inner().map_err(|e| AppError::Data(e.to_string()))?;
    let dir = StagedDir::create(&output_root(a.common.out.as_deref()), &label(&a.common, base.name.as_deref(), "sweep-m".into()))?;
    let written = dir
        .write_json("config.json", &base)
        .and_then(|_| dir.write_json("result.json", &Artifact::new(&base, &rows)))
        .and_then(|_| dir.write("sweep.csv", &csv));
    if let Err(e) = written {
        dir.abandon();
        return Err(e);
    }
    let path = dir.commit()?;
    if verbosity >= Verbosity::Normal {
        println!("results in {}", path.display());
    }
    Ok(path)
}

/// Runs a theory report and returns its run directory.
pub fn theory(common: &Common) -> Result<PathBuf> {
    let mut cfg: TheoryConfig = load_with_overrides(&common.config, &common.overrides)?;
    cfg.resolve_paths(&common.config);
    let report = run_theory(&cfg)?;
    let dir = StagedDir::create(&output_root(common.out.as_deref()), &label(common, None, format!("theory-{}", cfg.label())))?;
    let written = dir
        .write_json("config.json", &cfg)
        .and_then(|_| dir.write_json("result.json", &Artifact::new(&cfg, &report)))
        .and_then(|_| write_theory(&dir, &report));
    if let Err(e) = written {
        dir.abandon();
        return Err(e);
    }
    let path = dir.commit()?;
    if common.verbosity() >= Verbosity::Normal {
        print!("{}", theory_summary(&report));
        println!("results in {}", path.display());
    }
    Ok(path)
}

fn report(a: &ReportArgs) -> Result<()> {
    let rep = build_report(&a.results, Some(&a.baseline));
    for w in &rep.warnings {
        eprintln!("warning: {w}");
    }
    if rep.rows.is_empty() {
        return Err(AppError::Data("no readable results".into()));
    }
    match &a.out {
        Some(p) => {
            let bytes = if p.extension().is_some_and(|e| e == "csv") { rep.to_csv() } else { rep.to_markdown().into_bytes() };
            fs::write(p, bytes).map_err(AppError::io(p))?;
        }
        None => print!("{}", rep.to_markdown()),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn synth_flags_build_specs() {
        let cli = Cli::try_parse_from(["ranpac", "synth", "--out", "x", "--kind", "anisotropic", "--rho", "0.5"]).unwrap();
        match cli.command {
            Command::Synth(a) => match a.to_config() {
                SynthConfig::Gaussian(s) => assert_eq!(s.covariance, CovarianceKind::Anisotropic { rho: 0.5 }),
                c => panic!("{c:?}"),
            },
            c => panic!("{c:?}"),
        }
    }
}
