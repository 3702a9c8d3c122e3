//! Command-line front end: density conservativeness checks, scenario
//! fusion, and the built-in reproduction experiments.
//!
//! Exit codes: 0 when the requested verdict holds (or every acceptance
//! band of a reproduction passes), 1 when it does not, 2 on any error
//! (unparsable input, unknown experiment, invalid configuration).

use std::fs;
use std::path::{Path, PathBuf};
use std::thread;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mvcons::conservativeness::{check_weak_grids, full_report, sufficient_condition_test, CheckSettings};
use mvcons::density::{Density, DensityDescriptor};
use mvcons::experiments::{
    run_experiment, run_table2, ExperimentId, ExperimentOutput, RunConfig, Table2Result,
};
use mvcons::fusion::{run_fusion, FusionScenarioFile};
use mvcons::grid::GridDensity;
use mvcons::mvs::default_alpha_grid;

#[derive(Parser)]
#[command(
    name = "mvcons",
    about = "Minimum-volume-set conservativeness checks and correlation-agnostic density fusion",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a candidate density against a truth density
    Check(CheckArgs),
    /// Pool a fusion scenario and compare the result with the exact oracle
    Fuse(FuseArgs),
    /// Run a built-in reproduction experiment (or `all`)
    Reproduce(ReproduceArgs),
    /// Emit the Gaussian verdict matrix
    TableGauss(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Cells per axis (defaults: 4096 one-dimensional, 512 two-dimensional)
    #[arg(long)]
    resolution: Option<usize>,
    /// Probability-level grid as start:stop:step (default 0.01:0.99:0.01 plus 0.999)
    #[arg(long)]
    alpha_grid: Option<String>,
    /// Mass tolerance (default 2 / cells-per-axis)
    #[arg(long)]
    tol_mass: Option<f64>,
    /// Condition-curve tolerance (default 2 x mass tolerance)
    #[arg(long)]
    tol_curve: Option<f64>,
    /// Directory artifact files are written into (default: current directory)
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Seed for the randomized per-instance draws
    #[arg(long, default_value_t = 17)]
    seed: u64,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Definition {
    Pd,
    Psd,
    Strict,
    Weak,
    Geop,
    Gekl,
    All,
}

impl Definition {
    fn key(self) -> &'static str {
        match self {
            Definition::Pd => "pd",
            Definition::Psd => "psd",
            Definition::Strict => "strict",
            Definition::Weak => "weak",
            Definition::Geop => "geop",
            Definition::Gekl => "gekl",
            Definition::All => "all",
        }
    }
}

#[derive(Args)]
struct CheckArgs {
    /// JSON descriptor of the candidate density
    #[arg(long)]
    candidate: PathBuf,
    /// JSON descriptor of the truth density
    #[arg(long)]
    truth: PathBuf,
    /// Which definition decides the exit code
    #[arg(long, value_enum, default_value_t = Definition::All)]
    definition: Definition,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct FuseArgs {
    /// JSON fusion scenario (common, uniques, weights, rule, q)
    #[arg(long)]
    scenario: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct ReproduceArgs {
    /// Experiment id, or `all`
    id: String,
    #[command(flatten)]
    common: CommonArgs,
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            2
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Check(args) => cmd_check(args),
        Command::Fuse(args) => cmd_fuse(args),
        Command::Reproduce(args) => cmd_reproduce(args),
        Command::TableGauss(args) => cmd_table_gauss(args),
    }
}

// ---------------------------------------------------------------------------
// shared configuration plumbing
// ---------------------------------------------------------------------------

fn parse_alpha_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(anyhow!(
            "alpha-grid must be start:stop:step, got {spec:?}"
        ));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| {
            p.parse::<f64>()
                .with_context(|| format!("alpha-grid component {p:?} is not a number"))
        })
        .collect::<Result<_>>()?;
    let (start, stop, step) = (nums[0], nums[1], nums[2]);
    if !(0.0 < start && start <= stop && stop < 1.0) || step <= 0.0 {
        return Err(anyhow!(
            "alpha-grid needs 0 < start <= stop < 1 and step > 0, got {spec:?}"
        ));
    }
    let n = ((stop - start) / step).round() as usize;
    let mut alphas = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let a = start + i as f64 * step;
        if a <= stop + 1e-9 {
            alphas.push(a);
        }
    }
    Ok(alphas)
}

impl CommonArgs {
    fn alphas(&self) -> Result<Vec<f64>> {
        match &self.alpha_grid {
            Some(spec) => parse_alpha_grid(spec),
            None => Ok(default_alpha_grid()),
        }
    }

    fn settings(&self) -> Result<CheckSettings> {
        Ok(CheckSettings {
            cells_per_axis: self.resolution,
            alphas: self.alphas()?,
            mass_slack: self.tol_mass,
            curve_tol: self.tol_curve,
        })
    }

    fn run_config(&self) -> Result<RunConfig> {
        Ok(RunConfig {
            cells_per_axis: self.resolution,
            alphas: self.alphas()?,
            mass_slack: self.tol_mass,
            curve_tol: self.tol_curve,
            seed: self.seed,
            cells_scale: 1,
        })
    }

    fn out_dir(&self, sub: Option<&str>) -> Result<PathBuf> {
        let dir = match sub {
            Some(name) => self.out.join(name),
            None => self.out.clone(),
        };
        fs::create_dir_all(&dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(dir)
    }
}

fn load_density(path: &Path, role: &str) -> Result<Density> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {role} density file {}", path.display()))?;
    let descriptor: DensityDescriptor = serde_json::from_str(&text)
        .with_context(|| format!("parsing {role} density {}", path.display()))?;
    Density::try_from(descriptor)
        .with_context(|| format!("constructing {role} density from {}", path.display()))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn curves_csv(alphas: &[f64], cond2: &[f64], cond3: &[f64]) -> String {
    let mut csv = String::from("alpha,cond2,cond3\n");
    for ((a, c2), c3) in alphas.iter().zip(cond2).zip(cond3) {
        csv.push_str(&format!("{a},{c2},{c3}\n"));
    }
    csv
}

fn grid_csv(grid: &GridDensity) -> String {
    let mut csv = String::new();
    match grid.cells().len() {
        1 => {
            csv.push_str("x,density\n");
            for (idx, v) in grid.values().iter().enumerate() {
                let x = grid.coords(idx)[0];
                csv.push_str(&format!("{x},{v}\n"));
            }
        }
        _ => {
            csv.push_str("x,y,density\n");
            for (idx, v) in grid.values().iter().enumerate() {
                let xy = grid.coords(idx);
                csv.push_str(&format!("{},{},{v}\n", xy[0], xy[1]));
            }
        }
    }
    csv
}

/// Serializable form of a tabulated density.
#[derive(Serialize)]
struct GridFile<'a> {
    bounds: &'a [(f64, f64)],
    cells: &'a [usize],
    values: &'a [f64],
}

impl<'a> GridFile<'a> {
    fn of(grid: &'a GridDensity) -> Self {
        GridFile {
            bounds: grid.bounds(),
            cells: grid.cells(),
            values: grid.values(),
        }
    }
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct CheckReportFile<'a> {
    definition: &'a str,
    verdict: bool,
    report: &'a mvcons::conservativeness::ConservativenessReport,
}

fn cmd_check(args: CheckArgs) -> Result<i32> {
    let candidate = load_density(&args.candidate, "candidate")?;
    let truth = load_density(&args.truth, "truth")?;
    let settings = args.common.settings()?;
    let report = full_report(&candidate, &truth, &settings)?;
    let verdict = report
        .verdict(args.definition.key())
        .expect("definition keys are exhaustive");

    let dir = args.common.out_dir(None)?;
    write_json(
        &dir,
        "report.json",
        &CheckReportFile {
            definition: args.definition.key(),
            verdict,
            report: &report,
        },
    )?;
    write_text(
        &dir,
        "curves.csv",
        &curves_csv(&report.curve_alphas, &report.curve_cond2, &report.curve_cond3),
    )?;

    println!("definition {}: {}", args.definition.key(), verdict);
    if let Some(astar) = report.weak.alpha_star {
        println!("alpha' = {astar}");
    }
    Ok(if verdict { 0 } else { 1 })
}

// ---------------------------------------------------------------------------
// fuse
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct FuseReportFile {
    rule: String,
    verdict_weak: bool,
    alpha_star: Option<f64>,
    min_curve: f64,
    curve_tol: f64,
    set_a_bounded: bool,
    a_cells: usize,
    epsilon: Option<f64>,
    normalizer_fused: f64,
    normalizer_oracle: f64,
}

fn cmd_fuse(args: FuseArgs) -> Result<i32> {
    let text = fs::read_to_string(&args.scenario)
        .with_context(|| format!("reading scenario file {}", args.scenario.display()))?;
    let file: FusionScenarioFile = serde_json::from_str(&text)
        .with_context(|| format!("parsing scenario {}", args.scenario.display()))?;
    let (scenario, rule) = file.into_scenario()?;

    let settings = args.common.settings()?;
    let cells = settings.cells(scenario.dim());
    let curve_tol = settings.resolved_curve_tol(scenario.dim());
    let alphas = settings.alphas.clone();

    let result = run_fusion(&scenario, rule, &cells)?;
    let (weak, curves) = check_weak_grids(&result.fused, &result.oracle, &alphas, curve_tol)?;
    let sufficient = sufficient_condition_test(&result.fused, &result.oracle)?;

    let dir = args.common.out_dir(None)?;
    write_json(&dir, "fused.json", &GridFile::of(&result.fused))?;
    write_json(&dir, "oracle.json", &GridFile::of(&result.oracle))?;
    write_json(
        &dir,
        "report.json",
        &FuseReportFile {
            rule: rule.tag(),
            verdict_weak: weak.ok,
            alpha_star: weak.alpha_star,
            min_curve: curves.min_value(),
            curve_tol,
            set_a_bounded: sufficient.set_a_bounded,
            a_cells: sufficient.a_cells,
            epsilon: sufficient.epsilon,
            normalizer_fused: result.normalizer_fused,
            normalizer_oracle: result.normalizer_oracle,
        },
    )?;

    println!("rule {}: verdict_weak = {}", rule.tag(), weak.ok);
    if let Some(astar) = weak.alpha_star {
        println!("alpha' = {astar}");
    }
    Ok(if weak.ok { 0 } else { 1 })
}

// ---------------------------------------------------------------------------
// reproduce
// ---------------------------------------------------------------------------

fn cmd_reproduce(args: ReproduceArgs) -> Result<i32> {
    if args.id == "all" {
        return reproduce_all(&args.common);
    }
    let Some(id) = ExperimentId::parse(&args.id) else {
        let valid: Vec<&str> = ExperimentId::ALL.iter().map(|i| i.token()).collect();
        eprintln!(
            "error: unknown experiment {:?}; valid ids: {} (or `all`)",
            args.id,
            valid.join(", ")
        );
        return Ok(2);
    };
    let config = args.common.run_config()?;
    let output = run_experiment(id, &config)?;
    let all_passed = report_experiment(id, &output, &args.common)?;
    Ok(if all_passed { 0 } else { 1 })
}

fn reproduce_all(common: &CommonArgs) -> Result<i32> {
    let config = common.run_config()?;
    // Experiments run concurrently; results are collected and reported
    // in the fixed declaration order so output stays deterministic.
    let outputs: Vec<Result<ExperimentOutput>> = thread::scope(|scope| {
        let handles: Vec<_> = ExperimentId::ALL
            .iter()
            .map(|&id| {
                let cfg = config.clone();
                scope.spawn(move || run_experiment(id, &cfg).map_err(anyhow::Error::from))
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });

    let mut all_passed = true;
    for (id, output) in ExperimentId::ALL.iter().zip(outputs) {
        let output = output.with_context(|| format!("experiment {}", id.token()))?;
        all_passed &= report_experiment(*id, &output, common)?;
    }
    Ok(if all_passed { 0 } else { 1 })
}

/// Prints the band summary and writes the experiment's artifacts; returns
/// whether every band passed.
fn report_experiment(
    id: ExperimentId,
    output: &ExperimentOutput,
    common: &CommonArgs,
) -> Result<bool> {
    let dir = common.out_dir(Some(id.token()))?;
    write_json(&dir, "report.json", output)?;
    match output {
        ExperimentOutput::Fig2(r) => {
            write_text(
                &dir,
                "curves.csv",
                &curves_csv(&r.curves.alphas, &r.curves.cond2, &r.curves.cond3),
            )?;
        }
        ExperimentOutput::Notch(r) => {
            write_text(
                &dir,
                "curves.csv",
                &curves_csv(&r.curves.alphas, &r.curves.cond2, &r.curves.cond3),
            )?;
            if let Some(grid) = &r.candidate_grid {
                write_text(&dir, "grid.csv", &grid_csv(grid))?;
            }
        }
        ExperimentOutput::Ex5(r) => {
            if let Some(grid) = &r.grid {
                write_text(&dir, "grid.csv", &grid_csv(grid))?;
            }
            let mut levels = String::from("alpha,threshold,achieved_mass,components\n");
            for l in &r.levels {
                levels.push_str(&format!(
                    "{},{},{},{}\n",
                    l.alpha, l.threshold, l.achieved_mass, l.component_count
                ));
            }
            write_text(&dir, "levels.csv", &levels)?;
        }
        ExperimentOutput::Table2(r) => {
            write_text(&dir, "matrix.csv", &matrix_csv(r))?;
        }
        ExperimentOutput::Fusion(r) => {
            for art in &r.artifacts {
                let mut csv = String::from("x,oracle");
                for (tag, _) in &art.fused {
                    csv.push(',');
                    csv.push_str(tag);
                }
                csv.push('\n');
                for (i, x) in art.axis.iter().enumerate() {
                    csv.push_str(&format!("{x},{}", art.oracle[i]));
                    for (_, values) in &art.fused {
                        csv.push_str(&format!(",{}", values[i]));
                    }
                    csv.push('\n');
                }
                write_text(&dir, &format!("{}_densities.csv", art.scenario), &csv)?;
            }
        }
        _ => {}
    }

    let mut all_passed = true;
    println!("{}:", id.token());
    for band in output.bands() {
        let status = if band.passed { "PASS" } else { "FAIL" };
        println!("  {status}  {}: {}", band.name, band.detail);
        all_passed &= band.passed;
    }
    Ok(all_passed)
}

// ---------------------------------------------------------------------------
// table-gauss
// ---------------------------------------------------------------------------

fn cell_glyph(cell: &mvcons::experiments::Table2Cell) -> &'static str {
    match cell.fixed {
        Some(true) => "\u{2713}",
        Some(false) => "X",
        None => "/",
    }
}

fn matrix_csv(result: &Table2Result) -> String {
    let mut csv = String::from("row,geop,sc,wc,pd,psd,gekl\n");
    for row in &result.rows {
        csv.push_str(&row.label);
        for cell in &row.cells {
            csv.push(',');
            csv.push_str(cell_glyph(cell));
        }
        csv.push('\n');
    }
    csv
}

fn cmd_table_gauss(common: CommonArgs) -> Result<i32> {
    let config = common.run_config()?;
    let result = run_table2(&config)?;
    let dir = common.out_dir(None)?;
    write_json(&dir, "table.json", &result)?;
    write_text(&dir, "matrix.csv", &matrix_csv(&result))?;

    println!("{:<36} geop  sc    wc    pd    psd   gekl", "row");
    for row in &result.rows {
        let glyphs: Vec<&str> = row.cells.iter().map(cell_glyph).collect();
        println!(
            "{:<36} {:<5} {:<5} {:<5} {:<5} {:<5} {:<5}",
            row.label, glyphs[0], glyphs[1], glyphs[2], glyphs[3], glyphs[4], glyphs[5]
        );
    }
    for row in &result.rows {
        for cell in &row.cells {
            if cell.fixed.is_none() {
                println!("{}/{} is instance-dependent:", row.label, cell.column);
                for inst in &cell.instances {
                    let glyph = if inst.verdict { "\u{2713}" } else { "X" };
                    println!(
                        "  {glyph} {} mean {:?} covariance {:?} ({})",
                        inst.label, inst.mean, inst.covariance, inst.detail
                    );
                }
            }
        }
    }

    let ok = result.bands.iter().all(|b| b.passed);
    Ok(if ok { 0 } else { 1 })
}
