//! Command dispatch for the `metadr` binary.
//!
//! Every run writes into `<out_dir>/<experiment>/<tag>/`:
//!
//! ```text
//! resolved_config.json
//! maml_log.csv                 iteration, mean_post_adapt_return
//! checkpoints/iter_XXXX.omck
//! report_<exp>.csv             arm, trial, day, reward, cost, penalty_rate
//! summary_<exp>.csv            arm, mean_final_reward, stderr, mean_final_cost, cost_ratio_vs_scratch
//! ppo_log_<exp>.csv            arm, trial, iteration, mean_reward, loss, mean_cost, penalty_rate
//! ablation_ranking.csv         (ablation only)
//! plots/<exp>.svg
//! timing.log                   wall-clock times; the only non-deterministic file
//! ```

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::checkpoint::MetaCheckpoint;
use crate::config::RunConfig;
use crate::csv::{self, Field};
use crate::env::{OfficeEnv, PersonKind, TaskSpec};
use crate::error::{Error, Result};
use crate::experiments::{self, ArmCurves, DayStats, EvalCurves, ExperimentId, Report, ARM_SCRATCH};
use crate::maml::{self, MamlRun};
use crate::plot;

#[derive(Debug, Parser)]
#[command(name = "metadr", version, about = "Meta-learned price-setting agents for office demand response")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by all subcommands. Precedence, lowest first: built-in
/// defaults, `--config` file, `--set` pairs, dedicated flags.
#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON config file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override any config key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE", value_parser = parse_key_value)]
    pub set: Vec<(String, String)>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output root directory.
    #[arg(long = "out", global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Run directory name (default `seed<N>`).
    #[arg(long, global = true)]
    pub tag: Option<String>,
    #[arg(long, global = true)]
    pub inner_steps: Option<usize>,
    #[arg(long, global = true)]
    pub meta_iterations: Option<usize>,
    /// `first-order` or `reptile`.
    #[arg(long, global = true, value_parser = parse_mode)]
    pub meta_grad_mode: Option<&'static str>,
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    #[arg(long, global = true)]
    pub eval_days: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Meta-train an initialization and write its checkpoints.
    TrainMaml {
        #[arg(long, value_parser = parse_experiment)]
        experiment: Option<ExperimentId>,
    },
    /// Adapt from a saved checkpoint and from scratch on the held-out task.
    Eval {
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        #[arg(long, value_parser = parse_experiment)]
        experiment: Option<ExperimentId>,
    },
    /// Meta-train, then evaluate (AdaptCurtailShift, AdaptThresholdExp, CheckpointAblation).
    Experiment {
        #[arg(value_parser = parse_experiment)]
        id: ExperimentId,
    },
    /// Shorthand for `experiment CheckpointAblation`.
    Ablation,
    /// One simulated day for a given point vector; CSV on stdout.
    EnvSim {
        #[arg(long, value_parser = parse_person)]
        person: PersonKind,
        /// Comma-separated points, one per hour.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        points: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        multiplier: f64,
        /// Also write the CSV here.
        #[arg(long, value_name = "FILE")]
        output: Option<PathBuf>,
    },
    /// Render a learning-curve SVG from a report CSV.
    Plot {
        #[arg(long, value_name = "FILE")]
        report: PathBuf,
        /// Defaults to `plots/<report stem>.svg` next to the report.
        #[arg(long, value_name = "FILE")]
        output: Option<PathBuf>,
    },
}

fn parse_key_value(s: &str) -> std::result::Result<(String, String), String> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.to_string())),
        _ => Err(format!("expected KEY=VALUE, got `{s}`")),
    }
}

fn parse_experiment(s: &str) -> std::result::Result<ExperimentId, String> {
    ExperimentId::parse(s).ok_or_else(|| {
        let names: Vec<_> = ExperimentId::ALL.iter().map(|e| e.name()).collect();
        format!("unknown experiment `{s}`; expected one of {}", names.join(", "))
    })
}

fn parse_person(s: &str) -> std::result::Result<PersonKind, String> {
    PersonKind::parse(s).ok_or_else(|| {
        format!("unknown person `{s}`; expected linear, sinusoidal, threshold-exponential or curtail-and-shift")
    })
}

fn parse_mode(s: &str) -> std::result::Result<&'static str, String> {
    match s.to_ascii_lowercase().replace('_', "-").as_str() {
        "first-order" | "firstorder" | "fo" => Ok("FirstOrder"),
        "reptile" => Ok("Reptile"),
        _ => Err(format!("unknown meta-gradient mode `{s}`; expected first-order or reptile")),
    }
}

fn json_string(s: &str) -> String {
    serde_json::Value::String(s.to_string()).to_string()
}

impl CommonArgs {
    /// Resolves the effective config; `experiment` (from the subcommand) wins
    /// over everything else.
    pub fn resolve(&self, experiment: Option<ExperimentId>) -> Result<RunConfig> {
        let mut overrides = self.set.clone();
        let mut put = |k: &str, v: String| overrides.push((k.to_string(), v));
        if let Some(s) = self.seed {
            put("seed", s.to_string());
        }
        if let Some(o) = &self.out {
            put("out_dir", json_string(&o.to_string_lossy()));
        }
        if let Some(t) = &self.tag {
            put("tag", json_string(t));
        }
        if let Some(k) = self.inner_steps {
            put("inner_steps", k.to_string());
        }
        if let Some(n) = self.meta_iterations {
            put("meta_iterations", n.to_string());
        }
        if let Some(m) = self.meta_grad_mode {
            put("meta_grad_mode", json_string(m));
        }
        if let Some(n) = self.trials {
            put("trials", n.to_string());
        }
        if let Some(n) = self.eval_days {
            put("eval_days", n.to_string());
        }
        if let Some(e) = experiment {
            put("experiment", json_string(e.name()));
        }
        RunConfig::resolve(self.config.as_deref(), &overrides)
    }
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code: 0 on success, 1 on a runtime error, 2 on a usage
/// error.
pub fn main_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let mut msg = format!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                let _ = write!(msg, "\n  caused by: {s}");
                src = s.source();
            }
            eprintln!("{msg}");
            1
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::TrainMaml { experiment } => {
            let cfg = cli.common.resolve(*experiment)?;
            let dir = prepare_run_dir(&cfg)?;
            let mut timing = Timing::default();
            train(&cfg, &dir, &mut timing)?;
            timing.write(&dir)
        }
        Command::Eval { checkpoint, experiment } => {
            let cfg = cli.common.resolve(*experiment)?;
            if cfg.experiment == ExperimentId::CheckpointAblation {
                return Err(Error::config(
                    "experiment",
                    "eval compares a single checkpoint; use `ablation` for the checkpoint sweep",
                ));
            }
            let ckpt = MetaCheckpoint::load(checkpoint)?;
            let fp = expected_fingerprint(&cfg);
            if ckpt.fingerprint != 0 && ckpt.fingerprint != fp {
                eprintln!(
                    "warning: {} was trained under a different configuration (fingerprint {:016x}, current {:016x})",
                    checkpoint.display(),
                    ckpt.fingerprint,
                    fp
                );
            }
            let dir = prepare_run_dir(&cfg)?;
            let mut timing = Timing::default();
            evaluate(&cfg, &dir, &[ckpt], &mut timing)?;
            timing.write(&dir)
        }
        Command::Experiment { id } => run_experiment_command(&cli.common, *id),
        Command::Ablation => run_experiment_command(&cli.common, ExperimentId::CheckpointAblation),
        Command::EnvSim {
            person,
            points,
            multiplier,
            output,
        } => {
            let cfg = cli.common.resolve(None)?;
            let text = env_sim(&cfg, *person, points, *multiplier)?;
            print!("{text}");
            if let Some(p) = output {
                fs::write(p, &text).map_err(|e| Error::io(p, e))?;
            }
            Ok(())
        }
        Command::Plot { report, output } => {
            let curves = load_report_curves(report)?;
            let out = match output {
                Some(p) => p.clone(),
                None => {
                    let stem = report.file_stem().map(|s| s.to_string_lossy().into_owned());
                    let stem = stem.unwrap_or_else(|| "report".into());
                    report.parent().unwrap_or(Path::new(".")).join("plots").join(format!("{stem}.svg"))
                }
            };
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            let title = report.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            plot::render_plot(&curves, &title, &out)?;
            eprintln!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn run_experiment_command(common: &CommonArgs, id: ExperimentId) -> Result<()> {
    let cfg = common.resolve(Some(id))?;
    let dir = prepare_run_dir(&cfg)?;
    let mut timing = Timing::default();
    let run = train(&cfg, &dir, &mut timing)?;
    evaluate(&cfg, &dir, &run.checkpoints, &mut timing)?;
    timing.write(&dir)
}

/// `<out_dir>/<experiment>/<tag>`, created, with `resolved_config.json` in it.
pub fn run_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir.join(cfg.experiment.name()).join(cfg.tag())
}

fn prepare_run_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = run_dir(cfg);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let path = dir.join("resolved_config.json");
    fs::write(&path, cfg.to_json_pretty()).map_err(|e| Error::io(&path, e))?;
    Ok(dir)
}

fn expected_fingerprint(cfg: &RunConfig) -> u64 {
    let spec = cfg.experiment_spec(cfg.experiment);
    maml::config_fingerprint(&cfg.maml_config(), &cfg.ppo_config(), &cfg.env_config(), &spec.train_dist)
}

#[derive(Default)]
struct Timing {
    lines: Vec<String>,
}

impl Timing {
    fn record(&mut self, phase: &str, seconds: f64) {
        eprintln!("{phase}: {seconds:.2}s");
        self.lines.push(format!("{phase} {seconds:.6}"));
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join("timing.log");
        let mut text = self.lines.join("\n");
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

pub fn checkpoint_file_name(iteration: u64) -> String {
    format!("iter_{iteration:04}.omck")
}

fn train(cfg: &RunConfig, dir: &Path, timing: &mut Timing) -> Result<MamlRun> {
    let ckpt_dir = dir.join("checkpoints");
    fs::create_dir_all(&ckpt_dir).map_err(|e| Error::io(&ckpt_dir, e))?;
    let spec = cfg.experiment_spec(cfg.experiment);
    let start = Instant::now();
    let run = maml::train_maml(
        &cfg.maml_config(),
        &cfg.ppo_config(),
        &cfg.env_config(),
        &spec.train_dist,
        cfg.seed,
        |c| c.save(&ckpt_dir.join(checkpoint_file_name(c.meta_iteration))),
    )?;
    timing.record("meta_training_seconds", start.elapsed().as_secs_f64());
    for row in &run.log {
        timing.lines.push(format!("meta_iteration {} {:.6}", row.iteration, row.wall_seconds));
    }
    let rows: Vec<Vec<Field>> = run
        .log
        .iter()
        .map(|r| vec![r.iteration.into(), r.mean_post_adapt_return.into()])
        .collect();
    csv::emit_csv(&dir.join("maml_log.csv"), &["iteration", "mean_post_adapt_return"], &rows)?;
    Ok(run)
}

fn evaluate(cfg: &RunConfig, dir: &Path, checkpoints: &[MetaCheckpoint], timing: &mut Timing) -> Result<Report> {
    let spec = cfg.experiment_spec(cfg.experiment);
    let start = Instant::now();
    let report = experiments::run_experiment(&spec, checkpoints, &cfg.env_config(), &cfg.ppo_config(), cfg.seed)?;
    timing.record("evaluation_seconds", start.elapsed().as_secs_f64());
    write_report(&report, dir)?;
    Ok(report)
}

/// Writes the report, summary, PPO log, plot and (for the ablation) ranking
/// files for a finished evaluation.
pub fn write_report(report: &Report, dir: &Path) -> Result<()> {
    let exp = report.experiment.name();
    let mut report_rows = Vec::new();
    let mut log_rows = Vec::new();
    for arm in &report.curves.arms {
        for (trial, series) in arm.trials.iter().enumerate() {
            for (day, s) in series.iter().enumerate() {
                report_rows.push(vec![
                    arm.name.as_str().into(),
                    trial.into(),
                    (day + 1).into(),
                    s.reward.into(),
                    s.cost.into(),
                    s.penalty_rate.into(),
                ]);
                log_rows.push(vec![
                    arm.name.as_str().into(),
                    trial.into(),
                    (day + 1).into(),
                    s.reward.into(),
                    s.loss.into(),
                    s.cost.into(),
                    s.penalty_rate.into(),
                ]);
            }
        }
    }
    csv::emit_csv(
        &dir.join(format!("report_{exp}.csv")),
        &["arm", "trial", "day", "reward", "cost", "penalty_rate"],
        &report_rows,
    )?;
    csv::emit_csv(
        &dir.join(format!("ppo_log_{exp}.csv")),
        &["arm", "trial", "iteration", "mean_reward", "loss", "mean_cost", "penalty_rate"],
        &log_rows,
    )?;
    let summary: Vec<Vec<Field>> = report
        .summary
        .iter()
        .map(|r| {
            vec![
                r.arm.as_str().into(),
                r.mean_final_reward.into(),
                r.stderr.into(),
                r.mean_final_cost.into(),
                r.cost_ratio_vs_scratch.into(),
            ]
        })
        .collect();
    csv::emit_csv(
        &dir.join(format!("summary_{exp}.csv")),
        &["arm", "mean_final_reward", "stderr", "mean_final_cost", "cost_ratio_vs_scratch"],
        &summary,
    )?;

    if report.experiment == ExperimentId::CheckpointAblation {
        let regresses = report.final_checkpoint_regresses();
        let rows: Vec<Vec<Field>> = report
            .ranking()
            .iter()
            .enumerate()
            .map(|(i, r)| {
                vec![
                    (i + 1).into(),
                    r.arm.as_str().into(),
                    r.mean_final_reward.into(),
                    r.stderr.into(),
                    match regresses {
                        Some(b) => b.to_string().into(),
                        None => Field::Empty,
                    },
                ]
            })
            .collect();
        csv::emit_csv(
            &dir.join("ablation_ranking.csv"),
            &["rank", "arm", "mean_final_reward", "stderr", "final_checkpoint_regresses"],
            &rows,
        )?;
        if regresses == Some(true) {
            eprintln!("note: the last checkpoint adapts worse than an earlier one");
        }
    }

    let plots = dir.join("plots");
    fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;
    plot::render_plot(&report.curves, exp, &plots.join(format!("{exp}.svg")))?;

    for r in &report.summary {
        eprintln!(
            "{:<12} final reward {:.4} ± {} cost ratio {}",
            r.arm,
            r.mean_final_reward,
            r.stderr.map_or("n/a".into(), |s| format!("{s:.4}")),
            r.cost_ratio_vs_scratch.map_or("n/a".into(), |c| format!("{c:.3}")),
        );
    }
    Ok(())
}

/// Rebuilds evaluation curves from a report CSV. The report carries no PPO
/// loss, so `DayStats::loss` is NaN.
pub fn load_report_curves(path: &Path) -> Result<EvalCurves> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().map(csv::split_line).ok_or(Error::Empty("report csv"))?;
    let expected = ["arm", "trial", "day", "reward", "cost", "penalty_rate"];
    if header != expected {
        return Err(Error::config(
            "report",
            format!("{}: header {header:?} does not match {expected:?}", path.display()),
        ));
    }
    let bad = |n: usize, what: &str| Error::config("report", format!("{}:{}: {what}", path.display(), n + 2));
    let mut arms: Vec<ArmCurves> = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let f = csv::split_line(line);
        if f.len() != expected.len() {
            return Err(bad(n, "wrong number of fields"));
        }
        let trial: usize = f[1].parse().map_err(|_| bad(n, "bad trial"))?;
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(n, "bad number"));
        let stats = DayStats {
            reward: num(&f[3])?,
            cost: num(&f[4])?,
            penalty_rate: num(&f[5])?,
            loss: f64::NAN,
        };
        let arm = match arms.iter_mut().position(|a| a.name == f[0]) {
            Some(i) => &mut arms[i],
            None => {
                arms.push(ArmCurves {
                    name: f[0].clone(),
                    trials: Vec::new(),
                });
                arms.last_mut().expect("just pushed")
            }
        };
        if arm.trials.len() <= trial {
            arm.trials.resize(trial + 1, Vec::new());
        }
        arm.trials[trial].push(stats);
    }
    if arms.is_empty() {
        return Err(Error::Empty("report rows"));
    }
    // Scratch last, matching the order the experiments write.
    arms.sort_by_key(|a| a.name == ARM_SCRATCH);
    Ok(EvalCurves { arms })
}

/// Runs one day in the held-out task geometry and renders it as CSV:
/// one row per hour, then a `total` row carrying the day's cost and reward.
pub fn env_sim(cfg: &RunConfig, person: PersonKind, points: &[f64], multiplier: f64) -> Result<String> {
    let env_cfg = cfg.env_config();
    if points.len() != env_cfg.hours_per_day {
        return Err(Error::Shape {
            what: "points",
            expected: env_cfg.hours_per_day,
            got: points.len(),
        });
    }
    let task = TaskSpec {
        person,
        multiplier,
        baseline_seed: cfg.eval_baseline_seed,
        price_seed: cfg.eval_price_seed,
    };
    let mut env = OfficeEnv::new(task, &env_cfg)?;
    let grid = env.grid().clone();
    let step = env.step(points)?;
    let mut rows: Vec<Vec<Field>> = (0..grid.hours())
        .map(|h| {
            vec![
                h.to_string().into(),
                step.info.points[h].into(),
                grid.price[h].into(),
                grid.baseline[h].into(),
                step.info.demand[h].into(),
                (step.info.demand[h] * grid.price[h]).into(),
                Field::Empty,
            ]
        })
        .collect();
    rows.push(vec![
        "total".into(),
        Field::Empty,
        Field::Empty,
        grid.baseline.iter().sum::<f64>().into(),
        step.info.demand.iter().sum::<f64>().into(),
        step.info.cost.into(),
        step.reward.into(),
    ]);
    if step.info.penalized {
        eprintln!("cost fell below the penalty threshold");
    }
    csv::to_csv_string(
        &["hour", "points", "price", "baseline", "demand", "cost", "reward"],
        &rows,
    )
}
