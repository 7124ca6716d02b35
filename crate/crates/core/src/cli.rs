//! The `geomind` command line.
//!
//! ```text
//! geomind <simulate|compete|learn|analyze|geodesic> --config <path> [--out <dir>] [--seed <n> ...]
//! ```
//!
//! Exit status is 0 on success, 1 when the run failed after the configuration
//! was accepted (an `error.json` or `no_geodesic.json` report is written to
//! the output directory), and 2 for usage or configuration errors.
//! Relative paths inside the configuration are resolved against the
//! directory containing the configuration file. Log verbosity is read from
//! `GEOMIND_LOG` (default `warn`).

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cognition::{ActivationFn, CognitionParams, FeedbackFn, Predictor};
use crate::error::{GeoError, Result};
use crate::geodesic::{geodesic_between, ShootingOptions, Trajectory};
use crate::io::{export_trajectory, load_field, load_schedule, parse_json, save_field, OutputFormat};
use crate::manifold::{MetricSource, TokenField};
use crate::mind::{
    analyze_field, pca_projection, run_learning, run_thought_flow, select_conscious, FlowConfig,
    GridSpec, InputSchedule, MetricChoice, ThoughtFlow,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Simulate,
    Compete,
    Learn,
    Analyze,
    Geodesic,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Compete => "compete",
            Command::Learn => "learn",
            Command::Analyze => "analyze",
            Command::Geodesic => "geodesic",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "geomind", version, about = "Geodesic thought flows on token-embedding manifolds")]
pub struct Cli {
    pub command: Command,
    /// Run configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seeds to run; overrides `simulation.seeds`. Repeatable.
    #[arg(long = "seed")]
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    /// Only `"identity"` is accepted.
    Named(String),
    Explicit {
        value: Vec<Vec<f64>>,
        predictor: Vec<Vec<f64>>,
    },
}

impl Default for MatrixSpec {
    fn default() -> Self {
        MatrixSpec::Named("identity".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CognitionConfig {
    pub matrices: MatrixSpec,
    pub bias: Option<Vec<f64>>,
    pub activation: ActivationFn,
    /// Input blend `beta`.
    pub beta: f64,
    pub gain: f64,
    pub feedback: FeedbackFn,
    pub kappa: f64,
    /// Attention temperature; `sqrt(D)` when absent.
    pub temperature: Option<f64>,
    pub context_capacity: usize,
    pub predictor: Predictor,
}

impl Default for CognitionConfig {
    fn default() -> Self {
        CognitionConfig {
            matrices: MatrixSpec::default(),
            bias: None,
            activation: ActivationFn::Identity,
            beta: 0.0,
            gain: 1.0,
            feedback: FeedbackFn::Linear,
            kappa: 0.0,
            temperature: None,
            context_capacity: 16,
            predictor: Predictor::Contextual,
        }
    }
}

fn square(rows: &[Vec<f64>], d: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(GeoError::Config(format!("{what} matrix must be {d}x{d}")));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

impl CognitionConfig {
    pub fn params(&self, d: usize) -> Result<CognitionParams> {
        let mut p = CognitionParams::identity(d);
        match &self.matrices {
            MatrixSpec::Named(name) if name == "identity" => {}
            MatrixSpec::Named(other) => {
                return Err(GeoError::Config(format!("unknown matrix preset `{other}`")))
            }
            MatrixSpec::Explicit { value, predictor } => {
                p.value_matrix = square(value, d, "value")?;
                p.predictor_matrix = square(predictor, d, "predictor")?;
            }
        }
        if let Some(b) = &self.bias {
            if b.len() != d {
                return Err(GeoError::Config(format!("bias must have length {d}")));
            }
            p.bias = b.clone();
        }
        p.activation = self.activation;
        p.input_blend = self.beta;
        p.feedback_gain = self.gain;
        p.feedback = self.feedback;
        p.kappa = self.kappa;
        if let Some(t) = self.temperature {
            p.attention_temperature = t;
        }
        p.context_capacity = self.context_capacity;
        p.predictor = self.predictor;
        p.validate().map_err(|e| GeoError::Config(e.to_string()))?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub steps: usize,
    pub dt: f64,
    pub seeds: Vec<u64>,
    /// Input schedule file: a JSON list of `{step, vector}`.
    pub inputs: Option<PathBuf>,
    /// Start point; the flow begins at the token nearest to it. Origin when absent.
    pub start: Option<Vec<f64>>,
    /// Initial velocity; zero when absent.
    pub velocity: Option<Vec<f64>>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            steps: 100,
            dt: 0.01,
            seeds: vec![0],
            inputs: None,
            start: None,
            velocity: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompetitionConfig {
    pub threshold: f64,
}

impl Default for CompetitionConfig {
    fn default() -> Self {
        CompetitionConfig {
            threshold: f64::NEG_INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningConfig {
    pub rate: f64,
    pub cycles: usize,
    /// Input presented at every cycle; falls back to the simulation schedule.
    pub input: Option<Vec<f64>>,
}

impl Default for LearningConfig {
    fn default() -> Self {
        LearningConfig {
            rate: 0.2,
            cycles: 50,
            input: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicConfig {
    pub from: Vec<f64>,
    pub to: Vec<f64>,
    #[serde(flatten)]
    pub shooting: ShootingOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub format: OutputFormat,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            format: OutputFormat::Json,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub field: PathBuf,
    #[serde(default)]
    pub metric: MetricChoice,
    #[serde(default)]
    pub cognition: CognitionConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub competition: CompetitionConfig,
    #[serde(default)]
    pub learning: LearningConfig,
    #[serde(default)]
    pub analysis: GridSpec,
    pub geodesic: Option<GeodesicConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let cfg: RunConfig = parse_json(text, source_name)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.simulation;
        if !(s.dt > 0.0 && s.dt.is_finite()) {
            return Err(GeoError::Config("simulation.dt must be positive".into()));
        }
        if s.steps == 0 {
            return Err(GeoError::Config("simulation.steps must be at least 1".into()));
        }
        if s.seeds.is_empty() {
            return Err(GeoError::Config("simulation.seeds must not be empty".into()));
        }
        let unique: BTreeSet<_> = s.seeds.iter().collect();
        if unique.len() != s.seeds.len() {
            return Err(GeoError::Config("simulation.seeds must be unique".into()));
        }
        if !(0.0..=1.0).contains(&self.learning.rate) {
            return Err(GeoError::Config("learning.rate must lie in [0, 1]".into()));
        }
        if self.learning.cycles == 0 {
            return Err(GeoError::Config("learning.cycles must be at least 1".into()));
        }
        if self.competition.threshold.is_nan() {
            return Err(GeoError::Config("competition.threshold must be a number".into()));
        }
        Ok(())
    }
}

/// Everything a command needs, loaded and checked before any output is written.
struct Prepared {
    command: Command,
    config: RunConfig,
    field: TokenField,
    source: MetricSource,
    params: CognitionParams,
    inputs: InputSchedule,
    out: PathBuf,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn prepare(cli: &Cli) -> Result<Prepared> {
    let text = fs::read_to_string(&cli.config)
        .map_err(|e| GeoError::Config(format!("cannot read {}: {e}", cli.config.display())))?;
    let mut config = RunConfig::parse(&text, &cli.config.display().to_string())?;
    if !cli.seeds.is_empty() {
        config.simulation.seeds = cli.seeds.clone();
        config.validate()?;
    }
    let base = cli.config.parent().unwrap_or(Path::new("."));
    let field = load_field(resolve(base, &config.field))?;
    let d = field.dimension();
    let source = config.metric.source_for(&field);
    if let Some(sd) = source.dimension() {
        if sd != d {
            return Err(GeoError::Config(format!(
                "metric has dimension {sd} but the field has dimension {d}"
            )));
        }
    }
    let params = config.cognition.params(d)?;
    let inputs = match &config.simulation.inputs {
        Some(p) => load_schedule(resolve(base, p), d)?,
        None => InputSchedule::none(),
    };
    for (name, v) in [("start", &config.simulation.start), ("velocity", &config.simulation.velocity)] {
        if v.as_ref().is_some_and(|v| v.len() != d) {
            return Err(GeoError::Config(format!("simulation.{name} must have length {d}")));
        }
    }
    if let Some(x) = &config.learning.input {
        if x.len() != d {
            return Err(GeoError::Config(format!("learning.input must have length {d}")));
        }
    }
    if cli.command == Command::Geodesic {
        let g = config
            .geodesic
            .as_ref()
            .ok_or_else(|| GeoError::Config("the geodesic command needs a `geodesic` section".into()))?;
        if g.from.len() != d || g.to.len() != d {
            return Err(GeoError::Config(format!("geodesic endpoints must have length {d}")));
        }
    }
    let out = cli
        .out
        .clone()
        .unwrap_or_else(|| resolve(base, &config.output.dir));
    Ok(Prepared {
        command: cli.command,
        config,
        field,
        source,
        params,
        inputs,
        out,
    })
}

/// Outcome of a command whose configuration was accepted.
enum Outcome {
    Done,
    /// Artifacts were written but the run is a failure (e.g. a truncated flow).
    Failed(String),
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    command: &'a str,
    error: String,
}

#[derive(Serialize)]
struct SeedScore {
    seed: u64,
    score: f64,
    truncated: bool,
}

#[derive(Serialize)]
struct SelectionReport {
    winner_seed: Option<u64>,
    winner_index: Option<usize>,
    threshold: f64,
    scores: Vec<SeedScore>,
}

#[derive(Serialize)]
struct NoGeodesicReport<'a> {
    from: &'a [f64],
    to: &'a [f64],
    reason: String,
    iterations: Option<usize>,
    miss: Option<f64>,
}

#[derive(Serialize)]
struct ProjectedToken {
    id: u64,
    x: f64,
    y: f64,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

impl Prepared {
    fn flow_config(&self, steps: usize) -> FlowConfig {
        let d = self.field.dimension();
        let s = &self.config.simulation;
        FlowConfig {
            start: s.start.clone().unwrap_or_else(|| vec![0.0; d]),
            velocity: s.velocity.clone().unwrap_or_else(|| vec![0.0; d]),
            steps,
            dt: s.dt,
        }
    }

    fn path(&self, stem: &str) -> PathBuf {
        self.out.join(format!("{stem}.{}", self.config.output.format.extension()))
    }

    /// Runs one flow per seed on scoped worker threads; results come back in seed order.
    fn run_flows(&self) -> Result<Vec<ThoughtFlow>> {
        let flow = self.flow_config(self.config.simulation.steps);
        std::thread::scope(|scope| {
            let handles: Vec<_> = self
                .config
                .simulation
                .seeds
                .iter()
                .map(|&seed| {
                    let flow = &flow;
                    scope.spawn(move || {
                        run_thought_flow(&self.field, &self.source, &self.params, &self.inputs, flow, seed)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("flow worker panicked"))
                .collect()
        })
    }

    fn write_flows(&self, flows: &[ThoughtFlow], prefix: &str) -> Result<Outcome> {
        let mut truncated = Vec::new();
        for f in flows {
            export_trajectory(&f.trajectory, self.config.output.format, self.path(&format!("{prefix}{}", f.seed)))?;
            if f.trajectory.truncated {
                truncated.push(f.seed);
            }
        }
        Ok(if truncated.is_empty() {
            Outcome::Done
        } else {
            Outcome::Failed(format!("trajectory left the chart domain for seeds {truncated:?}"))
        })
    }

    fn simulate(&self) -> Result<Outcome> {
        let flows = self.run_flows()?;
        self.write_flows(&flows, "trajectory_seed")
    }

    fn compete(&self) -> Result<Outcome> {
        let flows = self.run_flows()?;
        let outcome = self.write_flows(&flows, "flow_seed")?;
        let sel = select_conscious(&flows, self.config.competition.threshold);
        let report = SelectionReport {
            winner_seed: sel.winner.map(|i| flows[i].seed),
            winner_index: sel.winner,
            threshold: sel.threshold,
            scores: flows
                .iter()
                .map(|f| SeedScore {
                    seed: f.seed,
                    score: f.score,
                    truncated: f.trajectory.truncated,
                })
                .collect(),
        };
        write_json(&self.out.join("selection.json"), &report)?;
        Ok(outcome)
    }

    fn learn(&self) -> Result<Outcome> {
        let cycles = self.config.learning.cycles;
        let inputs = match &self.config.learning.input {
            Some(x) => InputSchedule::repeated(x.clone(), cycles),
            None => self.inputs.clone(),
        };
        let seed = self.config.simulation.seeds[0];
        let run = run_learning(
            &self.field,
            self.config.metric,
            &self.params,
            &inputs,
            &self.flow_config(cycles),
            self.config.learning.rate,
            seed,
        )?;
        for (k, snap) in run.snapshots.iter().enumerate() {
            save_field(snap, self.out.join(format!("field_cycle{}.json", k + 1)))?;
        }
        match self.config.output.format {
            OutputFormat::Json => {
                #[derive(Serialize)]
                struct Point {
                    cycle: usize,
                    error_norm: f64,
                }
                let curve: Vec<Point> = run
                    .error_norms
                    .iter()
                    .enumerate()
                    .map(|(k, e)| Point {
                        cycle: k + 1,
                        error_norm: *e,
                    })
                    .collect();
                write_json(&self.out.join("error_curve.json"), &curve)?;
            }
            OutputFormat::Csv => {
                let mut text = String::from("cycle,error_norm\n");
                for (k, e) in run.error_norms.iter().enumerate() {
                    text.push_str(&format!("{},{e}\n", k + 1));
                }
                fs::write(self.out.join("error_curve.csv"), text)?;
            }
        }
        export_trajectory(&run.flow.trajectory, self.config.output.format, self.path(&format!("learning_seed{seed}")))?;
        Ok(if run.flow.trajectory.truncated {
            Outcome::Failed("learning flow left the chart domain".into())
        } else {
            Outcome::Done
        })
    }

    fn analyze(&self) -> Result<Outcome> {
        let report = analyze_field(&self.field, &self.source, &self.config.analysis)?;
        write_json(&self.out.join("report.json"), &report)?;
        let projection = pca_projection(&self.field);
        match self.config.output.format {
            OutputFormat::Json => {
                let rows: Vec<ProjectedToken> = projection
                    .iter()
                    .map(|(id, [x, y])| ProjectedToken { id: *id, x: *x, y: *y })
                    .collect();
                write_json(&self.out.join("projection.json"), &rows)?;
            }
            OutputFormat::Csv => {
                let mut text = String::from("id,x,y\n");
                for (id, [x, y]) in &projection {
                    text.push_str(&format!("{id},{x},{y}\n"));
                }
                fs::write(self.out.join("projection.csv"), text)?;
            }
        }
        Ok(Outcome::Done)
    }

    fn geodesic(&self) -> Result<Outcome> {
        let g = self.config.geodesic.as_ref().expect("checked in prepare");
        match geodesic_between(&g.from, &g.to, &self.source, &g.shooting) {
            Ok(traj) => {
                export_trajectory(&traj, self.config.output.format, self.path("geodesic"))?;
                Ok(Outcome::Done)
            }
            Err(e @ (GeoError::NoGeodesic { .. } | GeoError::ChartExit { .. } | GeoError::SingularChart { .. })) => {
                let (iterations, miss) = match e {
                    GeoError::NoGeodesic { iterations, miss } => (Some(iterations), Some(miss)),
                    _ => (None, None),
                };
                write_json(
                    &self.out.join("no_geodesic.json"),
                    &NoGeodesicReport {
                        from: &g.from,
                        to: &g.to,
                        reason: e.to_string(),
                        iterations,
                        miss,
                    },
                )?;
                Ok(Outcome::Failed(e.to_string()))
            }
            Err(e) => Err(e),
        }
    }

    fn execute(&self) -> Result<Outcome> {
        fs::create_dir_all(&self.out)?;
        match self.command {
            Command::Simulate => self.simulate(),
            Command::Compete => self.compete(),
            Command::Learn => self.learn(),
            Command::Analyze => self.analyze(),
            Command::Geodesic => self.geodesic(),
        }
    }
}

/// Trajectory written by `simulate` for `seed`, relative to the output directory.
pub fn simulate_output_name(seed: u64, format: OutputFormat) -> String {
    format!("trajectory_seed{seed}.{}", format.extension())
}

/// Parses `args` (including the program name), runs the command and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let prepared = match prepare(&cli) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("geomind: {e}");
            return EXIT_USAGE;
        }
    };
    let name = prepared.command.name();
    let failure = match prepared.execute() {
        Ok(Outcome::Done) => return EXIT_OK,
        Ok(Outcome::Failed(msg)) => msg,
        Err(e) => e.to_string(),
    };
    eprintln!("geomind {name}: {failure}");
    let report = ErrorReport {
        command: name,
        error: failure,
    };
    if let Err(e) = fs::create_dir_all(&prepared.out).map_err(GeoError::from).and_then(|_| {
        write_json(&prepared.out.join("error.json"), &report)
    }) {
        eprintln!("geomind: could not write error report: {e}");
    }
    EXIT_RUNTIME
}

/// Reads back the trajectory `simulate` wrote for `seed`.
pub fn read_simulation(out: &Path, seed: u64, format: OutputFormat) -> Result<Trajectory> {
    crate::io::import_trajectory(out.join(simulate_output_name(seed, format)), format)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"field": "f.json"}"#;

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::parse(MINIMAL, "c").unwrap();
        assert_eq!(c.simulation.seeds, vec![0]);
        assert_eq!(c.output.format, OutputFormat::Json);
        assert_eq!(c.metric, MetricChoice::Field);
    }

    #[test]
    fn rejects_invalid_configs() {
        for bad in [
            r#"{"field": "f.json", "simulation": {"dt": 0}}"#,
            r#"{"field": "f.json", "simulation": {"steps": 0}}"#,
            r#"{"field": "f.json", "simulation": {"seeds": [1, 1]}}"#,
            r#"{"field": "f.json", "output": {"format": "xml"}}"#,
            r#"{"field": "f.json", "typo": 1}"#,
        ] {
            assert!(RunConfig::parse(bad, "c").is_err(), "{bad}");
        }
    }

    #[test]
    fn cognition_matrices() {
        let c: CognitionConfig =
            serde_json::from_str(r#"{"matrices": {"value": [[2, 0], [0, 2]], "predictor": [[1, 0], [0, 1]]}, "beta": 0.5}"#)
                .unwrap();
        let p = c.params(2).unwrap();
        assert_eq!(p.value_matrix[(1, 1)], 2.0);
        assert_eq!(p.input_blend, 0.5);
        assert!(CognitionConfig {
            matrices: MatrixSpec::Named("random".into()),
            ..Default::default()
        }
        .params(2)
        .is_err());
    }

    #[test]
    fn unknown_command_is_usage_error() {
        assert_eq!(run(["geomind", "foo", "--config", "x.json"]), EXIT_USAGE);
        assert_eq!(run(["geomind", "simulate"]), EXIT_USAGE);
    }
}
