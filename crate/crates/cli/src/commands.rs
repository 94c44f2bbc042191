use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mgshield::analysis::{self, AnalysisError};
use mgshield::attacks::Attack;
use mgshield::cases::{paper_scenario, PaperCase};
use mgshield::detection::{detect, LinkKey};
use mgshield::scenario_file::{emit_scenario, load_scenario, ScenarioFileError};
use mgshield::sim::{self, Channel, Scenario, SimError, Trace};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Parse(#[from] ScenarioFileError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Diverged(SimError),
    #[error(transparent)]
    Sim(SimError),
    #[error(transparent)]
    Analysis(AnalysisError),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Diverged { .. } => CliError::Diverged(e),
            other => CliError::Sim(other),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Sim(s) => s.into(),
            other => CliError::Analysis(other),
        }
    }
}

/// Microgrid secondary-control simulator with a hidden auxiliary layer.
#[derive(Debug, Parser)]
#[command(name = "mgshield", version)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a scenario and write the trace as CSV.
    Run(RunArgs),
    /// Check steady-state errors against the analytic bounds.
    Verify(Source),
    /// Run link-level attack detection.
    Detect(Source),
    /// Emit and run one of the built-in study cases.
    Paper(PaperArgs),
    /// Sweep the coupling gain and tabulate errors and bounds.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct Source {
    /// Scenario file.
    #[arg(long, conflicts_with = "case", required_unless_present = "case")]
    scenario: Option<PathBuf>,
    /// Built-in case instead of a file.
    #[arg(long)]
    case: Option<PaperCase>,
    /// Override the seed of the random auxiliary initial state.
    #[arg(long)]
    seed: Option<u64>,
}

impl Source {
    fn load(&self) -> Result<Scenario, CliError> {
        let mut s = match (&self.scenario, self.case) {
            (Some(path), _) => load_scenario(path)?,
            (None, Some(case)) => paper_scenario(case),
            (None, None) => return Err(CliError::Usage("either --scenario or --case is required".into())),
        };
        if let Some(seed) = self.seed {
            s.init.z_seed = seed;
        }
        Ok(s)
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated column subset, e.g. t,omega_1,residual_1_4.
    #[arg(long, value_delimiter = ',')]
    columns: Option<Vec<String>>,
}

#[derive(Debug, Args)]
struct PaperArgs {
    #[arg(long)]
    case: PaperCase,
    /// Also write the scenario file here.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Write the trace CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    columns: Option<Vec<String>>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    source: Source,
    /// Comma-separated, strictly ascending beta values.
    #[arg(long, value_delimiter = ',', required = true)]
    beta: Vec<f64>,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn dispatch(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Verify(src) => cmd_verify(&src.load()?),
        Command::Detect(src) => cmd_detect(&src.load()?),
        Command::Paper(a) => cmd_paper(&a),
        Command::Sweep(a) => cmd_sweep(&a),
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_output(out: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), CliError> {
    match out {
        Some(path) => {
            let file = File::create(path).map_err(io_err(path))?;
            let mut w = BufWriter::new(file);
            write(&mut w).and_then(|_| w.flush()).map_err(io_err(path))
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock).map_err(io_err(Path::new("<stdout>")))
        }
    }
}

fn write_trace(trace: &Trace, out: Option<&Path>, columns: Option<&[String]>) -> Result<(), CliError> {
    if let Some(cols) = columns {
        let known = trace.column_names();
        if let Some(bad) = cols.iter().find(|c| !known.contains(c)) {
            return Err(CliError::Usage(format!("unknown column '{bad}'")));
        }
    }
    write_output(out, |w| trace.write_csv(w, columns))
}

fn cmd_run(a: &RunArgs) -> Result<ExitCode, CliError> {
    let s = a.source.load()?;
    let trace = sim::run(&s)?;
    write_trace(&trace, a.out.as_deref(), a.columns.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

fn verdict(pass: bool) -> ExitCode {
    if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn cmd_verify(s: &Scenario) -> Result<ExitCode, CliError> {
    let trace = sim::run(s)?;
    let report = analysis::verify_bounds(&trace, s)?;
    print!("{report}");
    Ok(verdict(report.passed()))
}

/// Directed links whose injections are active at some point of the run.
fn attacked_links(s: &Scenario) -> BTreeSet<LinkKey> {
    s.attacks
        .iter()
        .filter_map(|a| match a {
            Attack::Link(l) if l.value != 0.0 && l.start <= s.integration.horizon => Some(LinkKey {
                receiver: l.receiver,
                sender: l.sender,
                target: l.target,
            }),
            _ => None,
        })
        .collect()
}

fn cmd_detect(s: &Scenario) -> Result<ExitCode, CliError> {
    let mut s = s.clone();
    s.detection.enabled = true;
    let trace = sim::run(&s)?;
    let report = detect(&trace, s.detection.threshold, s.detection.dwell);
    print!("{report}");

    if s.detection.auto_isolate && !trace.isolations().is_empty() {
        // fresh run on the topology left after isolation
        let mut post = s.clone();
        post.topology = trace.final_topology().clone();
        post.attacks.retain(|a| match a {
            Attack::Link(l) => post.topology.has_edge(l.receiver, l.sender),
            Attack::Lti(_) => true,
        });
        post.detection.enabled = false;
        let post_trace = sim::run(&post)?;
        let window = analysis::default_window(&post_trace);
        let ss = analysis::steady_state(&post_trace, Channel::Omega, window)?;
        let edges: Vec<String> = post
            .topology
            .edges()
            .map(|(i, j)| format!("{}-{}", i + 1, j + 1))
            .collect();
        println!("post_isolation_edges: {}", edges.join(" "));
        let mean: Vec<String> = ss.mean.iter().map(|v| format!("{v:.9}")).collect();
        println!("post_isolation_omega_mean: {}", mean.join(" "));
        println!("post_isolation_omega_max_deviation: {:.3e}", ss.max_deviation);
        println!(
            "post_isolation_e_omega: {:.3e}",
            analysis::frequency_error_norm(&post_trace, window)?
        );
    }

    let flagged: BTreeSet<LinkKey> = report.flagged().into_iter().collect();
    let pass = flagged == attacked_links(&s);
    println!("detection: {}", if pass { "pass" } else { "fail" });
    Ok(verdict(pass))
}

fn cmd_paper(a: &PaperArgs) -> Result<ExitCode, CliError> {
    let mut s = paper_scenario(a.case);
    if let Some(seed) = a.seed {
        s.init.z_seed = seed;
    }
    if let Some(path) = &a.scenario {
        std::fs::write(path, emit_scenario(&s)).map_err(io_err(path))?;
    }
    let trace = sim::run(&s)?;
    if let Some(out) = &a.out {
        write_trace(&trace, Some(out), a.columns.as_deref())?;
    }
    println!("case: {}", a.case);
    let report = analysis::verify_bounds(&trace, &s)?;
    print!("{report}");
    if s.detection.enabled {
        print!("{}", detect(&trace, s.detection.threshold, s.detection.dwell));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(a: &SweepArgs) -> Result<ExitCode, CliError> {
    let s = a.source.load()?;
    let table = analysis::beta_sweep(&s, &a.beta).map_err(|e| match e {
        AnalysisError::Betas(m) => CliError::Usage(format!("--beta: {m}")),
        other => other.into(),
    })?;
    let csv = table.to_csv();
    write_output(a.out.as_deref(), |w| w.write_all(csv.as_bytes()))?;
    Ok(ExitCode::SUCCESS)
}
