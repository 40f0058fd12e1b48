use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;

use streamreuse_core::equivalence::{maximal_ancestor_intersection, Matcher};
use streamreuse_core::harness::{
    generate_trace, generate_workload, metrics_csv, pair, replay, Mode, ReplayConfig,
    ReuseHistogram, Trace, TraceKind, TraceSpec, Workload, WorkloadSpec,
};
use streamreuse_core::manager::ManagerError;
use streamreuse_core::model::{parse_dataflow, validate, Dataflow, DataflowDocument};
use streamreuse_core::session::{Session, SessionError};

#[derive(Parser)]
#[command(name = "streamreuse", version, about = "Merge, unmerge and replay streaming dataflows with task reuse")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a dataflow document and print every violated rule.
    Validate { file: PathBuf },
    /// Summarize what two dataflows share.
    Diff { first: PathBuf, second: PathBuf },
    /// Submit a dataflow to the manager kept in the state file.
    Submit {
        #[arg(long)]
        state: PathBuf,
        file: PathBuf,
    },
    /// Remove a submitted dataflow by name.
    Remove {
        #[arg(long)]
        state: PathBuf,
        name: String,
    },
    /// Print running DAGs, fragments, paused tasks and the constraint report.
    Status {
        #[arg(long)]
        state: PathBuf,
    },
    /// Replay a trace over a workload and write metric CSVs.
    Replay {
        #[arg(long)]
        workload: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        mode: ModeArg,
        #[arg(long, default_value_t = 1)]
        oracle_every: usize,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Generate a synthetic workload.
    GenWorkload {
        /// Named preset; ignored when --spec is given.
        #[arg(long, value_enum, default_value = "opmw-like")]
        preset: Preset,
        /// Workload spec as JSON.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a submit/remove trace over a workload.
    GenTrace {
        #[arg(long)]
        workload: PathBuf,
        #[arg(long, value_enum, default_value = "seq")]
        kind: KindArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        rw_steps: usize,
        #[arg(long, default_value_t = 0.57)]
        initial_fill: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Default,
    Reuse,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    OpmwLike,
    Small,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Seq,
    Rw,
}

struct Failure {
    code: u8,
    message: String,
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

impl From<SessionError> for Failure {
    fn from(e: SessionError) -> Self {
        let code = match &e {
            SessionError::Manager(ManagerError::InvalidDataflow { .. }) => 1,
            SessionError::Manager(ManagerError::DuplicateName(_) | ManagerError::UnknownName(_)) => 2,
            _ => 3,
        };
        fail(code, e.to_string())
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| fail(2, format!("cannot read {}: {e}", path.display())))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    serde_json::from_str(&read(path)?).map_err(|e| fail(1, format!("{}: {e}", path.display())))
}

fn load_dataflow(path: &Path) -> Result<Dataflow, Failure> {
    parse_dataflow(&read(path)?).map_err(|e| fail(1, format!("{}: {e}", path.display())))
}

/// Writes through a temporary file in the same directory, then renames.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), Failure> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let io = |e: std::io::Error| fail(1, format!("cannot write {}: {e}", path.display()));
    fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Holds an exclusive advisory lock on `<state>.lock` while alive.
struct StateLock(File);

impl StateLock {
    fn acquire(state: &Path) -> Result<Self, Failure> {
        let mut name = state.as_os_str().to_owned();
        name.push(".lock");
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(PathBuf::from(name))
            .map_err(|e| fail(1, format!("cannot lock {}: {e}", state.display())))?;
        file.lock()
            .map_err(|e| fail(1, format!("cannot lock {}: {e}", state.display())))?;
        Ok(StateLock(file))
    }
}

impl Drop for StateLock {
    fn drop(&mut self) {
        let _ = self.0.unlock();
    }
}

fn load_session(state: &Path) -> Result<Session, Failure> {
    if state.exists() {
        read_json(state)
    } else {
        Ok(Session::new())
    }
}

fn status(session: &Session) -> (String, bool) {
    let m = &session.manager;
    let dep = &session.deployment;
    let mut out = String::new();
    out += &format!(
        "submitted: {}\nrunning DAGs: {}\nrunning tasks: {}\n",
        m.submitted().len(),
        m.running().len(),
        m.running_task_count()
    );
    for (name, r) in m.running() {
        let serves: Vec<&str> = m.decomposition()[name].iter().map(String::as_str).collect();
        out += &format!("  {name}: {} tasks, {} streams, serves {serves:?}\n", r.len(), r.streams().len());
    }
    out += &format!("fragments: {}\n", dep.fragments().len());
    for f in dep.fragments() {
        out += &format!(
            "  {}: {} tasks, {} inbound topics, launched at step {}\n",
            f.name,
            f.tasks.len(),
            f.inbound_topics.len(),
            f.launched_at
        );
    }
    out += &format!(
        "active tasks: {}\npaused tasks: {}\ncost: {:.3}\n",
        dep.active_task_count(),
        dep.paused().len(),
        dep.cost()
    );
    let report = m.check_constraints();
    let mut ok = report.is_empty();
    if dep.active_task_count() != m.running_task_count() {
        ok = false;
        out += "deployment and manager disagree on the running task count\n";
    }
    out += &format!("constraints: {report}\n");
    (out, ok)
}

fn diff(a: &Dataflow, b: &Dataflow) -> String {
    let shared = Matcher::between(a, b).match_all();
    if shared.is_empty() {
        return format!("{} and {} are disjoint: 0 shared task classes\n", a.name(), b.name());
    }
    let mut out = format!(
        "{} and {} share {} task classes\nreuse points:\n",
        a.name(),
        b.name(),
        shared.len()
    );
    for g in maximal_ancestor_intersection(a, b) {
        out += &format!(
            "  {} = {} ({} tasks, {} streams)\n",
            g.root,
            shared[&g.root],
            g.tasks.len(),
            g.streams.len()
        );
    }
    out
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate { file } => {
            let doc: DataflowDocument = read_json(&file)?;
            let d = Dataflow::try_from(doc).map_err(|e| fail(1, format!("{}: {e}", file.display())))?;
            let report = validate(&d);
            println!("{report}");
            if !report.is_empty() {
                return Err(fail(1, format!("{} is invalid", file.display())));
            }
        }
        Command::Diff { first, second } => {
            print!("{}", diff(&load_dataflow(&first)?, &load_dataflow(&second)?));
        }
        Command::Submit { state, file } => {
            let d = load_dataflow(&file)?;
            let _lock = StateLock::acquire(&state)?;
            let mut session = load_session(&state)?;
            let (plan, fragment) = session.submit(d)?;
            write_json(&state, &session)?;
            print!("{plan}");
            match fragment {
                Some(f) => println!("  launched fragment {f}"),
                None => println!("  nothing to launch"),
            }
        }
        Command::Remove { state, name } => {
            let _lock = StateLock::acquire(&state)?;
            let mut session = load_session(&state)?;
            let plan = session.remove(&name)?;
            write_json(&state, &session)?;
            print!("{plan}");
        }
        Command::Status { state } => {
            let session = load_session(&state)?;
            let (text, ok) = status(&session);
            print!("{text}");
            if !ok {
                return Err(fail(3, "state violates manager invariants"));
            }
        }
        Command::Replay {
            workload,
            trace,
            mode,
            oracle_every,
            out,
        } => {
            let workload: Workload = read_json(&workload)?;
            let trace: Trace = read_json(&trace)?;
            trace.check().map_err(|e| fail(1, e.to_string()))?;
            let config = ReplayConfig {
                oracle_every,
                ..ReplayConfig::default()
            };
            let modes: &[Mode] = match mode {
                ModeArg::Default => &[Mode::Default],
                ModeArg::Reuse => &[Mode::Reuse],
                ModeArg::Both => &[Mode::Default, Mode::Reuse],
            };
            let mut results = Vec::new();
            for m in modes {
                results.push(replay(&trace, &workload, *m, &config).map_err(|e| fail(3, e.to_string()))?);
            }
            let metrics = out.join("metrics.csv");
            write_atomic(&metrics, metrics_csv(&results).as_bytes())?;
            println!("wrote {}", metrics.display());
            if let Some(r) = results.iter().find(|r| r.mode == Mode::Reuse) {
                let hist = out.join("histogram.csv");
                write_atomic(&hist, ReuseHistogram::from_usage(&r.usage).to_csv().as_bytes())?;
                println!("wrote {}", hist.display());
            }
            if let [d, r] = results.as_slice() {
                let samples = pair(d, r);
                if let Some(s) = samples.iter().find(|s| s.running_tasks_reuse > s.running_tasks_default) {
                    return Err(fail(3, format!("reuse runs more tasks than default at step {}", s.step)));
                }
                let peak = samples.iter().max_by_key(|s| s.running_tasks_default);
                if let Some(p) = peak {
                    println!(
                        "peak: default {} tasks, reuse {} tasks",
                        p.running_tasks_default, p.running_tasks_reuse
                    );
                }
            }
        }
        Command::GenWorkload {
            preset,
            spec,
            seed,
            out,
        } => {
            let mut spec = match spec {
                Some(path) => read_json::<WorkloadSpec>(&path)?,
                None => match preset {
                    Preset::OpmwLike => WorkloadSpec::opmw_like(),
                    Preset::Small => WorkloadSpec::small(0),
                },
            };
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            let w = generate_workload(&spec).map_err(|e| fail(2, e.to_string()))?;
            write_json(&out, &w)?;
            println!("wrote {} dataflows, {} tasks to {}", w.dags.len(), w.total_tasks(), out.display());
        }
        Command::GenTrace {
            workload,
            kind,
            seed,
            rw_steps,
            initial_fill,
            out,
        } => {
            let w: Workload = read_json(&workload)?;
            let spec = match kind {
                KindArg::Seq => TraceSpec::seq(seed),
                KindArg::Rw => TraceSpec::rw(seed, rw_steps, initial_fill),
            };
            let t = generate_trace(&w, &spec).map_err(|e| fail(2, e.to_string()))?;
            write_json(&out, &t)?;
            let kind = match t.kind {
                TraceKind::Seq => "SEQ",
                TraceKind::Rw => "RW",
            };
            println!("wrote {kind} trace of {} actions to {}", t.actions.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
