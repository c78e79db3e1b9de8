use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use quadmpc::hopper;
use quadmpc::locomotion::{GaitKind, GaitSchedule};
use quadmpc::qp::{QpSettings, QpSolver, QpStatus};
use quadmpc::sim::{format_sig9, run_scenario, MetricValue, RunOutput, ScenarioFile, SummaryMetrics};
use quadmpc::{Error, Leg};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::hopper_file::HopperFile;
use crate::{overrides, qpfile, CliError, GaitsArgs, HopperArgs, QpArgs, RunArgs};

fn read_table(path: &Path) -> Result<toml::Table, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    text.parse()
        .map_err(|e: toml::de::Error| CliError::Config(format!("{}: {}", path.display(), e.message())))
}

fn decode<T: DeserializeOwned>(table: toml::Table, origin: &str) -> Result<T, CliError> {
    T::deserialize(table).map_err(|e| CliError::Config(format!("{origin}: {}", e.message())))
}

fn dump<T: Serialize>(value: &T) -> Result<String, CliError> {
    toml::to_string(value).map_err(|e| CliError::Config(format!("cannot render configuration: {e}")))
}

// A closed stdout (e.g. piped into `head`) is not an error.
fn emit(text: &str) -> Result<(), CliError> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Io(format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn create_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or("scenario".into(), |s| s.to_string_lossy().into_owned())
}

/// Reads a scenario file, applies the overrides and validates it.
pub fn load_scenario(path: &Path, sets: &[String]) -> Result<ScenarioFile, CliError> {
    let mut table = read_table(path)?;
    overrides::apply(&mut table, sets)?;
    let file: ScenarioFile = decode(table, &path.display().to_string())?;
    file.validate()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(file)
}

struct Outcome {
    name: String,
    fell: bool,
    error: Option<Error>,
}

fn save_run(out: &Path, name: &str, run: &RunOutput) -> Result<(), CliError> {
    let csv = out.join(format!("{name}.csv"));
    let file = fs::File::create(&csv).map_err(|e| CliError::Io(format!("{}: {e}", csv.display())))?;
    let mut w = BufWriter::new(file);
    run.log
        .write_csv(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::Io(format!("{}: {e}", csv.display())))?;
    write_file(&out.join(format!("{name}.metrics")), &run.metrics.render())?;
    log::info!("wrote {}", csv.display());
    Ok(())
}

fn run_one(path: &Path, file: &ScenarioFile, out: &Path) -> Result<Outcome, CliError> {
    let name = stem(path);
    log::info!("running {} ({})", name, path.display());
    let (run, error) = match run_scenario(&file.scenario, &file.config) {
        Ok(run) => (run, None),
        Err(failure) => (failure.partial, Some(failure.error)),
    };
    save_run(out, &name, &run)?;
    Ok(Outcome {
        fell: run.fell(),
        name,
        error,
    })
}

pub fn run(args: &RunArgs) -> Result<(), CliError> {
    let files = args
        .scenario
        .iter()
        .map(|p| load_scenario(p, &args.set))
        .collect::<Result<Vec<_>, _>>()?;
    if args.dump_config {
        for (path, file) in args.scenario.iter().zip(&files) {
            if files.len() > 1 {
                emit(&format!("# {}\n", path.display()))?;
            }
            emit(&dump(file)?)?;
        }
        return Ok(());
    }
    if args.workers == 0 {
        return Err(CliError::Config("--workers must be at least 1".into()));
    }
    create_out(&args.out)?;

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, Result<Outcome, CliError>)>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..args.workers.min(files.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(file) = files.get(i) else { break };
                let outcome = run_one(&args.scenario[i], file, &args.out);
                results.lock().expect("worker panicked").push((i, outcome));
            });
        }
    });
    let mut results = results.into_inner().expect("worker panicked");
    results.sort_by_key(|(i, _)| *i);

    let mut failures = Vec::new();
    for (_, outcome) in results {
        let o = outcome?;
        match (&o.error, o.fell) {
            (Some(Error::InvalidConfig(msg)), _) => return Err(CliError::Config(format!("{}: {msg}", o.name))),
            (Some(e), _) => failures.push(format!("{}: {e}", o.name)),
            (None, true) => failures.push(format!("{}: the robot fell", o.name)),
            (None, false) => {}
        }
        emit(&format!("{} {}\n", o.name, if o.error.is_none() && !o.fell { "ok" } else { "failed" }))?;
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failure(failures.join("\n")))
    }
}

pub fn load_hopper(path: Option<&Path>, sets: &[String]) -> Result<HopperFile, CliError> {
    let mut table = match path {
        Some(p) => read_table(p)?,
        None => toml::Table::new(),
    };
    overrides::apply(&mut table, sets)?;
    let origin = path.map_or("hopper defaults".into(), |p| p.display().to_string());
    let file: HopperFile = decode(table, &origin)?;
    file.validate()?;
    Ok(file)
}

pub fn hopper(args: &HopperArgs) -> Result<(), CliError> {
    let file = load_hopper(args.scenario.as_deref(), &args.set)?;
    if args.dump_config {
        emit(&dump(&file)?)?;
        return Ok(());
    }
    let r = &file.run;
    let run = hopper::simulate(&file.params, file.initial_state(), r.speed_ref, r.dt, r.duration).map_err(|e| match e {
        Error::InvalidConfig(m) => CliError::Config(m),
        other => CliError::Failure(other.to_string()),
    })?;
    create_out(&args.out)?;
    let name = args.scenario.as_deref().map_or("hopper".into(), stem);
    write_file(&args.out.join(format!("{name}.csv")), &run.to_csv_string())?;

    let mut m = SummaryMetrics::default();
    m.set("hops", MetricValue::Int(run.hops.len() as u64));
    m.set("speed_ref", MetricValue::Float(r.speed_ref));
    if let Some(last) = run.hops.last() {
        m.set("final_hop_velocity", MetricValue::Float(last.mean_velocity));
        m.set("final_apex_height", MetricValue::Float(last.apex_height));
        m.set("final_stance_time", MetricValue::Float(last.stance_time));
    }
    let tail = &run.hops[run.hops.len().saturating_sub(5)..];
    if !tail.is_empty() {
        let mean = tail.iter().map(|h| h.mean_velocity).sum::<f64>() / tail.len() as f64;
        m.set("mean_velocity_last_5_hops", MetricValue::Float(mean));
    }
    write_file(&args.out.join(format!("{name}.metrics")), &m.render())?;
    emit(&m.render())?;
    Ok(())
}

pub fn qp(args: &QpArgs) -> Result<(), CliError> {
    let problem = match (&args.file, args.random) {
        (Some(path), None) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            qpfile::parse(&text)?
        }
        (None, Some(n)) if n > 0 => qpfile::random(n, args.seed),
        (None, Some(_)) => return Err(CliError::Config("--random needs at least one variable".into())),
        _ => return Err(CliError::Config("give either a QP file or --random N".into())),
    };
    let mut table = toml::Table::new();
    overrides::apply(&mut table, &args.set)?;
    let settings: QpSettings = decode(table, "qp settings")?;
    if let Some(path) = &args.write_problem {
        write_file(path, &qpfile::render(&problem))?;
    }
    let sol = QpSolver::new(settings)
        .solve(&problem, None)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let kkt = qpfile::kkt_residuals(&problem, &sol);
    let list = |v: &nalgebra::DVector<f64>| v.iter().map(|x| format_sig9(*x)).collect::<Vec<_>>().join(", ");
    let report = format!(
        "status = {}\niterations = {}\npolished = {}\nobjective = {}\nprimal_residual = {}\nstationarity = {}\n\
         complementarity = {}\nu = [{}]\nmultipliers = [{}]\n",
        sol.status.as_str(),
        sol.iterations,
        sol.polished,
        format_sig9(sol.objective),
        format_sig9(kkt.primal),
        format_sig9(kkt.stationarity),
        format_sig9(kkt.complementarity),
        list(&sol.u),
        list(&sol.multipliers),
    );
    emit(&report)?;
    match sol.status {
        QpStatus::Solved => Ok(()),
        other => Err(CliError::Failure(format!("qp not solved: {}", other.as_str()))),
    }
}

/// Contact table of one gait: a row per leg, `#` in stance and `.` in
/// swing, sampled at the start of each slot.
pub fn gait_table(kind: GaitKind, samples: usize) -> String {
    let g = GaitSchedule::standard(kind);
    let groups = g
        .virtual_legs()
        .iter()
        .map(|v| v.members.iter().map(|l| l.name()).collect::<Vec<_>>().join("+"))
        .collect::<Vec<_>>()
        .join(" | ");
    let mut out = format!("{kind}: period {} s, duty {}, virtual legs {groups}\n", g.period, g.duty);
    for leg in Leg::ALL {
        let row: String = (0..samples)
            .map(|k| {
                let t = g.period * k as f64 / samples as f64;
                if g.in_stance(leg, t) {
                    '#'
                } else {
                    '.'
                }
            })
            .collect();
        out.push_str(&format!("  {} {row}\n", leg.name()));
    }
    out
}

pub fn gaits(args: &GaitsArgs) -> Result<(), CliError> {
    if args.samples == 0 {
        return Err(CliError::Config("--samples must be at least 1".into()));
    }
    for kind in GaitKind::ALL {
        emit(&gait_table(kind, args.samples))?;
    }
    Ok(())
}
