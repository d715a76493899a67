use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use iconn_core::baselines::{bench_one, BenchRow, Method};
use iconn_core::cluster::cluster_with_retry;
use iconn_core::explore::{
    count_subproblems, generate_cave, run_exploration, CycleRecord, ExplorationInstance, ExploreConfig,
    ExploreError,
};
use iconn_core::problem::load_problem;
use iconn_core::solver::{backend, extract_plan, Backend};
use iconn_core::verify::{verify_plan, SolutionDoc};
use iconn_core::{assemble, Limits, PlanSolution, Problem, SolveStatus};

use crate::SolverArgs;

#[derive(Debug)]
pub enum Failure {
    Infeasible(String),
    Verification(String),
    Backend(String),
    Stall(String),
    Input(String),
}

impl Failure {
    pub const USAGE: u8 = 64;

    pub fn code(&self) -> u8 {
        match self {
            Failure::Infeasible(_) => 1,
            Failure::Verification(_) => 2,
            Failure::Backend(_) => 3,
            Failure::Stall(_) => 4,
            Failure::Input(_) => Self::USAGE,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Infeasible(m) => write!(f, "infeasible: {m}"),
            Failure::Verification(m) => write!(f, "verification failed: {m}"),
            Failure::Backend(m) => write!(f, "backend: {m}"),
            Failure::Stall(m) => write!(f, "exploration stalled: {m}"),
            Failure::Input(m) => write!(f, "{m}"),
        }
    }
}

fn input(e: impl fmt::Display) -> Failure {
    Failure::Input(e.to_string())
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Input(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(input)?;
    text.push('\n');
    write(path, &text)
}

fn limits(args: &SolverArgs) -> Limits {
    Limits {
        time_limit: args.time_limit,
        gap: args.gap.unwrap_or(0.0),
    }
}

fn open_backend(args: &SolverArgs) -> Result<Box<dyn Backend>, Failure> {
    backend(&args.backend).map_err(|e| Failure::Backend(e.to_string()))
}

fn load(path: &Path) -> Result<Problem, Failure> {
    load_problem(&read(path)?).map_err(input)
}

#[derive(Serialize, Deserialize)]
pub struct ModelStats {
    pub variables: usize,
    pub constraints: usize,
    pub by_tag: BTreeMap<String, usize>,
}

/// Output of `solve`.
#[derive(Serialize, Deserialize)]
pub struct SolveReport {
    pub status: String,
    pub objective: Option<f64>,
    pub wall_time: f64,
    pub backend: String,
    pub limits: Limits,
    pub model: ModelStats,
    pub solution: Option<SolutionDoc>,
}

pub fn solve(instance: &Path, out: &Path, args: &SolverArgs) -> Result<(), Failure> {
    let spec = load(instance)?;
    let backend = open_backend(args)?;
    let model = assemble(&spec).map_err(input)?;
    let limits = limits(args);
    let res = iconn_core::solve(&model, backend.as_ref(), &limits);
    let mut report = SolveReport {
        status: res.status.label().to_string(),
        objective: res.objective,
        wall_time: res.wall_time,
        backend: args.backend.clone(),
        limits,
        model: ModelStats {
            variables: model.num_vars(),
            constraints: model.constraints.len(),
            by_tag: model.counts.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        },
        solution: None,
    };
    match &res.status {
        SolveStatus::Error(m) => return Err(Failure::Backend(m.clone())),
        s if !s.has_solution() => {
            write_json(out, &report)?;
            return Err(Failure::Infeasible(format!("solver reports {}", s.label())));
        }
        _ => {}
    }
    let plan = extract_plan(&spec, &model, &res)
        .ok_or_else(|| Failure::Verification("assignment does not decode to a plan".into()))?;
    verify_plan(&plan, &spec).map_err(|v| Failure::Verification(v.to_string()))?;
    report.solution = Some(plan.to_doc(&spec.net));
    write_json(out, &report)
}

pub fn verify(instance: &Path, solution: &Path) -> Result<(), Failure> {
    let spec = load(instance)?;
    let value: serde_json::Value = serde_json::from_str(&read(solution)?).map_err(input)?;
    let doc_value = match value.get("solution") {
        Some(inner) if inner.is_null() => return Err(Failure::Input("solution file carries no plan".into())),
        Some(inner) => inner.clone(),
        None => value,
    };
    let doc: SolutionDoc = serde_json::from_value(doc_value).map_err(input)?;
    let plan = PlanSolution::from_doc(&doc, &spec.net).map_err(input)?;
    verify_plan(&plan, &spec).map_err(|v| Failure::Verification(v.to_string()))?;
    println!("ok");
    Ok(())
}

pub fn cluster(instance: &Path, out: &Path, seed: u64, k: usize, dot: Option<&Path>) -> Result<(), Failure> {
    let spec = load(instance)?;
    let master = spec.agents.masters.iter().next().copied().unwrap_or(0);
    let cl = cluster_with_retry(&spec.net, &spec.agents.initial, k, master, seed).map_err(input)?;
    cl.check(&spec.net, &spec.agents.initial, master)
        .map_err(|v| Failure::Verification(v.to_string()))?;
    write_json(out, &cl.to_doc(&spec.net, k))?;
    if let Some(path) = dot {
        write(path, &cl.to_dot(&spec.net))?;
    }
    Ok(())
}

pub struct ExploreArgs {
    pub instance: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub generate: usize,
    pub agents: usize,
    pub comm_radius: f64,
    pub frames: bool,
    pub t_max: usize,
    pub max_cycles: usize,
    pub solver: SolverArgs,
}

#[derive(Serialize)]
struct Trace<'a> {
    seed: u64,
    config: &'a ExploreConfig,
    states: usize,
    known: usize,
    complete: bool,
    cycles: usize,
    subproblems: usize,
    /// Solver calls per wall-time bucket, upper bounds in seconds.
    solve_time_histogram: BTreeMap<String, usize>,
    max_solve_time: f64,
    error: Option<String>,
    log: &'a [CycleRecord],
}

const BUCKETS: [(f64, &str); 5] = [
    (0.1, "0.1"),
    (1.0, "1"),
    (10.0, "10"),
    (60.0, "60"),
    (f64::INFINITY, "inf"),
];

fn histogram(log: &[CycleRecord]) -> BTreeMap<String, usize> {
    let mut out: BTreeMap<String, usize> = BUCKETS.iter().map(|(_, n)| (n.to_string(), 0)).collect();
    for s in log.iter().flat_map(|c| &c.subproblems) {
        let (_, name) = BUCKETS
            .iter()
            .find(|(hi, _)| s.wall_time <= *hi)
            .expect("last bucket is open");
        *out.get_mut(*name).expect("bucket") += 1;
    }
    out
}

pub fn explore(args: &ExploreArgs) -> Result<(), Failure> {
    let scenario = match &args.instance {
        Some(path) => serde_json::from_str::<ExplorationInstance>(&read(path)?).map_err(input)?,
        None => {
            let generated = generate_cave(args.generate, args.agents, args.comm_radius, args.seed);
            write_json(&args.out.join("world.json"), &generated)?;
            generated
        }
    };
    let world = scenario.into_world::<f64>().map_err(input)?;
    let backend = open_backend(&args.solver)?;
    let defaults = ExploreConfig::default();
    let config = ExploreConfig {
        t_max: args.t_max,
        max_cycles: args.max_cycles,
        frames: args.frames,
        limits: Limits {
            time_limit: args.solver.time_limit.or(defaults.limits.time_limit),
            gap: args.solver.gap.unwrap_or(defaults.limits.gap),
        },
        ..defaults
    };
    let known: Vec<_> = world.known.iter().copied().collect();
    let states = world.truth.num_states();
    let result = run_exploration(
        world.truth,
        world.positions,
        world.base,
        &known,
        &config,
        backend.as_ref(),
        args.seed,
    );
    let (log, known, error, outcomes) = match result {
        Ok(run) => (
            run.world.cycle_log.clone(),
            run.world.known.len(),
            None,
            run.outcomes,
        ),
        Err(ExploreError::Stall { log, .. }) | Err(ExploreError::CycleLimit { log, .. }) => {
            let known = log.last().map_or(0, |c| c.known + c.revealed.len());
            let msg = result_message(&log);
            (log, known, Some(msg), Vec::new())
        }
        Err(e) => return Err(input(e)),
    };
    let trace = Trace {
        seed: args.seed,
        config: &config,
        states,
        known,
        complete: known == states,
        cycles: log.len(),
        subproblems: count_subproblems(&log),
        solve_time_histogram: histogram(&log),
        max_solve_time: log
            .iter()
            .flat_map(|c| &c.subproblems)
            .map(|s| s.wall_time)
            .fold(0.0, f64::max),
        error: error.clone(),
        log: &log,
    };
    write_json(&args.out.join("trace.json"), &trace)?;
    if args.frames {
        for (c, out) in outcomes.iter().enumerate() {
            for (t, frame) in out.frames.iter().enumerate() {
                write(
                    &args
                        .out
                        .join("frames")
                        .join(format!("cycle{c:03}_step{t:03}.dot")),
                    frame,
                )?;
            }
        }
    }
    println!("{known}/{states} states known after {} cycles", log.len());
    match error {
        Some(msg) => Err(Failure::Stall(msg)),
        None if log.iter().all(|c| c.info_delivered) => Ok(()),
        None => Err(Failure::Verification(
            "a cycle's delivery to the base is not certified".into(),
        )),
    }
}

fn result_message(log: &[CycleRecord]) -> String {
    format!("no progress in cycle {}", log.len().saturating_sub(1))
}

/// `lo-hi` inclusive, or a single length.
pub fn parse_range(text: &str) -> Result<Vec<usize>, Failure> {
    let num = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| Failure::Input(format!("bad length `{s}`")))
    };
    let (lo, hi) = match text.split_once('-') {
        Some((a, b)) => (num(a)?, num(b)?),
        None => {
            let n = num(text)?;
            (n, n)
        }
    };
    if lo < 2 || lo > hi {
        return Err(Failure::Input(format!("bad range `{text}`")));
    }
    Ok((lo..=hi).collect())
}

pub fn bench(
    methods: &[String],
    n_range: &str,
    out: &Path,
    seed: u64,
    workers: usize,
    args: &SolverArgs,
) -> Result<(), Failure> {
    let methods: Vec<Method> = methods
        .iter()
        .filter(|m| !m.trim().is_empty())
        .map(|m| m.trim().parse::<Method>().map_err(input))
        .collect::<Result<_, _>>()?;
    let lengths = parse_range(n_range)?;
    let backend = open_backend(args)?;
    let limits = limits(args);
    let jobs: Vec<(usize, Method)> = lengths
        .iter()
        .flat_map(|&n| methods.iter().map(move |&m| (n, m)))
        .collect();
    let rows: Mutex<Vec<Option<BenchRow>>> = Mutex::new(vec![None; jobs.len()]);
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers.max(1).min(jobs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(n, m)) = jobs.get(i) else { break };
                let row = bench_one(m, n, backend.as_ref(), &limits);
                log::info!("{}", row.to_csv());
                rows.lock().expect("bench rows")[i] = Some(row);
            });
        }
    });
    let rows: Vec<BenchRow> = rows
        .into_inner()
        .expect("bench rows")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect();
    let mut text = format!(
        "# seed={seed} backend={} time_limit={} gap={} horizon=ceil(N/2)\n{}\n",
        args.backend,
        args.time_limit.map_or("none".to_string(), |t| t.to_string()),
        args.gap.unwrap_or(0.0),
        BenchRow::HEADER
    );
    for r in &rows {
        text.push_str(&r.to_csv());
        text.push('\n');
    }
    write(out, &text)?;
    for &n in &lengths {
        let objectives: Vec<f64> = rows
            .iter()
            .filter(|r| r.n == n)
            .filter_map(|r| r.objective)
            .collect();
        if objectives.windows(2).any(|w| (w[0] - w[1]).abs() > 1e-6) {
            return Err(Failure::Verification(format!(
                "methods disagree at N={n}: {objectives:?}"
            )));
        }
    }
    Ok(())
}
