use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};

use tvrl::abr::{write_bandwidth_trace, write_chunk_sizes, UserGroup, VideoSpec};
use tvrl::framework::ExpertMode;
use tvrl::harness::{
    aggregate_rows, cross_eval, load_expert, read_summary_rows, run_dir_name, run_experiment, run_many,
    write_boxstats_csv, DetectorMode, EnvKind, EvalSettings, ExperimentConfig, LearnerKind, Scenario, ScenarioKind,
    SummaryRow,
};
use tvrl::rl::ReplayKind;
use tvrl::straggler::{write_trace, StragglerWorkload, WorkloadPreset};
use tvrl::Error;

#[derive(Parser)]
#[command(name = "tvrl", version, about = "Online RL experiments on time-varying systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment, or one per seed and permutation.
    Run(RunArgs),
    /// Evaluate a frozen straggler policy on another workload.
    CrossEval(CrossEvalArgs),
    /// Pool summary.csv files into box-plot rows.
    Aggregate(AggregateArgs),
    /// Write synthetic workload or bandwidth traces.
    GenTraces(GenTracesArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Comma-separated seeds; several seeds run in parallel.
    #[arg(long, value_delimiter = ',', required = true)]
    seed: Vec<u64>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Start from a JSON config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "straggler")]
    env: EnvKind,
    #[arg(long, default_value = "I")]
    scenario: ScenarioKind,
    #[arg(long)]
    learner: Option<LearnerKind>,
    #[arg(long)]
    expert_mode: Option<ExpertMode>,
    #[arg(long)]
    buffer: Option<ReplayKind>,
    #[arg(long)]
    workload_info: bool,
    #[arg(long)]
    no_safeguard: bool,
    #[arg(long)]
    detector: Option<DetectorMode>,
    #[arg(long)]
    label_noise: Option<f64>,
    #[arg(long)]
    t_c: Option<u64>,
    #[arg(long)]
    episode_len: Option<usize>,
    /// Workload dwell time as a multiple of T_c.
    #[arg(long)]
    t_sw: Option<f64>,
    #[arg(long)]
    cycles: Option<u32>,
    /// Role order of the three workloads, e.g. 2,0,1.
    #[arg(long, value_delimiter = ',')]
    permutation: Option<Vec<usize>>,
    /// Run all six workload orders.
    #[arg(long)]
    all_permutations: bool,
    #[arg(long)]
    fake_replay: bool,
    /// ABR user groups (0-based) for the three workload roles, e.g. 0,1,2.
    #[arg(long, value_delimiter = ',')]
    user_groups: Option<Vec<usize>>,
    /// Use the full-scale convergence times and replay capacities.
    #[arg(long)]
    full_scale: bool,
    #[arg(long)]
    no_checkpoints: bool,
}

#[derive(Args)]
struct CrossEvalArgs {
    /// Checkpoint of the policy under test.
    #[arg(long)]
    train_checkpoint: PathBuf,
    /// Checkpoint of the policy trained on the test workload.
    #[arg(long)]
    matched_checkpoint: PathBuf,
    #[arg(long)]
    test_workload: WorkloadPreset,
    #[arg(long, default_value_t = 1800)]
    windows: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    workload_info: bool,
}

#[derive(Args)]
struct AggregateArgs {
    /// summary.csv files or directories searched recursively.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Columns forming the group key.
    #[arg(long, value_delimiter = ',', default_value = "scenario,workload,expert_mode,buffer")]
    group_by: Vec<String>,
    /// Output CSV (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenTracesArgs {
    #[arg(long, default_value = "straggler")]
    env: EnvKind,
    /// Straggler: scenario, smooth_drift, fast_switch or a preset name.
    #[arg(long, default_value = "scenario")]
    workload: String,
    /// Straggler: number of 500 ms windows.
    #[arg(long, default_value_t = 7200)]
    windows: u64,
    /// Straggler: windows per phase or per half period.
    #[arg(long, default_value_t = 1200)]
    period: u64,
    /// ABR: user group (UG1..UG5).
    #[arg(long, default_value = "UG1")]
    user_group: UserGroup,
    /// ABR: seconds per trace.
    #[arg(long, default_value_t = 600)]
    seconds: usize,
    /// ABR: number of traces.
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

fn build_config(args: &RunArgs) -> tvrl::Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load_json(path)?,
        None => ExperimentConfig::desk(args.env, args.scenario),
    };
    if args.config.is_none() {
        cfg.scenario = Scenario::new(args.scenario);
    }
    if args.full_scale {
        cfg = cfg.full_scale();
    }
    if let Some(v) = args.learner {
        cfg.learner = v;
    }
    if let Some(v) = args.expert_mode {
        cfg.expert_mode = v;
    }
    if let Some(v) = args.buffer {
        cfg.buffer = v;
    }
    cfg.workload_info |= args.workload_info;
    if args.no_safeguard {
        cfg.safeguard.enabled = false;
    }
    if let Some(v) = args.detector {
        cfg.detector = v;
    }
    if let Some(v) = args.label_noise {
        cfg.label_noise = v;
    }
    if let Some(v) = args.t_c {
        cfg.t_c = v;
    }
    if let Some(v) = args.episode_len {
        cfg.episode_len = v;
    }
    if let Some(v) = args.t_sw {
        cfg.scenario.t_sw = v;
    }
    if let Some(v) = args.cycles {
        cfg.scenario.cycles = v;
    }
    if let Some(p) = &args.permutation {
        let p: [usize; 3] =
            p.as_slice().try_into().map_err(|_| Error::Config("permutation needs three entries".into()))?;
        cfg.scenario.permutation = p;
    }
    cfg.fake_replay |= args.fake_replay;
    if let Some(g) = &args.user_groups {
        let g: [usize; 3] =
            g.as_slice().try_into().map_err(|_| Error::Config("user groups need three entries".into()))?;
        cfg.user_groups = g;
    }
    if args.no_checkpoints {
        cfg.write_checkpoints = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

const PERMUTATIONS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

fn run(args: RunArgs) -> tvrl::Result<ExitCode> {
    let base = build_config(&args)?;
    let perms: Vec<[usize; 3]> =
        if args.all_permutations { PERMUTATIONS.to_vec() } else { vec![base.scenario.permutation] };
    let mut configs = Vec::new();
    for &seed in &args.seed {
        for &p in &perms {
            let mut cfg = base.clone();
            cfg.seed = seed;
            cfg.scenario.permutation = p;
            configs.push(cfg);
        }
    }
    let summaries = if configs.len() == 1 {
        vec![run_experiment(&configs[0], Some(&args.out_dir))]
    } else {
        run_many(&configs, Some(&args.out_dir))
    };
    let mut diverged = false;
    for (cfg, result) in configs.iter().zip(summaries) {
        let summary = result?;
        let name = run_dir_name(cfg);
        match &summary.diverged {
            Some(msg) => {
                diverged = true;
                error!("{name}: training diverged: {msg}");
            }
            None => info!("{name}: finished in {:.1} s", summary.wall_clock_s),
        }
        for row in &summary.rows {
            println!("{name},{},{:.3},{:.3},{:.3}", row.workload, row.p25, row.p50, row.p75);
        }
    }
    Ok(if diverged { ExitCode::from(3) } else { ExitCode::SUCCESS })
}

fn cross_eval_cmd(args: CrossEvalArgs) -> tvrl::Result<ExitCode> {
    let train = load_expert(&args.train_checkpoint)?;
    let matched = load_expert(&args.matched_checkpoint)?;
    let eval = EvalSettings { windows: args.windows, seed: args.seed, workload_info: args.workload_info, ..Default::default() };
    let r = cross_eval(&train, &matched, args.test_workload.params(), &eval)?;
    println!("baseline_p95,policy_p95,matched_p95,normalized");
    println!("{},{},{},{}", r.baseline_p95, r.policy_p95, r.matched_p95, r.normalized);
    Ok(ExitCode::SUCCESS)
}

fn collect_summaries(path: &Path, out: &mut Vec<PathBuf>) -> tvrl::Result<()> {
    if path.is_file() {
        out.push(path.to_path_buf());
    } else if path.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(path)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
        entries.sort();
        for p in entries {
            if p.is_dir() {
                collect_summaries(&p, out)?;
            } else if p.file_name().is_some_and(|n| n == "summary.csv") {
                out.push(p);
            }
        }
    } else {
        return Err(Error::Config(format!("{} does not exist", path.display())));
    }
    Ok(())
}

fn group_key(row: &SummaryRow, fields: &[String]) -> tvrl::Result<String> {
    let parts = fields
        .iter()
        .map(|f| match f.as_str() {
            "scenario" => Ok(row.scenario.clone()),
            "workload" => Ok(row.workload.clone()),
            "expert_mode" => Ok(row.expert_mode.clone()),
            "buffer" => Ok(row.buffer.clone()),
            "seed" => Ok(row.seed.to_string()),
            other => Err(Error::Config(format!("cannot group by '{other}'"))),
        })
        .collect::<tvrl::Result<Vec<_>>>()?;
    Ok(parts.join("/"))
}

fn aggregate(args: AggregateArgs) -> tvrl::Result<ExitCode> {
    let mut files = Vec::new();
    for input in &args.inputs {
        collect_summaries(input, &mut files)?;
    }
    let mut rows = Vec::new();
    for f in &files {
        rows.extend(read_summary_rows(f)?);
    }
    for r in &rows {
        group_key(r, &args.group_by)?;
    }
    let groups = aggregate_rows(&rows, |r| group_key(r, &args.group_by).unwrap_or_default());
    match &args.out {
        Some(path) => write_boxstats_csv(&groups, std::fs::File::create(path)?)?,
        None => write_boxstats_csv(&groups, std::io::stdout().lock())?,
    }
    Ok(ExitCode::SUCCESS)
}

fn gen_traces(args: GenTracesArgs) -> tvrl::Result<ExitCode> {
    std::fs::create_dir_all(&args.out_dir)?;
    match args.env {
        EnvKind::Straggler => {
            let workload = match args.workload.as_str() {
                "scenario" => StragglerWorkload::scenario_presets(args.period),
                "smooth_drift" => StragglerWorkload::smooth_drift(2 * args.period),
                "fast_switch" => StragglerWorkload::fast_switch(args.period),
                preset => {
                    let p: WorkloadPreset = preset.parse()?;
                    StragglerWorkload::Piecewise { phases: vec![p.params()], phase_windows: args.windows.max(1) }
                }
            };
            let rows = workload.to_trace(args.windows, 500.0)?;
            let path = args.out_dir.join(format!("straggler_{}.csv", args.workload));
            write_trace(&rows, std::fs::File::create(&path)?)?;
            info!("wrote {}", path.display());
        }
        EnvKind::Abr => {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.seed);
            let gen = args.user_group.generator();
            for i in 0..args.count {
                let trace = gen.generate(args.seconds, &mut rng)?;
                let path = args.out_dir.join(format!("{}_{i}.csv", args.user_group.name()));
                write_bandwidth_trace(&trace, std::fs::File::create(&path)?)?;
            }
            write_chunk_sizes(&VideoSpec::default_video(), std::fs::File::create(args.out_dir.join("chunk_sizes.csv"))?)?;
            info!("wrote {} traces to {}", args.count, args.out_dir.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::CrossEval(a) => cross_eval_cmd(a),
        Command::Aggregate(a) => aggregate(a),
        Command::GenTraces(a) => gen_traces(a),
    };
    match result {
        Ok(code) => code,
        Err(e @ (Error::Config(_) | Error::Usage(_))) => {
            error!("{e}");
            ExitCode::from(2)
        }
        Err(e @ Error::Divergence(_)) => {
            error!("{e}");
            ExitCode::from(3)
        }
        Err(e) => {
            error!("{e}");
            ExitCode::FAILURE
        }
    }
}
