use std::fs;
use std::io::{self, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use eci_core::cachesim::{CacheConfig, CacheSim, WritePolicy};
use eci_core::classifier::{write_ratio, AccessClass, Classifier};
use eci_core::config::KeyValues;
use eci_core::orchestrator::{run_timed, RunConfig, RunMode, RunSummary, MSR_TICKS_PER_MS};
use eci_core::rdist::{trd_based_size, urd_based_size, ReuseProfile};
use eci_core::report;
use eci_core::trace::synth::{self, CornerCase, GenParams};
use eci_core::trace::{self, IoRequest, VmId, VmMap, BINARY_MAGIC};

#[derive(Debug)]
enum CliError {
    /// Bad input data, flags or configuration (exit 2).
    Input(String),
    /// Failure while doing the work (exit 1).
    Runtime(String),
}

impl From<eci_core::Error> for CliError {
    fn from(e: eci_core::Error) -> Self {
        if e.is_input_error() {
            CliError::Input(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "eci",
    version,
    about = "Reuse-distance driven SSD cache partitioning for per-VM block traces"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Summarize traces: per-VM request and access-class counts.
    Inspect(CommonArgs),
    /// TRD/URD histograms and hit-ratio functions over whole traces.
    Profile(CommonArgs),
    /// Replay each VM through a fixed-size cache.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum, default_value = "wb")]
        policy: PolicyArg,
    },
    /// Orchestrated multi-VM run with per-interval partitioning.
    Run(CommonArgs),
    /// Run two modes on identical inputs and tabulate the differences.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        /// Mode of the reference run.
        #[arg(long, value_enum, default_value = "trd")]
        baseline: ModeArg,
    },
    /// Write a synthetic trace to a file.
    Generate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Eci,
    Trd,
}

impl From<ModeArg> for RunMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Eci => RunMode::Eci,
            ModeArg::Trd => RunMode::TrdBaseline,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Wb,
    Wt,
    Ro,
}

impl From<PolicyArg> for WritePolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Wb => WritePolicy::Wb,
            PolicyArg::Wt => WritePolicy::Wt,
            PolicyArg::Ro => WritePolicy::Ro,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Bin,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SyntheticKind {
    /// The seven-request W1 R2 R1 W3 R4 W5 W2 pattern, once per interval.
    Example,
    /// Two write-heavy and two read-heavy reuse-stable VMs.
    Mix4,
    SeqRandom,
    RandomSeq,
    SemiSeq,
}

#[derive(Args)]
struct CommonArgs {
    /// Trace files: MSR CSV, or the binary format (detected by magic).
    traces: Vec<PathBuf>,
    /// Generate the input instead of reading files.
    #[arg(long, value_enum)]
    synthetic: Option<SyntheticKind>,
    /// Intervals to generate for synthetic inputs.
    #[arg(long)]
    intervals: Option<usize>,
    /// Key-value configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    block_size: Option<u32>,
    #[arg(long)]
    interval_ms: Option<u64>,
    /// Trace timestamp units per millisecond (MSR: 10000).
    #[arg(long)]
    ticks_per_ms: Option<u64>,
    #[arg(long)]
    capacity_blocks: Option<u64>,
    #[arg(long)]
    wthreshold: Option<f64>,
    #[arg(long)]
    cmin: Option<u64>,
    #[arg(long)]
    t_hdd_us: Option<u64>,
    #[arg(long)]
    t_ssd_us: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record per-interval wall time in run.meta (makes outputs non-reproducible).
    #[arg(long)]
    timing: bool,
}

struct Setup {
    cfg: RunConfig,
    vm_map: VmMap,
    traces: std::collections::BTreeMap<VmId, Vec<IoRequest>>,
    stem: String,
}

fn input_err(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

fn setup(args: &CommonArgs) -> CliResult<Setup> {
    let kv = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| input_err(format!("cannot read config {}: {e}", p.display())))?;
            KeyValues::parse(&text).map_err(|e| input_err(format!("{}: {e}", p.display())))?
        }
        None => KeyValues::default(),
    };

    let mut cfg = RunConfig::default();
    let mut ticks_per_ms = MSR_TICKS_PER_MS;
    let mut interval_ms = None;
    let mut vm_map = VmMap::strict();
    for (key, value) in kv.iter() {
        let bad = || input_err(format!("config: bad value {value:?} for {key}"));
        match key {
            "block_size_bytes" => cfg.block_size_bytes = value.parse().map_err(|_| bad())?,
            "interval_ms" => interval_ms = Some(value.parse().map_err(|_| bad())?),
            "ticks_per_ms" => ticks_per_ms = value.parse().map_err(|_| bad())?,
            "capacity_blocks" => cfg.capacity_blocks = value.parse().map_err(|_| bad())?,
            "wthreshold" => cfg.wthreshold = value.parse().map_err(|_| bad())?,
            "cmin" => cfg.c_min = value.parse().map_err(|_| bad())?,
            "t_hdd_us" => cfg.t_hdd_us = value.parse().map_err(|_| bad())?,
            "t_ssd_us" => cfg.t_ssd_us = value.parse().map_err(|_| bad())?,
            "mode" => cfg.mode = value.parse()?,
            "seed" => cfg.seed = value.parse().map_err(|_| bad())?,
            "force_ro" => {
                cfg.force_ro = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse().map_err(|_| bad()))
                    .collect::<CliResult<_>>()?
            }
            k if k.starts_with("vm.") => {
                let (host, disk) = k[3..].rsplit_once('.').ok_or_else(|| {
                    input_err(format!("config: expected vm.<host>.<disk>, got {k}"))
                })?;
                let disk = disk.parse().map_err(|_| bad())?;
                vm_map.insert(host, disk, value.parse().map_err(|_| bad())?);
            }
            other => return Err(input_err(format!("config: unknown key {other}"))),
        }
    }
    if vm_map.is_empty() {
        vm_map.set_auto_assign(true);
    }

    if let Some(v) = args.block_size {
        cfg.block_size_bytes = v;
    }
    if let Some(v) = args.interval_ms {
        interval_ms = Some(v);
    }
    if let Some(v) = args.ticks_per_ms {
        ticks_per_ms = v;
    }
    if let Some(v) = args.capacity_blocks {
        cfg.capacity_blocks = v;
    }
    if let Some(v) = args.wthreshold {
        cfg.wthreshold = v;
    }
    if let Some(v) = args.cmin {
        cfg.c_min = v;
    }
    if let Some(v) = args.t_hdd_us {
        cfg.t_hdd_us = v;
    }
    if let Some(v) = args.t_ssd_us {
        cfg.t_ssd_us = v;
    }
    if let Some(v) = args.mode {
        cfg.mode = v.into();
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(ms) = interval_ms {
        cfg.interval_ticks = ms
            .checked_mul(ticks_per_ms)
            .ok_or_else(|| input_err("interval overflows trace time units"))?;
    }

    let (requests, stem) = match (args.synthetic, args.traces.is_empty()) {
        (Some(_), false) => return Err(input_err("give trace files or --synthetic, not both")),
        (None, true) => return Err(input_err("no input traces")),
        (Some(kind), true) => (
            synthetic(kind, args.intervals, &cfg)?,
            kind.to_possible_value()
                .map_or_else(|| "synthetic".into(), |v| v.get_name().to_owned()),
        ),
        (None, false) => {
            let mut all = Vec::new();
            for p in &args.traces {
                all.extend(load_trace(p, cfg.block_size_bytes, &mut vm_map)?);
            }
            let stem = args.traces[0]
                .file_stem()
                .map_or_else(|| "trace".into(), |s| s.to_string_lossy().into_owned());
            (all, stem)
        }
    };
    let mut traces = trace::split_by_vm(&requests);
    for reqs in traces.values_mut() {
        // Merged multi-file inputs are ordered by timestamp.
        reqs.sort_by_key(|r| r.ts);
    }
    Ok(Setup {
        cfg,
        vm_map,
        traces,
        stem,
    })
}

fn synthetic(
    kind: SyntheticKind,
    intervals: Option<usize>,
    cfg: &RunConfig,
) -> CliResult<Vec<IoRequest>> {
    let ticks = cfg.interval_ticks;
    let params = GenParams::new(0, ticks, cfg.seed);
    let reqs = match kind {
        SyntheticKind::Example => synth::example_trace(0, intervals.unwrap_or(4), ticks)?,
        SyntheticKind::Mix4 => synth::four_vm_mix(cfg.seed, intervals.unwrap_or(6), ticks)?
            .into_iter()
            .flatten()
            .collect(),
        SyntheticKind::SeqRandom => synth::gen_corner_case(
            CornerCase::SeqRandom {
                seq_len: 10,
                random_len: 20,
                tail_len: 2,
            },
            params,
        )?,
        SyntheticKind::RandomSeq => synth::gen_corner_case(
            CornerCase::RandomSeq {
                local_blocks: 6,
                random_len: 15,
                seq_len: 8,
            },
            params,
        )?,
        SyntheticKind::SemiSeq => synth::gen_corner_case(
            CornerCase::SemiSequential {
                run_len: 4,
                repeats: intervals.unwrap_or(4),
            },
            params,
        )?,
    };
    Ok(reqs)
}

fn load_trace(path: &Path, block_size: u32, vms: &mut VmMap) -> CliResult<Vec<IoRequest>> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(|e| input_err(format!("cannot read {}: {e}", path.display())))?;
    let located = |e: eci_core::Error| input_err(format!("{}: {e}", path.display()));
    if bytes.starts_with(&BINARY_MAGIC) {
        return trace::read_binary(bytes.as_slice()).map_err(located);
    }
    let parsed = trace::parse_msr(bytes.as_slice(), block_size, vms).map_err(located)?;
    if parsed.skipped_zero_size > 0 {
        eprintln!(
            "warning: {}: skipped {} zero-size records",
            path.display(),
            parsed.skipped_zero_size
        );
    }
    Ok(parsed.requests)
}

fn out_dir(args: &CommonArgs, default: &str) -> PathBuf {
    args.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn write_out(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn runtime(e: eci_core::Error) -> CliError {
    match e {
        eci_core::Error::Io(io) => CliError::Runtime(io.to_string()),
        other => other.into(),
    }
}

fn cmd_inspect(args: &CommonArgs) -> CliResult<()> {
    let s = setup(args)?;
    let mut stdout = io::stdout().lock();
    for (vm, reqs) in &s.traces {
        let expanded = trace::expand_multiblock(reqs);
        let mut classifier = Classifier::new();
        classifier.classify(&expanded)?;
        let counts = *classifier.counts();
        let distinct = expanded
            .iter()
            .map(|r| r.block)
            .collect::<std::collections::HashSet<_>>()
            .len();
        let origin = s
            .vm_map
            .origin(*vm)
            .map_or_else(String::new, |(h, d)| format!(" source={h}/{d}"));
        let _ = write!(
            stdout,
            "vm_id={vm}{origin} requests={} blocks={} distinct_blocks={distinct}",
            reqs.len(),
            expanded.len()
        );
        for class in AccessClass::ALL {
            let _ = write!(stdout, " {class}={}", counts[class]);
        }
        let ratio = write_ratio(&counts).map_or_else(|_| "-".into(), |r| format!("{r:.4}"));
        let _ = writeln!(stdout, " write_ratio={ratio}");
    }
    if let Some(dir) = &args.out {
        // Per-interval class counts come from a run's classification pass.
        let (reports, _) = run_timed(&s.traces, &s.cfg)?;
        write_out(&dir.join("classes.csv"), &report::classes_csv(&reports))?;
    }
    Ok(())
}

fn cmd_profile(args: &CommonArgs) -> CliResult<()> {
    let s = setup(args)?;
    let mut profiles = Vec::new();
    for (&vm, reqs) in &s.traces {
        let tagged = Classifier::new().classify(&trace::expand_multiblock(reqs))?;
        profiles.push((vm, ReuseProfile::build(&tagged)?));
    }
    let mode = s.cfg.mode.distance_mode();
    let dir = out_dir(args, ".");
    write_out(
        &dir.join(format!("{}_hist.csv", s.stem)),
        &report::hist_csv(&profiles),
    )?;
    write_out(
        &dir.join(format!("{}_hrf.csv", s.stem)),
        &report::hrf_csv(&profiles, mode),
    )?;
    if profiles.is_empty() {
        println!("max_trd=0 max_urd=0 size_trd=0 size_urd=0");
    }
    for (vm, p) in &profiles {
        println!(
            "vm_id={vm} max_trd={} max_urd={} size_trd={} size_urd={}",
            p.max_trd(),
            p.max_urd(),
            trd_based_size(p),
            urd_based_size(p)
        );
    }
    Ok(())
}

fn cmd_simulate(args: &CommonArgs, policy: WritePolicy) -> CliResult<()> {
    let s = setup(args)?;
    let mut csv = format!("{}\n", report::SIM_HEADER);
    for (vm, reqs) in &s.traces {
        let tagged = Classifier::new().classify(&trace::expand_multiblock(reqs))?;
        let mut sim = CacheSim::new(CacheConfig {
            size_blocks: s.cfg.capacity_blocks,
            policy,
            t_hdd_us: s.cfg.t_hdd_us,
            t_ssd_us: s.cfg.t_ssd_us,
        })?;
        sim.run(&tagged)?;
        let r = sim.take_report();
        csv.push_str(&format!(
            "{vm},0,{},{policy},{},{},{},{},{},{}\n",
            s.cfg.capacity_blocks,
            r.read_hits,
            r.read_misses,
            r.ssd_writes,
            r.hdd_reads,
            r.hdd_writes,
            r.latency_total_us
        ));
        println!(
            "vm_id={vm} policy={policy} size_blocks={} read_hits={} read_misses={} hit_ratio={:.4} ssd_writes={} hdd_writes={}",
            s.cfg.capacity_blocks,
            r.read_hits,
            r.read_misses,
            r.read_hit_ratio(),
            r.ssd_writes,
            r.hdd_writes
        );
    }
    if let Some(dir) = &args.out {
        write_out(&dir.join("sim.csv"), &csv)?;
    }
    Ok(())
}

fn print_summary(label: &str, summary: &RunSummary) {
    let t = &summary.total;
    println!(
        "{label}: intervals={} read_hit_ratio={:.4} ssd_writes={} alloc_blocks={} mean_latency_us={}",
        t.active_intervals,
        t.sim.read_hit_ratio(),
        t.sim.ssd_writes,
        t.alloc_block_intervals,
        t.sim.mean_latency_us().map_or_else(|| "-".into(), |l| format!("{l:.2}"))
    );
}

fn cmd_run(args: &CommonArgs) -> CliResult<()> {
    let s = setup(args)?;
    let (reports, timings) = run_timed(&s.traces, &s.cfg)?;
    let dir = out_dir(args, "eci-run");
    report::write_run_dir(
        &dir,
        &s.cfg,
        &reports,
        args.timing.then_some(timings.as_slice()),
    )
    .map_err(runtime)?;
    print_summary(&s.cfg.mode.to_string(), &RunSummary::from_reports(&reports));
    Ok(())
}

fn cmd_compare(args: &CommonArgs, baseline: RunMode) -> CliResult<()> {
    let s = setup(args)?;
    let dir = out_dir(args, "eci-compare");
    let mut summaries = Vec::new();
    for (sub, mode) in [("cand", s.cfg.mode), ("base", baseline)] {
        let cfg = RunConfig {
            mode,
            ..s.cfg.clone()
        };
        let (reports, timings) = run_timed(&s.traces, &cfg)?;
        report::write_run_dir(
            &dir.join(sub),
            &cfg,
            &reports,
            args.timing.then_some(timings.as_slice()),
        )
        .map_err(runtime)?;
        let summary = RunSummary::from_reports(&reports);
        print_summary(&format!("{sub} ({mode})"), &summary);
        summaries.push(summary);
    }
    let table = report::compare_csv(&summaries[0], &summaries[1]);
    write_out(&dir.join("compare.csv"), &table)?;
    print!("{table}");
    Ok(())
}

fn cmd_generate(args: &CommonArgs, output: &Path, format: FormatArg) -> CliResult<()> {
    if args.synthetic.is_none() {
        return Err(input_err("generate needs --synthetic"));
    }
    let s = setup(args)?;
    let reqs: Vec<IoRequest> = s.traces.values().flatten().copied().collect();
    let mut buf = Vec::new();
    match format {
        FormatArg::Csv => trace::write_msr(&mut buf, &reqs, s.cfg.block_size_bytes, &s.vm_map)?,
        FormatArg::Bin => trace::write_binary(&mut buf, &trace::expand_multiblock(&reqs))?,
    }
    fs::write(output, buf).map_err(|e| CliError::Runtime(format!("{}: {e}", output.display())))?;
    println!("wrote {} requests to {}", reqs.len(), output.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Command::Inspect(a) => cmd_inspect(a),
        Command::Profile(a) => cmd_profile(a),
        Command::Simulate { common, policy } => cmd_simulate(common, (*policy).into()),
        Command::Run(a) => cmd_run(a),
        Command::Compare { common, baseline } => cmd_compare(common, (*baseline).into()),
        Command::Generate {
            common,
            output,
            format,
        } => cmd_generate(common, output, *format),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
