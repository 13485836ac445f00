use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

use actuate::casas::{self, RawEvent};
use actuate::config::{Baseline, RunConfig, SwapSpec};
use actuate::contexts::{self, LocationMode, Specificity, Unmapped};
use actuate::persist::{write_atomic, ModelStore};
use actuate::repl::Session;
use actuate::run::{self, execute};
use actuate::scenario::{self, ScenarioConfig};
use actuate::sensor_map::SensorMap;
use actuate::trace::{Trace, TraceHeader};
use actuate::{timefmt, Error};
use actuate_core::Decider;
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "actuate", version, about = "Context-aware device selection: ingest, replay, inspect")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn an event log into a canonical event log and a request trace.
    Ingest(IngestArgs),
    /// Replay a trace with a simulated user and write reports.
    Replay(ReplayArgs),
    /// Interactive request / feedback session.
    Repl(ReplArgs),
    /// Print a saved model file.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// CASAS text log or canonical JSON-lines log.
    #[arg(long, required_unless_present = "synthetic")]
    input: Option<PathBuf>,
    #[arg(long, required_unless_present = "synthetic")]
    sensor_map: Option<PathBuf>,
    /// Generate the synthetic scenario instead.
    #[arg(long)]
    synthetic: bool,
    /// Scenario JSON for --synthetic.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    days: Option<usize>,
    #[arg(long)]
    location_mode: Option<LocationMode>,
    #[arg(long)]
    specificity: Option<Specificity>,
    #[arg(long, default_value = "skip")]
    on_unmapped: Unmapped,
    /// Abort on the first malformed line.
    #[arg(long)]
    strict: bool,
    #[arg(long, default_value = "resident")]
    user: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    /// Config files; several run in parallel under --jobs.
    #[arg(long)]
    config: Vec<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    synthetic: bool,
    #[arg(long)]
    days: Option<usize>,
    #[arg(long)]
    registry: Option<PathBuf>,
    #[arg(long)]
    sensor_map: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    specificity: Option<Specificity>,
    #[arg(long)]
    location_mode: Option<LocationMode>,
    /// Exchange two ground-truth devices from request N on.
    #[arg(long, num_args = 2, value_names = ["A", "B"])]
    swap: Option<Vec<String>>,
    #[arg(long, requires = "swap")]
    at: Option<usize>,
    #[arg(long)]
    baseline: Option<String>,
    #[arg(long)]
    max_proposals: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    pad_to: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct ReplArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trace whose header supplies the schema and registry.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    registry: Option<PathBuf>,
    /// Start from saved models.
    #[arg(long)]
    models: Option<PathBuf>,
    /// Event log to take contexts from, with --sensor-map.
    #[arg(long, requires = "sensor_map")]
    events: Option<PathBuf>,
    #[arg(long)]
    sensor_map: Option<PathBuf>,
    #[arg(long)]
    location_mode: Option<LocationMode>,
    /// Append accepted requests to this trace file.
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// Save the models on exit.
    #[arg(long)]
    save: Option<PathBuf>,
    #[arg(long, default_value = "2011-06-15T08:00:00")]
    time: String,
}

#[derive(Args)]
struct InspectArgs {
    model: PathBuf,
    /// Print the stored JSON verbatim.
    #[arg(long)]
    json: bool,
}

fn ingest(args: IngestArgs) -> Result<()> {
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let trace = if args.synthetic {
        let mut cfg: ScenarioConfig = match &args.scenario {
            Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?).context("scenario config")?,
            None => ScenarioConfig::default(),
        };
        if let Some(d) = args.days {
            cfg.days = d;
        }
        if let Some(m) = args.location_mode {
            cfg.location_mode = m;
        }
        if let Some(s) = args.specificity {
            cfg.specificity = s;
        }
        scenario::generate(&cfg, args.seed)?
    } else {
        let (input, map_path) = (args.input.expect("required"), args.sensor_map.expect("required"));
        let map = SensorMap::load(&map_path)?;
        let mode = args.location_mode.unwrap_or_default();
        let specificity = args.specificity.unwrap_or_default();
        let file = File::open(&input).map_err(Error::io(&input))?;
        let log = casas::read_any(BufReader::new(file), args.strict)?;
        for (line, why) in &log.skipped {
            eprintln!("warning: {}:{line}: {why}", input.display());
        }
        let mut events: Vec<RawEvent> = log.events;
        contexts::sort_events(&mut events);
        let stream = contexts::derive_contexts(&events, &map, mode, &args.user, args.on_unmapped)?;
        let mut canonical = Vec::new();
        casas::write_canonical(&mut canonical, &events)?;
        write_atomic(&args.out.join("events.jsonl"), &canonical)?;
        println!("events: {} ({} lines skipped)", events.len(), log.skipped.len());

        let mut header = TraceHeader::new(contexts::schema(&map, mode, &args.user)?, specificity);
        header.location_mode = Some(mode);
        header.registry = Some(map.registry());
        header.label_coords = map
            .sensors
            .iter()
            .filter_map(|(id, s)| s.coords.map(|c| (map.label(id), c.to_vec())))
            .collect();
        header.source = Some(input.display().to_string());
        Trace { header, records: contexts::build_request_trace(&events, &stream, &map, specificity) }
    };
    write_atomic(&args.out.join("trace.jsonl"), &trace.to_bytes())?;
    println!("trace records: {}", trace.records.len());
    Ok(())
}

fn replay_configs(args: &ReplayArgs) -> Result<Vec<RunConfig>> {
    let mut configs = if args.config.is_empty() {
        vec![RunConfig::default()]
    } else {
        args.config.iter().map(|p| RunConfig::load(p)).collect::<actuate::Result<Vec<_>>>()?
    };
    let several = configs.len() > 1;
    for (i, cfg) in configs.iter_mut().enumerate() {
        if let Some(t) = &args.trace {
            cfg.trace = Some(t.clone());
            cfg.synthetic = false;
        }
        if args.synthetic {
            cfg.synthetic = true;
            cfg.trace = None;
        }
        macro_rules! flag {
            ($field:ident) => {
                if let Some(v) = &args.$field {
                    cfg.$field = Some(v.clone());
                }
            };
        }
        flag!(days);
        flag!(registry);
        flag!(sensor_map);
        flag!(schema);
        flag!(specificity);
        flag!(location_mode);
        flag!(max_proposals);
        flag!(pad_to);
        if let Some(w) = args.window {
            cfg.window = w;
        }
        if let Some(s) = args.seed {
            cfg.seed = s;
        }
        if let Some(ab) = &args.swap {
            cfg.swap = Some(SwapSpec { a: ab[0].as_str().into(), b: ab[1].as_str().into(), at: args.at.unwrap_or(0) });
        }
        match args.baseline.as_deref() {
            None => {}
            Some("nearest") => cfg.baseline = Some(Baseline::Nearest),
            Some(other) => bail!("unknown baseline `{other}` (nearest)"),
        }
        if let Some(o) = &args.out {
            cfg.out = Some(if several { o.join(format!("run{i}")) } else { o.clone() });
        }
        if cfg.out.is_none() {
            bail!("no output directory (use --out)");
        }
    }
    Ok(configs)
}

fn replay_one(cfg: &RunConfig) -> Result<String> {
    let output = execute(cfg)?;
    let out = cfg.out.as_ref().expect("checked");
    output.write(out)?;
    let m = &output.metrics;
    Ok(format!(
        "{}: {} requests, FDA {:.4}, AFR {:.4}, within two {:.4}, mean response {:.0} us",
        out.display(),
        m.requests,
        m.fda,
        m.afr,
        m.within_two,
        output.latency.mean_response_us
    ))
}

fn replay(args: ReplayArgs) -> Result<()> {
    let configs = replay_configs(&args)?;
    let jobs = args.jobs.max(1);
    let mut results: Vec<Option<Result<String>>> = (0..configs.len()).map(|_| None).collect();
    for (chunk, slots) in configs.chunks(jobs).zip(results.chunks_mut(jobs)) {
        std::thread::scope(|s| {
            let handles: Vec<_> = chunk.iter().map(|c| s.spawn(move || replay_one(c))).collect();
            for (h, slot) in handles.into_iter().zip(slots.iter_mut()) {
                *slot = Some(h.join().unwrap_or_else(|_| Err(anyhow::anyhow!("replay thread panicked"))));
            }
        });
    }
    let mut failed = false;
    for r in results.into_iter().flatten() {
        match r {
            Ok(line) => println!("{line}"),
            Err(e) => {
                eprintln!("error: {e:#}");
                failed = true;
            }
        }
    }
    if failed {
        bail!("replay failed");
    }
    Ok(())
}

fn repl(args: ReplArgs) -> Result<()> {
    let cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let trace_path = args.trace.clone().or(cfg.trace.clone());
    let header = trace_path.as_ref().map(|p| Trace::load(p)).transpose()?.map(|t| t.header);
    let map = args.sensor_map.as_ref().or(cfg.sensor_map.as_ref()).map(|p| SensorMap::load(p)).transpose()?;
    let mode = args.location_mode.or(cfg.location_mode).unwrap_or_default();

    let schema = match (&header, &map) {
        (Some(h), _) => h.schema.clone(),
        (None, Some(m)) => contexts::schema(m, mode, "resident")?,
        (None, None) => bail!("no schema: give --trace or --sensor-map"),
    };
    let registry_path = args.registry.as_ref().or(cfg.registry.as_ref());
    let registry = match (registry_path, header.as_ref().and_then(|h| h.registry.clone()), &map) {
        (Some(p), _, _) => serde_json::from_str(&std::fs::read_to_string(p)?).context("registry")?,
        (None, Some(r), _) => r,
        (None, None, Some(m)) => m.registry(),
        _ => bail!("no registry: give --registry, --trace or --sensor-map"),
    };
    let mut decider = match &args.models {
        Some(p) => {
            let store = ModelStore::load(p)?;
            Decider::with_models(registry, store.models)?
        }
        None => run::build_decider(&cfg, &registry, &schema)?,
    };
    if args.models.is_some() {
        for c in &cfg.controllers {
            decider.attach_controller(Box::new(c.build()))?;
        }
    }
    let time = timefmt::parse(&args.time).with_context(|| format!("bad --time `{}`", args.time))?;
    let mut session = Session::new(decider, schema.clone(), time);
    if let (Some(events), Some(m)) = (&args.events, &map) {
        let file = File::open(events).map_err(Error::io(events))?;
        let mut log = casas::read_any(BufReader::new(file), false)?.events;
        contexts::sort_events(&mut log);
        let stream = contexts::derive_contexts(&log, m, mode, "resident", Unmapped::Skip)?;
        session = session.with_stream(stream);
    }

    let stdin = std::io::stdin();
    session.run(stdin.lock(), std::io::stdout())?;

    if let Some(path) = &args.transcript {
        let fresh = !path.exists();
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(Error::io(path))?;
        let mut w = BufWriter::new(file);
        let trace = Trace { header: TraceHeader::new(schema, Specificity::None), records: session.transcript.clone() };
        if fresh {
            trace.write(&mut w)?;
        } else {
            for r in &trace.records {
                serde_json::to_writer(&mut w, r)?;
                w.write_all(b"\n")?;
            }
        }
        w.flush()?;
    }
    if let Some(path) = &args.save {
        let registry = session.decider.registry().clone();
        ModelStore::new(registry, session.decider.into_models()).save(path)?;
    }
    Ok(())
}

fn inspect(args: InspectArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.model).map_err(Error::io(&args.model))?;
    let store = ModelStore::from_json(&text).with_context(|| format!("reading {}", args.model.display()))?;
    let mut out = std::io::stdout().lock();
    if args.json {
        out.write_all(text.as_bytes())?;
        return Ok(());
    }
    for m in &store.models {
        writeln!(out, "device {} ({} states)", m.device(), m.states().len())?;
        for s in m.states() {
            writeln!(
                out,
                "  state {}: radius {:.4}, entropy {:.4}, cache {}{}",
                s.state.id,
                s.state.radius,
                s.entropy(),
                s.cache.len(),
                if s.state.fresh_init { ", fresh" } else { "" }
            )?;
            for (attr, bound) in m.schema().attributes().iter().zip(&s.state.bounds) {
                writeln!(out, "    {} in {}", attr.name, serde_json::to_string(bound)?)?;
            }
            writeln!(out, "    mid {}", serde_json::to_string(&s.state.mid.values)?)?;
            let utilities: Vec<String> = s.utilities.iter().map(|(a, u)| format!("{a}={u:.4}")).collect();
            writeln!(out, "    utilities {}", utilities.join(" "))?;
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Replay(a) => replay(a),
        Command::Repl(a) => repl(a),
        Command::Inspect(a) => inspect(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
