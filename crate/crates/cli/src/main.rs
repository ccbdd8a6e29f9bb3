use std::fmt::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use siglab_core::analysis::{
    export_embeddings, grounding_match_rate, majority_symbol_map, permutation_chance, usage_spectrum,
    DEFAULT_PERMUTATIONS,
};
use siglab_core::game::{evaluate_with, EvalOptions, EvalReport, Selection, UsageRows};
use siglab_core::persist::{
    atomic_write, load_checkpoint, read_metrics_jsonl, read_to_string, save_checkpoint, write_metrics_jsonl,
    ExperimentManifest, CHECKPOINT_FILE, EVAL_FILE, MANIFEST_FILE, METRICS_FILE, WORLD_FILE,
};
use siglab_core::trainer::{stream_rng, MetricsRecord, Trainer};
use siglab_core::worldgen::{generate_world, make_test_set, GameMode};
use siglab_core::{Checkpoint, Error, ErrorKind, World};

// streams for command-line evaluation; disjoint from the trainer's
const CLI_TEST_STREAM: u64 = 10;
const CLI_PLAY_STREAM: u64 = 11;
const CLI_PERM_STREAM: u64 = 12;

#[derive(Parser, Debug)]
#[command(name = "siglab", version, about = "Referential signaling games between neural agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the concept world and write world.json to the run directory.
    GenWorld(ExperimentArgs),
    /// Train a sender/receiver pair and write all run artifacts.
    Train(TrainArgs),
    /// Play a fixed test set with a checkpoint; writes eval.json and usage.csv.
    Eval(EvalArgs),
    /// Purity, permutation chance, spectrum and grounding for an eval report.
    Analyze(AnalyzeArgs),
    /// Serve checkpoints for human-plays-receiver sessions.
    Serve(ServeArgs),
    /// Draw the held-out success curve recorded in a metrics log.
    Replay(ReplayArgs),
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ArchArg {
    Agnostic,
    Informed,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ModeArg {
    Instance,
    Class,
}

impl ModeArg {
    fn game_mode(self) -> GameMode {
        match self {
            ModeArg::Instance => GameMode::InstanceLevel,
            ModeArg::Class => GameMode::ClassLevel,
        }
    }
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// Experiment manifest; documented defaults are used when omitted.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Dotted-key override such as `train.lr=0.001`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Parent directory for run directories.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long, value_enum)]
    arch: Option<ArchArg>,
    #[arg(long)]
    vocab: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    grounding: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Print each logged metrics record to stderr.
    #[arg(long)]
    progress: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output directory; defaults to the checkpoint's directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    games: usize,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Argmax actions instead of sampling.
    #[arg(long)]
    greedy: bool,
    /// Usage matrix rows are target concepts instead of concept pairs.
    #[arg(long)]
    by_concept: bool,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    #[arg(long)]
    report: PathBuf,
    /// Defaults to checkpoint.json beside the report.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Output directory; defaults to the report's directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_PERMUTATIONS)]
    permutations: usize,
    /// Skip column centering before the SVD.
    #[arg(long)]
    no_center: bool,
}

#[derive(Args, Debug)]
struct ServeArgs {
    /// Directory holding checkpoints or run directories.
    #[arg(long, default_value = "runs")]
    root: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Where session snapshots are written.
    #[arg(long)]
    snapshots: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    /// A metrics.jsonl file or a run directory containing one.
    path: PathBuf,
    #[arg(long, default_value_t = 50)]
    width: usize,
}

#[derive(Debug)]
struct Failure {
    kind: ErrorKind,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            kind: e.kind(),
            message: e.to_string(),
        }
    }
}

fn config_failure(message: impl Into<String>) -> Failure {
    Failure {
        kind: ErrorKind::Config,
        message: message.into(),
    }
}

type CliResult<T> = Result<T, Failure>;

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Runtime => 3,
        ErrorKind::Io => 4,
    }
}

fn kind_name(kind: ErrorKind) -> &'static str {
    match kind {
        ErrorKind::Config => "config",
        ErrorKind::Runtime => "runtime",
        ErrorKind::Io => "io",
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid invocation");
            let first = first.trim_start_matches("error: ");
            eprintln!("siglab: error[config]: {}", one_line(first));
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("siglab: error[{}]: {}", kind_name(f.kind), one_line(&f.message));
            ExitCode::from(exit_code(f.kind))
        }
    }
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::GenWorld(args) => gen_world(&args),
        Command::Train(args) => train(&args),
        Command::Eval(args) => eval(&args),
        Command::Analyze(args) => analyze(&args),
        Command::Serve(args) => serve(args),
        Command::Replay(args) => replay(&args),
    }
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    Ok(atomic_write(path, text.as_bytes())?)
}

fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| Failure {
        kind: ErrorKind::Io,
        message: format!("cannot create {}: {e}", path.display()),
    })
}

fn to_pretty(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("plain data serializes");
    s.push('\n');
    s
}

impl ExperimentArgs {
    /// Flags become overrides applied after `--set`, so they win.
    fn overrides(&self) -> Vec<String> {
        let mut all = self.overrides.clone();
        if let Some(out) = &self.out {
            all.push(format!("output.dir={}", Value::String(out.display().to_string())));
        }
        if let Some(seed) = self.seed {
            all.push(format!("train.seed={seed}"));
        }
        if let Some(n) = self.iterations {
            all.push(format!("train.n_iterations={n}"));
        }
        if let Some(arch) = self.arch {
            let name = match arch {
                ArchArg::Agnostic => "agnostic",
                ArchArg::Informed => "informed",
            };
            all.push(format!("train.arch=\"{name}\""));
        }
        if let Some(k) = self.vocab {
            all.push(format!("train.vocab_size={k}"));
        }
        if let Some(mode) = self.mode {
            let name = serde_json::to_string(&mode.game_mode()).expect("mode serializes");
            all.push(format!("train.mode={name}"));
        }
        if self.grounding {
            all.push("train.grounding=true".into());
        }
        all
    }

    fn manifest(&self) -> CliResult<ExperimentManifest> {
        let (value, origin) = match &self.manifest {
            Some(path) => {
                let text = read_to_string(path)?;
                let value: Value = serde_json::from_str(&text).map_err(|source| Error::Parse {
                    path: path.clone(),
                    source,
                })?;
                (value, path.clone())
            }
            None => (json!({}), PathBuf::from("<defaults>")),
        };
        Ok(ExperimentManifest::from_value(value, &origin, &self.overrides())?)
    }
}

fn write_world(manifest: &ExperimentManifest, dir: &Path) -> CliResult<World> {
    let world = generate_world::<f64>(&manifest.world)?;
    write(&dir.join(WORLD_FILE), &(world.to_json()? + "\n"))?;
    Ok(world)
}

fn gen_world(args: &ExperimentArgs) -> CliResult<()> {
    let manifest = args.manifest()?;
    let dir = manifest.run_dir();
    create_dir(&dir)?;
    write_world(&manifest, &dir)?;
    println!("{}", dir.join(WORLD_FILE).display());
    Ok(())
}

fn eval_report(
    ckpt: &Checkpoint,
    world: &World,
    games: usize,
    mode: GameMode,
    options: EvalOptions,
) -> CliResult<EvalReport> {
    let (sender, receiver) = ckpt.agents::<f64>()?;
    let seed = ckpt.config.seed;
    let test_set = make_test_set(world, mode, games, &mut stream_rng(seed, CLI_TEST_STREAM))?;
    Ok(evaluate_with(
        &sender,
        &receiver,
        world,
        &test_set,
        &ckpt.config.gibbs(),
        options,
        &mut stream_rng(seed, CLI_PLAY_STREAM),
    )?)
}

fn train(args: &TrainArgs) -> CliResult<()> {
    let manifest = args.exp.manifest()?;
    let dir = manifest.run_dir();
    create_dir(&dir)?;
    write(&dir.join(MANIFEST_FILE), &manifest.to_json()?)?;
    let world = write_world(&manifest, &dir)?;

    let mut trainer = Trainer::new(manifest.train.clone(), &world)?;
    let mut logged = 0;
    while !trainer.is_done() {
        trainer.step()?;
        if args.progress {
            for m in &trainer.metrics()[logged..] {
                eprintln!(
                    "iter {:>7}  reward {:.3}  success {:6.2}%  symbols {}",
                    m.iteration, m.train_reward_ma, m.eval_success, m.used_symbols
                );
            }
            logged = trainer.metrics().len();
        }
    }
    let outcome = trainer.finish();
    write_metrics_jsonl(&dir.join(METRICS_FILE), &outcome.metrics)?;
    let ckpt = Checkpoint::from_outcome(&manifest.train, &manifest.world, &outcome);
    save_checkpoint(&dir.join(CHECKPOINT_FILE), &ckpt)?;

    let report = eval_report(&ckpt, &world, manifest.train.eval_games, manifest.train.mode, EvalOptions::default())?;
    write(&dir.join(EVAL_FILE), &(report.to_json()? + "\n"))?;
    println!(
        "{}  comm_success {:.2}%  used_symbols {}",
        dir.display(),
        report.comm_success,
        report.used_symbols
    );
    Ok(())
}

fn parent_of(path: &Path) -> PathBuf {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn eval(args: &EvalArgs) -> CliResult<()> {
    if args.games == 0 {
        return Err(config_failure("--games must be at least 1"));
    }
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let world = generate_world::<f64>(&ckpt.world)?;
    let options = EvalOptions {
        selection: if args.greedy { Selection::Greedy } else { Selection::Sample },
        rows: if args.by_concept { UsageRows::TargetConcept } else { UsageRows::ConceptPair },
    };
    let mode = args.mode.map_or(ckpt.config.mode, ModeArg::game_mode);
    let report = eval_report(&ckpt, &world, args.games, mode, options)?;
    let dir = args.out.clone().unwrap_or_else(|| parent_of(&args.checkpoint));
    create_dir(&dir)?;
    write(&dir.join(EVAL_FILE), &(report.to_json()? + "\n"))?;
    write(&dir.join("usage.csv"), &report.usage.to_csv())?;
    println!(
        "{}  comm_success {:.2}%  used_symbols {}",
        dir.join(EVAL_FILE).display(),
        report.comm_success,
        report.used_symbols
    );
    Ok(())
}

fn analyze(args: &AnalyzeArgs) -> CliResult<()> {
    let text = read_to_string(&args.report)?;
    let report: EvalReport = serde_json::from_str(&text).map_err(|source| Error::Parse {
        path: args.report.clone(),
        source,
    })?;
    let base = parent_of(&args.report);
    let ckpt_path = args.checkpoint.clone().unwrap_or_else(|| base.join(CHECKPOINT_FILE));
    let ckpt = load_checkpoint(&ckpt_path)?;
    let world = generate_world::<f64>(&ckpt.world)?;
    if report.per_concept_symbol_counts.len() != world.n_concepts() || report.vocab_size != ckpt.config.vocab_size {
        return Err(config_failure(format!(
            "report ({} concepts, K={}) does not match checkpoint ({} concepts, K={})",
            report.per_concept_symbol_counts.len(),
            report.vocab_size,
            world.n_concepts(),
            ckpt.config.vocab_size
        )));
    }

    let assign = majority_symbol_map(&report);
    let purity = permutation_chance(
        &assign,
        &world.concept_categories(),
        args.permutations,
        &mut stream_rng(ckpt.config.seed, CLI_PERM_STREAM),
    )?;
    let spectrum = usage_spectrum(&report.usage, !args.no_center)?;
    let grounding = if ckpt.config.grounding {
        let labels = ckpt.config.effective_label_set(world.n_concepts());
        Some(grounding_match_rate(&report.transcript, &labels, report.vocab_size)?)
    } else {
        None
    };
    let (sender, _) = ckpt.agents::<f64>()?;
    let embeddings = export_embeddings(&world, &sender, &assign)?;

    let out = args.out.clone().unwrap_or(base);
    create_dir(&out)?;
    let summary = json!({
        "comm_success": report.comm_success,
        "used_symbols": report.used_symbols,
        "purity": purity,
        "majority_ties": assign.ties,
        "concepts_without_symbol": assign.omitted,
        "grounding": grounding,
        "spectrum_centered": !args.no_center,
    });
    write(&out.join("purity.json"), &to_pretty(&summary))?;
    let mut csv = String::from("index,normalized_singular_value\n");
    for (i, s) in spectrum.iter().enumerate() {
        let _ = writeln!(csv, "{i},{s:.12e}");
    }
    write(&out.join("spectrum.csv"), &csv)?;
    write(&out.join("embeddings.csv"), &embeddings)?;

    let mut line = format!(
        "used_symbols {}  comm_success {:.2}%  purity {:.1}%  obs-chance {:+.1}  p {:.4}",
        report.used_symbols, report.comm_success, purity.purity, purity.obs_minus_chance, purity.p_value
    );
    if let Some(g) = grounding {
        let _ = write!(line, "  grounding {:.1}% (chance {:.1}%)", g.rate, g.chance);
    }
    println!("{line}");
    Ok(())
}

fn serve(args: ServeArgs) -> CliResult<()> {
    let store = siglab_server::CheckpointStore::new(&args.root);
    let state = siglab_server::AppState::new(store, args.snapshots.clone());
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure {
        kind: ErrorKind::Runtime,
        message: format!("cannot start runtime: {e}"),
    })?;
    eprintln!("serving {} on http://{}/v1", args.root.display(), args.addr);
    runtime
        .block_on(siglab_server::serve(args.addr, state))
        .map_err(|e| Failure {
            kind: ErrorKind::Io,
            message: format!("server on {}: {e}", args.addr),
        })
}

/// One row per logged record: iteration, held-out success and a bar scaled
/// so that `width` characters is 100%.
fn render_curve(metrics: &[MetricsRecord], width: usize) -> String {
    let mut out = format!("{:>9} {:>8}  held-out success (each # = {:.1}%)\n", "iteration", "success", 100.0 / width as f64);
    for m in metrics {
        let filled = ((m.eval_success / 100.0) * width as f64).round().clamp(0.0, width as f64) as usize;
        let _ = writeln!(
            out,
            "{:>9} {:>7.2}%  |{}{}|",
            m.iteration,
            m.eval_success,
            "#".repeat(filled),
            " ".repeat(width - filled)
        );
    }
    out
}

fn replay(args: &ReplayArgs) -> CliResult<()> {
    if args.width == 0 {
        return Err(config_failure("--width must be at least 1"));
    }
    let path = if args.path.is_dir() {
        args.path.join(METRICS_FILE)
    } else {
        args.path.clone()
    };
    let metrics = read_metrics_jsonl(&path)?;
    if metrics.is_empty() {
        return Err(Failure {
            kind: ErrorKind::Runtime,
            message: format!("{} holds no metrics records", path.display()),
        });
    }
    print!("{}", render_curve(&metrics, args.width));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_bars_track_values() {
        let m = |iteration, eval_success| MetricsRecord {
            iteration,
            mode: GameMode::InstanceLevel,
            train_reward_ma: 0.0,
            eval_success,
            used_symbols: 1,
        };
        let text = render_curve(&[m(100, 50.0), m(200, 100.0), m(300, 0.0)], 10);
        let rows: Vec<&str> = text.lines().skip(1).collect();
        assert_eq!(rows[0], "      100   50.00%  |#####     |");
        assert_eq!(rows[1], "      200  100.00%  |##########|");
        assert_eq!(rows[2], "      300    0.00%  |          |");
    }

    #[test]
    fn flags_become_overrides() {
        let args = ExperimentArgs {
            manifest: None,
            overrides: vec!["train.lr=0.5".into()],
            out: Some("x".into()),
            seed: Some(4),
            iterations: Some(10),
            arch: Some(ArchArg::Informed),
            vocab: Some(10),
            mode: Some(ModeArg::Class),
            grounding: true,
        };
        let m = args.manifest().unwrap();
        assert_eq!(m.train.lr, 0.5);
        assert_eq!(m.train.seed, 4);
        assert_eq!(m.train.n_iterations, 10);
        assert_eq!(m.train.vocab_size, 10);
        assert_eq!(m.train.mode, GameMode::ClassLevel);
        assert!(m.train.grounding);
        assert_eq!(m.output.dir, PathBuf::from("x"));
    }
}
