//! `hullwatch` command line: train, eval, replay, serve and parse.
//!
//! Exit codes: 0 success, 1 domain error, 2 usage error.

mod serve;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hullwatch::intent::{parse, ParseResult, Transport, UreqTransport};
use hullwatch::rl::{evaluate, train, EnvConfig, RewardWeights, RlError, TrainLog};
use hullwatch::session::{replay, run_headless, PolicySource, SessionConfig};

#[derive(Debug, Parser)]
#[command(name = "hullwatch", version, about = "Shared-autonomy hull inspection simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a follower Q-network on the scene's patrol task.
    Train(TrainArgs),
    /// Evaluate a follower controller and print metrics as JSON.
    Eval(EvalArgs),
    /// Re-simulate an episode record and report the first divergence.
    Replay(ReplayArgs),
    /// Run the supervisor, serving clients over WebSocket at /ws.
    Serve(ServeArgs),
    /// Parse an operator command and print the result as JSON.
    Parse(ParseArgs),
}

/// Flags shared by every subcommand that reads a session config file.
#[derive(Debug, Args)]
struct Common {
    /// Session config file (TOML); flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scene file; defaults to the bundled standard scene.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    epsilon_start: Option<f64>,
    #[arg(long)]
    epsilon_end: Option<f64>,
    #[arg(long)]
    epsilon_decay_steps: Option<u64>,
    #[arg(long)]
    replay_capacity: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    target_sync: Option<u64>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    learning_starts: Option<usize>,
    #[arg(long)]
    grad_clip: Option<f64>,
    /// Weights file to write.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Training log (JSON lines); defaults to `<out>.log.jsonl`.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// `baseline`, `random`, or a weights file.
    #[arg(long)]
    policy: Option<PolicySource>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    episodes: Option<u64>,
    /// Steps per episode.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    max_steps: Option<u64>,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    record: PathBuf,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    policy: Option<PolicySource>,
    /// Listen address, `host:port`.
    #[arg(long)]
    listen: Option<String>,
    /// Episode record to write (JSON lines).
    #[arg(long)]
    record: Option<PathBuf>,
    /// Simulation speed relative to wall clock; 0 runs unpaced.
    #[arg(long)]
    realtime: Option<f64>,
    #[arg(long)]
    snapshot_every: Option<u64>,
    #[arg(long)]
    teleop_timeout: Option<f64>,
    #[arg(long)]
    inspect_dwell: Option<f64>,
    /// Run without a server for `--steps` steps and print the outcome.
    #[arg(long)]
    headless: bool,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    steps: Option<u64>,
    #[command(flatten)]
    llm: LlmArgs,
}

#[derive(Debug, Args)]
struct LlmArgs {
    /// Use the LLM endpoint, falling back to the grammar on failure.
    #[arg(long)]
    llm: bool,
    #[arg(long)]
    llm_endpoint: Option<String>,
    #[arg(long)]
    llm_model: Option<String>,
    /// Environment variable that holds the API key.
    #[arg(long)]
    llm_key_env: Option<String>,
}

#[derive(Debug, Args)]
struct ParseArgs {
    /// Session config file (TOML); only its `llm` table is used.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    llm: LlmArgs,
    #[arg(required = true, num_args = 1..)]
    text: Vec<String>,
}

enum Failure {
    Usage(String),
    Domain(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Domain(e)
    }
}

type Outcome = Result<ExitCode, Failure>;

fn load_config(path: Option<&PathBuf>) -> Result<SessionConfig, Failure> {
    match path {
        Some(p) => SessionConfig::load(p).map_err(|e| Failure::Usage(e.to_string())),
        None => Ok(SessionConfig::default()),
    }
}

fn apply_common(cfg: &mut SessionConfig, c: &Common) {
    if let Some(s) = &c.scene {
        cfg.scene = Some(s.clone());
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
}

fn apply_llm(cfg: &mut SessionConfig, a: &LlmArgs) {
    if a.llm {
        cfg.llm.enabled = true;
    }
    if let Some(v) = &a.llm_endpoint {
        cfg.llm.endpoint = v.clone();
    }
    if let Some(v) = &a.llm_model {
        cfg.llm.model = v.clone();
    }
    if let Some(v) = &a.llm_key_env {
        cfg.llm.api_key_env = v.clone();
    }
}

fn validated(cfg: SessionConfig) -> Result<SessionConfig, Failure> {
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

fn print_json(value: &impl serde::Serialize) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn write_log(log: &TrainLog, path: &PathBuf) -> anyhow::Result<()> {
    let file = File::create(path).map_err(|e| anyhow::anyhow!("cannot create {}: {e}", path.display()))?;
    let mut out = BufWriter::new(file);
    log.write_jsonl(&mut out)?;
    out.flush()?;
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Outcome {
    let mut cfg = load_config(a.common.config.as_ref())?;
    apply_common(&mut cfg, &a.common);
    let t = &mut cfg.train;
    if let Some(s) = a.common.seed {
        t.seed = s;
    }
    macro_rules! set {
        ($($field:ident <- $flag:expr),* $(,)?) => {
            $(if let Some(v) = $flag { t.$field = v; })*
        };
    }
    set!(
        episodes <- a.episodes,
        max_steps_per_episode <- a.max_steps,
        gamma <- a.gamma,
        learning_rate <- a.learning_rate,
        epsilon_start <- a.epsilon_start,
        epsilon_end <- a.epsilon_end,
        epsilon_decay_steps <- a.epsilon_decay_steps,
        replay_capacity <- a.replay_capacity,
        batch_size <- a.batch_size,
        target_sync <- a.target_sync,
        hidden <- a.hidden,
        learning_starts <- a.learning_starts,
        grad_clip <- a.grad_clip,
    );
    if let Some(p) = a.out {
        cfg.weights_out = p;
    }
    if let Some(p) = a.log {
        cfg.train_log = Some(p);
    }
    let cfg = validated(cfg)?;
    let scene = cfg.resolve_scene().map_err(anyhow::Error::from)?;
    let log_path = cfg.train_log_path();
    match train(&cfg.train, &scene, &RewardWeights::default()) {
        Ok((policy, log)) => {
            policy
                .save(&cfg.weights_out)
                .map_err(|e| anyhow::anyhow!("cannot write {}: {e}", cfg.weights_out.display()))?;
            write_log(&log, &log_path)?;
            let last = log.episodes.last();
            print_json(&serde_json::json!({
                "weights": cfg.weights_out,
                "log": log_path,
                "episodes": log.episodes.len(),
                "final_return": last.map(|e| e.ret),
            }))?;
            Ok(ExitCode::SUCCESS)
        }
        Err(RlError::DivergenceDetected { episode, mean_abs_q, log }) => {
            write_log(&log, &log_path)?;
            Err(Failure::Domain(anyhow::anyhow!(
                "Q-values diverged in episode {episode} (mean |Q| = {mean_abs_q}); log written to {}",
                log_path.display()
            )))
        }
        Err(RlError::InvalidConfig(m)) => Err(Failure::Usage(m)),
        Err(e) => Err(Failure::Domain(e.into())),
    }
}

fn cmd_eval(a: EvalArgs) -> Outcome {
    let mut cfg = load_config(a.common.config.as_ref())?;
    apply_common(&mut cfg, &a.common);
    if let Some(p) = a.policy {
        cfg.policy = p;
    }
    if let Some(n) = a.episodes {
        cfg.episodes = n;
    }
    if let Some(n) = a.max_steps {
        cfg.max_steps = n;
    }
    let cfg = validated(cfg)?;
    let scene = cfg.resolve_scene().map_err(anyhow::Error::from)?;
    let mut controller = cfg.policy.controller(cfg.seed).map_err(anyhow::Error::from)?;
    let env = EnvConfig::for_scene(&scene, cfg.max_steps as usize);
    let eval = evaluate(controller.as_mut(), &scene, env, cfg.episodes as usize, cfg.seed)
        .map_err(anyhow::Error::from)?;
    print_json(&eval)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_replay(a: ReplayArgs) -> Outcome {
    let report = replay(&a.record).map_err(anyhow::Error::from)?;
    print_json(&report)?;
    Ok(if report.is_exact() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_serve(a: ServeArgs) -> Outcome {
    let mut cfg = load_config(a.common.config.as_ref())?;
    apply_common(&mut cfg, &a.common);
    apply_llm(&mut cfg, &a.llm);
    if let Some(p) = a.policy {
        cfg.policy = p;
    }
    if let Some(v) = a.listen {
        cfg.listen = v;
    }
    if let Some(v) = a.record {
        cfg.record = Some(v);
    }
    if let Some(v) = a.realtime {
        cfg.realtime_factor = v;
    }
    if let Some(v) = a.snapshot_every {
        cfg.snapshot_every = v;
    }
    if let Some(v) = a.teleop_timeout {
        cfg.teleop_timeout = v;
    }
    if let Some(v) = a.inspect_dwell {
        cfg.inspect_dwell = v;
    }
    if let Some(v) = a.steps {
        cfg.max_steps = v;
    }
    let cfg = validated(cfg)?;
    if a.headless {
        let outcome = run_headless(cfg).map_err(anyhow::Error::from)?;
        print_json(&outcome)?;
    } else {
        serve::run(cfg)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_parse(a: ParseArgs) -> Outcome {
    let mut cfg = load_config(a.config.as_ref())?;
    apply_llm(&mut cfg, &a.llm);
    let text = a.text.join(" ");
    let mut transport = UreqTransport;
    let transport: Option<&mut dyn Transport> = if cfg.llm.enabled {
        Some(&mut transport)
    } else {
        None
    };
    let result = parse(&text, &cfg.llm, transport);
    print_json(&result)?;
    Ok(match result {
        ParseResult::Command { .. } => ExitCode::SUCCESS,
        ParseResult::Error { .. } => ExitCode::from(1),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Replay(a) => cmd_replay(a),
        Command::Serve(a) => cmd_serve(a),
        Command::Parse(a) => cmd_parse(a),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            eprintln!("{}", <Cli as clap::CommandFactory>::command().render_usage());
            ExitCode::from(2)
        }
        Err(Failure::Domain(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
