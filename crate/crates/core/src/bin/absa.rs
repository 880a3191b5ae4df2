use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use absa_core::autograd::ParamStore;
use absa_core::corpus::{corpus_stats, load_dataset, DatasetFormat};
use absa_core::model::{build_instance_graphs, prepare_dataset, Model, ModelConfig, Variant};
use absa_core::train::{
    builtin_fixture, check_model_gradients, evaluate, load_data, prepare_split, run_ablations, train_prepared,
    write_outputs, EvalReport, TrainConfig, TrainError,
};

#[derive(Parser, Debug)]
#[command(name = "absa", version, about = "Aspect-level sentiment classification over typed dependency graphs")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model and write report.json, loss.csv and checkpoint.json.
    Train(TrainArgs),
    /// Score a checkpoint on the held-out split.
    Eval(EvalArgs),
    /// Print both graphs of every instance as JSON lines.
    BuildGraphs(InspectArgs),
    /// Print per-row knowledge weights of every instance as JSON lines.
    Enhance(InspectArgs),
    /// Finite-difference check of the full model's gradients.
    Gradcheck(GradcheckArgs),
    /// Print the (positive, neutral, negative) counts of a dataset.
    Stats(StatsArgs),
    /// Train and evaluate all seven ablation variants.
    Ablate(TrainArgs),
}

#[derive(Args, Debug, Clone, Default)]
struct ConfigArgs {
    /// JSON or TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    test_dataset: Option<PathBuf>,
    #[arg(long)]
    parses: Option<PathBuf>,
    #[arg(long)]
    test_parses: Option<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    conceptnet: Option<PathBuf>,
    #[arg(long)]
    senticnet: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    embedding_dim: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// full, wo_ws, wo_et, wo_hete, wo_cn, wo_sn or wo_kgs.
    #[arg(long)]
    variant: Option<Variant>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<TrainConfig, TrainError> {
        let mut c = match &self.config {
            Some(p) => TrainConfig::from_file(p)?,
            None => TrainConfig::default(),
        };
        macro_rules! set {
            ($($src:ident => $($dst:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$src.clone() { c.$($dst).+ = v; })*
            };
        }
        set!(
            seed => seed, dataset => paths.dataset, embeddings => paths.embeddings,
            conceptnet => paths.conceptnet, senticnet => paths.senticnet, lexicon => paths.lexicon,
            embedding_dim => model.embedding_dim, hidden => model.hidden, heads => model.heads,
            layers => model.layers, rounds => model.rounds, dropout => model.dropout, lambda => model.lambda,
            epochs => epochs, lr => lr, batch_size => batch_size, variant => variant,
        );
        if self.test_dataset.is_some() {
            c.paths.test_dataset = self.test_dataset.clone();
        }
        if self.parses.is_some() {
            c.paths.parses = self.parses.clone();
        }
        if self.test_parses.is_some() {
            c.paths.test_parses = self.test_parses.clone();
        }
        if self.patience.is_some() {
            c.patience = self.patience;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Output directory.
    #[arg(long, default_value = "runs/latest")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    checkpoint: PathBuf,
}

#[derive(Args, Debug)]
struct InspectArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Include node feature vectors.
    #[arg(long)]
    features: bool,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// jsonl or semeval-xml; inferred from the extension when omitted.
    #[arg(long)]
    format: Option<DatasetFormat>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Writes one line to stdout. A closed pipe ends the process quietly.
fn emit(line: impl std::fmt::Display) {
    use std::io::Write;
    if let Err(e) = writeln!(std::io::stdout().lock(), "{line}") {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: {e}");
        std::process::exit(2);
    }
}

fn print_json(v: &serde_json::Value) {
    emit(serde_json::to_string_pretty(v).expect("json value serializes"));
}

fn cmd_train(a: &TrainArgs) -> Result<(), TrainError> {
    let cfg = a.cfg.resolve()?;
    let data = load_data(&cfg)?;
    let (tr, te) = prepare_split(&cfg.effective_model(), &data)?;
    let out = train_prepared(&cfg, &tr, &te)?;
    write_outputs(&a.out, &out)?;
    print_json(&json!({
        "seed": cfg.seed,
        "epochs_run": out.epochs_run,
        "steps": out.history.len(),
        "final_loss": out.history.last().map(|r| r.loss),
        "train_accuracy": out.train_report.metrics.accuracy,
        "test_accuracy": out.test_report.metrics.accuracy,
        "test_macro_f1": out.test_report.metrics.macro_f1,
        "out": a.out,
        "config": cfg,
    }));
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<(), TrainError> {
    let cfg = a.cfg.resolve()?;
    let params = ParamStore::load(&a.checkpoint)?;
    let model = Model::from_params(cfg.effective_model(), params)?;
    let data = load_data(&cfg)?;
    let (_, te) = prepare_split(&model.config, &data)?;
    let report = EvalReport {
        seed: cfg.seed,
        variant: cfg.variant,
        classifier_width: model.config.classifier_width(),
        metrics: evaluate(&model, &te)?,
        config: serde_json::to_value(&cfg).expect("config serializes"),
    };
    print_json(&serde_json::to_value(report).expect("report serializes"));
    Ok(())
}

fn cmd_inspect(a: &InspectArgs, graphs: bool) -> Result<(), TrainError> {
    let cfg = a.cfg.resolve()?;
    let data = load_data(&cfg)?;
    let k = cfg.effective_model().knowledge();
    for (i, inst) in data.train.iter().chain(&data.test).enumerate() {
        let g = build_instance_graphs(inst, &data.resources, k)?;
        let line = if graphs {
            json!({"seed": cfg.seed, "index": i, "text": inst.text, "ws": g.ws.to_json(a.features), "et": g.et.to_json(a.features)})
        } else {
            json!({"seed": cfg.seed, "index": i, "text": inst.text, "tokens": inst.tokens, "weights": g.weights})
        };
        emit(line);
    }
    Ok(())
}

fn cmd_gradcheck(a: &GradcheckArgs) -> Result<bool, TrainError> {
    let mut cfg = a.cfg.resolve()?;
    let (insts, res) = if a.cfg.config.is_some() || a.cfg.dataset.is_some() {
        let data = load_data(&cfg)?;
        (data.train.into_iter().take(2).collect(), data.resources)
    } else {
        if a.cfg.hidden.is_none() {
            cfg.model.hidden = 8;
        }
        if a.cfg.heads.is_none() {
            cfg.model.heads = 2;
        }
        if a.cfg.embedding_dim.is_none() {
            cfg.model.embedding_dim = 6;
        }
        builtin_fixture(cfg.seed, cfg.model.embedding_dim)?
    };
    let model = ModelConfig {
        dropout: 0.0,
        ..cfg.effective_model()
    };
    model.validate()?;
    let prepared = prepare_dataset(&insts, &res, model.knowledge())?;
    let r = check_model_gradients(&model, &prepared, a.eps)?;
    let pass = r.max_rel_error < a.tolerance;
    print_json(&json!({
        "seed": cfg.seed,
        "max_rel_error": r.max_rel_error,
        "worst": r.worst.map(|(n, i)| json!({"param": n, "index": i, "analytic": r.analytic, "numeric": r.numeric})),
        "components": r.components,
        "skipped_at_kinks": r.skipped,
        "tolerance": a.tolerance,
        "pass": pass,
    }));
    Ok(pass)
}

fn cmd_stats(a: &StatsArgs) -> Result<(), TrainError> {
    let format = a.format.unwrap_or_else(|| DatasetFormat::from_path(&a.dataset));
    let insts = load_dataset(&a.dataset, format)?;
    emit(corpus_stats(&insts));
    emit(format!("seed: {}", a.seed));
    Ok(())
}

fn cmd_ablate(a: &TrainArgs) -> Result<(), TrainError> {
    let cfg = a.cfg.resolve()?;
    let data = load_data(&cfg)?;
    let table = run_ablations(&cfg, &data);
    std::fs::create_dir_all(&a.out)?;
    std::fs::write(
        a.out.join("ablation.json"),
        serde_json::to_string_pretty(&json!({"seed": cfg.seed, "config": cfg, "table": table}))
            .expect("table serializes"),
    )?;
    emit(&table);
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode, TrainError> {
    match &cli.command {
        Command::Train(a) => cmd_train(a)?,
        Command::Eval(a) => cmd_eval(a)?,
        Command::BuildGraphs(a) => cmd_inspect(a, true)?,
        Command::Enhance(a) => cmd_inspect(a, false)?,
        Command::Gradcheck(a) => {
            if !cmd_gradcheck(a)? {
                return Ok(ExitCode::from(3));
            }
        }
        Command::Stats(a) => cmd_stats(a)?,
        Command::Ablate(a) => cmd_ablate(a)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse_from(std::env::args_os()) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
