use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{score, Metrics, TrainConfig, TrainError};
use crate::autograd::{rng, AdamConfig, AdamState, AutogradError};
use crate::corpus::{attach_parses, load_conllu, load_dataset, load_embeddings, DatasetFormat, LabeledInstance};
use crate::kg::{load_kg_snapshot, load_lexicon, KgKind};
use crate::model::{prepare_dataset, ForwardCtx, Model, ModelConfig, PreparedInstance, Resources, Variant};

/// Instances and knowledge resources named by a config.
#[derive(Clone, Debug)]
pub struct LoadedData {
    pub train: Vec<LabeledInstance>,
    pub test: Vec<LabeledInstance>,
    pub resources: Resources,
}

fn load_split(path: &Path, parses: Option<&Path>) -> Result<Vec<LabeledInstance>, TrainError> {
    let mut insts = load_dataset(path, DatasetFormat::from_path(path))?;
    if let Some(p) = parses {
        attach_parses(&mut insts, &load_conllu(p)?)?;
    }
    if insts.is_empty() {
        return Err(TrainError::Data(format!("{}: no instances", path.display())));
    }
    Ok(insts)
}

/// Seeded 80/20 split; both parts keep the original relative order.
pub fn split_holdout<T: Clone>(items: &[T], seed: u64) -> (Vec<T>, Vec<T>) {
    let n = items.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::named_stream(seed, "holdout", &[]));
    let n_test = if n >= 2 { (n / 5).max(1) } else { 0 };
    let mut test_idx = idx[..n_test].to_vec();
    let mut train_idx = idx[n_test..].to_vec();
    test_idx.sort_unstable();
    train_idx.sort_unstable();
    (
        train_idx.iter().map(|&i| items[i].clone()).collect(),
        test_idx.iter().map(|&i| items[i].clone()).collect(),
    )
}

pub fn load_data(cfg: &TrainConfig) -> Result<LoadedData, TrainError> {
    let p = &cfg.paths;
    p.check_readable()?;
    let all = load_split(&p.dataset, p.parses.as_deref())?;
    let (train, test) = match &p.test_dataset {
        Some(t) => (all, load_split(t, p.test_parses.as_deref())?),
        None => split_holdout(&all, cfg.seed),
    };
    let resources = Resources {
        embeddings: load_embeddings(&p.embeddings, cfg.model.embedding_dim, cfg.oov)?,
        conceptnet: load_kg_snapshot(&p.conceptnet, KgKind::Conceptnet)?,
        senticnet: load_kg_snapshot(&p.senticnet, KgKind::Senticnet)?,
        lexicon: load_lexicon(&p.lexicon)?,
    };
    Ok(LoadedData { train, test, resources })
}

/// Model inputs for both splits under `model`'s knowledge switches.
pub fn prepare_split(
    model: &ModelConfig,
    data: &LoadedData,
) -> Result<(Vec<PreparedInstance>, Vec<PreparedInstance>), TrainError> {
    let k = model.knowledge();
    Ok((
        prepare_dataset(&data.train, &data.resources, k)?,
        prepare_dataset(&data.test, &data.resources, k)?,
    ))
}

/// Visiting order of epoch `epoch`: a permutation fixed by `(seed, epoch)`.
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::named_stream(seed, "epoch", &[epoch as u64]));
    idx
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: u64,
    pub epoch: usize,
    pub loss: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochSummary {
    pub epoch: usize,
    pub steps: usize,
    pub mean_loss: f64,
}

/// Mini-batch Adam over a fixed training set, one epoch at a time.
pub struct Trainer<'a> {
    model: Model,
    adam: AdamState,
    data: &'a [PreparedInstance],
    batch_size: usize,
    seed: u64,
    epoch: usize,
    history: Vec<LossRecord>,
}

impl<'a> Trainer<'a> {
    pub fn new(cfg: &TrainConfig, data: &'a [PreparedInstance]) -> Result<Self, TrainError> {
        cfg.validate()?;
        if data.is_empty() {
            return Err(TrainError::Data("training set is empty".into()));
        }
        Ok(Trainer {
            model: Model::new(cfg.effective_model())?,
            adam: AdamState::new(AdamConfig {
                lr: cfg.lr,
                ..AdamConfig::default()
            }),
            data,
            batch_size: cfg.batch_size,
            seed: cfg.seed,
            epoch: 0,
            history: Vec::new(),
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn history(&self) -> &[LossRecord] {
        &self.history
    }

    pub fn epochs_run(&self) -> usize {
        self.epoch
    }

    pub fn into_parts(self) -> (Model, Vec<LossRecord>) {
        (self.model, self.history)
    }

    /// One pass over the shuffled training set; the last batch may be short.
    pub fn run_epoch(&mut self) -> Result<EpochSummary, TrainError> {
        let order = epoch_order(self.seed, self.epoch, self.data.len());
        let mut total = 0.0;
        let mut steps = 0;
        for chunk in order.chunks(self.batch_size) {
            let batch: Vec<&PreparedInstance> = chunk.iter().map(|&i| &self.data[i]).collect();
            total += self.step(&batch)?;
            steps += 1;
        }
        let summary = EpochSummary {
            epoch: self.epoch,
            steps,
            mean_loss: total / steps as f64,
        };
        self.epoch += 1;
        Ok(summary)
    }

    fn step(&mut self, batch: &[&PreparedInstance]) -> Result<f64, TrainError> {
        let step = self.adam.steps();
        let non_finite = |what: String| TrainError::NonFinite {
            what,
            epoch: self.epoch,
            step,
            ids: batch.iter().map(|i| i.id).collect(),
        };
        let ctx = ForwardCtx { train: true, step };
        let (tape, loss) = self.model.batch_loss(batch, ctx)?;
        let value = tape.value(loss).item();
        if !value.is_finite() {
            return Err(non_finite(format!("loss {value}")));
        }
        tape.backward_into(loss, &mut self.model.params)?;
        match self.adam.step(&mut self.model.params) {
            Ok(()) => {}
            Err(AutogradError::NonFinite(what)) => return Err(non_finite(what)),
            Err(e) => return Err(e.into()),
        }
        self.model.params.zero_grads();
        self.history.push(LossRecord {
            step,
            epoch: self.epoch,
            loss: value,
        });
        Ok(value)
    }
}

/// Metrics plus everything needed to audit the run that produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seed: u64,
    pub variant: Variant,
    pub classifier_width: usize,
    #[serde(flatten)]
    pub metrics: Metrics,
    pub config: serde_json::Value,
}

/// Scores `model` on `data` with dropout off.
pub fn evaluate(model: &Model, data: &[PreparedInstance]) -> Result<Metrics, TrainError> {
    let mut gold = Vec::with_capacity(data.len());
    let mut pred = Vec::with_capacity(data.len());
    for inst in data {
        gold.push(inst.label);
        pred.push(model.predict(inst)?);
    }
    Ok(score(&gold, &pred))
}

fn report(cfg: &TrainConfig, model: &Model, data: &[PreparedInstance]) -> Result<EvalReport, TrainError> {
    Ok(EvalReport {
        seed: cfg.seed,
        variant: cfg.variant,
        classifier_width: model.config.classifier_width(),
        metrics: evaluate(model, data)?,
        config: serde_json::to_value(cfg).expect("config serializes"),
    })
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub history: Vec<LossRecord>,
    pub epochs_run: usize,
    pub train_report: EvalReport,
    pub test_report: EvalReport,
}

/// Trains on already prepared instances and scores both splits.
pub fn train_prepared(
    cfg: &TrainConfig,
    train_set: &[PreparedInstance],
    test_set: &[PreparedInstance],
) -> Result<TrainOutcome, TrainError> {
    let mut trainer = Trainer::new(cfg, train_set)?;
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for _ in 0..cfg.epochs {
        let s = trainer.run_epoch()?;
        if let Some(patience) = cfg.patience {
            if s.mean_loss < best {
                best = s.mean_loss;
                stale = 0;
            } else {
                stale += 1;
                if stale >= patience {
                    break;
                }
            }
        }
    }
    let epochs_run = trainer.epochs_run();
    let (model, history) = trainer.into_parts();
    Ok(TrainOutcome {
        train_report: report(cfg, &model, train_set)?,
        test_report: report(cfg, &model, test_set)?,
        model,
        history,
        epochs_run,
    })
}

/// Loads everything named by `cfg`, prepares it for the configured
/// variant, and trains.
pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let data = load_data(cfg)?;
    let (tr, te) = prepare_split(&cfg.effective_model(), &data)?;
    train_prepared(cfg, &tr, &te)
}

/// Writes `report.json`, `loss.csv` and `checkpoint.json` into `dir`.
pub fn write_outputs(dir: &Path, out: &TrainOutcome) -> Result<(), TrainError> {
    std::fs::create_dir_all(dir)?;
    let report = serde_json::json!({
        "seed": out.test_report.seed,
        "epochs_run": out.epochs_run,
        "train": out.train_report,
        "test": out.test_report,
    });
    std::fs::write(
        dir.join("report.json"),
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    let mut csv = std::io::BufWriter::new(std::fs::File::create(dir.join("loss.csv"))?);
    writeln!(csv, "step,epoch,loss")?;
    for r in &out.history {
        writeln!(csv, "{},{},{}", r.step, r.epoch, r.loss)?;
    }
    csv.flush()?;
    out.model.params.save(&dir.join("checkpoint.json"))?;
    Ok(())
}
