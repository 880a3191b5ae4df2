mod common;

use absa_core::autograd::{Tensor, CHECKPOINT_FORMAT};
use absa_core::corpus::{corpus_stats, load_conllu, load_dataset, parse_jsonl, DatasetFormat};
use absa_core::model::{init_params, Model, ModelConfig, PreparedInstance};
use absa_core::train::{train_prepared, write_outputs, TrainError, Trainer};
use common::*;

#[test]
fn fixture_counts_match_manifest() {
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fixture("manifest.json")).unwrap()).unwrap();
    let entries = manifest.as_object().unwrap();
    assert_eq!(entries.len(), 2);
    for (file, entry) in entries {
        let path = fixture(file);
        let insts = load_dataset(&path, DatasetFormat::from_path(&path)).unwrap();
        let c = corpus_stats(&insts);
        let want: Vec<usize> = serde_json::from_value(entry["counts"].clone()).unwrap();
        assert_eq!(insts.len(), entry["instances"].as_u64().unwrap() as usize, "{file}");
        assert_eq!(vec![c.positive, c.neutral, c.negative], want, "{file}");
    }
}

#[test]
fn stats_are_order_independent() {
    let mut insts = load_dataset(&fixture("synthetic.jsonl"), DatasetFormat::Jsonl).unwrap();
    let before = corpus_stats(&insts);
    insts.reverse();
    insts.rotate_left(7);
    assert_eq!(corpus_stats(&insts), before);
    assert_eq!(corpus_stats(&[]).as_tuple(), (0, 0, 0));
}

#[test]
fn jsonl_round_trip() {
    let insts = load_dataset(&fixture("synthetic.jsonl"), DatasetFormat::Jsonl).unwrap();
    let text: String = insts.iter().map(|i| i.to_jsonl() + "\n").collect();
    assert_eq!(parse_jsonl(&text).unwrap(), insts);
}

#[test]
fn food_parse_has_three_edges() {
    let parses = load_conllu(&fixture("food.conllu")).unwrap();
    assert_eq!(parses.len(), 1);
    let edges = parses.values().next().unwrap();
    assert_eq!(edges.len(), 3);
    assert!(edges.iter().all(|e| e.head < 4 && e.dependent < 4));
}

#[test]
fn untrained_uniform_model_scores_ln3() {
    let cfg = small_synthetic_config(0);
    let data = synthetic_all(&cfg);
    let mcfg = ModelConfig {
        lambda: 0.0,
        dropout: 0.0,
        ..cfg.effective_model()
    };
    let mut store = init_params(&mcfg).unwrap();
    for name in ["cls.w", "cls.b"] {
        let t = store.get_mut(name).unwrap();
        *t = Tensor::zeros(t.shape());
    }
    let l = loss_with(&mcfg, &store, &data[..4], 0.0);
    assert!((l - 3f64.ln()).abs() < 1e-6, "{l}");
}

#[test]
fn regularizer_shift_is_lambda_sum_of_squares() {
    let cfg = small_synthetic_config(0);
    let data = synthetic_all(&cfg);
    let mcfg = cfg.effective_model();
    let store = init_params(&mcfg).unwrap();
    let sum_sq: f64 = store.iter().flat_map(|(_, t)| t.data().to_vec()).map(|x| x * x).sum();
    let base = loss_with(&mcfg, &store, &data[..3], 0.0);
    let reg = loss_with(&mcfg, &store, &data[..3], 1e-4);
    assert!((reg - base - 1e-4 * sum_sq).abs() < 1e-9);
}

#[test]
fn rounds_change_the_output() {
    let cfg = small_synthetic_config(0);
    let data = synthetic_all(&cfg);
    let logits = |rounds: usize| {
        let m = Model::new(ModelConfig {
            rounds,
            ..cfg.effective_model()
        })
        .unwrap();
        m.logits(&data[2]).unwrap()
    };
    assert_ne!(logits(1), logits(2));
}

#[test]
fn shifting_every_logit_keeps_predictions() {
    let cfg = small_synthetic_config(0);
    let data = synthetic_all(&cfg);
    let mut m = Model::new(cfg.effective_model()).unwrap();
    let before: Vec<usize> = data.iter().map(|i| m.predict(i).unwrap()).collect();
    let b = m.params.get_mut("cls.b").unwrap();
    *b = b.map(|x| x + 5.25);
    let after: Vec<usize> = data.iter().map(|i| m.predict(i).unwrap()).collect();
    assert_eq!(before, after);
}

#[test]
fn zero_epochs_returns_initial_parameters() {
    let cfg = small_synthetic_config(0);
    let data = synthetic_all(&cfg);
    let out = train_prepared(&cfg, &data[..16], &data[16..]).unwrap();
    assert!(out.history.is_empty());
    let init = init_params(&cfg.effective_model()).unwrap();
    assert_eq!(out.model.params.to_checkpoint(), init.to_checkpoint());
}

#[test]
fn identical_runs_are_bitwise_identical() {
    let cfg = small_synthetic_config(3);
    let data = synthetic_all(&cfg);
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let out = train_prepared(&cfg, &data[..16], &data[16..]).unwrap();
        write_outputs(dir.path(), &out).unwrap();
        let losses: Vec<u64> = out.history.iter().map(|r| r.loss.to_bits()).collect();
        let ckpt = std::fs::read(dir.path().join("checkpoint.json")).unwrap();
        let csv = std::fs::read(dir.path().join("loss.csv")).unwrap();
        (losses, ckpt, csv)
    };
    let (a, b) = (run(), run());
    assert_eq!(a.0.len(), 3 * 4);
    assert_eq!(a, b);
    let ckpt: serde_json::Value = serde_json::from_slice(&a.1).unwrap();
    assert_eq!(ckpt["format"], CHECKPOINT_FORMAT);
}

#[test]
fn different_seeds_diverge() {
    let mut cfg = small_synthetic_config(1);
    let data = synthetic_all(&cfg);
    let a = train_prepared(&cfg, &data, &data[..1]).unwrap();
    cfg.seed = 1;
    let b = train_prepared(&cfg, &data, &data[..1]).unwrap();
    assert_ne!(a.model.params.to_checkpoint(), b.model.params.to_checkpoint());
}

#[test]
fn non_finite_loss_aborts_with_ids() {
    let cfg = small_synthetic_config(1);
    let mut data = synthetic_all(&cfg);
    let poisoned: &mut PreparedInstance = &mut data[5];
    poisoned.flat.data_mut()[0] = f64::NAN;
    let mut cfg = cfg;
    cfg.batch_size = 20;
    let mut trainer = Trainer::new(&cfg, &data).unwrap();
    let err = trainer.run_epoch().unwrap_err();
    match &err {
        TrainError::NonFinite { ids, step, .. } => {
            assert!(ids.contains(&5));
            assert_eq!(*step, 0);
        }
        other => panic!("unexpected error {other}"),
    }
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn checkpoint_round_trip_restores_predictions() {
    let cfg = small_synthetic_config(2);
    let data = synthetic_all(&cfg);
    let out = train_prepared(&cfg, &data[..16], &data[16..]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(dir.path(), &out).unwrap();
    let params = absa_core::autograd::ParamStore::load(&dir.path().join("checkpoint.json")).unwrap();
    let restored = Model::from_params(cfg.effective_model(), params).unwrap();
    for inst in &data {
        assert_eq!(restored.logits(inst).unwrap(), out.model.logits(inst).unwrap());
    }
}
