//! Behavioral tests for the training loop on small generated corpora.

use corpus::dataset::{build_dialgen, build_dialspk};
use corpus::GenConfig;
use model::{prepare_dialgen, prepare_dialspk, DialGenInstance, DialSpkInstance, ModelConfig};
use train::trainer::{final_checkpoint_bytes, train_dialgen, train_dialgen_from, train_dialspk};
use train::{Task, TrainConfig, TrainError};

struct Data {
    dialgen: Vec<DialGenInstance>,
    dialspk: Vec<DialSpkInstance>,
    model_cfg: ModelConfig,
}

fn data(stories: usize, seed: u64) -> Data {
    let corpus = corpus::generate::generate(&GenConfig {
        stories,
        seed,
        ..GenConfig::default()
    })
    .unwrap();
    let dialgen = build_dialgen(&corpus.stories, 0.3, 5)
        .examples
        .iter()
        .map(|e| prepare_dialgen(e, &corpus.lexicon, &corpus.vocab).unwrap())
        .collect();
    let dialspk = build_dialspk(&corpus.stories, &corpus.vocab, 0.5, 5, true)
        .examples
        .iter()
        .map(|e| prepare_dialspk(e, &corpus.lexicon, &corpus.vocab).unwrap())
        .collect();
    let model_cfg = ModelConfig {
        vocab_size: corpus.vocab.len(),
        model_dim: 16,
        feedforward_dim: 32,
        ..ModelConfig::default()
    };
    Data { dialgen, dialspk, model_cfg }
}

fn quick_cfg(task: Task) -> TrainConfig {
    TrainConfig { epochs: 2, batch_size: 2, ..TrainConfig::for_task(task) }
}

#[test]
fn zero_learning_rate_leaves_parameters_untouched() {
    let d = data(3, 60);
    let cfg = TrainConfig { lr: 0.0, ..quick_cfg(Task::DialSpk) };
    let fresh = model::build_model::<f32>(&cfg.arch, d.model_cfg.clone(), cfg.seed).unwrap();
    let before = model::save_model(fresh.as_ref(), None).unwrap().to_bytes();
    let outcome = train_dialspk::<f32>(&cfg, d.model_cfg.clone(), &d.dialspk, &[]).unwrap();
    let after = final_checkpoint_bytes(&outcome).unwrap();
    assert_eq!(before, after);
    assert!(outcome.metrics.iter().all(|m| m.lr == 0.0));
}

#[test]
fn identical_runs_produce_identical_checkpoint_bytes() {
    let d = data(3, 61);
    let cfg = quick_cfg(Task::DialGen);
    let run = || {
        let out = train_dialgen::<f32>(&cfg, d.model_cfg.clone(), &d.dialgen, &[]).unwrap();
        (final_checkpoint_bytes(&out).unwrap(), out.metrics.len())
    };
    let (a, steps_a) = run();
    let (b, steps_b) = run();
    assert_eq!(steps_a, steps_b);
    assert_eq!(a, b, "training must be bit-deterministic for a fixed seed");
}

#[test]
fn seed_changes_the_outcome() {
    let d = data(3, 62);
    let cfg = quick_cfg(Task::DialSpk);
    let other = TrainConfig { seed: cfg.seed + 1, ..cfg.clone() };
    let a = train_dialspk::<f32>(&cfg, d.model_cfg.clone(), &d.dialspk, &[]).unwrap();
    let b = train_dialspk::<f32>(&other, d.model_cfg.clone(), &d.dialspk, &[]).unwrap();
    assert_ne!(
        final_checkpoint_bytes(&a).unwrap(),
        final_checkpoint_bytes(&b).unwrap()
    );
}

#[test]
fn loss_drops_when_overfitting_a_handful_of_stories() {
    let d = data(2, 63);
    let cfg = TrainConfig {
        epochs: 25,
        batch_size: 4,
        lr: 3e-3,
        ..TrainConfig::for_task(Task::DialSpk)
    };
    let outcome = train_dialspk::<f32>(&cfg, d.model_cfg.clone(), &d.dialspk, &[]).unwrap();
    let first = outcome.metrics.first().unwrap().loss;
    let last = outcome.metrics.last().unwrap().loss;
    assert!(
        last < first * 0.7,
        "expected a clear drop, got {first} -> {last}"
    );
    assert!(outcome.metrics.iter().all(|m| m.loss.is_finite()));
}

#[test]
fn step_count_and_coverage_windows_line_up() {
    let d = data(3, 64);
    let n = d.dialgen.len();
    assert!(n >= 3);
    let cfg = TrainConfig { epochs: 2, batch_size: 1, coverage_window: 2, ..TrainConfig::default() };
    let outcome = train_dialgen::<f32>(&cfg, d.model_cfg.clone(), &d.dialgen, &[]).unwrap();
    assert_eq!(outcome.metrics.len(), 2 * n);

    // Full windows every 2 steps, plus a trailing partial if steps are odd.
    let full = (2 * n) / 2;
    let partial = usize::from((2 * n) % 2 != 0);
    assert_eq!(outcome.coverage.len(), full + partial);
    for r in &outcome.coverage {
        assert!(r.stories > 0);
        assert!((0.0..=1.0).contains(&r.mean_coverage));
    }
    // Every full-window step carries the aggregate in its metrics line.
    for m in &outcome.metrics {
        if m.step % 2 == 0 {
            assert!(m.coverage.is_some(), "step {} missing coverage", m.step);
        }
    }
}

#[test]
fn baseline_runs_report_no_selection_coverage() {
    let d = data(3, 65);
    let cfg = TrainConfig {
        arch: model::ARCH_BASELINE.to_string(),
        coverage_window: 2,
        ..quick_cfg(Task::DialGen)
    };
    let outcome = train_dialgen::<f32>(&cfg, d.model_cfg.clone(), &d.dialgen, &[]).unwrap();
    assert!(outcome.coverage.is_empty());
    assert!(outcome.metrics.iter().all(|m| m.coverage.is_none()));
}

#[test]
fn poisoned_parameters_abort_with_step_and_batch_ids() {
    let d = data(2, 66);
    let cfg = quick_cfg(Task::DialGen);
    let mut model = model::build_model::<f32>(&cfg.arch, d.model_cfg.clone(), cfg.seed).unwrap();
    let t = model.params_mut().get_mut("out.b").unwrap();
    t.data_mut()[0] = f32::NAN;
    let err = match train_dialgen_from(model, &cfg, &d.dialgen, &[]) {
        Err(e) => e,
        Ok(_) => panic!("expected a non-finite abort"),
    };
    match err {
        TrainError::NonFinite { what, step, batch_ids } => {
            assert_eq!(step, 1);
            assert!(what.contains("loss"));
            assert!(!batch_ids.is_empty());
        }
        other => panic!("unexpected error: {other}"),
    }
}

#[test]
fn best_checkpoint_tracks_validation() {
    let d = data(4, 67);
    let split = d.dialspk.len() / 2;
    let (train_set, val_set) = d.dialspk.split_at(split.max(1));
    let cfg = TrainConfig { epochs: 4, batch_size: 2, ..TrainConfig::for_task(Task::DialSpk) };
    let outcome = train_dialspk::<f32>(&cfg, d.model_cfg.clone(), train_set, val_set).unwrap();
    assert!(outcome.best_epoch < cfg.epochs);
    assert!(outcome.best_val_loss.is_finite());
    assert_eq!(outcome.best.numel(), outcome.model.params().numel());
    assert_eq!(outcome.adam.step() as usize, outcome.metrics.len());
}

#[test]
fn empty_training_set_is_a_data_error() {
    let d = data(2, 68);
    let cfg = quick_cfg(Task::DialGen);
    let err = match train_dialgen::<f32>(&cfg, d.model_cfg.clone(), &[], &d.dialgen) {
        Err(e) => e,
        Ok(_) => panic!("expected a data error"),
    };
    assert!(matches!(err, TrainError::Data(_)));
}
