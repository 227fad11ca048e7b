//! The task-agnostic optimization loop.

use model::{
    build_model, DecoderStepTrace, DialGenInstance, DialSpkInstance, Mode, ModelConfig, StoryModel,
};
use numerics::params::Binding;
use numerics::tape::ValueId;
use numerics::{adam_step, rng_for, rng_for_indexed, AdamHyper, AdamState, Params, Scalar, Tape};
use rand::Rng;

use crate::config::TrainConfig;
use crate::error::TrainError;
use crate::metrics::{CoverageReport, CoverageWindow, MetricsRecord};
use crate::Result;

pub struct TrainOutcome<S: Scalar> {
    /// Model in its final (last-step) state.
    pub model: Box<dyn StoryModel<S>>,
    pub adam: AdamState<S>,
    /// Parameter snapshot from the best-validation epoch.
    pub best: Params<S>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub metrics: Vec<MetricsRecord>,
    pub coverage: Vec<CoverageReport>,
}

/// A training example the shared loop can drive through a model.
trait TrainItem {
    fn story_id(&self) -> &str;
    fn bank_size(&self) -> usize;
    fn graph<S: Scalar>(
        &self,
        model: &dyn StoryModel<S>,
        tape: &mut Tape<S>,
        bound: &Binding,
        mode: &mut Mode,
    ) -> Result<(ValueId, Vec<DecoderStepTrace>)>;
}

impl TrainItem for DialGenInstance {
    fn story_id(&self) -> &str {
        &self.story_id
    }

    fn bank_size(&self) -> usize {
        self.characters.len()
    }

    fn graph<S: Scalar>(
        &self,
        model: &dyn StoryModel<S>,
        tape: &mut Tape<S>,
        bound: &Binding,
        mode: &mut Mode,
    ) -> Result<(ValueId, Vec<DecoderStepTrace>)> {
        Ok(model.dialgen_graph(tape, bound, self, mode)?)
    }
}

impl TrainItem for DialSpkInstance {
    fn story_id(&self) -> &str {
        &self.story_id
    }

    fn bank_size(&self) -> usize {
        0
    }

    fn graph<S: Scalar>(
        &self,
        model: &dyn StoryModel<S>,
        tape: &mut Tape<S>,
        bound: &Binding,
        mode: &mut Mode,
    ) -> Result<(ValueId, Vec<DecoderStepTrace>)> {
        Ok((model.dialspk_graph(tape, bound, self, mode)?, Vec::new()))
    }
}

pub fn train_dialgen<S: Scalar>(
    cfg: &TrainConfig,
    model_cfg: ModelConfig,
    train: &[DialGenInstance],
    val: &[DialGenInstance],
) -> Result<TrainOutcome<S>> {
    cfg.validate()?;
    let model = build_model(&cfg.arch, model_cfg, cfg.seed)?;
    train_dialgen_from(model, cfg, train, val)
}

pub fn train_dialgen_from<S: Scalar>(
    model: Box<dyn StoryModel<S>>,
    cfg: &TrainConfig,
    train: &[DialGenInstance],
    val: &[DialGenInstance],
) -> Result<TrainOutcome<S>> {
    run(model, cfg, train, val)
}

pub fn train_dialspk<S: Scalar>(
    cfg: &TrainConfig,
    model_cfg: ModelConfig,
    train: &[DialSpkInstance],
    val: &[DialSpkInstance],
) -> Result<TrainOutcome<S>> {
    cfg.validate()?;
    let model = build_model(&cfg.arch, model_cfg, cfg.seed)?;
    train_dialspk_from(model, cfg, train, val)
}

pub fn train_dialspk_from<S: Scalar>(
    model: Box<dyn StoryModel<S>>,
    cfg: &TrainConfig,
    train: &[DialSpkInstance],
    val: &[DialSpkInstance],
) -> Result<TrainOutcome<S>> {
    run(model, cfg, train, val)
}

fn run<S: Scalar, I: TrainItem>(
    mut model: Box<dyn StoryModel<S>>,
    cfg: &TrainConfig,
    train: &[I],
    val: &[I],
) -> Result<TrainOutcome<S>> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::Data("no training examples".into()));
    }

    let hyper = AdamHyper { lr: cfg.lr, ..AdamHyper::default() };
    let mut adam = AdamState::new();
    let mut dropout_rng = rng_for(cfg.seed, "train.dropout");
    let mut metrics = Vec::new();
    let mut coverage = Vec::new();
    let mut window = CoverageWindow::default();
    let mut step = 0usize;

    let mut best: Option<(f64, usize, Params<S>)> = None;

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut shuffle_rng = rng_for_indexed(cfg.seed, "train.shuffle", epoch as u64);
        for i in (1..order.len()).rev() {
            let j = shuffle_rng.gen_range(0..=i);
            order.swap(i, j);
        }

        let mut epoch_loss = 0.0;
        let mut epoch_batches = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            step += 1;
            let batch_ids: Vec<String> =
                batch.iter().map(|&i| train[i].story_id().to_string()).collect();

            let mut tape = Tape::new();
            let bound = model.params().bind(&mut tape);
            let mut total: Option<ValueId> = None;
            {
                let mut mode = Mode::Train { dropout_rng: &mut dropout_rng };
                for &i in batch {
                    let (loss, traces) = train[i].graph(model.as_ref(), &mut tape, &bound, &mut mode)?;
                    window.add(train[i].bank_size(), traces.iter().map(|t| t.selected));
                    total = Some(match total {
                        None => loss,
                        Some(t) => tape.add(t, loss)?,
                    });
                }
            }
            let total = total.expect("batch is nonempty");
            let mean = tape.scale(total, 1.0 / batch.len() as f64);
            let loss_value = tape.data(mean)[0].to_f64();
            if !loss_value.is_finite() {
                return Err(TrainError::NonFinite { what: "loss".into(), step, batch_ids });
            }

            tape.backward(mean)?;
            let grads = bound.collect_grads(&tape);
            if let Some(name) = grads.first_non_finite() {
                return Err(TrainError::NonFinite {
                    what: format!("gradient of {name}"),
                    step,
                    batch_ids,
                });
            }
            adam_step(model.params_mut(), &grads, &mut adam, &hyper);

            let cov = if step % cfg.coverage_window == 0 {
                let report = window.close(step);
                let mean_cov = report.as_ref().map(|r| r.mean_coverage);
                if let Some(r) = report {
                    coverage.push(r);
                }
                mean_cov
            } else {
                None
            };
            metrics.push(MetricsRecord { step, loss: loss_value, lr: cfg.lr, coverage: cov });
            epoch_loss += loss_value;
            epoch_batches += 1;
        }

        // Best-checkpoint selection: validation loss when a validation split
        // exists, otherwise the epoch's mean training loss.
        let selection_loss = if val.is_empty() {
            epoch_loss / epoch_batches as f64
        } else {
            mean_eval_loss(model.as_ref(), val)?
        };
        let improved = best.as_ref().map_or(true, |(b, _, _)| selection_loss < *b);
        if improved {
            best = Some((selection_loss, epoch, model.params().clone()));
        }
    }

    // A final partial window still yields a report so short runs see one.
    if let Some(r) = window.close(step) {
        if let Some(last) = metrics.last_mut() {
            last.coverage = Some(r.mean_coverage);
        }
        coverage.push(r);
    }

    let (best_val_loss, best_epoch, best) = best.expect("at least one epoch ran");
    Ok(TrainOutcome { model, adam, best, best_epoch, best_val_loss, metrics, coverage })
}

/// Mean per-example loss with dropout disabled.
fn mean_eval_loss<S: Scalar, I: TrainItem>(model: &dyn StoryModel<S>, items: &[I]) -> Result<f64> {
    let mut total = 0.0;
    for item in items {
        let mut tape = Tape::new();
        let bound = model.params().bind(&mut tape);
        let (loss, _) = item.graph(model, &mut tape, &bound, &mut Mode::Eval)?;
        total += tape.data(loss)[0].to_f64();
    }
    Ok(total / items.len() as f64)
}

/// Convenience for tests and tooling: the final model's checkpoint bytes.
pub fn final_checkpoint_bytes<S: Scalar>(outcome: &TrainOutcome<S>) -> Result<Vec<u8>> {
    let ck = model::save_model(outcome.model.as_ref(), None)?;
    Ok(ck.to_bytes())
}
