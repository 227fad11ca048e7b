//! The architecture-agnostic model interface.

use numerics::params::Binding;
use numerics::tape::ValueId;
use numerics::{Params, Scalar, Tape};
use rand_chacha::ChaCha8Rng;

use crate::config::ModelConfig;
use crate::instance::{DialGenInstance, DialSpkInstance};
use crate::Result;

/// Forward-pass mode: training applies dropout from the supplied stream,
/// evaluation is deterministic.
pub enum Mode<'r> {
    Eval,
    Train { dropout_rng: &'r mut ChaCha8Rng },
}

impl Mode<'_> {
    pub fn eval() -> Mode<'static> {
        Mode::Eval
    }
}

/// One decoding step's character selection: `selected` is always the argmax
/// of `scores` (ties resolve to the lowest index).
#[derive(Clone, Debug)]
pub struct DecoderStepTrace {
    pub selected: usize,
    pub scores: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GenerationFault {
    /// Decoding hit the hard length cap before the end token.
    LengthCapHit,
    /// Separator-split turn count differed from the placeholder count.
    TurnCountMismatch { produced: usize, expected: usize },
}

#[derive(Clone, Debug)]
pub struct GenerationOutput {
    /// Raw generated ids (separators included, end token excluded).
    pub tokens: Vec<u32>,
    /// One entry per placeholder, padded with empty turns on shortfall.
    pub turns: Vec<Vec<u32>>,
    pub traces: Vec<DecoderStepTrace>,
    pub faults: Vec<GenerationFault>,
}

#[derive(Clone, Copy, Debug)]
pub enum Decoding {
    Greedy,
    TopK { k: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug)]
pub struct GenSettings {
    pub max_tokens: usize,
    pub decoding: Decoding,
}

impl Default for GenSettings {
    fn default() -> Self {
        Self { max_tokens: 96, decoding: Decoding::Greedy }
    }
}

/// A trainable story model. Graph builders append to a caller-owned tape so
/// several examples can share one backward pass; inference entry points
/// (`generate`, `speaker_scores`) manage their own tapes.
pub trait StoryModel<S: Scalar>: Send + Sync {
    fn arch_name(&self) -> &'static str;
    fn config(&self) -> &ModelConfig;
    fn params(&self) -> &Params<S>;
    fn params_mut(&mut self) -> &mut Params<S>;

    /// Teacher-forced infilling loss (sum over gold tokens incl. separators
    /// and the end token) plus per-step selection traces (empty for
    /// architectures without character selection).
    fn dialgen_graph(
        &self,
        tape: &mut Tape<S>,
        bound: &Binding,
        inst: &DialGenInstance,
        mode: &mut Mode,
    ) -> Result<(ValueId, Vec<DecoderStepTrace>)>;

    /// Speaker-recognition loss: sum of per-probe cross-entropies.
    fn dialspk_graph(
        &self,
        tape: &mut Tape<S>,
        bound: &Binding,
        inst: &DialSpkInstance,
        mode: &mut Mode,
    ) -> Result<ValueId>;

    fn generate(&self, inst: &DialGenInstance, settings: &GenSettings) -> Result<GenerationOutput>;

    /// M x K score matrix (probe states against candidate representations).
    fn speaker_scores(&self, inst: &DialSpkInstance) -> Result<Vec<Vec<f64>>>;
}

/// Per-probe argmax over the score matrix, ties to the lowest index.
pub fn predict_speakers<S: Scalar>(
    model: &dyn StoryModel<S>,
    inst: &DialSpkInstance,
) -> Result<Vec<usize>> {
    Ok(model.speaker_scores(inst)?.iter().map(|row| argmax(row)).collect())
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Draws next tokens from logits per the configured decoding strategy.
pub(crate) enum Sampler {
    Greedy,
    TopK { k: usize, rng: ChaCha8Rng },
}

pub(crate) fn sampler(decoding: &Decoding) -> Sampler {
    match *decoding {
        Decoding::Greedy => Sampler::Greedy,
        Decoding::TopK { k, seed } => {
            Sampler::TopK { k: k.max(1), rng: numerics::rng_for(seed, "decode.topk") }
        }
    }
}

impl Sampler {
    pub fn pick(&mut self, logits: &[f64]) -> u32 {
        match self {
            Sampler::Greedy => argmax(logits) as u32,
            Sampler::TopK { k, rng } => {
                use rand::Rng;
                let mut order: Vec<usize> = (0..logits.len()).collect();
                // Ties keep the lower token id first, so the pool is stable.
                order.sort_by(|&a, &b| logits[b].partial_cmp(&logits[a]).unwrap().then(a.cmp(&b)));
                order.truncate((*k).min(logits.len()));
                let max = logits[order[0]];
                let weights: Vec<f64> = order.iter().map(|&i| (logits[i] - max).exp()).collect();
                let total: f64 = weights.iter().sum();
                let mut u = rng.gen::<f64>() * total;
                for (&i, &w) in order.iter().zip(&weights) {
                    u -= w;
                    if u <= 0.0 {
                        return i as u32;
                    }
                }
                *order.last().expect("pool nonempty") as u32
            }
        }
    }
}

/// Splits generated tokens on the separator into exactly `expected` turns,
/// flagging any count mismatch. Overflow turns are dropped, shortfalls pad
/// with empty turns; the fault records the raw count either way.
pub(crate) fn split_turns(
    tokens: &[u32],
    sep: u32,
    expected: usize,
) -> (Vec<Vec<u32>>, Option<GenerationFault>) {
    let mut turns: Vec<Vec<u32>> = vec![Vec::new()];
    for &t in tokens {
        if t == sep {
            turns.push(Vec::new());
        } else {
            turns.last_mut().expect("nonempty").push(t);
        }
    }
    let produced = turns.len();
    let fault = (produced != expected)
        .then_some(GenerationFault::TurnCountMismatch { produced, expected });
    turns.resize(expected, Vec::new());
    (turns, fault)
}
