//! Ablation architecture: the same trunk with no character bank.
//!
//! Infilling conditions on decoder states alone. Speaker recognition scores
//! probes against a learned projection of each candidate's first-mention
//! encoder state, so it sees the same information budget without pooling.

use corpus::vocab::{BOS, EOS, SEP};
use numerics::params::Binding;
use numerics::tape::ValueId;
use numerics::{rng_for, Params, Scalar, Tape, Tensor};

use crate::api::{
    DecoderStepTrace, GenSettings, GenerationFault, GenerationOutput, Mode, StoryModel,
};
use crate::config::ModelConfig;
use crate::core::Trunk;
use crate::error::ModelError;
use crate::instance::{DialGenInstance, DialSpkInstance};
use crate::registry::ARCH_BASELINE;
use crate::Result;

pub struct BaselineModel<S: Scalar> {
    cfg: ModelConfig,
    params: Params<S>,
}

impl<S: Scalar> BaselineModel<S> {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = rng_for(seed, "init.baseline");
        let mut params = Params::new();
        let d = cfg.model_dim;
        Trunk::init_embeddings(&mut params, &cfg, &mut rng)?;
        Trunk::init_stack(&mut params, &cfg, &mut rng, "enc", cfg.layers_encoder, false)?;
        Trunk::init_stack(&mut params, &cfg, &mut rng, "dec", cfg.layers_decoder, true)?;
        let lim = (d as f64).sqrt().recip();
        params.insert_filled("fuse.ln.g", d, 1.0)?;
        params.insert_filled("fuse.ln.b", d, 0.0)?;
        params.insert_uniform("out.w", d, cfg.vocab_size, lim, &mut rng)?;
        params.insert_filled("out.b", cfg.vocab_size, 0.0)?;
        params.insert_uniform("spk.w", d, d, lim, &mut rng)?;
        params.insert_filled("spk.b", d, 0.0)?;
        Ok(Self { cfg, params })
    }

    pub fn from_parts(cfg: ModelConfig, params: Params<S>) -> Result<Self> {
        let fresh = Self::new(cfg, 0)?;
        crate::registry::check_params(ARCH_BASELINE, fresh.params(), &params)?;
        Ok(Self { params, ..fresh })
    }

    /// Vocabulary logits: LayerNorm(SiLU(H)) -> (N, V).
    fn logits(&self, tape: &mut Tape<S>, bound: &Binding, states: ValueId) -> Result<ValueId> {
        let act = tape.silu(states);
        let normed = tape.layer_norm(act, bound.id("fuse.ln.g"), bound.id("fuse.ln.b"))?;
        let proj = tape.matmul(normed, bound.id("out.w"))?;
        Ok(tape.add_bias(proj, bound.id("out.b"))?)
    }

    /// (M, K) speaker scores: probes against projected first-mention states.
    fn spk_scores(
        &self,
        tape: &mut Tape<S>,
        bound: &Binding,
        enc: ValueId,
        inst: &DialSpkInstance,
    ) -> Result<ValueId> {
        let mut firsts = Vec::with_capacity(inst.mentions.len());
        for (k, positions) in inst.mentions.iter().enumerate() {
            match positions.first() {
                Some(&p) => firsts.push(p),
                None => return Err(ModelError::EmptyMentions { index: k }),
            }
        }
        if firsts.is_empty() {
            return Err(ModelError::EmptyBank);
        }
        let states = tape.gather_rows(enc, &firsts)?;
        let proj = tape.matmul(states, bound.id("spk.w"))?;
        let reps = tape.add_bias(proj, bound.id("spk.b"))?;
        let probes = tape.gather_rows(enc, &inst.probe_positions)?;
        let reps_t = tape.transpose(reps)?;
        Ok(tape.matmul(probes, reps_t)?)
    }

    fn step_logits(&self, enc_vals: &Tensor<S>, prefix: &[u32]) -> Result<Vec<f64>> {
        let trunk = Trunk::new(&self.cfg);
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let enc = tape.constant(enc_vals.clone());
        let states = trunk.decode(&mut tape, &bound, prefix, enc, &mut Mode::Eval)?;
        let last = tape.gather_rows(states, &[prefix.len() - 1])?;
        let logits = self.logits(&mut tape, &bound, last)?;
        Ok(tape.data(logits).iter().map(|&v| v.to_f64()).collect())
    }
}

impl<S: Scalar> StoryModel<S> for BaselineModel<S> {
    fn arch_name(&self) -> &'static str {
        ARCH_BASELINE
    }

    fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    fn params(&self) -> &Params<S> {
        &self.params
    }

    fn params_mut(&mut self) -> &mut Params<S> {
        &mut self.params
    }

    fn dialgen_graph(
        &self,
        tape: &mut Tape<S>,
        bound: &Binding,
        inst: &DialGenInstance,
        mode: &mut Mode,
    ) -> Result<(ValueId, Vec<DecoderStepTrace>)> {
        if inst.target.is_empty() {
            return Err(ModelError::EmptyGold);
        }
        let trunk = Trunk::new(&self.cfg);
        let enc = trunk.encode(tape, bound, &inst.input, mode)?;
        let mut dec_in = Vec::with_capacity(inst.target.len() + 1);
        dec_in.push(BOS);
        dec_in.extend_from_slice(&inst.target);
        let mut targets: Vec<usize> = inst.target.iter().map(|&t| t as usize).collect();
        targets.push(EOS as usize);
        let states = trunk.decode(tape, bound, &dec_in, enc, mode)?;
        let logits = self.logits(tape, bound, states)?;
        let loss = tape.cross_entropy_sum(logits, &targets)?;
        Ok((loss, Vec::new()))
    }

    fn dialspk_graph(
        &self,
        tape: &mut Tape<S>,
        bound: &Binding,
        inst: &DialSpkInstance,
        mode: &mut Mode,
    ) -> Result<ValueId> {
        let trunk = Trunk::new(&self.cfg);
        let enc = trunk.encode(tape, bound, &inst.input, mode)?;
        let scores = self.spk_scores(tape, bound, enc, inst)?;
        Ok(tape.cross_entropy_sum(scores, &inst.gold)?)
    }

    fn generate(&self, inst: &DialGenInstance, settings: &GenSettings) -> Result<GenerationOutput> {
        let trunk = Trunk::new(&self.cfg);
        let enc_vals = {
            let mut tape = Tape::new();
            let bound = self.params.bind(&mut tape);
            let enc = trunk.encode(&mut tape, &bound, &inst.input, &mut Mode::Eval)?;
            tape.value(enc).clone()
        };

        let mut sampler = crate::api::sampler(&settings.decoding);
        let mut prefix = vec![BOS];
        let mut tokens = Vec::new();
        let mut faults = Vec::new();
        let cap = settings.max_tokens.min(self.cfg.max_sequence_length - 1);
        loop {
            if tokens.len() >= cap {
                faults.push(GenerationFault::LengthCapHit);
                break;
            }
            let logits = self.step_logits(&enc_vals, &prefix)?;
            let next = sampler.pick(&logits);
            if next == EOS {
                break;
            }
            tokens.push(next);
            prefix.push(next);
        }

        let (turns, mismatch) = crate::api::split_turns(&tokens, SEP, inst.placeholders);
        if let Some(fault) = mismatch {
            faults.push(fault);
        }
        Ok(GenerationOutput { tokens, turns, traces: Vec::new(), faults })
    }

    fn speaker_scores(&self, inst: &DialSpkInstance) -> Result<Vec<Vec<f64>>> {
        let trunk = Trunk::new(&self.cfg);
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let enc = trunk.encode(&mut tape, &bound, &inst.input, &mut Mode::Eval)?;
        let scores = self.spk_scores(&mut tape, &bound, enc, inst)?;
        let k = inst.candidates.len();
        Ok(tape
            .data(scores)
            .chunks_exact(k)
            .map(|row| row.iter().map(|&v| v.to_f64()).collect())
            .collect())
    }
}
