//! The character-aware architecture.
//!
//! A bank row per character is pooled from its mention states (optionally
//! through the small bidirectional encoder). Decoding projects each hidden
//! state, picks the best-matching bank row by dot product, and conditions the
//! vocabulary head on the concatenation. Selection is hard: gradients reach
//! the bank only through the chosen row, never through the scores.

use corpus::vocab::{BOS, EOS, SEP};
use numerics::params::Binding;
use numerics::tape::ValueId;
use numerics::{rng_for, Params, Scalar, Tape, Tensor};

use crate::api::{
    argmax, DecoderStepTrace, GenSettings, GenerationFault, GenerationOutput, Mode, StoryModel,
};
use crate::config::ModelConfig;
use crate::core::Trunk;
use crate::error::ModelError;
use crate::instance::{DialGenInstance, DialSpkInstance};
use crate::registry::ARCH_CHARACTER;
use crate::Result;

pub struct CharacterModel<S: Scalar> {
    cfg: ModelConfig,
    params: Params<S>,
    /// Test hook: bypass the character encoder and pool raw mention states.
    identity_bank: bool,
}

impl<S: Scalar> CharacterModel<S> {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = rng_for(seed, "init.character");
        let mut params = Params::new();
        let d = cfg.model_dim;
        Trunk::init_embeddings(&mut params, &cfg, &mut rng)?;
        Trunk::init_stack(&mut params, &cfg, &mut rng, "enc", cfg.layers_encoder, false)?;
        Trunk::init_stack(&mut params, &cfg, &mut rng, "dec", cfg.layers_decoder, true)?;
        Trunk::init_stack(&mut params, &cfg, &mut rng, "chr", cfg.character_encoder_layers, false)?;
        let lim = (d as f64).sqrt().recip();
        params.insert_uniform("sel.w", d, d, lim, &mut rng)?;
        params.insert_filled("sel.b", d, 0.0)?;
        params.insert_filled("fuse.ln.g", 2 * d, 1.0)?;
        params.insert_filled("fuse.ln.b", 2 * d, 0.0)?;
        let lim2 = (2.0 * d as f64).sqrt().recip();
        params.insert_uniform("out.w", 2 * d, cfg.vocab_size, lim2, &mut rng)?;
        params.insert_filled("out.b", cfg.vocab_size, 0.0)?;
        Ok(Self { cfg, params, identity_bank: false })
    }

    pub fn from_parts(cfg: ModelConfig, params: Params<S>) -> Result<Self> {
        let fresh = Self::new(cfg, 0)?;
        crate::registry::check_params(ARCH_CHARACTER, fresh.params(), &params)?;
        Ok(Self { params, ..fresh })
    }

    /// Replaces the character encoder with plain mean pooling (tests only).
    pub fn set_identity_bank(&mut self, on: bool) {
        self.identity_bank = on;
    }

    /// Builds the (K, d) character bank from encoder states.
    fn bank(
        &self,
        tape: &mut Tape<S>,
        bound: &Binding,
        enc: ValueId,
        mentions: &[Vec<usize>],
        mode: &mut Mode,
    ) -> Result<ValueId> {
        if mentions.is_empty() {
            return Err(ModelError::EmptyBank);
        }
        let trunk = Trunk::new(&self.cfg);
        let mut rows = Vec::with_capacity(mentions.len());
        for (k, positions) in mentions.iter().enumerate() {
            if positions.is_empty() {
                return Err(ModelError::EmptyMentions { index: k });
            }
            let states = tape.gather_rows(enc, positions)?;
            let pooled = if self.identity_bank {
                tape.mean_rows(states)?
            } else {
                let h = trunk.char_encode(tape, bound, states, mode)?;
                tape.mean_rows(h)?
            };
            rows.push(pooled);
        }
        Ok(tape.concat_rows(&rows)?)
    }

    /// Selection scores for decoder states: (H W + b) bank^T, shape (N, K).
    /// The result feeds argmax only; it is never an ancestor of the loss.
    fn selection_scores(
        &self,
        tape: &mut Tape<S>,
        bound: &Binding,
        states: ValueId,
        bank: ValueId,
    ) -> Result<ValueId> {
        let proj = tape.matmul(states, bound.id("sel.w"))?;
        let hat = tape.add_bias(proj, bound.id("sel.b"))?;
        let bank_t = tape.transpose(bank)?;
        Ok(tape.matmul(hat, bank_t)?)
    }

    fn select(&self, tape: &Tape<S>, scores: ValueId) -> Vec<DecoderStepTrace> {
        let k = tape.shape(scores)[1];
        tape.data(scores)
            .chunks_exact(k)
            .map(|row| {
                let row: Vec<f64> = row.iter().map(|&v| v.to_f64()).collect();
                DecoderStepTrace { selected: argmax(&row), scores: row }
            })
            .collect()
    }

    /// Fused vocabulary logits: LayerNorm(SiLU([H; C_sel])) -> (N, V).
    fn fused_logits(
        &self,
        tape: &mut Tape<S>,
        bound: &Binding,
        states: ValueId,
        chosen: ValueId,
    ) -> Result<ValueId> {
        let fused = tape.concat_cols(&[states, chosen])?;
        let act = tape.silu(fused);
        let normed = tape.layer_norm(act, bound.id("fuse.ln.g"), bound.id("fuse.ln.b"))?;
        let proj = tape.matmul(normed, bound.id("out.w"))?;
        Ok(tape.add_bias(proj, bound.id("out.b"))?)
    }

    /// One decoding step given frozen encoder/bank values. Returns the
    /// vocabulary logits row and the selection trace.
    fn step_logits(
        &self,
        bound_params: &Params<S>,
        enc_vals: &Tensor<S>,
        bank_vals: &Tensor<S>,
        prefix: &[u32],
    ) -> Result<(Vec<f64>, DecoderStepTrace)> {
        let trunk = Trunk::new(&self.cfg);
        let mut tape = Tape::new();
        let bound = bound_params.bind(&mut tape);
        let enc = tape.constant(enc_vals.clone());
        let bank = tape.constant(bank_vals.clone());
        let states = trunk.decode(&mut tape, &bound, prefix, enc, &mut Mode::Eval)?;
        let last = tape.gather_rows(states, &[prefix.len() - 1])?;
        let scores = self.selection_scores(&mut tape, &bound, last, bank)?;
        let trace = self.select(&tape, scores).pop().expect("one row");
        let chosen = tape.gather_rows(bank, &[trace.selected])?;
        let logits = self.fused_logits(&mut tape, &bound, last, chosen)?;
        let row: Vec<f64> = tape.data(logits).iter().map(|&v| v.to_f64()).collect();
        Ok((row, trace))
    }
}

impl<S: Scalar> StoryModel<S> for CharacterModel<S> {
    fn arch_name(&self) -> &'static str {
        ARCH_CHARACTER
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
        let bank = self.bank(tape, bound, enc, &inst.mentions, mode)?;

        let mut dec_in = Vec::with_capacity(inst.target.len() + 1);
        dec_in.push(BOS);
        dec_in.extend_from_slice(&inst.target);
        let mut targets: Vec<usize> = inst.target.iter().map(|&t| t as usize).collect();
        targets.push(EOS as usize);

        let states = trunk.decode(tape, bound, &dec_in, enc, mode)?;
        let scores = self.selection_scores(tape, bound, states, bank)?;
        let traces = self.select(tape, scores);
        let selected: Vec<usize> = traces.iter().map(|t| t.selected).collect();
        let chosen = tape.gather_rows(bank, &selected)?;
        let logits = self.fused_logits(tape, bound, states, chosen)?;
        let loss = tape.cross_entropy_sum(logits, &targets)?;
        Ok((loss, traces))
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
        let bank = self.bank(tape, bound, enc, &inst.mentions, mode)?;
        let probes = tape.gather_rows(enc, &inst.probe_positions)?;
        let bank_t = tape.transpose(bank)?;
        let scores = tape.matmul(probes, bank_t)?;
        Ok(tape.cross_entropy_sum(scores, &inst.gold)?)
    }

    fn generate(&self, inst: &DialGenInstance, settings: &GenSettings) -> Result<GenerationOutput> {
        let trunk = Trunk::new(&self.cfg);
        let (enc_vals, bank_vals) = {
            let mut tape = Tape::new();
            let bound = self.params.bind(&mut tape);
            let enc = trunk.encode(&mut tape, &bound, &inst.input, &mut Mode::Eval)?;
            let bank = self.bank(&mut tape, &bound, enc, &inst.mentions, &mut Mode::Eval)?;
            (tape.value(enc).clone(), tape.value(bank).clone())
        };

        let mut sampler = crate::api::sampler(&settings.decoding);
        let mut prefix = vec![BOS];
        let mut tokens = Vec::new();
        let mut traces = Vec::new();
        let mut faults = Vec::new();
        let cap = settings.max_tokens.min(self.cfg.max_sequence_length - 1);
        loop {
            if tokens.len() >= cap {
                faults.push(GenerationFault::LengthCapHit);
                break;
            }
            let (logits, trace) = self.step_logits(&self.params, &enc_vals, &bank_vals, &prefix)?;
            let next = sampler.pick(&logits);
            if next == EOS {
                break;
            }
            traces.push(trace);
            tokens.push(next);
            prefix.push(next);
        }

        let (turns, mismatch) = crate::api::split_turns(&tokens, SEP, inst.placeholders);
        if let Some(fault) = mismatch {
            faults.push(fault);
        }
        Ok(GenerationOutput { tokens, turns, traces, faults })
    }

    fn speaker_scores(&self, inst: &DialSpkInstance) -> Result<Vec<Vec<f64>>> {
        let trunk = Trunk::new(&self.cfg);
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let enc = trunk.encode(&mut tape, &bound, &inst.input, &mut Mode::Eval)?;
        let bank = self.bank(&mut tape, &bound, enc, &inst.mentions, &mut Mode::Eval)?;
        let probes = tape.gather_rows(enc, &inst.probe_positions)?;
        let bank_t = tape.transpose(bank)?;
        let scores = tape.matmul(probes, bank_t)?;
        let k = inst.candidates.len();
        Ok(tape
            .data(scores)
            .chunks_exact(k)
            .map(|row| row.iter().map(|&v| v.to_f64()).collect())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ModelConfig {
        ModelConfig { vocab_size: 24, model_dim: 8, feedforward_dim: 16, ..ModelConfig::default() }
    }

    fn const_enc(tape: &mut Tape<f64>, rows: &[Vec<f64>]) -> ValueId {
        tape.constant(Tensor::from_rows(rows).unwrap())
    }

    #[test]
    fn identity_bank_rows_are_mention_means() {
        let mut model = CharacterModel::<f64>::new(cfg(), 5).unwrap();
        model.set_identity_bank(true);
        let mut tape = Tape::new();
        let bound = model.params.bind(&mut tape);
        let enc = const_enc(
            &mut tape,
            &[vec![1.0; 8], vec![3.0; 8], vec![10.0; 8], vec![0.0; 8]],
        );
        let bank = model
            .bank(&mut tape, &bound, enc, &[vec![0, 1], vec![2]], &mut Mode::Eval)
            .unwrap();
        assert_eq!(tape.shape(bank), &[2, 8]);
        let data = tape.data(bank);
        assert!(data[..8].iter().all(|&v| (v - 2.0).abs() < 1e-12));
        assert!(data[8..].iter().all(|&v| (v - 10.0).abs() < 1e-12));
    }

    #[test]
    fn bank_is_invariant_to_mention_order() {
        // Holds for the real character encoder too: it adds no positional
        // signal and the pooling is a mean.
        let model = CharacterModel::<f64>::new(cfg(), 6).unwrap();
        let states: Vec<Vec<f64>> =
            (0..5).map(|i| (0..8).map(|j| ((i * 8 + j) as f64).sin()).collect()).collect();
        let run = |positions: Vec<usize>| {
            let mut tape = Tape::new();
            let bound = model.params.bind(&mut tape);
            let enc = const_enc(&mut tape, &states);
            let bank =
                model.bank(&mut tape, &bound, enc, &[positions], &mut Mode::Eval).unwrap();
            tape.data(bank).to_vec()
        };
        let fwd = run(vec![0, 2, 4]);
        let rev = run(vec![4, 2, 0]);
        for (a, b) in fwd.iter().zip(&rev) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn single_candidate_always_selects_index_zero() {
        let model = CharacterModel::<f64>::new(cfg(), 7).unwrap();
        let mut tape = Tape::new();
        let bound = model.params.bind(&mut tape);
        let enc = trunk_encode(&model, &mut tape, &bound, &[2, 9, 10, 3]);
        let bank = model.bank(&mut tape, &bound, enc, &[vec![1, 2]], &mut Mode::Eval).unwrap();
        let states = const_enc(&mut tape, &[vec![0.3; 8], vec![-0.7; 8], vec![2.0; 8]]);
        let scores = model.selection_scores(&mut tape, &bound, states, bank).unwrap();
        let traces = model.select(&tape, scores);
        assert_eq!(traces.len(), 3);
        assert!(traces.iter().all(|t| t.selected == 0 && t.scores.len() == 1));
    }

    #[test]
    fn selection_traces_match_their_own_scores() {
        let model = CharacterModel::<f64>::new(cfg(), 8).unwrap();
        let mut tape = Tape::new();
        let bound = model.params.bind(&mut tape);
        let enc = trunk_encode(&model, &mut tape, &bound, &[2, 5, 6, 7, 8, 3]);
        let bank = model
            .bank(&mut tape, &bound, enc, &[vec![0], vec![2, 3], vec![5]], &mut Mode::Eval)
            .unwrap();
        let scores = model.selection_scores(&mut tape, &bound, enc, bank).unwrap();
        let traces = model.select(&tape, scores);
        for t in &traces {
            assert_eq!(t.scores.len(), 3);
            assert_eq!(t.selected, argmax(&t.scores));
        }
    }

    #[test]
    fn scaling_the_bank_preserves_selections() {
        let model = CharacterModel::<f64>::new(cfg(), 9).unwrap();
        let mut tape = Tape::new();
        let bound = model.params.bind(&mut tape);
        let enc = trunk_encode(&model, &mut tape, &bound, &[2, 11, 12, 13, 3]);
        let bank = model
            .bank(&mut tape, &bound, enc, &[vec![0, 1], vec![3], vec![4]], &mut Mode::Eval)
            .unwrap();
        let scaled = tape.scale(bank, 7.25);
        let s1 = model.selection_scores(&mut tape, &bound, enc, bank).unwrap();
        let s2 = model.selection_scores(&mut tape, &bound, enc, scaled).unwrap();
        let t1 = model.select(&tape, s1);
        let t2 = model.select(&tape, s2);
        for (a, b) in t1.iter().zip(&t2) {
            assert_eq!(a.selected, b.selected);
        }
    }

    #[test]
    fn speaker_row_ignores_shifts_orthogonal_to_the_probe() {
        // scores = D bank^T, so adding s with s.D = 0 to every bank row
        // leaves that probe's row unchanged.
        let mut tape = Tape::<f64>::new();
        let probe = tape.constant(Tensor::from_rows(&[vec![1.0, 2.0, 0.0, -1.0]]).unwrap());
        let bank_rows =
            vec![vec![0.5, -1.0, 3.0, 2.0], vec![2.0, 2.0, -1.0, 0.0], vec![-3.0, 1.0, 0.5, 4.0]];
        // s = (2, -1, 5, 0) has zero dot with the probe.
        let s = [2.0, -1.0, 5.0, 0.0];
        let shifted: Vec<Vec<f64>> = bank_rows
            .iter()
            .map(|r| r.iter().zip(&s).map(|(a, b)| a + b).collect())
            .collect();
        let bank = tape.constant(Tensor::from_rows(&bank_rows).unwrap());
        let bank2 = tape.constant(Tensor::from_rows(&shifted).unwrap());
        let bt = tape.transpose(bank).unwrap();
        let bt2 = tape.transpose(bank2).unwrap();
        let r1 = tape.matmul(probe, bt).unwrap();
        let r2 = tape.matmul(probe, bt2).unwrap();
        for (a, b) in tape.data(r1).iter().zip(tape.data(r2)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn trunk_encode(
        model: &CharacterModel<f64>,
        tape: &mut Tape<f64>,
        bound: &Binding,
        tokens: &[u32],
    ) -> ValueId {
        Trunk::new(&model.cfg).encode(tape, bound, tokens, &mut Mode::Eval).unwrap()
    }
}
