//! Shared transformer trunk: embeddings, encoder/decoder stacks, and the
//! small bidirectional encoder used for character mention states.
//!
//! All blocks are pre-norm residual. Attention is multi-head over column
//! slices of a single projection, so head count only reshapes the math.

use numerics::params::Binding;
use numerics::tape::ValueId;
use numerics::{Params, Scalar, Tape, Tensor};
use rand::Rng;

use crate::api::Mode;
use crate::config::ModelConfig;
use crate::error::ModelError;
use crate::Result;

const NEG_INF: f64 = -1e9;

pub(crate) struct Trunk<'c> {
    pub cfg: &'c ModelConfig,
}

impl<'c> Trunk<'c> {
    pub fn new(cfg: &'c ModelConfig) -> Self {
        Self { cfg }
    }

    /// Token and position tables shared by every stack.
    pub fn init_embeddings<S: Scalar>(
        params: &mut Params<S>,
        cfg: &ModelConfig,
        rng: &mut impl Rng,
    ) -> Result<()> {
        let lim = (cfg.model_dim as f64).sqrt().recip();
        params.insert_uniform("embed.token", cfg.vocab_size, cfg.model_dim, lim, rng)?;
        params.insert_uniform("embed.pos", cfg.max_sequence_length, cfg.model_dim, lim, rng)?;
        Ok(())
    }

    /// One stack of `layers` blocks named `{prefix}{i}.*` plus a final norm
    /// `{prefix}.ln.*`. Decoder stacks add a cross-attention sublayer.
    pub fn init_stack<S: Scalar>(
        params: &mut Params<S>,
        cfg: &ModelConfig,
        rng: &mut impl Rng,
        prefix: &str,
        layers: usize,
        cross: bool,
    ) -> Result<()> {
        let d = cfg.model_dim;
        let ff = cfg.feedforward_dim;
        let lim_d = (d as f64).sqrt().recip();
        let lim_ff = (ff as f64).sqrt().recip();
        for i in 0..layers {
            let p = format!("{prefix}{i}");
            params.insert_filled(&format!("{p}.ln1.g"), d, 1.0)?;
            params.insert_filled(&format!("{p}.ln1.b"), d, 0.0)?;
            for w in ["wq", "wk", "wv", "wo"] {
                params.insert_uniform(&format!("{p}.attn.{w}"), d, d, lim_d, rng)?;
            }
            if cross {
                params.insert_filled(&format!("{p}.lnx.g"), d, 1.0)?;
                params.insert_filled(&format!("{p}.lnx.b"), d, 0.0)?;
                for w in ["wq", "wk", "wv", "wo"] {
                    params.insert_uniform(&format!("{p}.cross.{w}"), d, d, lim_d, rng)?;
                }
            }
            params.insert_filled(&format!("{p}.ln2.g"), d, 1.0)?;
            params.insert_filled(&format!("{p}.ln2.b"), d, 0.0)?;
            params.insert_uniform(&format!("{p}.ff.w1"), d, ff, lim_d, rng)?;
            params.insert_filled(&format!("{p}.ff.b1"), ff, 0.0)?;
            params.insert_uniform(&format!("{p}.ff.w2"), ff, d, lim_ff, rng)?;
            params.insert_filled(&format!("{p}.ff.b2"), d, 0.0)?;
        }
        params.insert_filled(&format!("{prefix}.ln.g"), d, 1.0)?;
        params.insert_filled(&format!("{prefix}.ln.b"), d, 0.0)?;
        Ok(())
    }

    /// Token + position embedding, shape (T, d).
    pub fn embed<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        bound: &Binding,
        tokens: &[u32],
    ) -> Result<ValueId> {
        if tokens.is_empty() {
            return Err(ModelError::Meta("empty token sequence".into()));
        }
        if tokens.len() > self.cfg.max_sequence_length {
            return Err(ModelError::Overlength {
                len: tokens.len(),
                max: self.cfg.max_sequence_length,
            });
        }
        for &t in tokens {
            if t as usize >= self.cfg.vocab_size {
                return Err(ModelError::Meta(format!(
                    "token id {t} outside vocabulary of {}",
                    self.cfg.vocab_size
                )));
            }
        }
        let ids: Vec<usize> = tokens.iter().map(|&t| t as usize).collect();
        let positions: Vec<usize> = (0..tokens.len()).collect();
        let tok = tape.gather_rows(bound.id("embed.token"), &ids)?;
        let pos = tape.gather_rows(bound.id("embed.pos"), &positions)?;
        Ok(tape.add(tok, pos)?)
    }

    pub fn encode<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        bound: &Binding,
        tokens: &[u32],
        mode: &mut Mode,
    ) -> Result<ValueId> {
        let mut x = self.embed(tape, bound, tokens)?;
        for i in 0..self.cfg.layers_encoder {
            x = self.block(tape, bound, &format!("enc{i}"), x, None, false, mode)?;
        }
        self.final_norm(tape, bound, "enc", x)
    }

    pub fn decode<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        bound: &Binding,
        tokens: &[u32],
        memory: ValueId,
        mode: &mut Mode,
    ) -> Result<ValueId> {
        let mut x = self.embed(tape, bound, tokens)?;
        for i in 0..self.cfg.layers_decoder {
            x = self.block(tape, bound, &format!("dec{i}"), x, Some(memory), true, mode)?;
        }
        self.final_norm(tape, bound, "dec", x)
    }

    /// Bidirectional encoder over already-embedded states. No positions are
    /// added: mentions are a set, and mean pooling follows.
    pub fn char_encode<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        bound: &Binding,
        states: ValueId,
        mode: &mut Mode,
    ) -> Result<ValueId> {
        let mut x = states;
        for i in 0..self.cfg.character_encoder_layers {
            x = self.block(tape, bound, &format!("chr{i}"), x, None, false, mode)?;
        }
        self.final_norm(tape, bound, "chr", x)
    }

    fn final_norm<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        bound: &Binding,
        prefix: &str,
        x: ValueId,
    ) -> Result<ValueId> {
        Ok(tape.layer_norm(
            x,
            bound.id(&format!("{prefix}.ln.g")),
            bound.id(&format!("{prefix}.ln.b")),
        )?)
    }

    #[allow(clippy::too_many_arguments)]
    fn block<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        bound: &Binding,
        p: &str,
        x: ValueId,
        memory: Option<ValueId>,
        causal: bool,
        mode: &mut Mode,
    ) -> Result<ValueId> {
        let n1 = tape.layer_norm(
            x,
            bound.id(&format!("{p}.ln1.g")),
            bound.id(&format!("{p}.ln1.b")),
        )?;
        let a = self.attention(tape, bound, &format!("{p}.attn"), n1, n1, causal)?;
        let a = self.drop(tape, a, mode);
        let mut x = tape.add(x, a)?;

        if let Some(mem) = memory {
            let nx = tape.layer_norm(
                x,
                bound.id(&format!("{p}.lnx.g")),
                bound.id(&format!("{p}.lnx.b")),
            )?;
            let c = self.attention(tape, bound, &format!("{p}.cross"), nx, mem, false)?;
            let c = self.drop(tape, c, mode);
            x = tape.add(x, c)?;
        }

        let n2 = tape.layer_norm(
            x,
            bound.id(&format!("{p}.ln2.g")),
            bound.id(&format!("{p}.ln2.b")),
        )?;
        let w1 = tape.matmul(n2, bound.id(&format!("{p}.ff.w1")))?;
        let h = tape.add_bias(w1, bound.id(&format!("{p}.ff.b1")))?;
        let h = tape.silu(h);
        let w2 = tape.matmul(h, bound.id(&format!("{p}.ff.w2")))?;
        let f = tape.add_bias(w2, bound.id(&format!("{p}.ff.b2")))?;
        let f = self.drop(tape, f, mode);
        Ok(tape.add(x, f)?)
    }

    fn attention<S: Scalar>(
        &self,
        tape: &mut Tape<S>,
        bound: &Binding,
        p: &str,
        xq: ValueId,
        xkv: ValueId,
        causal: bool,
    ) -> Result<ValueId> {
        let dh = self.cfg.head_dim();
        let q = tape.matmul(xq, bound.id(&format!("{p}.wq")))?;
        let k = tape.matmul(xkv, bound.id(&format!("{p}.wk")))?;
        let v = tape.matmul(xkv, bound.id(&format!("{p}.wv")))?;
        let mask = if causal {
            let t = tape.shape(q)[0];
            Some(tape.constant(causal_mask::<S>(t)))
        } else {
            None
        };
        let scale = (dh as f64).sqrt().recip();
        let mut heads = Vec::with_capacity(self.cfg.attention_heads);
        for h in 0..self.cfg.attention_heads {
            let qh = tape.slice_cols(q, h * dh, dh)?;
            let kh = tape.slice_cols(k, h * dh, dh)?;
            let vh = tape.slice_cols(v, h * dh, dh)?;
            let kt = tape.transpose(kh)?;
            let mut scores = tape.matmul(qh, kt)?;
            scores = tape.scale(scores, scale);
            if let Some(m) = mask {
                scores = tape.add(scores, m)?;
            }
            let attn = tape.softmax(scores, 1)?;
            heads.push(tape.matmul(attn, vh)?);
        }
        let ctx = tape.concat_cols(&heads)?;
        Ok(tape.matmul(ctx, bound.id(&format!("{p}.wo")))?)
    }

    /// Inverted dropout; identity in eval mode or at rate zero.
    fn drop<S: Scalar>(&self, tape: &mut Tape<S>, x: ValueId, mode: &mut Mode) -> ValueId {
        let p = self.cfg.dropout;
        if p <= 0.0 {
            return x;
        }
        let Mode::Train { dropout_rng } = mode else {
            return x;
        };
        let shape = tape.shape(x).to_vec();
        let keep = 1.0 - p;
        let inv = keep.recip();
        let n: usize = shape.iter().product();
        let data: Vec<S> = (0..n)
            .map(|_| {
                if dropout_rng.gen::<f64>() < keep {
                    S::from_f64(inv)
                } else {
                    S::zero()
                }
            })
            .collect();
        let mask = tape.constant(Tensor::new(shape, data).expect("mask matches value shape"));
        tape.mul(x, mask).expect("mask matches value shape")
    }
}

fn causal_mask<S: Scalar>(t: usize) -> Tensor<S> {
    let mut data = vec![S::zero(); t * t];
    for i in 0..t {
        for j in (i + 1)..t {
            data[i * t + j] = S::from_f64(NEG_INF);
        }
    }
    Tensor::matrix(t, t, data).expect("square mask")
}

#[cfg(test)]
mod tests {
    use super::*;
    use numerics::rng_for;

    fn cfg() -> ModelConfig {
        ModelConfig { vocab_size: 30, model_dim: 16, feedforward_dim: 32, ..ModelConfig::default() }
    }

    fn trunk_params(cfg: &ModelConfig) -> Params<f64> {
        let mut rng = rng_for(3, "test.trunk");
        let mut params = Params::new();
        Trunk::init_embeddings(&mut params, cfg, &mut rng).unwrap();
        Trunk::init_stack(&mut params, cfg, &mut rng, "enc", cfg.layers_encoder, false).unwrap();
        Trunk::init_stack(&mut params, cfg, &mut rng, "dec", cfg.layers_decoder, true).unwrap();
        params
    }

    #[test]
    fn encoder_output_shape_is_tokens_by_dim() {
        let cfg = cfg();
        let params = trunk_params(&cfg);
        let trunk = Trunk::new(&cfg);
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let out = trunk.encode(&mut tape, &bound, &[2, 9, 9, 3, 11], &mut Mode::Eval).unwrap();
        assert_eq!(tape.shape(out), &[5, 16]);
    }

    #[test]
    fn permuting_tokens_changes_encoder_output() {
        let cfg = cfg();
        let params = trunk_params(&cfg);
        let trunk = Trunk::new(&cfg);
        let run = |tokens: &[u32]| {
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape);
            let out = trunk.encode(&mut tape, &bound, tokens, &mut Mode::Eval).unwrap();
            tape.data(out).to_vec()
        };
        let a = run(&[5, 6, 7, 8]);
        let b = run(&[8, 7, 6, 5]);
        assert_ne!(a, b);
    }

    #[test]
    fn eval_mode_is_deterministic() {
        let cfg = cfg();
        let params = trunk_params(&cfg);
        let trunk = Trunk::new(&cfg);
        let run = || {
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape);
            let mem = trunk.encode(&mut tape, &bound, &[4, 5, 6], &mut Mode::Eval).unwrap();
            let out = trunk.decode(&mut tape, &bound, &[2, 10, 11], mem, &mut Mode::Eval).unwrap();
            tape.data(out).to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn causal_mask_blocks_future_positions() {
        // With causal self-attention, prefix outputs cannot depend on suffix
        // tokens; check the first decoder row is unchanged when the tail is.
        let cfg = cfg();
        let params = trunk_params(&cfg);
        let trunk = Trunk::new(&cfg);
        let first_row = |tokens: &[u32]| {
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape);
            let mem = trunk.encode(&mut tape, &bound, &[4, 5], &mut Mode::Eval).unwrap();
            let out = trunk.decode(&mut tape, &bound, tokens, mem, &mut Mode::Eval).unwrap();
            tape.data(out)[..cfg.model_dim].to_vec()
        };
        let a = first_row(&[2, 7, 8]);
        let b = first_row(&[2, 12, 13]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn overlength_and_unknown_tokens_are_rejected() {
        let mut cfg = cfg();
        cfg.max_sequence_length = 4;
        let params = trunk_params(&cfg);
        let trunk = Trunk::new(&cfg);
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let err = trunk.encode(&mut tape, &bound, &[1, 2, 3, 4, 5], &mut Mode::Eval).unwrap_err();
        assert!(matches!(err, ModelError::Overlength { len: 5, max: 4 }));
        let err = trunk.encode(&mut tape, &bound, &[1, 99], &mut Mode::Eval).unwrap_err();
        assert!(matches!(err, ModelError::Meta(_)));
    }

    #[test]
    fn dropout_masks_in_train_and_not_in_eval() {
        let mut cfg = cfg();
        cfg.dropout = 0.5;
        let params = trunk_params(&cfg);
        let trunk = Trunk::new(&cfg);
        let eval = {
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape);
            let out = trunk.encode(&mut tape, &bound, &[5, 6, 7], &mut Mode::Eval).unwrap();
            tape.data(out).to_vec()
        };
        let train = {
            let mut rng = rng_for(7, "dropout");
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape);
            let mut mode = Mode::Train { dropout_rng: &mut rng };
            let out = trunk.encode(&mut tape, &bound, &[5, 6, 7], &mut mode).unwrap();
            tape.data(out).to_vec()
        };
        assert_ne!(eval, train);
    }
}
