//! Class-token Transformer with a slide head and a shared instance head.

use super::config::ModelConfig;
use super::position::sinusoidal_pe;
use crate::error::{Error, Result};
use crate::numerics::{ParamId, Params, Tape, Tensor, Var};
use crate::Rng;
use rand::Rng as _;
use rand::SeedableRng;

#[derive(Clone, Debug, PartialEq)]
struct Block {
    ln1_gain: ParamId,
    ln1_bias: ParamId,
    wq: ParamId,
    bq: ParamId,
    wk: ParamId,
    bk: ParamId,
    wv: ParamId,
    bv: ParamId,
    wo: ParamId,
    bo: ParamId,
    ln2_gain: ParamId,
    ln2_bias: ParamId,
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
struct Head {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

/// Configuration plus all trainable weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    cfg: ModelConfig,
    params: Params,
    class_token: ParamId,
    blocks: Vec<Block>,
    final_gain: ParamId,
    final_bias: ParamId,
    slide_head: Head,
    instance_head: Head,
}

/// Whether dropout is active.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut Rng),
}

/// Tape handles produced by one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct ForwardOutput {
    /// `1×d` class-token output.
    pub class_token: Var,
    /// `N×d` instance-token outputs.
    pub instance_tokens: Var,
    /// `1×ℓ` slide logits.
    pub slide_logits: Var,
    /// `N×C` instance logits.
    pub instance_logits: Var,
}

fn xavier(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    let std = (2.0 / (rows + cols) as f64).sqrt();
    Tensor::randn(&[rows, cols], std, rng)
}

impl Model {
    /// Random initialisation from `seed`.
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = Rng::seed_from_u64(seed);
        let d = cfg.dim;
        let hidden = d * cfg.ffn_expansion;
        let mut params = Params::new();
        let class_token = params.add("class_token", Tensor::randn(&[d], 0.02, &mut rng));
        let mut blocks = Vec::with_capacity(cfg.blocks);
        for l in 0..cfg.blocks {
            let mut add = |name: &str, t: Tensor| params.add(format!("block{l}.{name}"), t);
            blocks.push(Block {
                ln1_gain: add("ln1.gain", Tensor::ones(&[d])),
                ln1_bias: add("ln1.bias", Tensor::zeros(&[d])),
                wq: add("attn.wq", xavier(d, d, &mut rng)),
                bq: add("attn.bq", Tensor::zeros(&[d])),
                wk: add("attn.wk", xavier(d, d, &mut rng)),
                bk: add("attn.bk", Tensor::zeros(&[d])),
                wv: add("attn.wv", xavier(d, d, &mut rng)),
                bv: add("attn.bv", Tensor::zeros(&[d])),
                wo: add("attn.wo", xavier(d, d, &mut rng)),
                bo: add("attn.bo", Tensor::zeros(&[d])),
                ln2_gain: add("ln2.gain", Tensor::ones(&[d])),
                ln2_bias: add("ln2.bias", Tensor::zeros(&[d])),
                w1: add("ffn.w1", xavier(d, hidden, &mut rng)),
                b1: add("ffn.b1", Tensor::zeros(&[hidden])),
                w2: add("ffn.w2", xavier(hidden, d, &mut rng)),
                b2: add("ffn.b2", Tensor::zeros(&[d])),
            });
        }
        let final_gain = params.add("final_ln.gain", Tensor::ones(&[d]));
        let final_bias = params.add("final_ln.bias", Tensor::zeros(&[d]));
        let mut head = |name: &str, out: usize, params: &mut Params| Head {
            w1: params.add(format!("{name}.w1"), xavier(d, cfg.head_hidden, &mut rng)),
            b1: params.add(format!("{name}.b1"), Tensor::zeros(&[cfg.head_hidden])),
            w2: params.add(format!("{name}.w2"), xavier(cfg.head_hidden, out, &mut rng)),
            b2: params.add(format!("{name}.b2"), Tensor::zeros(&[out])),
        };
        let slide_head = head("slide_head", cfg.slide_classes, &mut params);
        let instance_head = head("instance_head", cfg.instance_classes, &mut params);
        Ok(Self {
            cfg,
            params,
            class_token,
            blocks,
            final_gain,
            final_bias,
            slide_head,
            instance_head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    /// Ids of the instance head weights.
    pub fn instance_head_params(&self) -> [ParamId; 4] {
        let h = &self.instance_head;
        [h.w1, h.b1, h.w2, h.b2]
    }

    pub fn slide_head_params(&self) -> [ParamId; 4] {
        let h = &self.slide_head;
        [h.w1, h.b1, h.w2, h.b2]
    }

    /// Ids of every attention and feed-forward weight in the Transformer blocks.
    pub fn block_params(&self) -> Vec<ParamId> {
        self.blocks
            .iter()
            .flat_map(|b| {
                [
                    b.ln1_gain, b.ln1_bias, b.wq, b.bq, b.wk, b.bk, b.wv, b.bv, b.wo, b.bo, b.ln2_gain, b.ln2_bias,
                    b.w1, b.b1, b.w2, b.b2,
                ]
            })
            .collect()
    }

    /// Instance tokens with positional encoding added, `N×d`.
    pub fn instance_tokens(&self, features: &Tensor, centroids: &[(f64, f64)]) -> Result<Tensor> {
        let (n, d) = features.dims2()?;
        if features.ndim() != 2 || d != self.cfg.dim {
            return Err(Error::shape("instance tokens", features.shape(), &[n, self.cfg.dim]));
        }
        if centroids.len() != n {
            return Err(Error::shape("instance centroids", &[n], &[centroids.len()]));
        }
        let mut tokens = features.clone().with_grad(false);
        let w = self.cfg.pos_weight;
        // w = 0 skips the addition so the result does not depend on centroids at all
        if w != 0.0 {
            for (i, &(px, py)) in centroids.iter().enumerate() {
                let s = sinusoidal_pe(px, py, &self.cfg);
                for (t, v) in tokens.data_mut()[i * d..(i + 1) * d].iter_mut().zip(s) {
                    *t += w * v;
                }
            }
        }
        Ok(tokens)
    }

    /// Runs the Transformer and both heads on the given instances.
    pub fn forward(
        &self,
        tape: &mut Tape,
        features: &Tensor,
        centroids: &[(f64, f64)],
        mode: Mode<'_>,
    ) -> Result<ForwardOutput> {
        self.forward_with(&self.params, tape, features, centroids, mode)
    }

    /// [`Model::forward`] with substitute weights of identical layout.
    pub fn forward_with(
        &self,
        params: &Params,
        tape: &mut Tape,
        features: &Tensor,
        centroids: &[(f64, f64)],
        mut mode: Mode<'_>,
    ) -> Result<ForwardOutput> {
        let tokens = self.instance_tokens(features, centroids)?;
        let n = tokens.shape()[0];
        let p = |tape: &mut Tape, id: ParamId| tape.param(id, params.get(id));

        let class = p(tape, self.class_token);
        let inst = tape.leaf(tokens);
        let mut h = tape.concat_rows(&[class, inst])?;

        let vars: Vec<Vec<Var>> = self
            .blocks
            .iter()
            .map(|b| {
                [
                    b.ln1_gain, b.ln1_bias, b.wq, b.bq, b.wk, b.bk, b.wv, b.bv, b.wo, b.bo, b.ln2_gain, b.ln2_bias,
                    b.w1, b.b1, b.w2, b.b2,
                ]
                .into_iter()
                .map(|id| p(tape, id))
                .collect()
            })
            .collect();
        for v in &vars {
            h = self.block(tape, h, v, &mut mode)?;
        }

        let gain = p(tape, self.final_gain);
        let bias = p(tape, self.final_bias);
        let out = tape.layernorm(h, gain, bias)?;
        let class_token = tape.slice_rows(out, 0, 1)?;
        let instance_tokens = tape.slice_rows(out, 1, n)?;
        let slide_logits = head(tape, params, &self.slide_head, class_token)?;
        let instance_logits = head(tape, params, &self.instance_head, instance_tokens)?;
        Ok(ForwardOutput {
            class_token,
            instance_tokens,
            slide_logits,
            instance_logits,
        })
    }

    fn block(&self, tape: &mut Tape, x: Var, v: &[Var], mode: &mut Mode<'_>) -> Result<Var> {
        let [ln1_gain, ln1_bias, wq, bq, wk, bk, wv, bv, wo, bo, ln2_gain, ln2_bias, w1, b1, w2, b2] =
            v.try_into().expect("16 block parameters");
        let normed = tape.layernorm(x, ln1_gain, ln1_bias)?;
        let attn = self.attention(tape, normed, [wq, bq, wk, bk, wv, bv, wo, bo])?;
        let attn = self.dropout(tape, attn, mode)?;
        let x = tape.add(x, attn)?;

        let normed = tape.layernorm(x, ln2_gain, ln2_bias)?;
        let hidden = tape.matmul(normed, w1)?;
        let hidden = tape.add_row(hidden, b1)?;
        let hidden = tape.gelu(hidden);
        let ffn = tape.matmul(hidden, w2)?;
        let ffn = tape.add_row(ffn, b2)?;
        let ffn = self.dropout(tape, ffn, mode)?;
        tape.add(x, ffn)
    }

    /// Full multi-head self-attention over all tokens.
    fn attention(&self, tape: &mut Tape, x: Var, w: [Var; 8]) -> Result<Var> {
        let [wq, bq, wk, bk, wv, bv, wo, bo] = w;
        let proj = |tape: &mut Tape, wm: Var, b: Var| -> Result<Var> {
            let y = tape.matmul(x, wm)?;
            tape.add_row(y, b)
        };
        let q = proj(tape, wq, bq)?;
        let k = proj(tape, wk, bk)?;
        let v = proj(tape, wv, bv)?;
        let head_dim = self.cfg.dim / self.cfg.heads;
        let scale = 1.0 / (head_dim as f64).sqrt();
        let mut outs = Vec::with_capacity(self.cfg.heads);
        for hd in 0..self.cfg.heads {
            let qh = tape.slice_cols(q, hd * head_dim, head_dim)?;
            let kh = tape.slice_cols(k, hd * head_dim, head_dim)?;
            let vh = tape.slice_cols(v, hd * head_dim, head_dim)?;
            let kt = tape.transpose(kh)?;
            let scores = tape.matmul(qh, kt)?;
            let scores = tape.scale(scores, scale);
            let weights = tape.softmax(scores, 1)?;
            outs.push(tape.matmul(weights, vh)?);
        }
        let joined = tape.concat_cols(&outs)?;
        let y = tape.matmul(joined, wo)?;
        tape.add_row(y, bo)
    }

    fn dropout(&self, tape: &mut Tape, x: Var, mode: &mut Mode<'_>) -> Result<Var> {
        let rate = self.cfg.dropout;
        match mode {
            Mode::Train(rng) if rate > 0.0 => {
                let keep = 1.0 - rate;
                let shape = tape.value(x).shape().to_vec();
                let mut mask = Tensor::zeros(&shape);
                for m in mask.data_mut() {
                    if rng.random::<f64>() < keep {
                        *m = 1.0 / keep;
                    }
                }
                tape.mul_const(x, mask)
            }
            _ => Ok(x),
        }
    }

    /// Slide probabilities (sigmoid) and per-instance class probabilities
    /// (softmax), evaluated on all instances without dropout.
    pub fn predict(&self, features: &Tensor, centroids: &[(f64, f64)]) -> Result<Prediction> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, features, centroids, Mode::Eval)?;
        let slide = tape
            .value(out.slide_logits)
            .data()
            .iter()
            .map(|&z| crate::numerics::sigmoid(z))
            .collect();
        let inst = tape.value(out.instance_logits).softmax(1)?;
        let (n, c) = inst.dims2()?;
        let instances = (0..n).map(|i| inst.data()[i * c..(i + 1) * c].to_vec()).collect();
        Ok(Prediction {
            slide_probs: slide,
            instance_probs: instances,
        })
    }
}

/// Two-layer MLP: linear, GELU, linear.
fn head(tape: &mut Tape, params: &Params, head: &Head, x: Var) -> Result<Var> {
    let w1 = tape.param(head.w1, params.get(head.w1));
    let b1 = tape.param(head.b1, params.get(head.b1));
    let w2 = tape.param(head.w2, params.get(head.w2));
    let b2 = tape.param(head.b2, params.get(head.b2));
    let h = tape.matmul(x, w1)?;
    let h = tape.add_row(h, b1)?;
    let h = tape.gelu(h);
    let y = tape.matmul(h, w2)?;
    tape.add_row(y, b2)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub slide_probs: Vec<f64>,
    pub instance_probs: Vec<Vec<f64>>,
}

impl Prediction {
    /// Arg-max instance classes; ties resolve to the higher class index.
    pub fn instance_classes(&self) -> Vec<usize> {
        self.instance_probs
            .iter()
            .map(|p| {
                p.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
                    .map(|(i, _)| i)
                    .expect("non-empty class set")
            })
            .collect()
    }
}
