use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::beam::NextTokenScorer;
use super::task::{BOS, EOS};
use crate::autodiff::{Tape, Var};
use crate::error::{param_err, Result};
use crate::kernels::{hepos_attention_tape, HeposSpec};
use crate::mask::AttentionMask;
use crate::patterns::PatternSpec;
use crate::tensor::Tensor;

/// Encoder-decoder attention variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossAttention {
    Full,
    /// Keys and values projected from the source length down to `k`.
    Linformer { k: usize },
    /// Head `h` attends source positions `h mod stride, h mod stride + stride, …`.
    Hepos { stride: usize },
}

impl fmt::Display for CrossAttention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Full => write!(f, "full"),
            Self::Linformer { k } => write!(f, "linformer(k={k})"),
            Self::Hepos { stride } => write!(f, "hepos(sh={stride})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub vocab: usize,
    pub dim: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub encoder: PatternSpec,
    pub cross: CrossAttention,
    /// Source length (every source has exactly this many tokens).
    pub src_len: usize,
    /// Maximum decoder length, counting the final EOS.
    pub tgt_len: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(vocab: usize, src_len: usize, tgt_len: usize) -> Self {
        Self {
            vocab,
            dim: 32,
            heads: 4,
            ffn_dim: 64,
            encoder: PatternSpec::full(),
            cross: CrossAttention::Full,
            src_len,
            tgt_len,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.dim % self.heads != 0 {
            return Err(param_err(format!("{} heads must divide dim {}", self.heads, self.dim)));
        }
        if self.src_len == 0 || self.tgt_len == 0 {
            return Err(param_err("sequence lengths must be >= 1"));
        }
        if self.encoder.is_cross_attention() {
            return Err(param_err("encoder pattern must be a self-attention pattern"));
        }
        self.encoder.build(self.src_len, self.src_len)?;
        match self.cross {
            CrossAttention::Full => {}
            CrossAttention::Linformer { k } => {
                if k == 0 || k > self.src_len {
                    return Err(param_err(format!("projected length {k} must be in 1..={}", self.src_len)));
                }
            }
            CrossAttention::Hepos { stride } => HeposSpec::new(stride, self.heads).validate(self.src_len)?,
        }
        Ok(())
    }
}

/// Names of the parameter blocks, in storage order.
const BLOCKS: &[&str] = &[
    "tok_emb", "enc_pos", "dec_pos", "enc_wq", "enc_wk", "enc_wv", "enc_wo", "enc_ff1", "enc_ff2",
    "self_wq", "self_wk", "self_wv", "self_wo", "cross_wq", "cross_wk", "cross_wv", "cross_wo",
    "dec_ff1", "dec_ff2", "out",
];

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    params: Vec<Tensor>,
    names: Vec<&'static str>,
    encoder_mask: Arc<AttentionMask>,
}

/// Parameter handles on one tape, indexed like `Model::params`.
pub(crate) struct Bound(pub Vec<Var>);

/// Logits plus per-forward score-cell counts.
pub(crate) struct Forward {
    pub logits: Var,
    pub encoder_cells: usize,
    pub cross_cells: usize,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (v, d, f, n, m) = (config.vocab, config.dim, config.ffn_dim, config.src_len, config.tgt_len);
        let proj = 1.0 / (d as f64).sqrt();
        let mut names: Vec<&'static str> = Vec::new();
        let mut params = Vec::new();
        for &name in BLOCKS {
            let t = match name {
                "tok_emb" => Tensor::randn(v, d, 1.0, &mut rng),
                "enc_pos" => Tensor::randn(n, d, 1.0, &mut rng),
                "dec_pos" => Tensor::randn(m, d, 1.0, &mut rng),
                "enc_ff1" | "dec_ff1" => Tensor::randn(d, f, proj, &mut rng),
                "enc_ff2" | "dec_ff2" => Tensor::randn(f, d, 1.0 / (f as f64).sqrt(), &mut rng),
                "out" => Tensor::randn(d, v, 0.01 * proj, &mut rng),
                _ => Tensor::randn(d, d, proj, &mut rng),
            };
            names.push(name);
            params.push(t);
        }
        if let CrossAttention::Linformer { k } = config.cross {
            names.push("cross_e");
            params.push(Tensor::randn(k, n, 1.0 / (n as f64).sqrt(), &mut rng));
            names.push("cross_f");
            params.push(Tensor::randn(k, n, 1.0 / (n as f64).sqrt(), &mut rng));
        }
        let encoder_mask = Arc::new(config.encoder.build(n, n)?);
        Ok(Self {
            config,
            params,
            names,
            encoder_mask,
        })
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn param_names(&self) -> &[&'static str] {
        &self.names
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub(crate) fn bind(&self, tape: &mut Tape) -> Bound {
        Bound(self.params.iter().map(|p| tape.leaf(p.clone())).collect())
    }

    fn idx(&self, name: &str) -> usize {
        self.names.iter().position(|n| *n == name).expect("known block")
    }

    /// Teacher-forced forward pass; `dec_in` starts with BOS.
    pub(crate) fn forward(&self, tape: &mut Tape, b: &Bound, source: &[usize], dec_in: &[usize]) -> Result<Forward> {
        let cfg = &self.config;
        if source.len() != cfg.src_len {
            return Err(param_err(format!("source has {} tokens, model expects {}", source.len(), cfg.src_len)));
        }
        if dec_in.is_empty() || dec_in.len() > cfg.tgt_len {
            return Err(param_err(format!("decoder input length {} outside 1..={}", dec_in.len(), cfg.tgt_len)));
        }
        if let Some(&t) = source.iter().chain(dec_in).find(|&&t| t >= cfg.vocab) {
            return Err(param_err(format!("token {t} outside vocabulary of {}", cfg.vocab)));
        }
        let p = |name: &str| b.0[self.idx(name)];
        let positions = |len: usize| (0..len).collect::<Vec<_>>();

        // encoder
        let emb = tape.gather(p("tok_emb"), source)?;
        let pos = tape.gather(p("enc_pos"), &positions(source.len()))?;
        let x = tape.add(emb, pos)?;
        let (attn, encoder_cells) = self.multi_head(
            tape,
            x,
            x,
            [p("enc_wq"), p("enc_wk"), p("enc_wv"), p("enc_wo")],
            self.encoder_mask.clone(),
        )?;
        let x = tape.add(x, attn)?;
        let enc = self.feed_forward(tape, x, p("enc_ff1"), p("enc_ff2"))?;

        // decoder
        let t = dec_in.len();
        let emb = tape.gather(p("tok_emb"), dec_in)?;
        let pos = tape.gather(p("dec_pos"), &positions(t))?;
        let y = tape.add(emb, pos)?;
        let (self_attn, _) = self.multi_head(
            tape,
            y,
            y,
            [p("self_wq"), p("self_wk"), p("self_wv"), p("self_wo")],
            Arc::new(AttentionMask::causal(t)),
        )?;
        let y = tape.add(y, self_attn)?;
        let (cross, cross_cells) = self.cross_attention(tape, b, y, enc)?;
        let y = tape.add(y, cross)?;
        let y = self.feed_forward(tape, y, p("dec_ff1"), p("dec_ff2"))?;
        let logits = tape.matmul(y, p("out"))?;
        Ok(Forward {
            logits,
            encoder_cells,
            cross_cells,
        })
    }

    fn feed_forward(&self, tape: &mut Tape, x: Var, w1: Var, w2: Var) -> Result<Var> {
        let h = tape.matmul(x, w1)?;
        let h = tape.relu(h);
        let h = tape.matmul(h, w2)?;
        tape.add(x, h)
    }

    fn multi_head(
        &self,
        tape: &mut Tape,
        queries_from: Var,
        keys_from: Var,
        [wq, wk, wv, wo]: [Var; 4],
        mask: Arc<AttentionMask>,
    ) -> Result<(Var, usize)> {
        let q = tape.matmul(queries_from, wq)?;
        let k = tape.matmul(keys_from, wk)?;
        let v = tape.matmul(keys_from, wv)?;
        let (heads, cells) = self.split_heads(tape, q, k, v, &mask)?;
        Ok((tape.matmul(heads, wo)?, cells))
    }

    fn split_heads(&self, tape: &mut Tape, q: Var, k: Var, v: Var, mask: &Arc<AttentionMask>) -> Result<(Var, usize)> {
        let h = self.config.heads;
        let dh = self.config.dim / h;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(h);
        let mut cells = 0;
        for head in 0..h {
            let qh = tape.slice_cols(q, head * dh, dh)?;
            let kh = tape.slice_cols(k, head * dh, dh)?;
            let vh = tape.slice_cols(v, head * dh, dh)?;
            let (o, c) = tape.sparse_attention(qh, kh, vh, mask.clone(), scale)?;
            outs.push(o);
            cells += c;
        }
        Ok((tape.concat_cols(&outs)?, cells))
    }

    fn cross_attention(&self, tape: &mut Tape, b: &Bound, y: Var, enc: Var) -> Result<(Var, usize)> {
        let p = |name: &str| b.0[self.idx(name)];
        let q = tape.matmul(y, p("cross_wq"))?;
        let k = tape.matmul(enc, p("cross_wk"))?;
        let v = tape.matmul(enc, p("cross_wv"))?;
        let t = tape.value(y).rows();
        let n = self.config.src_len;
        let (heads, cells) = match self.config.cross {
            CrossAttention::Full => self.split_heads(tape, q, k, v, &Arc::new(AttentionMask::full(t, n)))?,
            CrossAttention::Linformer { k: rank } => {
                let pk = tape.matmul(p("cross_e"), k)?;
                let pv = tape.matmul(p("cross_f"), v)?;
                self.split_heads(tape, q, pk, pv, &Arc::new(AttentionMask::full(t, rank)))?
            }
            CrossAttention::Hepos { stride } => {
                hepos_attention_tape(tape, q, k, v, &HeposSpec::new(stride, self.config.heads))?
            }
        };
        Ok((tape.matmul(heads, p("cross_wo"))?, cells))
    }

    /// Next-token log-probabilities after `prefix` (generated tokens, without
    /// the leading BOS).
    pub fn next_log_probs(&self, source: &[usize], prefix: &[usize]) -> Result<Vec<f64>> {
        let mut dec_in = Vec::with_capacity(prefix.len() + 1);
        dec_in.push(BOS);
        dec_in.extend_from_slice(prefix);
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let fwd = self.forward(&mut tape, &bound, source, &dec_in)?;
        let logits = tape.value(fwd.logits);
        let last = logits.row(logits.rows() - 1);
        let max = last.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + last.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        Ok(last.iter().map(|v| v - log_z).collect())
    }

    /// Score cells of one forward pass with a decoder input of length `t`:
    /// `(encoder self-attention, encoder-decoder attention)`, summed over heads.
    pub fn cells_per_forward(&self, t: usize) -> (usize, usize) {
        let h = self.config.heads;
        let n = self.config.src_len;
        let enc = h * self.encoder_mask.cell_count();
        let cross = match self.config.cross {
            CrossAttention::Full => h * t * n,
            CrossAttention::Linformer { k } => h * t * k,
            CrossAttention::Hepos { stride } => HeposSpec::new(stride, h).total_cells(t, n),
        };
        (enc, cross)
    }
}

/// Adapts a model and a fixed source to the beam-search scorer interface.
pub struct ModelScorer<'a> {
    pub model: &'a Model,
    pub source: &'a [usize],
}

impl NextTokenScorer for ModelScorer<'_> {
    fn log_probs(&self, prefix: &[usize]) -> Result<Vec<f64>> {
        self.model.next_log_probs(self.source, prefix)
    }

    fn eos(&self) -> usize {
        EOS
    }
}
