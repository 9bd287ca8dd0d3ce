//! Toy-scale Transformer and Bi-Modal Transformer captioners.
//!
//! Every sub-layer is wrapped as `LayerNorm(x + Dropout(sublayer(x)))`.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{FeatureStack, VideoFeatures};
use super::layers::{positional_encoding_matrix, FeedForwardWeights, MultiHeadWeights};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Matrix, ParamSet, Var};
use crate::text::{Origin, Sentence};
use crate::vocab::{Vocabulary, BOS, EOS, PAD};

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Transformer,
    Bmt,
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transformer" => Ok(Self::Transformer),
            "bmt" => Ok(Self::Bmt),
            other => Err(Error::Config(format!("unknown architecture {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionerConfig {
    pub arch: Architecture,
    pub d_model: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    /// Width of the visual feature vectors.
    pub d_visual: usize,
    /// Width of the audio/semantic feature vectors (BMT only).
    pub d_asm: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for CaptionerConfig {
    fn default() -> Self {
        Self {
            arch: Architecture::Transformer,
            d_model: 64,
            heads: 4,
            d_ff: 128,
            encoder_layers: 2,
            decoder_layers: 2,
            d_visual: 16,
            d_asm: 16,
            dropout: 0.1,
            seed: 0,
        }
    }
}

impl CaptionerConfig {
    pub fn d_k(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "d_model {} must be divisible by heads {}",
                self.d_model, self.heads
            )));
        }
        if !self.d_model.is_multiple_of(2) {
            return Err(Error::Config("d_model must be even for positional encoding".into()));
        }
        if self.d_ff == 0 || self.d_visual == 0 || (self.arch == Architecture::Bmt && self.d_asm == 0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if self.encoder_layers == 0 || self.decoder_layers == 0 {
            return Err(Error::Config("need at least one encoder and decoder layer".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct AttnIdx {
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
}

#[derive(Debug, Clone)]
struct FfnIdx {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

#[derive(Debug, Clone)]
struct NormIdx {
    gain: usize,
    bias: usize,
}

#[derive(Debug, Clone)]
struct EncoderLayer {
    self_att: AttnIdx,
    norm_att: NormIdx,
    ffn: FfnIdx,
    norm_ffn: NormIdx,
}

/// One bi-modal encoder layer; `v` is the visual stream, `a` the
/// audio/semantic stream.
#[derive(Debug, Clone)]
struct BmtEncoderLayer {
    v: EncoderLayer,
    a: EncoderLayer,
    v_cross: AttnIdx,
    v_norm_cross: NormIdx,
    a_cross: AttnIdx,
    a_norm_cross: NormIdx,
}

#[derive(Debug, Clone)]
struct DecoderLayer {
    self_att: AttnIdx,
    norm_self: NormIdx,
    /// One cross-attention for the Transformer; `[asm, visual]` for BMT.
    cross: Vec<AttnIdx>,
    /// BMT only: the feed-forward bridge over both cross-attention outputs.
    bridge: Option<FfnIdx>,
    norm_cross: NormIdx,
    ffn: FfnIdx,
    norm_ffn: NormIdx,
}

#[derive(Debug, Clone)]
struct Layout {
    in_visual_w: usize,
    in_visual_b: usize,
    in_asm: Option<(usize, usize)>,
    encoders: Vec<EncoderLayer>,
    bmt_encoders: Vec<BmtEncoderLayer>,
    embedding: usize,
    decoders: Vec<DecoderLayer>,
    generator_w: usize,
    generator_b: usize,
}

struct Builder<'a> {
    params: &'a mut ParamSet,
    rng: ChaCha8Rng,
    d: usize,
}

impl Builder<'_> {
    fn xavier(&mut self, name: String, rows: usize, cols: usize) -> usize {
        let m = Matrix::xavier(rows, cols, &mut self.rng);
        self.params.push(name, m)
    }

    fn fill(&mut self, name: String, rows: usize, cols: usize, value: f64) -> usize {
        self.params.push(name, Matrix::filled(rows, cols, value))
    }

    fn attn(&mut self, p: &str) -> AttnIdx {
        let d = self.d;
        AttnIdx {
            wq: self.xavier(format!("{p}.wq"), d, d),
            wk: self.xavier(format!("{p}.wk"), d, d),
            wv: self.xavier(format!("{p}.wv"), d, d),
            wo: self.xavier(format!("{p}.wo"), d, d),
        }
    }

    fn ffn(&mut self, p: &str, input: usize, hidden: usize) -> FfnIdx {
        let d = self.d;
        FfnIdx {
            w1: self.xavier(format!("{p}.w1"), input, hidden),
            b1: self.fill(format!("{p}.b1"), 1, hidden, 0.0),
            w2: self.xavier(format!("{p}.w2"), hidden, d),
            b2: self.fill(format!("{p}.b2"), 1, d, 0.0),
        }
    }

    fn norm(&mut self, p: &str) -> NormIdx {
        let d = self.d;
        NormIdx {
            gain: self.fill(format!("{p}.gain"), 1, d, 1.0),
            bias: self.fill(format!("{p}.bias"), 1, d, 0.0),
        }
    }

    fn encoder_layer(&mut self, p: &str, d_ff: usize) -> EncoderLayer {
        EncoderLayer {
            self_att: self.attn(&format!("{p}.self")),
            norm_att: self.norm(&format!("{p}.norm_self")),
            ffn: self.ffn(&format!("{p}.ffn"), self.d, d_ff),
            norm_ffn: self.norm(&format!("{p}.norm_ffn")),
        }
    }
}

impl Layout {
    fn build(config: &CaptionerConfig, vocab_len: usize, params: &mut ParamSet) -> Self {
        let mut b = Builder {
            params,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            d: config.d_model,
        };
        let d = config.d_model;
        let in_visual_w = b.xavier("input.visual.w".into(), config.d_visual, d);
        let in_visual_b = b.fill("input.visual.b".into(), 1, d, 0.0);
        let mut encoders = Vec::new();
        let mut bmt_encoders = Vec::new();
        let mut in_asm = None;
        match config.arch {
            Architecture::Transformer => {
                for l in 0..config.encoder_layers {
                    encoders.push(b.encoder_layer(&format!("enc{l}"), config.d_ff));
                }
            }
            Architecture::Bmt => {
                in_asm = Some((
                    b.xavier("input.asm.w".into(), config.d_asm, d),
                    b.fill("input.asm.b".into(), 1, d, 0.0),
                ));
                for l in 0..config.encoder_layers {
                    let v = b.encoder_layer(&format!("enc{l}.v"), config.d_ff);
                    let a = b.encoder_layer(&format!("enc{l}.a"), config.d_ff);
                    bmt_encoders.push(BmtEncoderLayer {
                        v,
                        a,
                        v_cross: b.attn(&format!("enc{l}.v_cross")),
                        v_norm_cross: b.norm(&format!("enc{l}.v_norm_cross")),
                        a_cross: b.attn(&format!("enc{l}.a_cross")),
                        a_norm_cross: b.norm(&format!("enc{l}.a_norm_cross")),
                    });
                }
            }
        }
        let embedding = {
            let m = Matrix::random_normal(vocab_len, d, 1.0 / (d as f64).sqrt(), &mut b.rng);
            b.params.push("embedding", m)
        };
        let mut decoders = Vec::new();
        for l in 0..config.decoder_layers {
            let p = format!("dec{l}");
            let self_att = b.attn(&format!("{p}.self"));
            let norm_self = b.norm(&format!("{p}.norm_self"));
            let (cross, bridge) = match config.arch {
                Architecture::Transformer => (vec![b.attn(&format!("{p}.cross"))], None),
                Architecture::Bmt => (
                    vec![b.attn(&format!("{p}.cross_asm")), b.attn(&format!("{p}.cross_visual"))],
                    Some(b.ffn(&format!("{p}.bridge"), 2 * d, config.d_ff)),
                ),
            };
            decoders.push(DecoderLayer {
                self_att,
                norm_self,
                cross,
                bridge,
                norm_cross: b.norm(&format!("{p}.norm_cross")),
                ffn: b.ffn(&format!("{p}.ffn"), d, config.d_ff),
                norm_ffn: b.norm(&format!("{p}.norm_ffn")),
            });
        }
        let generator_w = b.xavier("generator.w".into(), d, vocab_len);
        let generator_b = b.fill("generator.b".into(), 1, vocab_len, 0.0);
        Layout {
            in_visual_w,
            in_visual_b,
            in_asm,
            encoders,
            bmt_encoders,
            embedding,
            decoders,
            generator_w,
            generator_b,
        }
    }
}

/// Encoder output for one video.
#[derive(Debug, Clone, PartialEq)]
pub enum EncodedVideo {
    /// Transformer memory, `n_c × d_model`.
    Single(Matrix),
    /// BMT memories: visual attended by audio/semantic, and the reverse.
    Pair { visual: Matrix, asm: Matrix },
}

/// Attention weights recorded at one site during a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionRecord {
    pub site: String,
    pub head: usize,
    pub weights: Matrix,
}

enum Memory {
    Single(Var),
    Pair { visual: Var, asm: Var },
}

/// One forward pass on a fresh tape.
struct Pass<'a> {
    model: &'a Captioner,
    g: Graph,
    dropout: Option<(f64, ChaCha8Rng)>,
    log: Option<Vec<AttentionRecord>>,
}

impl<'a> Pass<'a> {
    fn new(model: &'a Captioner) -> Self {
        Self {
            model,
            g: Graph::new(),
            dropout: None,
            log: None,
        }
    }

    fn p(&mut self, idx: usize) -> Var {
        self.g.param(&self.model.params, idx)
    }

    fn drop(&mut self, x: Var) -> Var {
        let Some((rate, rng)) = self.dropout.as_mut() else {
            return x;
        };
        if *rate == 0.0 {
            return x;
        }
        let keep = 1.0 / (1.0 - *rate);
        let rate = *rate;
        let n = self.g.value(x).data().len();
        let mask = (0..n)
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        self.g.dropout(x, mask)
    }

    fn linear(&mut self, x: Var, w: usize, b: usize) -> Var {
        let w = self.p(w);
        let b = self.p(b);
        let y = self.g.matmul(x, w);
        self.g.add_row(y, b)
    }

    fn mha(&mut self, q_in: Var, kv_in: Var, idx: &AttnIdx, causal: bool, site: &str) -> Var {
        let heads = self.model.config.heads;
        let d_k = self.model.config.d_k();
        let (wq, wk, wv, wo) = (self.p(idx.wq), self.p(idx.wk), self.p(idx.wv), self.p(idx.wo));
        let q = self.g.matmul(q_in, wq);
        let k = self.g.matmul(kv_in, wk);
        let v = self.g.matmul(kv_in, wv);
        let scale = 1.0 / (d_k as f64).sqrt();
        let mut outs = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = self.g.slice_cols(q, h * d_k, d_k);
            let kh = self.g.slice_cols(k, h * d_k, d_k);
            let vh = self.g.slice_cols(v, h * d_k, d_k);
            let scores = self.g.matmul_t(qh, kh);
            let scores = self.g.scale(scores, scale);
            let weights = if causal {
                self.g.causal_softmax(scores)
            } else {
                self.g.softmax(scores)
            };
            if let Some(log) = self.log.as_mut() {
                log.push(AttentionRecord {
                    site: site.to_string(),
                    head: h,
                    weights: self.g.value(weights).clone(),
                });
            }
            outs.push(self.g.matmul(weights, vh));
        }
        let cat = self.g.concat_cols(&outs);
        self.g.matmul(cat, wo)
    }

    fn ffn(&mut self, x: Var, idx: &FfnIdx) -> Var {
        let h = self.linear(x, idx.w1, idx.b1);
        let h = self.g.relu(h);
        self.linear(h, idx.w2, idx.b2)
    }

    fn residual_norm(&mut self, x: Var, sub: Var, norm: &NormIdx) -> Var {
        let sub = self.drop(sub);
        let sum = self.g.add(x, sub);
        let (gain, bias) = (self.p(norm.gain), self.p(norm.bias));
        self.g.layer_norm(sum, gain, bias, LN_EPS)
    }

    fn embed_stream(&mut self, stack: &FeatureStack, w: usize, b: usize) -> Result<Var> {
        let d = self.model.config.d_model;
        let x = self.g.constant(stack.features().clone());
        let x = self.linear(x, w, b);
        let pe = self.g.constant(positional_encoding_matrix(stack.n_c(), d)?);
        let x = self.g.add(x, pe);
        Ok(self.drop(x))
    }

    fn encoder_layer(&mut self, x: Var, layer: &EncoderLayer, site: &str) -> Var {
        let att = self.mha(x, x, &layer.self_att, false, &format!("{site}.self"));
        let x = self.residual_norm(x, att, &layer.norm_att);
        let f = self.ffn(x, &layer.ffn);
        self.residual_norm(x, f, &layer.norm_ffn)
    }

    fn encode(&mut self, video: &VideoFeatures) -> Result<Memory> {
        let model = self.model;
        let layout = model.layout();
        check_stack(&video.visual, model.config.d_visual)?;
        let mut v = self.embed_stream(&video.visual, layout.in_visual_w, layout.in_visual_b)?;
        match model.config.arch {
            Architecture::Transformer => {
                for (l, layer) in layout.encoders.iter().enumerate() {
                    v = self.encoder_layer(v, layer, &format!("enc{l}"));
                }
                Ok(Memory::Single(v))
            }
            Architecture::Bmt => {
                let asm = video.asm.as_ref().ok_or_else(|| {
                    Error::Data(format!(
                        "bi-modal captioner needs a second stream for {}",
                        video.video_id()
                    ))
                })?;
                if asm.modality() == video.visual.modality() {
                    return Err(Error::Data("bi-modal streams must have distinct modalities".into()));
                }
                check_stack(asm, model.config.d_asm)?;
                let (aw, ab) = layout.in_asm.expect("bmt layout has asm input");
                let mut a = self.embed_stream(asm, aw, ab)?;
                for (l, layer) in layout.bmt_encoders.iter().enumerate() {
                    // self-attention per stream
                    let sv = self.mha(v, v, &layer.v.self_att, false, &format!("enc{l}.v.self"));
                    let v_self = self.residual_norm(v, sv, &layer.v.norm_att);
                    let sa = self.mha(a, a, &layer.a.self_att, false, &format!("enc{l}.a.self"));
                    let a_self = self.residual_norm(a, sa, &layer.a.norm_att);
                    // visual queries attend to asm, and the reverse
                    let cv = self.mha(v_self, a_self, &layer.v_cross, false, &format!("enc{l}.v_cross"));
                    let v_att = self.residual_norm(v_self, cv, &layer.v_norm_cross);
                    let ca = self.mha(a_self, v_self, &layer.a_cross, false, &format!("enc{l}.a_cross"));
                    let a_att = self.residual_norm(a_self, ca, &layer.a_norm_cross);
                    let fv = self.ffn(v_att, &layer.v.ffn);
                    v = self.residual_norm(v_att, fv, &layer.v.norm_ffn);
                    let fa = self.ffn(a_att, &layer.a.ffn);
                    a = self.residual_norm(a_att, fa, &layer.a.norm_ffn);
                }
                Ok(Memory::Pair { visual: v, asm: a })
            }
        }
    }

    fn memory_from(&mut self, enc: &EncodedVideo) -> Result<Memory> {
        match (enc, self.model.config.arch) {
            (EncodedVideo::Single(m), Architecture::Transformer) => Ok(Memory::Single(self.g.constant(m.clone()))),
            (EncodedVideo::Pair { visual, asm }, Architecture::Bmt) => Ok(Memory::Pair {
                visual: self.g.constant(visual.clone()),
                asm: self.g.constant(asm.clone()),
            }),
            _ => Err(Error::Config("encoded video does not match the architecture".into())),
        }
    }

    /// Logits for every prefix position, `len × vocab`.
    fn decode(&mut self, prefix: &[usize], memory: &Memory) -> Result<Var> {
        let model = self.model;
        model.check_prefix(prefix)?;
        let d = model.config.d_model;
        let table = self.p(model.layout().embedding);
        let x = self.g.gather(table, prefix);
        let pe = self.g.constant(positional_encoding_matrix(prefix.len(), d)?);
        let x = self.g.add(x, pe);
        let mut x = self.drop(x);
        for (l, layer) in model.layout().decoders.iter().enumerate() {
            let s = self.mha(x, x, &layer.self_att, true, &format!("dec{l}.self"));
            x = self.residual_norm(x, s, &layer.norm_self);
            let cross = match memory {
                Memory::Single(m) => self.mha(x, *m, &layer.cross[0], false, &format!("dec{l}.cross")),
                Memory::Pair { visual, asm } => {
                    let wa = self.mha(x, *asm, &layer.cross[0], false, &format!("dec{l}.cross_asm"));
                    let wv = self.mha(x, *visual, &layer.cross[1], false, &format!("dec{l}.cross_visual"));
                    let both = self.g.concat_cols(&[wa, wv]);
                    self.ffn(both, layer.bridge.as_ref().expect("bmt decoder has a bridge"))
                }
            };
            x = self.residual_norm(x, cross, &layer.norm_cross);
            let f = self.ffn(x, &layer.ffn);
            x = self.residual_norm(x, f, &layer.norm_ffn);
        }
        Ok(self.linear(x, model.layout().generator_w, model.layout().generator_b))
    }
}

fn check_stack(stack: &FeatureStack, dim: usize) -> Result<()> {
    if stack.dim() != dim {
        return Err(Error::Dimension(format!(
            "{} {} features are {}-dim, model expects {dim}",
            stack.video_id(),
            stack.modality(),
            stack.dim()
        )));
    }
    Ok(())
}

/// Label-smoothed targets for next-token prediction. The true token gets
/// `1 − ε`; the rest is spread evenly over every other non-PAD token.
/// Rows whose target is PAD get weight 0.
pub fn smoothed_targets(targets: &[usize], vocab_len: usize, smoothing: f64) -> (Matrix, Vec<f64>) {
    let mut m = Matrix::zeros(targets.len(), vocab_len);
    let mut weights = vec![0.0; targets.len()];
    let off = if vocab_len > 2 {
        smoothing / (vocab_len - 2) as f64
    } else {
        0.0
    };
    for (r, &t) in targets.iter().enumerate() {
        if t == PAD {
            continue;
        }
        weights[r] = 1.0;
        for (c, v) in m.row_mut(r).iter_mut().enumerate() {
            *v = if c == t {
                1.0 - smoothing
            } else if c == PAD {
                0.0
            } else {
                off
            };
        }
    }
    (m, weights)
}

/// A training pair: features and the caption's token ids (no BOS/EOS).
#[derive(Debug, Clone, PartialEq)]
pub struct CaptionExample {
    pub video: VideoFeatures,
    pub caption: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Captioner {
    config: CaptionerConfig,
    vocab: Vocabulary,
    params: ParamSet,
    #[serde(skip)]
    layout: Option<Layout>,
}

impl Captioner {
    pub fn new(config: CaptionerConfig, vocab: Vocabulary) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        let layout = Layout::build(&config, vocab.len(), &mut params);
        Ok(Self {
            config,
            vocab,
            params,
            layout: Some(layout),
        })
    }

    /// Replaces the parameters, checking names and shapes against a fresh
    /// layout for the same configuration.
    pub fn from_parts(config: CaptionerConfig, vocab: Vocabulary, params: ParamSet) -> Result<Self> {
        let mut model = Self::new(config, vocab)?;
        if params.len() != model.params.len() {
            return Err(Error::Data(format!(
                "model has {} parameter tensors, expected {}",
                params.len(),
                model.params.len()
            )));
        }
        for i in 0..params.len() {
            if params.name(i) != model.params.name(i) || params.get(i).shape() != model.params.get(i).shape() {
                return Err(Error::Data(format!(
                    "parameter {i} is {} {:?}, expected {} {:?}",
                    params.name(i),
                    params.get(i).shape(),
                    model.params.name(i),
                    model.params.get(i).shape()
                )));
            }
        }
        model.params = params;
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let raw: Captioner = serde_json::from_str(&text)?;
        Self::from_parts(raw.config, raw.vocab, raw.params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn config(&self) -> &CaptionerConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn set_dropout(&mut self, rate: f64) -> Result<()> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout {rate} outside [0, 1)")));
        }
        self.config.dropout = rate;
        Ok(())
    }

    fn layout(&self) -> &Layout {
        self.layout.as_ref().expect("layout is rebuilt on construction")
    }

    fn check_prefix(&self, prefix: &[usize]) -> Result<()> {
        if prefix.first() != Some(&BOS) {
            return Err(Error::Data("decoder prefix must start with BOS".into()));
        }
        if let Some(&bad) = prefix.iter().find(|&&t| t >= self.vocab.len()) {
            return Err(Error::Data(format!(
                "token id {bad} outside vocabulary of {}",
                self.vocab.len()
            )));
        }
        Ok(())
    }

    /// Parameters of one multi-head attention block, by name prefix
    /// (e.g. `"enc0.self"`).
    pub fn attention_weights(&self, prefix: &str) -> Result<MultiHeadWeights> {
        let get = |suffix: &str| {
            self.params
                .index_of(&format!("{prefix}.{suffix}"))
                .map(|i| self.params.get(i).clone())
                .ok_or_else(|| Error::Config(format!("no attention block {prefix:?}")))
        };
        MultiHeadWeights::new(self.config.heads, get("wq")?, get("wk")?, get("wv")?, get("wo")?)
    }

    /// Parameters of one feed-forward block, by name prefix.
    pub fn feed_forward_weights(&self, prefix: &str) -> Result<FeedForwardWeights> {
        let get = |suffix: &str| {
            self.params
                .index_of(&format!("{prefix}.{suffix}"))
                .map(|i| self.params.get(i).clone())
                .ok_or_else(|| Error::Config(format!("no feed-forward block {prefix:?}")))
        };
        Ok(FeedForwardWeights {
            w1: get("w1")?,
            b1: get("b1")?.into_data(),
            w2: get("w2")?,
            b2: get("b2")?.into_data(),
        })
    }

    pub fn encode(&self, video: &VideoFeatures) -> Result<EncodedVideo> {
        let mut pass = Pass::new(self);
        Ok(match pass.encode(video)? {
            Memory::Single(v) => EncodedVideo::Single(pass.g.value(v).clone()),
            Memory::Pair { visual, asm } => EncodedVideo::Pair {
                visual: pass.g.value(visual).clone(),
                asm: pass.g.value(asm).clone(),
            },
        })
    }

    /// Transformer encoder output for one visual stack, `n_c × d_model`.
    pub fn transformer_encode(&self, stack: &FeatureStack) -> Result<Matrix> {
        if self.config.arch != Architecture::Transformer {
            return Err(Error::Config("not a Transformer captioner".into()));
        }
        match self.encode(&VideoFeatures::visual(stack.clone()))? {
            EncodedVideo::Single(m) => Ok(m),
            EncodedVideo::Pair { .. } => unreachable!("transformer encodes one stream"),
        }
    }

    /// BMT encoder outputs: visual attended by the second stream
    /// (`n_c_visual × d_model`) and the second stream attended by visual
    /// (`n_c_asm × d_model`).
    pub fn bmt_encode(&self, visual: &FeatureStack, asm: &FeatureStack) -> Result<(Matrix, Matrix)> {
        if self.config.arch != Architecture::Bmt {
            return Err(Error::Config("not a BMT captioner".into()));
        }
        match self.encode(&VideoFeatures::bimodal(visual.clone(), asm.clone()))? {
            EncodedVideo::Pair { visual, asm } => Ok((visual, asm)),
            EncodedVideo::Single(_) => unreachable!("bmt encodes two streams"),
        }
    }

    /// Next-token distributions for every prefix position, `len × vocab`.
    pub fn decode_distributions(&self, prefix: &[usize], encoded: &EncodedVideo) -> Result<Matrix> {
        let mut pass = Pass::new(self);
        let memory = pass.memory_from(encoded)?;
        let logits = pass.decode(prefix, &memory)?;
        Ok(crate::tensor::softmax_rows(pass.g.value(logits), false))
    }

    /// Distribution over the vocabulary for the token after `prefix`.
    pub fn decode_step(&self, prefix: &[usize], encoded: &EncodedVideo) -> Result<Vec<f64>> {
        let probs = self.decode_distributions(prefix, encoded)?;
        Ok(probs.row(probs.rows() - 1).to_vec())
    }

    /// Attention maps of every site for one encode + decode pass.
    pub fn attention_maps(&self, video: &VideoFeatures, prefix: &[usize]) -> Result<Vec<AttentionRecord>> {
        let mut pass = Pass::new(self);
        pass.log = Some(Vec::new());
        let memory = pass.encode(video)?;
        pass.decode(prefix, &memory)?;
        Ok(pass.log.take().unwrap_or_default())
    }

    /// Greedy decoding from BOS until EOS or `max_len` tokens.
    pub fn generate(&self, video: &VideoFeatures, max_len: usize) -> Result<Sentence> {
        Ok(Sentence::new(
            &self.vocab.decode(&self.generate_ids(video, max_len)?),
            Origin::Observer,
        ))
    }

    pub fn generate_ids(&self, video: &VideoFeatures, max_len: usize) -> Result<Vec<usize>> {
        if max_len < 1 {
            return Err(Error::Config("max_len must be at least 1".into()));
        }
        let encoded = self.encode(video)?;
        let mut prefix = vec![BOS];
        let mut out = Vec::new();
        while out.len() < max_len {
            let probs = self.decode_step(&prefix, &encoded)?;
            let next = argmax(&probs);
            if next == EOS {
                break;
            }
            out.push(next);
            prefix.push(next);
        }
        Ok(out)
    }

    fn build_loss(&self, pass: &mut Pass<'_>, batch: &[CaptionExample], smoothing: f64) -> Result<Var> {
        if batch.is_empty() {
            return Err(Error::EmptyInput("empty captioning batch".into()));
        }
        let tokens: usize = batch.iter().map(|ex| ex.caption.len() + 1).sum();
        let weight = 1.0 / tokens as f64;
        let mut total: Option<Var> = None;
        for ex in batch {
            let mut input = Vec::with_capacity(ex.caption.len() + 1);
            input.push(BOS);
            input.extend(&ex.caption);
            let mut target = ex.caption.clone();
            target.push(EOS);
            let memory = pass.encode(&ex.video)?;
            let logits = pass.decode(&input, &memory)?;
            let (targets, mut weights) = smoothed_targets(&target, self.vocab.len(), smoothing);
            weights.iter_mut().for_each(|w| *w *= weight);
            let loss = pass.g.soft_target_loss(logits, targets, weights);
            total = Some(match total {
                Some(t) => pass.g.add(t, loss),
                None => loss,
            });
        }
        Ok(total.expect("non-empty batch"))
    }

    /// Token-averaged KL divergence to the smoothed targets, without dropout.
    pub fn loss(&self, batch: &[CaptionExample], smoothing: f64) -> Result<f64> {
        let mut pass = Pass::new(self);
        let out = self.build_loss(&mut pass, batch, smoothing)?;
        Ok(pass.g.scalar(out))
    }

    /// Loss and gradients. Dropout at the configured rate is applied when
    /// `dropout_seed` is given.
    pub fn loss_and_gradients(
        &self,
        batch: &[CaptionExample],
        smoothing: f64,
        dropout_seed: Option<u64>,
    ) -> Result<(f64, BTreeMap<usize, Matrix>)> {
        let mut pass = Pass::new(self);
        if let Some(seed) = dropout_seed {
            pass.dropout = Some((self.config.dropout, ChaCha8Rng::seed_from_u64(seed)));
        }
        let out = self.build_loss(&mut pass, batch, smoothing)?;
        Ok((pass.g.scalar(out), pass.g.backward(out)))
    }
}

impl PartialEq for Layout {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

/// Index of the largest entry; the first one wins ties.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
