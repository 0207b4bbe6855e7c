//! Layers of the encoder-decoder, recorded on a [`Tape`].

use std::rc::Rc;

use rand::Rng;

use super::params::{glorot, normal};
use super::{pe_1d, ModelConfig, ModelError, NormPlacement, ParamId, ParamStore, Tape, TensorF, Var};

#[derive(Clone, Debug)]
pub(crate) struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn new(p: &mut ParamStore, name: &str, din: usize, dout: usize, rng: &mut impl Rng) -> Self {
        Linear {
            w: p.add(format!("{name}.weight"), glorot(vec![din, dout], din, dout, rng)),
            b: p.add(format!("{name}.bias"), TensorF::zeros(vec![dout])),
        }
    }

    pub fn forward(&self, t: &mut Tape, p: &ParamStore, x: Var) -> Var {
        let (w, b) = (t.param(p, self.w), t.param(p, self.b));
        let y = t.matmul(x, w);
        t.add_row(y, b)
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Norm {
    pub g: ParamId,
    pub b: ParamId,
}

impl Norm {
    pub fn new(p: &mut ParamStore, name: &str, n: usize) -> Self {
        Norm {
            g: p.add(format!("{name}.gain"), TensorF::filled(vec![n], 1.0)),
            b: p.add(format!("{name}.bias"), TensorF::zeros(vec![n])),
        }
    }

    pub fn layer(&self, t: &mut Tape, p: &ParamStore, x: Var) -> Var {
        let (g, b) = (t.param(p, self.g), t.param(p, self.b));
        t.layer_norm(x, g, b)
    }

    pub fn instance(&self, t: &mut Tape, p: &ParamStore, x: Var) -> Var {
        let (g, b) = (t.param(p, self.g), t.param(p, self.b));
        t.instance_norm(x, g, b)
    }
}

#[derive(Clone, Debug)]
struct ConvLayer {
    w: ParamId,
    b: ParamId,
    stride: (usize, usize),
    /// ReLU, instance normalisation and dropout follow every convolution
    /// but the last.
    norm: Option<Norm>,
}

/// Strided convolution stack: (in_channels, H, W) to (d_model, H/sy, W/sx),
/// sizes rounded up.
#[derive(Clone, Debug)]
pub(crate) struct Encoder {
    convs: Vec<ConvLayer>,
    stride: (usize, usize),
}

impl Encoder {
    pub fn new(cfg: &ModelConfig, p: &mut ParamStore, rng: &mut impl Rng) -> Self {
        let mut convs = Vec::new();
        let mut cin = cfg.in_channels;
        let total = cfg.blocks() * cfg.convs_per_block;
        for (i, &cout) in cfg.encoder_channels.iter().enumerate() {
            for j in 0..cfg.convs_per_block {
                let name = format!("encoder.block{i}.conv{j}");
                let fan_in = cin * 9;
                let w = p.add(format!("{name}.weight"), normal(vec![cout, fan_in], (2.0 / fan_in as f64).sqrt(), rng));
                let b = p.add(format!("{name}.bias"), TensorF::zeros(vec![cout]));
                let last = convs.len() + 1 == total;
                convs.push(ConvLayer {
                    w,
                    b,
                    stride: if j == 0 { cfg.block_stride(i) } else { (1, 1) },
                    norm: (!last).then(|| Norm::new(p, &format!("encoder.block{i}.norm{j}"), cout)),
                });
                cin = cout;
            }
        }
        Encoder {
            convs,
            stride: cfg.stride,
        }
    }

    /// `x` is (channels, H, W); returns (d_model, H_f, W_f).
    pub fn forward(&self, t: &mut Tape, p: &ParamStore, x: Var, dropout: f64, rng: &mut impl Rng) -> Result<Var, ModelError> {
        let s = t.shape(x);
        if s[1] < self.stride.0 || s[2] < self.stride.1 {
            return Err(ModelError::InputTooSmall {
                height: s[1],
                width: s[2],
                min_height: self.stride.0,
                min_width: self.stride.1,
            });
        }
        let mut h = x;
        for c in &self.convs {
            let (w, b) = (t.param(p, c.w), t.param(p, c.b));
            h = t.conv2d(h, w, b, 3, c.stride, 1);
            if let Some(n) = &c.norm {
                h = t.relu(h);
                h = n.instance(t, p, h);
                h = t.dropout(h, dropout, rng);
            }
        }
        Ok(h)
    }

    pub fn param_prefix() -> &'static str {
        "encoder."
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Attention {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
}

/// Scaled dot-product attention over `heads` column groups of already
/// projected queries (tq, d), keys and values (tk, d). Returns the
/// concatenated head outputs (tq, d) and the (tq, tk) weights per head.
pub fn multi_head_attention(
    t: &mut Tape,
    q: Var,
    k: Var,
    v: Var,
    heads: usize,
    allowed: Option<Rc<Vec<bool>>>,
) -> Result<(Var, Vec<Var>), ModelError> {
    let (tq, d) = (t.shape(q)[0], t.shape(q)[1]);
    let tk = t.shape(k)[0];
    if t.shape(k)[1] != d || t.shape(v) != t.shape(k) || heads == 0 || d % heads != 0 {
        return Err(ModelError::ShapeMismatch(format!(
            "attention q {:?}, k {:?}, v {:?}, {heads} heads",
            t.shape(q),
            t.shape(k),
            t.shape(v)
        )));
    }
    if allowed.as_ref().is_some_and(|a| a.len() != tq * tk) {
        return Err(ModelError::ShapeMismatch("mask size".into()));
    }
    let dk = d / heads;
    let mut outs = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let (qh, kh, vh) = (t.cols(q, h * dk, dk), t.cols(k, h * dk, dk), t.cols(v, h * dk, dk));
        let s = t.matmul_t(qh, kh, false, true);
        let s = t.scale(s, 1.0 / (dk as f64).sqrt());
        let w = t.softmax(s, allowed.clone())?;
        outs.push(t.matmul(w, vh));
        weights.push(w);
    }
    let out = if heads == 1 { outs[0] } else { t.concat_cols(&outs) };
    Ok((out, weights))
}

impl Attention {
    fn new(p: &mut ParamStore, name: &str, d: usize, rng: &mut impl Rng) -> Self {
        Attention {
            q: Linear::new(p, &format!("{name}.q"), d, d, rng),
            k: Linear::new(p, &format!("{name}.k"), d, d, rng),
            v: Linear::new(p, &format!("{name}.v"), d, d, rng),
            o: Linear::new(p, &format!("{name}.o"), d, d, rng),
        }
    }

    fn forward(
        &self,
        t: &mut Tape,
        p: &ParamStore,
        x: Var,
        mem: Var,
        heads: usize,
        allowed: Option<Rc<Vec<bool>>>,
    ) -> Result<(Var, Vec<Var>), ModelError> {
        let q = self.q.forward(t, p, x);
        let k = self.k.forward(t, p, mem);
        let v = self.v.forward(t, p, mem);
        let (a, w) = multi_head_attention(t, q, k, v, heads, allowed)?;
        Ok((self.o.forward(t, p, a), w))
    }
}

#[derive(Clone, Debug)]
struct DecoderLayer {
    self_attn: Attention,
    mutual: Attention,
    ff1: Linear,
    ff2: Linear,
    norms: [Norm; 3],
}

#[derive(Clone, Debug)]
pub(crate) struct Decoder {
    embedding: ParamId,
    layers: Vec<DecoderLayer>,
    final_norm: Option<Norm>,
    pub out: Linear,
}

/// Self-attention mask: query `i` sees keys `j` with `i - window < j <= i`.
pub fn causal_window_mask(len: usize, window: usize) -> Vec<bool> {
    let mut m = vec![false; len * len];
    for i in 0..len {
        for j in i.saturating_sub(window - 1)..=i {
            m[i * len + j] = true;
        }
    }
    m
}

pub(crate) struct DecoderPass {
    pub logits: Var,
}

impl Decoder {
    pub fn new(cfg: &ModelConfig, input_size: usize, p: &mut ParamStore, rng: &mut impl Rng) -> Self {
        let d = cfg.d_model;
        let embedding = p.add("decoder.embedding", normal(vec![input_size, d], 1.0, rng));
        let layers = (0..cfg.layers)
            .map(|l| {
                let n = format!("decoder.layer{l}");
                DecoderLayer {
                    self_attn: Attention::new(p, &format!("{n}.self"), d, rng),
                    mutual: Attention::new(p, &format!("{n}.mutual"), d, rng),
                    ff1: Linear::new(p, &format!("{n}.ff1"), d, cfg.ff_dim, rng),
                    ff2: Linear::new(p, &format!("{n}.ff2"), cfg.ff_dim, d, rng),
                    norms: [1, 2, 3].map(|k| Norm::new(p, &format!("{n}.norm{k}"), d)),
                }
            })
            .collect();
        let final_norm = (cfg.norm == NormPlacement::Pre).then(|| Norm::new(p, "decoder.final_norm", d));
        let out = Linear::new(p, "decoder.out", d, cfg.vocab_size, rng);
        Decoder {
            embedding,
            layers,
            final_norm,
            out,
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn forward(
        &self,
        cfg: &ModelConfig,
        t: &mut Tape,
        p: &ParamStore,
        ids: &[usize],
        f1d: Var,
        dropout: f64,
        rng: &mut impl Rng,
    ) -> Result<DecoderPass, ModelError> {
        let n = ids.len();
        if n > cfg.l_max {
            return Err(ModelError::PrefixTooLong { len: n, max: cfg.l_max });
        }
        let rows = p.get(self.embedding).shape()[0];
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(ModelError::UnknownTokenId(bad));
        }
        let d = cfg.d_model;
        let table = t.param(p, self.embedding);
        let e = t.embedding(table, ids);
        let pe = t.constant(vec![n, d], pe_1d(n, d).into_data());
        let mut x = t.add(e, pe);
        let mask = Rc::new(causal_window_mask(n, cfg.window));
        let post = cfg.norm == NormPlacement::Post;
        for layer in &self.layers {
            // Self-attention.
            let inp = if post { x } else { layer.norms[0].layer(t, p, x) };
            let (a, _) = layer.self_attn.forward(t, p, inp, inp, cfg.heads, Some(mask.clone()))?;
            let a = t.dropout(a, dropout, rng);
            x = t.add(x, a);
            if post {
                x = layer.norms[0].layer(t, p, x);
            }
            // Mutual attention over the image features.
            let inp = if post { x } else { layer.norms[1].layer(t, p, x) };
            let (a, _) = layer.mutual.forward(t, p, inp, f1d, cfg.heads, None)?;
            let a = t.dropout(a, dropout, rng);
            x = t.add(x, a);
            if post {
                x = layer.norms[1].layer(t, p, x);
            }
            // Feed-forward.
            let inp = if post { x } else { layer.norms[2].layer(t, p, x) };
            let h = layer.ff1.forward(t, p, inp);
            let h = t.relu(h);
            let h = layer.ff2.forward(t, p, h);
            let h = t.dropout(h, dropout, rng);
            x = t.add(x, h);
            if post {
                x = layer.norms[2].layer(t, p, x);
            }
        }
        if let Some(n) = &self.final_norm {
            x = n.layer(t, p, x);
        }
        let logits = self.out.forward(t, p, x);
        Ok(DecoderPass { logits })
    }

    pub(crate) fn plain(&self) -> PlainDecoder<'_> {
        PlainDecoder { dec: self }
    }
}

/// Parameter handles for the cached step-by-step decoder.
pub(crate) struct PlainDecoder<'a> {
    dec: &'a Decoder,
}

pub(crate) struct LayerRefs<'a> {
    pub self_attn: [&'a Linear; 4],
    pub mutual: [&'a Linear; 4],
    pub ff1: &'a Linear,
    pub ff2: &'a Linear,
    pub norms: [&'a Norm; 3],
}

impl<'a> PlainDecoder<'a> {
    pub fn embedding(&self) -> ParamId {
        self.dec.embedding
    }

    pub fn layers(&self) -> impl Iterator<Item = LayerRefs<'a>> + 'a {
        self.dec.layers.iter().map(|l| LayerRefs {
            self_attn: [&l.self_attn.q, &l.self_attn.k, &l.self_attn.v, &l.self_attn.o],
            mutual: [&l.mutual.q, &l.mutual.k, &l.mutual.v, &l.mutual.o],
            ff1: &l.ff1,
            ff2: &l.ff2,
            norms: [&l.norms[0], &l.norms[1], &l.norms[2]],
        })
    }

    pub fn final_norm(&self) -> Option<&'a Norm> {
        self.dec.final_norm.as_ref()
    }

    pub fn out(&self) -> &'a Linear {
        &self.dec.out
    }
}
