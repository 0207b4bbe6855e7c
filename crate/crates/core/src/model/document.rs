use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::network::{Decoder, Encoder, Linear, Norm};
use super::tape::{matmul, softmax_rows};
use super::{
    pe_1d, pe_2d, Checkpoint, CheckpointError, CheckpointHeader, ModelConfig, ModelError, NormPlacement, ParamStore,
    Tape, TensorF, Var, Vocab,
};
use crate::markup::{LayoutGrammar, TokenSequence};

/// Encoder features, shape (H_f, W_f, C_f).
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderOutput {
    pub f2d: TensorF,
}

impl EncoderOutput {
    pub fn height(&self) -> usize {
        self.f2d.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.f2d.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.f2d.shape()[2]
    }
}

/// Result of step-by-step decoding.
#[derive(Clone, Debug)]
pub struct DecoderState {
    /// Flattened features with positional encoding, (H_f*W_f, d_model).
    pub f1d: TensorF,
    pub feature_shape: (usize, usize),
    /// Sot followed by every emitted token id, the final Eot excluded.
    pub emitted: Vec<usize>,
    /// Next-token distribution of every step, the Eot step included.
    pub probs: Vec<Vec<f64>>,
    /// Last layer mutual attention of every step, averaged over heads,
    /// shape (H_f, W_f).
    pub attention: Vec<TensorF>,
}

impl DecoderState {
    pub fn transcript(&self, vocab: &Vocab) -> TokenSequence {
        vocab.decode(&self.emitted).expect("ids come from the vocabulary")
    }

    /// Probability the model gave to each emitted token.
    pub fn token_probabilities(&self) -> Vec<f64> {
        self.emitted[1..].iter().zip(&self.probs).map(|(&id, p)| p[id]).collect()
    }
}

/// Training-time noise levels for one update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOptions {
    pub encoder_dropout: f64,
    pub decoder_dropout: f64,
    /// Share of teacher-forced input tokens replaced at random.
    pub error_rate: f64,
}

impl StepOptions {
    pub fn clean() -> Self {
        StepOptions {
            encoder_dropout: 0.0,
            decoder_dropout: 0.0,
            error_rate: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DecodeOptions {
    /// Step cap; the model's l_max when `None`.
    pub max_steps: Option<usize>,
    /// Never pick Eot (decoding then always runs to the cap).
    pub suppress_eot: bool,
}

/// Replaces each token, independently with probability `rate`, by a token
/// drawn uniformly among characters and layout tokens.
pub fn inject_errors(gt: &TokenSequence, rate: f64, vocab: &Vocab, rng: &mut impl Rng) -> TokenSequence {
    let n = vocab.eot();
    let out = gt
        .iter()
        .map(|&t| {
            if rng.gen::<f64>() < rate {
                vocab.token(rng.gen_range(0..n)).expect("id below eot")
            } else {
                t
            }
        })
        .collect();
    TokenSequence::new(out).expect("no sentinels drawn")
}

/// Summed cross-entropy of `logits` (one row per target step) against the
/// transcript followed by Eot.
pub fn sequence_loss(logits: &TensorF, target: &TokenSequence, vocab: &Vocab) -> Result<f64, ModelError> {
    let ids = vocab.targets(target)?;
    let s = logits.shape();
    if s.len() != 2 || s[0] != ids.len() || s[1] != vocab.output_size() {
        return Err(ModelError::ShapeMismatch(format!(
            "logits {s:?} for {} targets over {} tokens",
            ids.len(),
            vocab.output_size()
        )));
    }
    let mut t = Tape::new();
    let l = t.leaf(logits, false);
    let loss = t.cross_entropy(l, &ids)?;
    Ok(t.value(loss)[0])
}

/// Image encoder plus autoregressive token decoder.
#[derive(Clone, Debug)]
pub struct DocumentModel {
    config: ModelConfig,
    vocab: Vocab,
    pub params: ParamStore,
    encoder: Encoder,
    decoder: Decoder,
}

impl DocumentModel {
    pub fn new(config: ModelConfig, vocab: Vocab, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        if config.vocab_size != vocab.output_size() {
            return Err(ModelError::InvalidConfig(format!(
                "vocab_size {} but the vocabulary has {} tokens",
                config.vocab_size,
                vocab.output_size()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let encoder = Encoder::new(&config, &mut params, &mut rng);
        let decoder = Decoder::new(&config, vocab.input_size(), &mut params, &mut rng);
        Ok(DocumentModel {
            config,
            vocab,
            params,
            encoder,
            decoder,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn check_image(&self, image: &TensorF) -> Result<(), ModelError> {
        let s = image.shape();
        if s.len() != 3 || s[0] != self.config.in_channels {
            return Err(ModelError::ShapeMismatch(format!(
                "image {s:?}, expected ({}, H, W)",
                self.config.in_channels
            )));
        }
        Ok(())
    }

    /// Encoder on the tape: (d_model, H_f, W_f).
    pub(crate) fn encode_on(&self, t: &mut Tape, image: &TensorF, dropout: f64, rng: &mut impl Rng) -> Result<Var, ModelError> {
        self.check_image(image)?;
        let x = t.leaf(image, false);
        self.encoder.forward(t, &self.params, x, dropout, rng)
    }

    /// Flattened features with 2-D positional encoding: (H_f*W_f, d_model).
    pub(crate) fn flatten_on(&self, t: &mut Tape, f: Var) -> Var {
        let s = t.shape(f).to_vec();
        let (c, h, w) = (s[0], s[1], s[2]);
        let f = t.reshape(f, vec![c, h * w]);
        let f = t.transpose(f);
        let pe = t.constant(vec![h * w, c], pe_2d(h, w, c).into_data());
        t.add(f, pe)
    }

    pub fn encode(&self, image: &TensorF) -> Result<EncoderOutput, ModelError> {
        let mut t = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f = self.encode_on(&mut t, image, 0.0, &mut rng)?;
        let s = t.shape(f).to_vec();
        let (c, h, w) = (s[0], s[1], s[2]);
        let v = t.value(f);
        let f2d = TensorF::from_fn(vec![h, w, c], |i| {
            let (pos, ch) = (i / c, i % c);
            v[ch * h * w + pos]
        });
        Ok(EncoderOutput { f2d })
    }

    /// Teacher-forced logits, one row per input id, without dropout.
    pub fn logits(&self, image: &TensorF, input_ids: &[usize]) -> Result<TensorF, ModelError> {
        let mut t = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f = self.encode_on(&mut t, image, 0.0, &mut rng)?;
        let f1d = self.flatten_on(&mut t, f);
        let pass = self.decoder.forward(&self.config, &mut t, &self.params, input_ids, f1d, 0.0, &mut rng)?;
        Ok(t.tensor(pass.logits))
    }

    /// Teacher-forced logits from precomputed flattened features.
    pub fn logits_from_features(&self, f1d: &TensorF, input_ids: &[usize]) -> Result<TensorF, ModelError> {
        let mut t = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f = t.leaf(f1d, false);
        let pass = self.decoder.forward(&self.config, &mut t, &self.params, input_ids, f, 0.0, &mut rng)?;
        Ok(t.tensor(pass.logits))
    }

    /// One teacher-forced pass: adds the loss gradient to the parameter
    /// gradients and returns the loss.
    pub fn accumulate_gradients(
        &mut self,
        image: &TensorF,
        gt: &TokenSequence,
        opts: &StepOptions,
        rng: &mut impl Rng,
    ) -> Result<f64, ModelError> {
        let input_seq = if opts.error_rate > 0.0 {
            inject_errors(gt, opts.error_rate, &self.vocab, rng)
        } else {
            gt.clone()
        };
        let inputs = self.vocab.decoder_input(&input_seq)?;
        let targets = self.vocab.targets(gt)?;
        let mut t = Tape::new();
        let f = self.encode_on(&mut t, image, opts.encoder_dropout, rng)?;
        let f1d = self.flatten_on(&mut t, f);
        let pass = self
            .decoder
            .forward(&self.config, &mut t, &self.params, &inputs, f1d, opts.decoder_dropout, rng)?;
        let loss = t.cross_entropy(pass.logits, &targets)?;
        let grads = t.backward(loss);
        t.accumulate(&grads, &mut self.params);
        Ok(t.value(loss)[0])
    }

    /// Greedy decoding from an image.
    pub fn decode(&self, image: &TensorF, opts: &DecodeOptions) -> Result<DecoderState, ModelError> {
        let mut t = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f = self.encode_on(&mut t, image, 0.0, &mut rng)?;
        let (h, w) = (t.shape(f)[1], t.shape(f)[2]);
        let f1d = self.flatten_on(&mut t, f);
        Ok(self.decode_features(t.tensor(f1d), (h, w), opts))
    }

    /// Greedy decoding with cached keys and values: each step only runs
    /// the newest position through the decoder.
    pub fn decode_features(&self, f1d: TensorF, feature_shape: (usize, usize), opts: &DecodeOptions) -> DecoderState {
        let cfg = &self.config;
        let p = &self.params;
        let d = cfg.d_model;
        let dk = d / cfg.heads;
        let src = f1d.shape()[0];
        let plain = self.decoder.plain();
        let layers: Vec<_> = plain.layers().collect();
        let mem: Vec<(Vec<f64>, Vec<f64>)> = layers
            .iter()
            .map(|l| (lin(f1d.data(), src, l.mutual[1], p), lin(f1d.data(), src, l.mutual[2], p)))
            .collect();
        let mut cache: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); layers.len()];
        let max_steps = opts.max_steps.unwrap_or(cfg.l_max).min(cfg.l_max);
        let emb = p.get(plain.embedding());
        let pe = pe_1d(max_steps.max(1), d);
        let post = cfg.norm == NormPlacement::Post;
        let mut state = DecoderState {
            f1d: f1d.clone(),
            feature_shape,
            emitted: vec![self.vocab.sot()],
            probs: Vec::new(),
            attention: Vec::new(),
        };
        for pos in 0..max_steps {
            let tok = *state.emitted.last().unwrap();
            let mut x: Vec<f64> = emb.row(tok).iter().zip(pe.row(pos)).map(|(a, b)| a + b).collect();
            let mut last_map = vec![0.0; src];
            for (li, l) in layers.iter().enumerate() {
                let inp = if post { x.clone() } else { norm(&x, l.norms[0], p) };
                let q = lin(&inp, 1, l.self_attn[0], p);
                cache[li].0.extend(lin(&inp, 1, l.self_attn[1], p));
                cache[li].1.extend(lin(&inp, 1, l.self_attn[2], p));
                let first = (pos + 1).saturating_sub(cfg.window);
                let (a, _) = attend(&q, &cache[li].0, &cache[li].1, first, pos + 1, cfg.heads, dk);
                let a = lin(&a, 1, l.self_attn[3], p);
                x.iter_mut().zip(&a).for_each(|(u, v)| *u += v);
                if post {
                    x = norm(&x, l.norms[0], p);
                }

                let inp = if post { x.clone() } else { norm(&x, l.norms[1], p) };
                let q = lin(&inp, 1, l.mutual[0], p);
                let (a, wts) = attend(&q, &mem[li].0, &mem[li].1, 0, src, cfg.heads, dk);
                if li + 1 == layers.len() {
                    last_map = wts;
                }
                let a = lin(&a, 1, l.mutual[3], p);
                x.iter_mut().zip(&a).for_each(|(u, v)| *u += v);
                if post {
                    x = norm(&x, l.norms[1], p);
                }

                let inp = if post { x.clone() } else { norm(&x, l.norms[2], p) };
                let mut h = lin(&inp, 1, l.ff1, p);
                h.iter_mut().for_each(|v| *v = v.max(0.0));
                let h = lin(&h, 1, l.ff2, p);
                x.iter_mut().zip(&h).for_each(|(u, v)| *u += v);
                if post {
                    x = norm(&x, l.norms[2], p);
                }
            }
            if let Some(n) = plain.final_norm() {
                x = norm(&x, n, p);
            }
            let mut probs = lin(&x, 1, plain.out(), p);
            let n = probs.len();
            softmax_rows(&mut probs, n, None).expect("nothing masked");
            let eot = self.vocab.eot();
            let mut best = None;
            for (i, &v) in probs.iter().enumerate() {
                if opts.suppress_eot && i == eot {
                    continue;
                }
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((i, v));
                }
            }
            let choice = best.map_or(eot, |(i, _)| i);
            state.probs.push(probs);
            state
                .attention
                .push(TensorF::new(vec![feature_shape.0, feature_shape.1], last_map).expect("one weight per feature"));
            if choice == eot {
                break;
            }
            state.emitted.push(choice);
        }
        state
    }

    pub(crate) fn encoder_prefix() -> &'static str {
        Encoder::param_prefix()
    }

    pub(crate) fn output_layer(&self) -> &Linear {
        &self.decoder.out
    }

    pub fn to_checkpoint(&self, grammar: &LayoutGrammar, meta: serde_json::Value) -> Checkpoint {
        let header = CheckpointHeader {
            kind: "document".into(),
            config: self.config.clone(),
            grammar: grammar.to_text(),
            meta,
        };
        Checkpoint::new(header, &self.params)
    }

    /// Model and grammar stored in a checkpoint.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Self, LayoutGrammar), CheckpointError> {
        if ck.header.kind != "document" {
            return Err(CheckpointError::Incompatible(format!("a {} model is not a page model", ck.header.kind)));
        }
        let grammar = LayoutGrammar::parse(&ck.header.grammar).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        let vocab = Vocab::from_grammar(&grammar);
        let incompatible = |e: ModelError| CheckpointError::Incompatible(e.to_string());
        let mut model = DocumentModel::new(ck.header.config.clone(), vocab, 0).map_err(incompatible)?;
        if ck.tensors.len() != model.params.len() {
            return Err(CheckpointError::Incompatible(format!(
                "{} stored tensors, the model has {}",
                ck.tensors.len(),
                model.params.len()
            )));
        }
        for (name, t) in &ck.tensors {
            model.params.assign(name, t).map_err(incompatible)?;
        }
        Ok((model, grammar))
    }
}

fn lin(x: &[f64], rows: usize, l: &Linear, p: &ParamStore) -> Vec<f64> {
    let w = p.get(l.w);
    let (din, dout) = (w.shape()[0], w.shape()[1]);
    let mut y = matmul(x, w.data(), rows, din, dout);
    let b = p.get(l.b).data();
    for r in y.chunks_mut(dout) {
        r.iter_mut().zip(b).for_each(|(u, v)| *u += v);
    }
    y
}

fn norm(x: &[f64], n: &Norm, p: &ParamStore) -> Vec<f64> {
    let (g, b) = (p.get(n.g).data(), p.get(n.b).data());
    let w = x.len() as f64;
    let mean = x.iter().sum::<f64>() / w;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / w;
    let is = 1.0 / (var + 1e-5).sqrt();
    x.iter().enumerate().map(|(i, v)| (v - mean) * is * g[i] + b[i]).collect()
}

/// One query row against key/value rows `from..to`. Returns the head
/// outputs side by side and the head-averaged weights over all rows
/// (zero outside the range).
fn attend(q: &[f64], k: &[f64], v: &[f64], from: usize, to: usize, heads: usize, dk: usize) -> (Vec<f64>, Vec<f64>) {
    let d = heads * dk;
    let rows = k.len() / d;
    let mut out = vec![0.0; d];
    let mut avg = vec![0.0; rows];
    let scale = 1.0 / (dk as f64).sqrt();
    for h in 0..heads {
        let qh = &q[h * dk..(h + 1) * dk];
        let mut s: Vec<f64> = (from..to)
            .map(|j| qh.iter().zip(&k[j * d + h * dk..j * d + (h + 1) * dk]).map(|(a, b)| a * b).sum::<f64>() * scale)
            .collect();
        let n = s.len();
        softmax_rows(&mut s, n, None).expect("non-empty range");
        for (w, j) in s.iter().zip(from..to) {
            avg[j] += w / heads as f64;
            for c in 0..dk {
                out[h * dk + c] += w * v[j * d + h * dk + c];
            }
        }
    }
    (out, avg)
}
