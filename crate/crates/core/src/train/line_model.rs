use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ctc_on_tape, TrainError};
use crate::markup::Token;
use crate::model::{
    Checkpoint, CheckpointError, CheckpointHeader, DocumentModel, Encoder, EncoderOutput, Linear, ModelConfig,
    ModelError, ParamStore, Tape, TensorF, Var,
};

/// Line recogniser for pre-training: the page encoder, a maximum over the
/// feature map height, and a per-column projection to the characters plus
/// a trailing CTC blank.
#[derive(Clone, Debug)]
pub struct LineOcrModel {
    config: ModelConfig,
    alphabet: Vec<char>,
    pub params: ParamStore,
    encoder: Encoder,
    decision: Linear,
}

impl LineOcrModel {
    /// `config.vocab_size` is ignored; the output has one column per
    /// alphabet character plus the blank.
    pub fn new(mut config: ModelConfig, alphabet: Vec<char>, seed: u64) -> Result<Self, ModelError> {
        config.vocab_size = alphabet.len() + 1;
        config.validate()?;
        let mut seen = std::collections::HashSet::new();
        if let Some(c) = alphabet.iter().find(|c| !seen.insert(**c)) {
            return Err(ModelError::InvalidConfig(format!("character {c:?} listed twice")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let encoder = Encoder::new(&config, &mut params, &mut rng);
        let decision = Linear::new(&mut params, "line.decision", config.d_model, alphabet.len() + 1, &mut rng);
        Ok(LineOcrModel {
            config,
            alphabet,
            params,
            encoder,
            decision,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn alphabet(&self) -> &[char] {
        &self.alphabet
    }

    pub fn blank(&self) -> usize {
        self.alphabet.len()
    }

    pub fn labels(&self, text: &str) -> Result<Vec<usize>, TrainError> {
        text.chars()
            .map(|c| self.alphabet.iter().position(|a| *a == c).ok_or(TrainError::UnknownChar(c)))
            .collect()
    }

    fn check(&self, image: &TensorF) -> Result<(), ModelError> {
        let s = image.shape();
        if s.len() != 3 || s[0] != self.config.in_channels {
            return Err(ModelError::ShapeMismatch(format!("image {s:?}")));
        }
        Ok(())
    }

    /// Frame logits (W_f, |A| + 1) on the tape.
    fn frames_on(&self, t: &mut Tape, image: &TensorF, dropout: f64, rng: &mut impl Rng) -> Result<Var, ModelError> {
        self.check(image)?;
        let x = t.leaf(image, false);
        let f = self.encoder.forward(t, &self.params, x, dropout, rng)?;
        let cols = t.max_over_height(f);
        Ok(self.decision.forward(t, &self.params, cols))
    }

    pub fn logits(&self, image: &TensorF) -> Result<TensorF, ModelError> {
        let mut t = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let v = self.frames_on(&mut t, image, 0.0, &mut rng)?;
        Ok(t.tensor(v))
    }

    pub fn encode(&self, image: &TensorF) -> Result<EncoderOutput, ModelError> {
        self.check(image)?;
        let mut t = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = t.leaf(image, false);
        let f = self.encoder.forward(&mut t, &self.params, x, 0.0, &mut rng)?;
        let s = t.shape(f).to_vec();
        let (c, h, w) = (s[0], s[1], s[2]);
        let v = t.value(f);
        let f2d = TensorF::from_fn(vec![h, w, c], |i| v[(i % c) * h * w + i / c]);
        Ok(EncoderOutput { f2d })
    }

    /// Adds the CTC loss gradient of one line to the parameter gradients.
    pub fn accumulate_gradients(
        &mut self,
        image: &TensorF,
        text: &str,
        dropout: f64,
        rng: &mut impl Rng,
    ) -> Result<f64, TrainError> {
        let labels = self.labels(text)?;
        let mut t = Tape::new();
        let logits = self.frames_on(&mut t, image, dropout, rng)?;
        let loss = ctc_on_tape(&mut t, logits, &labels, self.blank())?;
        let grads = t.backward(loss);
        t.accumulate(&grads, &mut self.params);
        Ok(t.value(loss)[0])
    }

    /// Best-path decoding: argmax per frame, repeats merged, blanks dropped.
    pub fn transcribe(&self, image: &TensorF) -> Result<String, ModelError> {
        let logits = self.logits(image)?;
        let classes = self.alphabet.len() + 1;
        let mut out = String::new();
        let mut prev = self.blank();
        for row in logits.data().chunks(classes) {
            let best = row
                .iter()
                .enumerate()
                .fold(0, |b, (i, v)| if *v > row[b] { i } else { b });
            if best != prev && best != self.blank() {
                out.push(self.alphabet[best]);
            }
            prev = best;
        }
        Ok(out)
    }

    pub fn to_checkpoint(&self, meta: serde_json::Value) -> Checkpoint {
        let mut meta = meta;
        if !meta.is_object() {
            meta = serde_json::json!({});
        }
        meta["alphabet"] = serde_json::Value::String(self.alphabet.iter().collect());
        let header = CheckpointHeader {
            kind: "line".into(),
            config: self.config.clone(),
            grammar: String::new(),
            meta,
        };
        Checkpoint::new(header, &self.params)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, CheckpointError> {
        if ck.header.kind != "line" {
            return Err(CheckpointError::Incompatible(format!("a {} model is not a line model", ck.header.kind)));
        }
        let alphabet: Vec<char> = ck.header.meta["alphabet"]
            .as_str()
            .ok_or_else(|| CheckpointError::Corrupt("line checkpoint without alphabet".into()))?
            .chars()
            .collect();
        let incompatible = |e: ModelError| CheckpointError::Incompatible(e.to_string());
        let mut model = LineOcrModel::new(ck.header.config.clone(), alphabet, 0).map_err(incompatible)?;
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
        Ok(model)
    }

    pub(crate) fn decision(&self) -> &Linear {
        &self.decision
    }
}

/// Copies the line model's encoder into `doc`, and its decision columns
/// into the page model's output columns for the same characters. Layout
/// and Eot columns keep their seeded initial values.
pub fn transfer_weights(line: &LineOcrModel, doc: &mut DocumentModel) -> Result<(), ModelError> {
    let prefix = DocumentModel::encoder_prefix();
    let ours = line.params.iter().filter(|(n, _)| n.starts_with(prefix)).count();
    let theirs = doc.params.iter().filter(|(n, _)| n.starts_with(prefix)).count();
    if ours != theirs {
        return Err(ModelError::ShapeMismatch(format!(
            "{ours} encoder tensors in the line model, {theirs} in the page model"
        )));
    }
    for (name, t) in line.params.iter().filter(|(n, _)| n.starts_with(prefix)) {
        doc.params.assign(name, t)?;
    }
    let out = doc.output_layer().clone();
    let (lw, lb) = (line.params.get(line.decision().w).clone(), line.params.get(line.decision().b).clone());
    let d = lw.shape()[0];
    let cols_line = lw.shape()[1];
    let cols_doc = doc.params.get(out.w).shape()[1];
    if doc.params.get(out.w).shape()[0] != d {
        return Err(ModelError::ShapeMismatch(format!(
            "line features have {d} channels, the page decoder {}",
            doc.params.get(out.w).shape()[0]
        )));
    }
    let pairs: Vec<(usize, usize)> = line
        .alphabet()
        .iter()
        .enumerate()
        .filter_map(|(i, &c)| doc.vocab().id(Token::Char(c)).ok().map(|j| (i, j)))
        .collect();
    let w = doc.params.get_mut(out.w).data_mut();
    for r in 0..d {
        for &(i, j) in &pairs {
            w[r * cols_doc + j] = lw.data()[r * cols_line + i];
        }
    }
    let b = doc.params.get_mut(out.b).data_mut();
    for &(i, j) in &pairs {
        b[j] = lb.data()[i];
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_config() -> ModelConfig {
        ModelConfig {
            stride: (4, 2),
            encoder_channels: vec![4, 8],
            ..ModelConfig::tiny(3)
        }
    }

    #[test]
    fn one_frame_per_feature_column() {
        let m = LineOcrModel::new(line_config(), vec!['a', 'b'], 1).unwrap();
        let img = TensorF::from_fn(vec![1, 8, 14], |i| (i % 5) as f64 - 2.0);
        assert_eq!(m.logits(&img).unwrap().shape(), &[7, 3]);
        assert_eq!(m.blank(), 2);
        assert_eq!(m.labels("ba").unwrap(), vec![1, 0]);
        assert_eq!(m.labels("c").unwrap_err(), TrainError::UnknownChar('c'));
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = LineOcrModel::new(line_config(), vec!['x', 'y'], 4).unwrap();
        let mut buf = Vec::new();
        m.to_checkpoint(serde_json::json!({"step": 1})).write_to(&mut buf).unwrap();
        let back = LineOcrModel::from_checkpoint(&Checkpoint::read_from(&mut buf.as_slice()).unwrap()).unwrap();
        assert_eq!(back.alphabet(), m.alphabet());
        let img = TensorF::from_fn(vec![1, 8, 8], |i| (i % 3) as f64);
        let (a, b) = (m.logits(&img).unwrap(), back.logits(&img).unwrap());
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| (x - y).abs() < 1e-5));
    }
}
