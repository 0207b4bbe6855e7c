//! Reference computations for the network and training tests.

use docrec::markup::LayoutGrammar;
use docrec::model::{DocumentModel, ModelConfig, ParamStore, TensorF, Vocab};

/// Five characters and three flat classes: |D| = 5 + 6 + 1 = 12.
pub fn tiny_grammar() -> LayoutGrammar {
    LayoutGrammar::parse(
        "[grammar]\nname = tiny\n[classes]\nX - 0 *\nY - 0 *\nZ - 0 *\n[alphabet]\nU+0061..U+0065\n[order]\ntop-bottom-left-right\n",
    )
    .unwrap()
}

pub fn tiny_model(seed: u64, edit: impl FnOnce(&mut ModelConfig)) -> DocumentModel {
    let v = Vocab::from_grammar(&tiny_grammar());
    let mut c = ModelConfig::tiny(v.output_size());
    edit(&mut c);
    DocumentModel::new(c, v, seed).unwrap()
}

/// CTC negative log-likelihood by summing the probability of every frame
/// labelling whose collapse (merge repeats, drop blanks) is `target`.
pub fn ctc_brute(logits: &[f64], frames: usize, classes: usize, target: &[usize], blank: usize) -> f64 {
    let probs: Vec<Vec<f64>> = logits
        .chunks(classes)
        .map(|r| {
            let m = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = r.iter().map(|v| (v - m).exp()).sum();
            r.iter().map(|v| (v - m).exp() / z).collect()
        })
        .collect();
    let mut total = 0.0;
    let mut path = vec![0usize; frames];
    loop {
        let mut collapsed = Vec::new();
        let mut prev = None;
        for &k in &path {
            if Some(k) != prev && k != blank {
                collapsed.push(k);
            }
            prev = Some(k);
        }
        if collapsed == target {
            total += path.iter().enumerate().map(|(t, &k)| probs[t][k]).product::<f64>();
        }
        // Next labelling in lexicographic order.
        let mut i = frames;
        loop {
            if i == 0 {
                return -total.ln();
            }
            i -= 1;
            path[i] += 1;
            if path[i] < classes {
                break;
            }
            path[i] = 0;
        }
    }
}

/// Mean of each non-overlapping 2x2 block of a row-major image.
pub fn box_downscale(data: &[f64], h: usize, w: usize) -> Vec<f64> {
    let (ho, wo) = (h / 2, w / 2);
    let mut out = vec![0.0; ho * wo];
    for y in 0..ho {
        for x in 0..wo {
            out[y * wo + x] = (data[2 * y * w + 2 * x]
                + data[2 * y * w + 2 * x + 1]
                + data[(2 * y + 1) * w + 2 * x]
                + data[(2 * y + 1) * w + 2 * x + 1])
                / 4.0;
        }
    }
    out
}

/// Central-difference gradient of `loss` with respect to every value of
/// every parameter tensor.
pub fn numeric_gradients(
    params: &mut ParamStore,
    h: f64,
    mut loss: impl FnMut(&ParamStore) -> f64,
) -> Vec<(String, Vec<f64>)> {
    let ids: Vec<_> = params.ids().collect();
    let mut out = Vec::new();
    for id in ids {
        let n = params.get(id).len();
        let mut g = vec![0.0; n];
        for (i, gi) in g.iter_mut().enumerate() {
            let orig = params.get(id).data()[i];
            params.get_mut(id).data_mut()[i] = orig + h;
            let up = loss(params);
            params.get_mut(id).data_mut()[i] = orig - h;
            let down = loss(params);
            params.get_mut(id).data_mut()[i] = orig;
            *gi = (up - down) / (2.0 * h);
        }
        out.push((params.name(id).to_string(), g));
    }
    out
}

/// ||a - b|| / max(||b||, 1e-12).
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let n: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    d / n.max(1e-12)
}

pub fn random_tensor(shape: Vec<usize>, rng: &mut impl rand::Rng) -> TensorF {
    TensorF::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}
