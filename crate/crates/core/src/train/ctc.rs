use super::TrainError;
use crate::model::{Tape, Var};

fn lse2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn log_softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    row.iter().map(|v| v - z).collect()
}

/// Fewest frames that can emit `target`: one per label plus a blank
/// between each pair of equal neighbours.
pub fn ctc_min_frames(target: &[usize]) -> usize {
    target.len() + target.windows(2).filter(|w| w[0] == w[1]).count()
}

/// Negative log-likelihood of `target` under CTC for unnormalised
/// `logits` of shape (frames, classes), and its gradient with respect to
/// the logits.
pub fn ctc_loss(
    logits: &[f64],
    frames: usize,
    classes: usize,
    target: &[usize],
    blank: usize,
) -> Result<(f64, Vec<f64>), TrainError> {
    if logits.len() != frames * classes || blank >= classes {
        return Err(TrainError::InvalidConfig(format!(
            "{} logits for {frames} frames of {classes} classes, blank {blank}",
            logits.len()
        )));
    }
    if let Some(&bad) = target.iter().find(|&&l| l >= classes || l == blank) {
        return Err(TrainError::InvalidLabel(bad));
    }
    let need = ctc_min_frames(target);
    if frames == 0 || need > frames {
        return Err(TrainError::TargetTooLong { target: need, frames });
    }
    let lp: Vec<Vec<f64>> = logits.chunks(classes).map(log_softmax).collect();
    let ext: Vec<usize> = (0..2 * target.len() + 1)
        .map(|s| if s % 2 == 0 { blank } else { target[s / 2] })
        .collect();
    let n = ext.len();
    let skip = |s: usize| s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];
    let ninf = f64::NEG_INFINITY;

    let mut alpha = vec![vec![ninf; n]; frames];
    alpha[0][0] = lp[0][blank];
    if n > 1 {
        alpha[0][1] = lp[0][ext[1]];
    }
    for t in 1..frames {
        for s in 0..n {
            let mut a = alpha[t - 1][s];
            if s >= 1 {
                a = lse2(a, alpha[t - 1][s - 1]);
            }
            if skip(s) {
                a = lse2(a, alpha[t - 1][s - 2]);
            }
            alpha[t][s] = a + lp[t][ext[s]];
        }
    }
    let log_p = if n > 1 {
        lse2(alpha[frames - 1][n - 1], alpha[frames - 1][n - 2])
    } else {
        alpha[frames - 1][0]
    };

    // beta[t][s]: log probability of the frames after t given state s at t.
    let mut beta = vec![vec![ninf; n]; frames];
    beta[frames - 1][n - 1] = 0.0;
    if n > 1 {
        beta[frames - 1][n - 2] = 0.0;
    }
    for t in (0..frames - 1).rev() {
        for s in 0..n {
            let mut b = beta[t + 1][s] + lp[t + 1][ext[s]];
            if s + 1 < n {
                b = lse2(b, beta[t + 1][s + 1] + lp[t + 1][ext[s + 1]]);
            }
            if s + 2 < n && skip(s + 2) {
                b = lse2(b, beta[t + 1][s + 2] + lp[t + 1][ext[s + 2]]);
            }
            beta[t][s] = b;
        }
    }

    let mut grad = vec![0.0; frames * classes];
    for t in 0..frames {
        let g = &mut grad[t * classes..(t + 1) * classes];
        for (k, v) in g.iter_mut().enumerate() {
            *v = lp[t][k].exp();
        }
        for s in 0..n {
            let occ = alpha[t][s] + beta[t][s] - log_p;
            if occ > ninf {
                g[ext[s]] -= occ.exp();
            }
        }
    }
    Ok((-log_p, grad))
}

/// CTC loss of the (frames, classes) logits node as a tape scalar.
pub fn ctc_on_tape(t: &mut Tape, logits: Var, target: &[usize], blank: usize) -> Result<Var, TrainError> {
    let s = t.shape(logits).to_vec();
    let (loss, grad) = ctc_loss(t.value(logits), s[0], s[1], target, blank)?;
    Ok(t.external_loss(logits, loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_frame_single_label() {
        let (loss, _) = ctc_loss(&[0.0, 0.0], 1, 2, &[0], 1).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn empty_target_is_all_blanks() {
        let logits = [0.3, -0.2, 1.0, 0.5];
        let (loss, _) = ctc_loss(&logits, 2, 2, &[], 1).unwrap();
        let p: f64 = logits
            .chunks(2)
            .map(|r| r[1].exp() / (r[0].exp() + r[1].exp()))
            .product();
        assert!((loss + p.ln()).abs() < 1e-12);
    }

    #[test]
    fn repeated_labels_need_a_separator() {
        assert_eq!(ctc_min_frames(&[0, 0, 1]), 4);
        assert_eq!(
            ctc_loss(&[0.0; 9], 3, 3, &[0, 0, 1], 2).unwrap_err(),
            TrainError::TargetTooLong { target: 4, frames: 3 }
        );
        assert_eq!(ctc_loss(&[0.0; 6], 3, 2, &[1], 1).unwrap_err(), TrainError::InvalidLabel(1));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let logits: Vec<f64> = (0..5 * 4).map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0).collect();
        let target = [0, 2, 2];
        let (_, grad) = ctc_loss(&logits, 5, 4, &target, 3).unwrap();
        let h = 1e-6;
        let num: Vec<f64> = (0..logits.len())
            .map(|i| {
                let mut a = logits.clone();
                a[i] += h;
                let mut b = logits.clone();
                b[i] -= h;
                (ctc_loss(&a, 5, 4, &target, 3).unwrap().0 - ctc_loss(&b, 5, 4, &target, 3).unwrap().0) / (2.0 * h)
            })
            .collect();
        let diff: f64 = grad.iter().zip(&num).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale: f64 = num.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(diff / scale < 1e-6, "{diff} / {scale}");
    }
}
