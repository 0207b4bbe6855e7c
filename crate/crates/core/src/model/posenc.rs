use super::TensorF;

fn freq(k: usize, d_model: usize) -> f64 {
    1.0 / 10000f64.powf(2.0 * k as f64 / d_model as f64)
}

/// Fixed 2-D encoding of shape (h, w, d_model): the first half of the
/// channels encodes the row, the second half the column.
pub fn pe_2d(h: usize, w: usize, d_model: usize) -> TensorF {
    let half = d_model / 2;
    let mut out = TensorF::zeros(vec![h, w, d_model]);
    let data = out.data_mut();
    for y in 0..h {
        for x in 0..w {
            let base = (y * w + x) * d_model;
            for k in 0..d_model / 4 {
                let f = freq(k, d_model);
                data[base + 2 * k] = (f * y as f64).sin();
                data[base + 2 * k + 1] = (f * y as f64).cos();
                data[base + half + 2 * k] = (f * x as f64).sin();
                data[base + half + 2 * k + 1] = (f * x as f64).cos();
            }
        }
    }
    out
}

/// Sinusoidal encoding of sequence positions, shape (len, d_model).
pub fn pe_1d(len: usize, d_model: usize) -> TensorF {
    let mut out = TensorF::zeros(vec![len, d_model]);
    let data = out.data_mut();
    for i in 0..len {
        for k in 0..d_model / 2 {
            let f = freq(k, d_model);
            data[i * d_model + 2 * k] = (f * i as f64).sin();
            data[i * d_model + 2 * k + 1] = (f * i as f64).cos();
        }
    }
    out
}

/// Row of the flattened sequence holding feature (x, y).
pub fn flat_index(x: usize, y: usize, w_f: usize) -> usize {
    y * w_f + x
}

/// (h, w, c) features plus their 2-D encoding, flattened row by row to
/// (h*w, c).
pub fn flatten_with_pe(f2d: &TensorF) -> TensorF {
    let s = f2d.shape();
    let (h, w, c) = (s[0], s[1], s[2]);
    let pe = pe_2d(h, w, c);
    let data = f2d.data().iter().zip(pe.data()).map(|(a, b)| a + b).collect();
    TensorF::new(vec![h * w, c], data).expect("same size")
}

/// Inverse of the flattening, without positional encoding.
pub fn unflatten(f1d: &TensorF, h: usize, w: usize) -> TensorF {
    let c = f1d.shape()[1];
    TensorF::new(vec![h, w, c], f1d.data().to_vec()).expect("h*w rows")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_values() {
        let pe = pe_2d(3, 4, 8);
        assert_eq!(pe.at3(0, 0, 0), 0.0);
        assert_eq!(pe.at3(0, 0, 1), 1.0);
        assert_eq!(freq(0, 256), 1.0);
        let p = pe_1d(2, 6);
        assert_eq!(p.row(0), &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        assert!(p.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn index_of_flattened_feature() {
        assert_eq!(flat_index(3, 2, 10), 23);
        assert_eq!(flat_index(0, 0, 10), 0);
    }
}
