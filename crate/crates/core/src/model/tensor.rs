use super::ModelError;

/// Dense row-major array of reals with an optional gradient accumulator.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorF {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl TensorF {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, ModelError> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(ModelError::ShapeMismatch(format!(
                "shape {shape:?} holds {n} values, got {}",
                data.len()
            )));
        }
        Ok(TensorF { shape, data, grad: None })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        TensorF {
            shape,
            data: vec![0.0; n],
            grad: None,
        }
    }

    pub fn filled(shape: Vec<usize>, v: f64) -> Self {
        let n = shape.iter().product();
        TensorF {
            shape,
            data: vec![v; n],
            grad: None,
        }
    }

    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(usize) -> f64) -> Self {
        let n = shape.iter().product();
        TensorF {
            shape,
            data: (0..n).map(&mut f).collect(),
            grad: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Same values under another shape with the same element count.
    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self, ModelError> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(ModelError::ShapeMismatch(format!("cannot view {:?} as {shape:?}", self.shape)));
        }
        self.shape = shape;
        Ok(self)
    }

    /// Element of a 2-D tensor.
    pub fn at2(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.shape[1] + c]
    }

    /// Element of a 3-D tensor.
    pub fn at3(&self, a: usize, b: usize, c: usize) -> f64 {
        self.data[(a * self.shape[1] + b) * self.shape[2] + c]
    }

    /// Row `r` of a tensor seen as (shape[0], rest).
    pub fn row(&self, r: usize) -> &[f64] {
        let w = self.data.len() / self.shape[0].max(1);
        &self.data[r * w..(r + 1) * w]
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> &mut Vec<f64> {
        let n = self.data.len();
        self.grad.get_or_insert_with(|| vec![0.0; n])
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}
