//! Dense feed-forward network with SiLU hidden activations and a linear
//! output layer. Batches are rows of a matrix.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `in x out`
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            w: Array2::zeros((input, output)),
            b: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w.ncols()
    }

    fn len(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Intermediate values of a forward pass, needed by `backward`.
#[derive(Debug, Clone)]
pub struct MlpTape {
    // inputs[l] is the input to layer l
    inputs: Vec<Array2<f64>>,
    // sigmoid of the hidden pre-activations
    sig: Vec<Array2<f64>>,
}

/// Parameter-shaped container, used for gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<Dense>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

impl Mlp {
    /// Uniform fan-in initialization, `U(-1/sqrt(in), 1/sqrt(in))` for
    /// weights and biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|io| {
                let bound = 1.0 / (io[0] as f64).sqrt();
                let mut d = Dense::zeros(io[0], io[1]);
                d.w.mapv_inplace(|_| rng.random_range(-bound..bound));
                d.b.mapv_inplace(|_| rng.random_range(-bound..bound));
                d
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output sizes");
        Self {
            layers: sizes.windows(2).map(|io| Dense::zeros(io[0], io[1])).collect(),
        }
    }

    pub fn from_layers(layers: Vec<Dense>) -> Self {
        assert!(!layers.is_empty());
        for pair in layers.windows(2) {
            assert_eq!(pair[0].output_dim(), pair[1].input_dim());
        }
        Self { layers }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].input_dim()];
        s.extend(self.layers.iter().map(Dense::output_dim));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Dense::len).sum()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let last = self.layers.len() - 1;
        let mut h = x.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.w);
            if l < last {
                z.zip_mut_with(&layer.b, |z, &b| *z = silu(*z + b));
            } else {
                z += &layer.b;
            }
            h = z;
        }
        h
    }

    pub fn forward_tape(&self, x: Array2<f64>) -> (Array2<f64>, MlpTape) {
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut sig = Vec::with_capacity(last);
        let mut h = x;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.w);
            z += &layer.b;
            inputs.push(h);
            if l < last {
                let s = z.mapv(sigmoid);
                z *= &s;
                sig.push(s);
            }
            h = z;
        }
        (h, MlpTape { inputs, sig })
    }

    /// Backpropagates `d_out` (batch x out). Returns parameter gradients
    /// summed over the batch and the gradient w.r.t. the input rows.
    pub fn backward(&self, tape: &MlpTape, d_out: ArrayView2<f64>) -> (MlpGrads, Array2<f64>) {
        let n = self.layers.len();
        let mut grads: Vec<Dense> = Vec::with_capacity(n);
        let mut delta = d_out.to_owned();
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            // `t().dot` may yield column-major output; keep parameters row-major.
            let dw = tape.inputs[l].t().dot(&delta).as_standard_layout().into_owned();
            let db = delta.sum_axis(Axis(0));
            grads.push(Dense { w: dw, b: db });
            let mut d_in = delta.dot(&layer.w.t());
            if l > 0 {
                // silu'(z) = s + a (1 - s) with s = sigmoid(z), a = z s
                ndarray::Zip::from(&mut d_in)
                    .and(&tape.sig[l - 1])
                    .and(&tape.inputs[l])
                    .for_each(|d, &s, &a| *d *= s + a * (1.0 - s));
            }
            delta = d_in;
        }
        grads.reverse();
        (MlpGrads { layers: grads }, delta)
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out
    }

    /// Mutable access to parameter `idx` in `params_flat` order.
    pub fn param_mut(&mut self, mut idx: usize) -> &mut f64 {
        for l in &mut self.layers {
            if idx < l.w.len() {
                let cols = l.w.ncols();
                return &mut l.w[[idx / cols, idx % cols]];
            }
            idx -= l.w.len();
            if idx < l.b.len() {
                return &mut l.b[idx];
            }
            idx -= l.b.len();
        }
        panic!("parameter index out of range");
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.input_dim(), l.output_dim()))
                .collect(),
        }
    }
}

impl MlpGrads {
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.w *= s;
            l.b *= s;
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w += &b.w;
            a.b += &b.b;
        }
    }

    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.w.iter().chain(l.b.iter()).map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }
}
