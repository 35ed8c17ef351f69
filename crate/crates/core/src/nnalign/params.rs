//! Flat parameter storage with named tensors, plus a row-major dense layer.

use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// All model parameters in one contiguous buffer. Gradients use the same layout.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    entries: Vec<TensorEntry>,
    pub data: Vec<f64>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a zero tensor and returns its offset.
    pub fn push(&mut self, name: &str, shape: &[usize]) -> usize {
        let offset = self.data.len();
        let entry = TensorEntry {
            name: name.to_string(),
            shape: shape.to_vec(),
            offset,
        };
        self.data.resize(offset + entry.len(), 0.0);
        self.entries.push(entry);
        offset
    }

    pub fn entries(&self) -> &[TensorEntry] {
        &self.entries
    }

    pub fn entry(&self, name: &str) -> Option<&TensorEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.entry(name).map(|e| &self.data[e.range()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let range = self.entry(name)?.range();
        Some(&mut self.data[range])
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn zeros_like(&self) -> Vec<f64> {
        vec![0.0; self.data.len()]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `y = W·x + b` with `W` stored row-major as `[n_out][n_in]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dense {
    pub w: usize,
    pub b: usize,
    pub n_in: usize,
    pub n_out: usize,
}

impl Dense {
    pub fn register(store: &mut ParamStore, name: &str, n_in: usize, n_out: usize) -> Self {
        let w = store.push(&format!("{name}.weight"), &[n_out, n_in]);
        let b = store.push(&format!("{name}.bias"), &[n_out]);
        Self { w, b, n_in, n_out }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn init_glorot<R: Rng + ?Sized>(&self, data: &mut [f64], rng: &mut R) {
        let a = (6.0 / (self.n_in + self.n_out) as f64).sqrt();
        for v in &mut data[self.w..self.w + self.n_in * self.n_out] {
            *v = rng.random_range(-a..a);
        }
        self.zero_bias(data);
    }

    pub fn zero(&self, data: &mut [f64]) {
        data[self.w..self.w + self.n_in * self.n_out].fill(0.0);
        self.zero_bias(data);
    }

    fn zero_bias(&self, data: &mut [f64]) {
        data[self.b..self.b + self.n_out].fill(0.0);
    }

    pub fn forward(&self, p: &[f64], x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_in);
        debug_assert_eq!(y.len(), self.n_out);
        let w = &p[self.w..self.w + self.n_in * self.n_out];
        let b = &p[self.b..self.b + self.n_out];
        for (o, (row, bias)) in y.iter_mut().zip(w.chunks_exact(self.n_in).zip(b)) {
            *o = bias + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    pub fn forward_vec(&self, p: &[f64], x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_out];
        self.forward(p, x, &mut y);
        y
    }

    /// Accumulates parameter gradients for upstream `dy`; writes `dx` when given.
    pub fn backward(&self, p: &[f64], x: &[f64], dy: &[f64], g: &mut [f64], dx: Option<&mut [f64]>) {
        let n_in = self.n_in;
        for (o, &d) in dy.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let gw = &mut g[self.w + o * n_in..self.w + (o + 1) * n_in];
            for (gv, xv) in gw.iter_mut().zip(x) {
                *gv += d * xv;
            }
            g[self.b + o] += d;
        }
        if let Some(dx) = dx {
            dx.fill(0.0);
            let w = &p[self.w..self.w + n_in * self.n_out];
            for (row, &d) in w.chunks_exact(n_in).zip(dy) {
                if d == 0.0 {
                    continue;
                }
                for (dv, wv) in dx.iter_mut().zip(row) {
                    *dv += d * wv;
                }
            }
        }
    }
}

pub(crate) fn relu_inplace(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Zeroes `grad` where the post-ReLU activation is not positive.
pub(crate) fn relu_mask(activation: &[f64], grad: &mut [f64]) {
    for (g, a) in grad.iter_mut().zip(activation) {
        if *a <= 0.0 {
            *g = 0.0;
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_forward_backward() {
        let mut s = ParamStore::new();
        let d = Dense::register(&mut s, "l", 2, 2);
        s.data[d.w..d.w + 4].copy_from_slice(&[1.0, 2.0, 3.0, 4.0]);
        s.data[d.b..d.b + 2].copy_from_slice(&[0.5, -0.5]);
        let y = d.forward_vec(&s.data, &[1.0, -1.0]);
        assert_eq!(y, vec![-0.5, -1.5]);
        let mut g = s.zeros_like();
        let mut dx = [0.0; 2];
        d.backward(&s.data, &[1.0, -1.0], &[1.0, 2.0], &mut g, Some(&mut dx));
        assert_eq!(dx, [7.0, 10.0]);
        assert_eq!(&g[d.w..d.w + 4], &[1.0, -1.0, 2.0, -2.0]);
        assert_eq!(&g[d.b..d.b + 2], &[1.0, 2.0]);
    }

    #[test]
    fn named_lookup() {
        let mut s = ParamStore::new();
        Dense::register(&mut s, "a", 3, 2);
        assert_eq!(s.tensor("a.weight").unwrap().len(), 6);
        assert_eq!(s.entry("a.bias").unwrap().offset, 6);
        assert!(s.tensor("nope").is_none());
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
    }
}
