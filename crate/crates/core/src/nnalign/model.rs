use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{global_inputs, region_inputs, PointInput, RegionFrame, POINT_FEATURES};
use super::losses::{bce_with_logit, GaussianGrad, GaussianParams, LOG_SIGMA_MAX, LOG_SIGMA_MIN};
use super::params::{relu_inplace, relu_mask, sigmoid, Dense, ParamStore};
use crate::error::{Error, Result};
use crate::geom::{Box7, JitterSample, Point};

/// Detection head outputs per region: objectness logit then 7 box residuals.
pub const HEAD_OUTPUTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDims {
    pub hidden: usize,
    pub feature: usize,
    pub descriptor: usize,
    pub head_hidden: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            hidden: 64,
            feature: 32,
            descriptor: 64,
            head_hidden: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Layout {
    pub enc1: Dense,
    pub enc2: Dense,
    pub head1: Dense,
    pub head2: Dense,
    pub gtd1: Dense,
    pub gtd2: Dense,
    pub gtd_reg: Dense,
    pub pfa_mu: Dense,
    pub pfa_log_sigma: Dense,
    pub pfa_cls: Dense,
    pub ca_proj: Dense,
    pub ca_gate: usize,
}

impl Layout {
    fn build(dims: &ModelDims, store: &mut ParamStore) -> Self {
        let d = dims.feature;
        let k = dims.descriptor;
        Self {
            enc1: Dense::register(store, "encoder.0", POINT_FEATURES, dims.hidden),
            enc2: Dense::register(store, "encoder.1", dims.hidden, d),
            head1: Dense::register(store, "head.0", d, dims.head_hidden),
            head2: Dense::register(store, "head.1", dims.head_hidden, HEAD_OUTPUTS),
            gtd1: Dense::register(store, "gtd.descriptor.0", d, k),
            gtd2: Dense::register(store, "gtd.descriptor.1", k, k),
            gtd_reg: Dense::register(store, "gtd.regressor", k, 2),
            pfa_mu: Dense::register(store, "pfa.mu", d, d),
            pfa_log_sigma: Dense::register(store, "pfa.log_sigma", d, d),
            pfa_cls: Dense::register(store, "pfa.classifier", d, 1),
            ca_proj: Dense::register(store, "ca.projection", k, d),
            ca_gate: store.push("ca.gate", &[d]),
        }
    }
}

/// Max-pooled encoder output with the winning point per channel
/// ([`PAD`] when the region was empty).
#[derive(Debug, Clone, PartialEq)]
pub struct Pooled {
    pub value: Vec<f64>,
    pub argmax: Vec<usize>,
}

pub const PAD: usize = usize::MAX;

/// Geometry descriptor `f_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor(pub Vec<f64>);

#[derive(Debug, Clone)]
pub struct HeadCache {
    input: Vec<f64>,
    hidden: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GtdCache {
    input: Vec<f64>,
    hidden: Vec<f64>,
    descriptor: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CaCache {
    descriptor: Vec<f64>,
    projected: Vec<f64>,
    gate: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PfaCache {
    input: Vec<f64>,
    raw_log_sigma: Vec<f64>,
}

/// Encoder, detection head, geometry descriptor, probabilistic heads and
/// channel-attention gate in one parameter store.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptModel {
    pub dims: ModelDims,
    pub params: ParamStore,
    layout: Layout,
}

impl AdaptModel {
    /// Seeded initialization. Regression, channel-attention and log-σ heads
    /// start at zero so the descriptor residual is inactive and σ = 1.
    pub fn new(dims: ModelDims, seed: u64) -> Self {
        let mut params = ParamStore::new();
        let layout = Layout::build(&dims, &mut params);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = &mut params.data;
        for l in [
            layout.enc1,
            layout.enc2,
            layout.head1,
            layout.head2,
            layout.gtd1,
            layout.gtd2,
            layout.pfa_mu,
            layout.pfa_cls,
        ] {
            l.init_glorot(data, &mut rng);
        }
        layout.gtd_reg.zero(data);
        layout.pfa_log_sigma.zero(data);
        layout.ca_proj.zero(data);
        Self {
            dims,
            params,
            layout,
        }
    }

    /// Rebuilds a model from stored tensors, checking names and shapes.
    pub fn from_params(dims: ModelDims, params: ParamStore) -> Result<Self> {
        let mut expected = ParamStore::new();
        let layout = Layout::build(&dims, &mut expected);
        if expected.entries() != params.entries() {
            return Err(Error::InvalidArgument(
                "parameter tensors do not match the model layout".into(),
            ));
        }
        Ok(Self {
            dims,
            params,
            layout,
        })
    }

    /// Infers dimensions from the stored tensor shapes.
    pub fn infer_dims(params: &ParamStore) -> Result<ModelDims> {
        let shape = |name: &str| {
            params
                .entry(name)
                .map(|e| e.shape.clone())
                .ok_or_else(|| Error::InvalidArgument(format!("missing tensor {name}")))
        };
        let enc1 = shape("encoder.0.weight")?;
        let enc2 = shape("encoder.1.weight")?;
        let head = shape("head.0.weight")?;
        let gtd = shape("gtd.descriptor.0.weight")?;
        Ok(ModelDims {
            hidden: enc1[0],
            feature: enc2[0],
            descriptor: gtd[0],
            head_hidden: head[0],
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn p(&self) -> &[f64] {
        &self.params.data
    }

    fn point_forward(&self, x: &[f64], h: &mut [f64], f: &mut [f64]) {
        self.layout.enc1.forward(self.p(), x, h);
        relu_inplace(h);
        self.layout.enc2.forward(self.p(), h, f);
        relu_inplace(f);
    }

    /// Per-point MLP followed by channel-wise max pooling. Ties keep the first point.
    pub fn encode_pooled(&self, inputs: &[PointInput]) -> Pooled {
        let d = self.dims.feature;
        let mut h = vec![0.0; self.dims.hidden];
        let mut f = vec![0.0; d];
        if inputs.is_empty() {
            self.point_forward(&[0.0; POINT_FEATURES], &mut h, &mut f);
            return Pooled {
                value: f,
                argmax: vec![PAD; d],
            };
        }
        let mut value = vec![f64::NEG_INFINITY; d];
        let mut argmax = vec![0usize; d];
        for (i, x) in inputs.iter().enumerate() {
            self.point_forward(x, &mut h, &mut f);
            for c in 0..d {
                if f[c] > value[c] {
                    value[c] = f[c];
                    argmax[c] = i;
                }
            }
        }
        Pooled { value, argmax }
    }

    /// Backpropagates `d_pooled` through the winning points only.
    pub fn backward_pooled(&self, inputs: &[PointInput], pooled: &Pooled, d_pooled: &[f64], g: &mut [f64]) {
        let d = self.dims.feature;
        let mut points: Vec<usize> = pooled.argmax.clone();
        points.sort_unstable();
        points.dedup();
        let mut h = vec![0.0; self.dims.hidden];
        let mut f = vec![0.0; d];
        let mut df = vec![0.0; d];
        let mut dh = vec![0.0; self.dims.hidden];
        let zero = [0.0; POINT_FEATURES];
        for k in points {
            df.fill(0.0);
            let mut any = false;
            for c in 0..d {
                if pooled.argmax[c] == k && d_pooled[c] != 0.0 {
                    df[c] = d_pooled[c];
                    any = true;
                }
            }
            if !any {
                continue;
            }
            let x: &[f64] = if k == PAD { &zero } else { &inputs[k] };
            self.point_forward(x, &mut h, &mut f);
            relu_mask(&f, &mut df);
            self.layout.enc2.backward(self.p(), &h, &df, g, Some(&mut dh));
            relu_mask(&h, &mut dh);
            self.layout.enc1.backward(self.p(), x, &dh, g, None);
        }
    }

    pub fn head_forward(&self, feature: &[f64]) -> ([f64; HEAD_OUTPUTS], HeadCache) {
        let mut hidden = self.layout.head1.forward_vec(self.p(), feature);
        relu_inplace(&mut hidden);
        let mut out = [0.0; HEAD_OUTPUTS];
        self.layout.head2.forward(self.p(), &hidden, &mut out);
        (
            out,
            HeadCache {
                input: feature.to_vec(),
                hidden,
            },
        )
    }

    pub fn head_backward(&self, cache: &HeadCache, d_out: &[f64; HEAD_OUTPUTS], g: &mut [f64], d_feature: &mut [f64]) {
        let mut dh = vec![0.0; self.dims.head_hidden];
        self.layout.head2.backward(self.p(), &cache.hidden, d_out, g, Some(&mut dh));
        relu_mask(&cache.hidden, &mut dh);
        self.layout.head1.backward(self.p(), &cache.input, &dh, g, Some(d_feature));
    }

    pub fn gtd_forward(&self, global: &[f64]) -> (Descriptor, JitterSample, GtdCache) {
        let mut hidden = self.layout.gtd1.forward_vec(self.p(), global);
        relu_inplace(&mut hidden);
        let mut descriptor = self.layout.gtd2.forward_vec(self.p(), &hidden);
        relu_inplace(&mut descriptor);
        let out = self.layout.gtd_reg.forward_vec(self.p(), &descriptor);
        (
            Descriptor(descriptor.clone()),
            JitterSample::new(out[0], out[1]),
            GtdCache {
                input: global.to_vec(),
                hidden,
                descriptor,
            },
        )
    }

    /// `d_descriptor` carries gradient arriving from the channel-attention path.
    pub fn gtd_backward(
        &self,
        cache: &GtdCache,
        d_jitter: [f64; 2],
        d_descriptor: &[f64],
        g: &mut [f64],
        d_global: &mut [f64],
    ) {
        let k = self.dims.descriptor;
        let mut dd = vec![0.0; k];
        self.layout.gtd_reg.backward(self.p(), &cache.descriptor, &d_jitter, g, Some(&mut dd));
        for (a, b) in dd.iter_mut().zip(d_descriptor) {
            *a += b;
        }
        relu_mask(&cache.descriptor, &mut dd);
        let mut dh = vec![0.0; k];
        self.layout.gtd2.backward(self.p(), &cache.hidden, &dd, g, Some(&mut dh));
        relu_mask(&cache.hidden, &mut dh);
        self.layout.gtd1.backward(self.p(), &cache.input, &dh, g, Some(d_global));
    }

    /// `sigmoid(gate) ⊙ (P·f_d + b)`.
    pub fn ca_forward(&self, descriptor: &Descriptor) -> (Vec<f64>, CaCache) {
        let projected = self.layout.ca_proj.forward_vec(self.p(), &descriptor.0);
        let gate_params = &self.p()[self.layout.ca_gate..self.layout.ca_gate + self.dims.feature];
        let gate: Vec<f64> = gate_params.iter().map(|v| sigmoid(*v)).collect();
        let residual = projected.iter().zip(&gate).map(|(a, s)| a * s).collect();
        (
            residual,
            CaCache {
                descriptor: descriptor.0.clone(),
                projected,
                gate,
            },
        )
    }

    pub fn ca_backward(&self, cache: &CaCache, d_residual: &[f64], g: &mut [f64], d_descriptor: &mut [f64]) {
        let d = self.dims.feature;
        let mut d_proj = vec![0.0; d];
        for c in 0..d {
            let s = cache.gate[c];
            d_proj[c] = d_residual[c] * s;
            g[self.layout.ca_gate + c] += d_residual[c] * cache.projected[c] * s * (1.0 - s);
        }
        self.layout
            .ca_proj
            .backward(self.p(), &cache.descriptor, &d_proj, g, Some(d_descriptor));
    }

    pub fn pfa_forward(&self, feature: &[f64]) -> (GaussianParams, PfaCache) {
        let mu = self.layout.pfa_mu.forward_vec(self.p(), feature);
        let raw = self.layout.pfa_log_sigma.forward_vec(self.p(), feature);
        let log_sigma = raw.iter().map(|s| s.clamp(LOG_SIGMA_MIN, LOG_SIGMA_MAX)).collect();
        (
            GaussianParams::new(mu, log_sigma),
            PfaCache {
                input: feature.to_vec(),
                raw_log_sigma: raw,
            },
        )
    }

    pub fn pfa_backward(&self, cache: &PfaCache, grad: &GaussianGrad, g: &mut [f64], d_feature: &mut [f64]) {
        let d = self.dims.feature;
        let mut tmp = vec![0.0; d];
        self.layout.pfa_mu.backward(self.p(), &cache.input, &grad.mu, g, Some(&mut tmp));
        let mut d_ls = grad.log_sigma.clone();
        for (dv, raw) in d_ls.iter_mut().zip(&cache.raw_log_sigma) {
            if *raw < LOG_SIGMA_MIN || *raw > LOG_SIGMA_MAX {
                *dv = 0.0;
            }
        }
        let mut tmp2 = vec![0.0; d];
        self.layout.pfa_log_sigma.backward(self.p(), &cache.input, &d_ls, g, Some(&mut tmp2));
        for ((o, a), b) in d_feature.iter_mut().zip(&tmp).zip(&tmp2) {
            *o = a + b;
        }
    }

    /// Foreground logit of `q(g | ξ)`.
    pub fn roi_logit(&self, latent: &[f64]) -> f64 {
        self.layout.pfa_cls.forward_vec(self.p(), latent)[0]
    }

    pub fn roi_backward(&self, latent: &[f64], d_logit: f64, g: &mut [f64], d_latent: &mut [f64]) {
        self.layout.pfa_cls.backward(self.p(), latent, &[d_logit], g, Some(d_latent));
    }
}

/// Convenience forms of the forward passes, without caches.
impl AdaptModel {
    /// Global feature `F_b` and one region feature `F_r` per region.
    pub fn encode_regions(&self, points: &[Point], regions: &[Box7]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        if points.is_empty() {
            return Err(Error::EmptyInput("frame has no points".into()));
        }
        let fb = self.encode_pooled(&global_inputs(points)).value;
        let fr = regions
            .iter()
            .map(|r| self.encode_pooled(&region_inputs(points, &RegionFrame::new(r))).value)
            .collect();
        Ok((fb, fr))
    }

    pub fn gtd_predict(&self, global: &[f64]) -> (Descriptor, JitterSample) {
        let (d, j, _) = self.gtd_forward(global);
        (d, j)
    }

    pub fn pfa_encode(&self, region: &[f64]) -> GaussianParams {
        self.pfa_forward(region).0
    }

    /// `-log q(g | ξ)` for one region.
    pub fn roi_classification_loss(&self, latent: &[f64], g: bool) -> f64 {
        bce_with_logit(self.roi_logit(latent), if g { 1.0 } else { 0.0 }).0
    }

    /// `feature + sigmoid(gate) ⊙ (P·f_d + b)`.
    pub fn apply_channel_attention(&self, feature: &[f64], descriptor: &Descriptor) -> Vec<f64> {
        let (r, _) = self.ca_forward(descriptor);
        feature.iter().zip(&r).map(|(a, b)| a + b).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_heads_at_init() {
        let m = AdaptModel::new(ModelDims::default(), 1);
        let (_, jitter, _) = m.gtd_forward(&vec![0.7; 32]);
        assert_eq!(jitter, JitterSample::default());
        let (g, _) = m.pfa_forward(&vec![0.3; 32]);
        assert!(g.log_sigma.iter().all(|s| *s == 0.0));
    }

    #[test]
    fn empty_region_uses_pad_feature() {
        let m = AdaptModel::new(ModelDims::default(), 2);
        let p = m.encode_pooled(&[]);
        assert!(p.argmax.iter().all(|a| *a == PAD));
        let mut h = vec![0.0; 64];
        let mut f = vec![0.0; 32];
        m.point_forward(&[0.0; POINT_FEATURES], &mut h, &mut f);
        assert_eq!(p.value, f);
    }

    fn cloud() -> Vec<Point> {
        (0..40)
            .map(|i| {
                let t = i as f64 * 0.41;
                Point::new(10.0 + t.sin() * 2.0, 3.0 + t.cos(), (t * 1.3).sin(), (t * 0.7).cos().abs())
            })
            .collect()
    }

    #[test]
    fn region_features_ignore_order_and_duplicates() {
        use crate::geom::ObjectClass;
        let m = AdaptModel::new(ModelDims::default(), 5);
        let pts = cloud();
        let region = Box7::new([10.0, 3.0, 0.0], [4.5, 1.9, 1.7], 0.3, ObjectClass::Vehicle);
        let (fb, fr) = m.encode_regions(&pts, &[region]).unwrap();
        let mut shuffled = pts.clone();
        shuffled.reverse();
        shuffled.extend(pts.iter().copied());
        let (fb2, fr2) = m.encode_regions(&shuffled, &[region]).unwrap();
        assert_eq!(fb, fb2);
        assert_eq!(fr, fr2);
        assert!(m.encode_regions(&[], &[region]).is_err());
    }

    #[test]
    fn channel_attention_identities() {
        let mut m = AdaptModel::new(ModelDims::default(), 6);
        let fb = vec![0.25; 32];
        let desc = Descriptor(vec![1.0; 64]);
        assert_eq!(m.apply_channel_attention(&fb, &desc), fb);
        let proj = m.layout().ca_proj;
        for (i, v) in m.params.data[proj.w..proj.w + 64 * 32].iter_mut().enumerate() {
            *v = ((i % 7) as f64 - 3.0) * 0.1;
        }
        let gate = m.layout().ca_gate;
        m.params.data[gate..gate + 32].fill(-800.0);
        assert_eq!(m.apply_channel_attention(&fb, &desc), fb);
        m.params.data[gate..gate + 32].fill(0.3);
        let base = m.apply_channel_attention(&fb, &Descriptor(vec![0.0; 64]));
        let one = m.apply_channel_attention(&fb, &desc);
        let two = m.apply_channel_attention(&fb, &Descriptor(vec![2.0; 64]));
        for i in 0..32 {
            let a = one[i] - base[i];
            let b = two[i] - base[i];
            assert!((b - 2.0 * a).abs() < 1e-12);
        }
    }

    #[test]
    fn roi_loss_at_zero_logit() {
        let m = AdaptModel::new(ModelDims::default(), 7);
        let xi = vec![0.0; 32];
        assert!((m.roi_classification_loss(&xi, true) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((m.roi_classification_loss(&xi, false) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn layout_round_trip() {
        let m = AdaptModel::new(ModelDims::default(), 3);
        let dims = AdaptModel::infer_dims(&m.params).unwrap();
        assert_eq!(dims, m.dims);
        let back = AdaptModel::from_params(dims, m.params.clone()).unwrap();
        assert_eq!(back, m);
        let other = AdaptModel::new(
            ModelDims {
                feature: 16,
                ..ModelDims::default()
            },
            3,
        );
        assert!(AdaptModel::from_params(ModelDims::default(), other.params).is_err());
    }
}
