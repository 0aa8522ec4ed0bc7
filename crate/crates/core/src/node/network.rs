//! Vector-field networks: fully connected (FCN), frequency-aware (FAN), and
//! the time-gated FAN variant, with batched forward and reverse passes.
//!
//! Hidden layers are numbered `0..depth`. FCN uses `tanh` dense layers
//! throughout. The FAN variants keep layers `0` and `depth - 1` dense and turn
//! every layer in between into a frequency layer. Weights are stored row-major
//! as `(out, in)` blocks of one flat parameter vector.

use std::fmt;
use std::str::FromStr;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Fcn,
    Fan,
    FanTime,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Fcn => "fcn",
            Variant::Fan => "fan",
            Variant::FanTime => "fan_time",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fcn" => Ok(Self::Fcn),
            "fan" => Ok(Self::Fan),
            "fan_time" => Ok(Self::FanTime),
            _ => Err(Error::InvalidArgument(format!("unknown network variant {s:?}"))),
        }
    }
}

/// `n` values log-spaced over `[lo, hi]`.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub variant: Variant,
    /// Number of coefficient series `|basis|`.
    pub state_dim: usize,
    /// Append `t` as an extra input coordinate (fcn/fan only).
    pub append_time: bool,
    pub depth: usize,
    pub hidden_width: usize,
    /// `(n_sin, n_cos, n_linear)`, summing to `hidden_width`.
    pub fan_partition: (usize, usize, usize),
    /// Initial (or fixed) frequencies; hidden unit `j` of a trigonometric
    /// block uses `frequencies[j % len]`.
    pub frequencies: Vec<f64>,
    pub train_frequencies: bool,
    /// Standard deviation multiplier of the readout initialization.
    pub readout_gain: f64,
}

impl NetworkSpec {
    /// Defaults: width 128 split (32, 32, 64), depth 3, 16 frequencies
    /// log-spaced over [0.1, 1000], fixed.
    pub fn new(variant: Variant, state_dim: usize) -> Self {
        Self {
            variant,
            state_dim,
            append_time: false,
            depth: 3,
            hidden_width: 128,
            fan_partition: (32, 32, 64),
            frequencies: log_spaced(0.1, 1000.0, 16),
            train_frequencies: false,
            readout_gain: 0.1,
        }
    }

    /// Resizes the hidden width and rescales the partition to quarters.
    pub fn with_width(mut self, width: usize) -> Self {
        self.hidden_width = width;
        let q = width / 4;
        self.fan_partition = (q, q, width - 2 * q);
        self
    }

    pub fn input_dim(&self) -> usize {
        self.state_dim + usize::from(self.append_time)
    }

    fn has_fan_layers(&self) -> bool {
        self.variant != Variant::Fcn
    }

    fn n_trig(&self) -> usize {
        self.fan_partition.0 + self.fan_partition.1
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.state_dim == 0 || self.depth == 0 || self.hidden_width == 0 {
            return bad("state_dim, depth and hidden_width must be positive".into());
        }
        if self.variant == Variant::FanTime && self.append_time {
            return bad("fan_time takes time through its gates, not as an input".into());
        }
        if self.has_fan_layers() {
            let (a, b, c) = self.fan_partition;
            if a + b + c != self.hidden_width {
                return bad(format!(
                    "fan partition ({a}, {b}, {c}) does not sum to hidden width {}",
                    self.hidden_width
                ));
            }
            if self.depth < 3 {
                return bad(format!("{} needs depth >= 3, got {}", self.variant, self.depth));
            }
            if self.n_trig() > 0 && self.frequencies.is_empty() {
                return bad("trigonometric blocks need at least one frequency".into());
            }
            if self.variant == Variant::FanTime && self.frequencies.is_empty() {
                return bad("fan_time requires frequencies".into());
            }
        }
        if self.frequencies.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return bad("frequencies must be positive and finite".into());
        }
        if !(self.readout_gain.is_finite() && self.readout_gain >= 0.0) {
            return bad("readout_gain must be non-negative".into());
        }
        Ok(())
    }

    fn layer_kinds(&self) -> Vec<LayerKind> {
        (0..self.depth)
            .map(|l| {
                if !self.has_fan_layers() || l == 0 || l + 1 == self.depth {
                    LayerKind::Dense
                } else if self.variant == Variant::Fan {
                    LayerKind::Fan
                } else {
                    LayerKind::FanTime
                }
            })
            .collect()
    }

    pub fn layout(&self) -> Result<Layout> {
        self.validate()?;
        let h = self.hidden_width;
        let n_lin = self.fan_partition.2;
        let mut entries = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, rows: usize, cols: usize| {
            entries.push(LayoutEntry {
                name,
                rows,
                cols,
                offset,
            });
            offset += rows * cols;
        };
        for (l, kind) in self.layer_kinds().into_iter().enumerate() {
            let fan_in = if l == 0 { self.input_dim() } else { h };
            match kind {
                LayerKind::Dense => {
                    push(format!("layer{l}.weight"), h, fan_in);
                    push(format!("layer{l}.bias"), h, 1);
                }
                LayerKind::Fan => {
                    push(format!("layer{l}.weight"), n_lin, n_lin);
                    push(format!("layer{l}.bias"), n_lin, 1);
                }
                LayerKind::FanTime => {
                    push(format!("layer{l}.weight_in"), n_lin, n_lin);
                    push(format!("layer{l}.bias_in"), n_lin, 1);
                    push(format!("layer{l}.weight_out"), h, h);
                    push(format!("layer{l}.bias_out"), h, 1);
                }
            }
        }
        push("readout.weight".into(), self.state_dim, h);
        push("readout.bias".into(), self.state_dim, 1);
        if self.train_frequencies && self.has_fan_layers() {
            push("omega".into(), self.frequencies.len(), 1);
        }
        Ok(Layout { entries })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LayerKind {
    Dense,
    Fan,
    FanTime,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl LayoutEntry {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Placement of every weight and bias inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    entries: Vec<LayoutEntry>,
}

impl Layout {
    pub fn entries(&self) -> &[LayoutEntry] {
        &self.entries
    }

    pub fn n_params(&self) -> usize {
        self.entries.last().map_or(0, |e| e.offset + e.len())
    }

    pub fn get(&self, name: &str) -> Option<&LayoutEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// A network specification together with its parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    layout: Layout,
    kinds: Vec<LayerKind>,
    params: Vec<f64>,
}

enum LayerCache {
    Dense {
        input: Array2<f64>,
        out: Array2<f64>,
    },
    Fan {
        input: Array2<f64>,
        lin_out: Array2<f64>,
    },
    FanTime {
        input: Array2<f64>,
        gated: Array2<f64>,
        out: Array2<f64>,
    },
}

/// Intermediate values of a batched forward pass.
pub struct ForwardCache {
    times: Vec<f64>,
    layers: Vec<LayerCache>,
    last: Array2<f64>,
}

impl Network {
    pub fn new(spec: NetworkSpec, params: Vec<f64>) -> Result<Self> {
        let layout = spec.layout()?;
        if params.len() != layout.n_params() {
            return Err(Error::SizeMismatch {
                expected: layout.n_params(),
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("network parameters".into()));
        }
        let kinds = spec.layer_kinds();
        Ok(Self {
            spec,
            layout,
            kinds,
            params,
        })
    }

    /// Gaussian initialization with variance `1/fan_in` for hidden weights,
    /// `readout_gain^2 / width` for the readout, zero biases. Weights reading
    /// a trigonometric unit with frequency `omega > 1` are divided by `omega`.
    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let layout = spec.layout()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; layout.n_params()];
        for e in layout.entries() {
            let std = if e.name.ends_with("bias") || e.name.ends_with("bias_in") || e.name.ends_with("bias_out") {
                0.0
            } else if e.name == "omega" {
                params[e.range()].copy_from_slice(&spec.frequencies);
                continue;
            } else if e.name == "readout.weight" {
                spec.readout_gain / (e.cols as f64).sqrt()
            } else {
                1.0 / (e.cols as f64).sqrt()
            };
            for p in &mut params[e.range()] {
                let z: f64 = StandardNormal.sample(&mut rng);
                *p = std * z;
            }
        }
        // Damp the initial readout of trigonometric unit j by 1/omega_j so
        // that high-frequency features start as small perturbations.
        let kinds = spec.layer_kinds();
        let n_trig = spec.n_trig();
        for (l, kind) in kinds.iter().enumerate() {
            let target = match kind {
                LayerKind::Fan if kinds.get(l + 1) == Some(&LayerKind::Dense) => format!("layer{}.weight", l + 1),
                LayerKind::FanTime => format!("layer{l}.weight_out"),
                _ => continue,
            };
            let e = layout.get(&target).expect("layout entry");
            for r in 0..e.rows {
                for j in 0..n_trig {
                    let w = spec.frequencies[j % spec.frequencies.len()];
                    params[e.offset + r * e.cols + j] /= w.max(1.0);
                }
            }
        }
        Self::new(spec, params)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::SizeMismatch {
                expected: self.params.len(),
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("network parameters".into()));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    /// Frequencies in use: the trainable copy when present.
    pub fn frequencies(&self) -> &[f64] {
        match self.layout.get("omega") {
            Some(e) => &self.params[e.range()],
            None => &self.spec.frequencies,
        }
    }

    fn mat(&self, name: &str) -> ArrayView2<'_, f64> {
        let e = self.layout.get(name).expect("layout entry");
        ArrayView2::from_shape((e.rows, e.cols), &self.params[e.range()]).expect("shape")
    }

    fn vec(&self, name: &str) -> ArrayView1<'_, f64> {
        let e = self.layout.get(name).expect("layout entry");
        ArrayView1::from(&self.params[e.range()])
    }

    fn omega_of(&self, j: usize) -> f64 {
        let w = self.frequencies();
        w[j % w.len()]
    }

    fn input_matrix(&self, times: &[f64], x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.spec.state_dim {
            return Err(Error::SizeMismatch {
                expected: self.spec.state_dim,
                got: x.ncols(),
            });
        }
        if times.len() != x.nrows() {
            return Err(Error::SizeMismatch {
                expected: x.nrows(),
                got: times.len(),
            });
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("time input".into()));
        }
        if !self.spec.append_time {
            return Ok(x.to_owned());
        }
        let mut a = Array2::zeros((x.nrows(), self.spec.state_dim + 1));
        a.slice_mut(s![.., ..self.spec.state_dim]).assign(&x);
        for (b, t) in times.iter().enumerate() {
            a[(b, self.spec.state_dim)] = *t;
        }
        Ok(a)
    }

    /// Evaluates the field for a batch: row `b` of `x` is a state at time
    /// `times[b]`.
    pub fn forward(&self, times: &[f64], x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.forward_cached(times, x).map(|(out, _)| out)
    }

    pub fn forward_single(&self, t: f64, h: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, h.len()), h).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(self.forward(&[t], x)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_cached(&self, times: &[f64], x: ArrayView2<'_, f64>) -> Result<(Array2<f64>, ForwardCache)> {
        let mut a = self.input_matrix(times, x)?;
        let (n_sin, n_cos, _) = self.spec.fan_partition;
        let n_trig = n_sin + n_cos;
        let mut layers = Vec::with_capacity(self.kinds.len());
        for (l, kind) in self.kinds.iter().enumerate() {
            match kind {
                LayerKind::Dense => {
                    let out = dense_tanh(&a, self.mat(&format!("layer{l}.weight")), self.vec(&format!("layer{l}.bias")));
                    layers.push(LayerCache::Dense { input: a, out: out.clone() });
                    a = out;
                }
                LayerKind::Fan => {
                    let lin_out = dense_tanh(
                        &a.slice(s![.., n_trig..]).to_owned(),
                        self.mat(&format!("layer{l}.weight")),
                        self.vec(&format!("layer{l}.bias")),
                    );
                    let mut out = Array2::zeros(a.raw_dim());
                    for b in 0..a.nrows() {
                        for j in 0..n_trig {
                            let arg = self.omega_of(j) * a[(b, j)];
                            out[(b, j)] = if j < n_sin { arg.sin() } else { arg.cos() };
                        }
                    }
                    out.slice_mut(s![.., n_trig..]).assign(&lin_out);
                    layers.push(LayerCache::Fan { input: a, lin_out });
                    a = out;
                }
                LayerKind::FanTime => {
                    let lin = affine(
                        &a.slice(s![.., n_trig..]).to_owned(),
                        self.mat(&format!("layer{l}.weight_in")),
                        self.vec(&format!("layer{l}.bias_in")),
                    );
                    let mut gated = Array2::zeros(a.raw_dim());
                    for (b, &t) in times.iter().enumerate() {
                        for j in 0..n_trig {
                            let arg = self.omega_of(j) * t;
                            let g = if j < n_sin { arg.sin() } else { arg.cos() };
                            gated[(b, j)] = a[(b, j)] * g;
                        }
                    }
                    gated.slice_mut(s![.., n_trig..]).assign(&lin);
                    let out = dense_tanh(
                        &gated,
                        self.mat(&format!("layer{l}.weight_out")),
                        self.vec(&format!("layer{l}.bias_out")),
                    );
                    layers.push(LayerCache::FanTime {
                        input: a,
                        gated,
                        out: out.clone(),
                    });
                    a = out;
                }
            }
        }
        let out = affine(&a, self.mat("readout.weight"), self.vec("readout.bias"));
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network output".into()));
        }
        Ok((
            out,
            ForwardCache {
                times: times.to_vec(),
                layers,
                last: a,
            },
        ))
    }

    fn grad_mat<'g>(&self, grad: &'g mut [f64], name: &str) -> ArrayViewMut2<'g, f64> {
        let e = self.layout.get(name).expect("layout entry");
        ArrayViewMut2::from_shape((e.rows, e.cols), &mut grad[e.range()]).expect("shape")
    }

    fn add_bias_grad(&self, grad: &mut [f64], name: &str, zb: &Array2<f64>) {
        let e = self.layout.get(name).expect("layout entry");
        let sum = zb.sum_axis(Axis(0));
        for (g, v) in grad[e.range()].iter_mut().zip(sum.iter()) {
            *g += v;
        }
    }

    /// Adds `(d out / d theta)^T out_bar` to `grad` and returns
    /// `(d out / d x)^T out_bar` for the state inputs.
    pub fn backward(&self, cache: &ForwardCache, out_bar: ArrayView2<'_, f64>, grad: &mut [f64]) -> Array2<f64> {
        assert_eq!(grad.len(), self.params.len(), "gradient buffer size");
        let (n_sin, n_cos, _) = self.spec.fan_partition;
        let n_trig = n_sin + n_cos;
        let omega_entry = self.layout.get("omega").cloned();
        let n_freq = self.frequencies().len();

        general_mat_mul(1.0, &out_bar.t(), &cache.last, 1.0, &mut self.grad_mat(grad, "readout.weight"));
        self.add_bias_grad(grad, "readout.bias", &out_bar.to_owned());
        let mut a_bar = out_bar.dot(&self.mat("readout.weight"));

        for (l, layer) in cache.layers.iter().enumerate().rev() {
            a_bar = match layer {
                LayerCache::Dense { input, out } => {
                    let zb = tanh_back(&a_bar, out);
                    general_mat_mul(1.0, &zb.t(), input, 1.0, &mut self.grad_mat(grad, &format!("layer{l}.weight")));
                    self.add_bias_grad(grad, &format!("layer{l}.bias"), &zb);
                    zb.dot(&self.mat(&format!("layer{l}.weight")))
                }
                LayerCache::Fan { input, lin_out } => {
                    let mut in_bar = Array2::zeros(input.raw_dim());
                    for b in 0..input.nrows() {
                        for j in 0..n_trig {
                            let w = self.omega_of(j);
                            let x = input[(b, j)];
                            let (sn, cs) = (w * x).sin_cos();
                            let (dx, dw) = if j < n_sin { (w * cs, x * cs) } else { (-w * sn, -x * sn) };
                            in_bar[(b, j)] = a_bar[(b, j)] * dx;
                            if let Some(e) = &omega_entry {
                                grad[e.offset + j % n_freq] += a_bar[(b, j)] * dw;
                            }
                        }
                    }
                    let zb = tanh_back(&a_bar.slice(s![.., n_trig..]).to_owned(), lin_out);
                    let lin_in = input.slice(s![.., n_trig..]);
                    general_mat_mul(1.0, &zb.t(), &lin_in, 1.0, &mut self.grad_mat(grad, &format!("layer{l}.weight")));
                    self.add_bias_grad(grad, &format!("layer{l}.bias"), &zb);
                    in_bar
                        .slice_mut(s![.., n_trig..])
                        .assign(&zb.dot(&self.mat(&format!("layer{l}.weight"))));
                    in_bar
                }
                LayerCache::FanTime { input, gated, out } => {
                    let zb = tanh_back(&a_bar, out);
                    general_mat_mul(1.0, &zb.t(), gated, 1.0, &mut self.grad_mat(grad, &format!("layer{l}.weight_out")));
                    self.add_bias_grad(grad, &format!("layer{l}.bias_out"), &zb);
                    let u_bar = zb.dot(&self.mat(&format!("layer{l}.weight_out")));
                    let mut in_bar = Array2::zeros(input.raw_dim());
                    for (b, &t) in cache.times.iter().enumerate() {
                        for j in 0..n_trig {
                            let w = self.omega_of(j);
                            let (sn, cs) = (w * t).sin_cos();
                            let (g, dg) = if j < n_sin { (sn, t * cs) } else { (cs, -t * sn) };
                            in_bar[(b, j)] = u_bar[(b, j)] * g;
                            if let Some(e) = &omega_entry {
                                grad[e.offset + j % n_freq] += u_bar[(b, j)] * input[(b, j)] * dg;
                            }
                        }
                    }
                    let ub2 = u_bar.slice(s![.., n_trig..]).to_owned();
                    let lin_in = input.slice(s![.., n_trig..]);
                    general_mat_mul(1.0, &ub2.t(), &lin_in, 1.0, &mut self.grad_mat(grad, &format!("layer{l}.weight_in")));
                    self.add_bias_grad(grad, &format!("layer{l}.bias_in"), &ub2);
                    in_bar
                        .slice_mut(s![.., n_trig..])
                        .assign(&ub2.dot(&self.mat(&format!("layer{l}.weight_in"))));
                    in_bar
                }
            };
        }
        if self.spec.append_time {
            a_bar.slice(s![.., ..self.spec.state_dim]).to_owned()
        } else {
            a_bar
        }
    }
}

fn affine(a: &Array2<f64>, w: ArrayView2<'_, f64>, b: ArrayView1<'_, f64>) -> Array2<f64> {
    let mut z = a.dot(&w.t());
    z += &b;
    z
}

fn dense_tanh(a: &Array2<f64>, w: ArrayView2<'_, f64>, b: ArrayView1<'_, f64>) -> Array2<f64> {
    let mut z = affine(a, w, b);
    z.mapv_inplace(f64::tanh);
    z
}

fn tanh_back(y_bar: &Array2<f64>, y: &Array2<f64>) -> Array2<f64> {
    let mut z = y_bar.clone();
    z.zip_mut_with(y, |zb, &yv| *zb *= 1.0 - yv * yv);
    z
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(variant: Variant) -> NetworkSpec {
        NetworkSpec {
            frequencies: vec![0.5, 1.0, 3.0],
            ..NetworkSpec::new(variant, 3).with_width(8)
        }
    }

    #[test]
    fn layout_covers_vector_once() {
        for v in [Variant::Fcn, Variant::Fan, Variant::FanTime] {
            let mut spec = small(v);
            spec.train_frequencies = true;
            let layout = spec.layout().unwrap();
            let mut next = 0;
            for e in layout.entries() {
                assert_eq!(e.offset, next, "{}", e.name);
                next += e.len();
            }
            assert_eq!(next, layout.n_params());
        }
        let d = NetworkSpec::new(Variant::Fan, 63);
        assert_eq!(d.fan_partition, (32, 32, 64));
        assert!(d.layout().is_ok());
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = small(Variant::Fan);
        s.fan_partition = (4, 4, 4);
        assert!(s.validate().is_err());
        let mut s = small(Variant::FanTime);
        s.frequencies.clear();
        assert!(s.validate().is_err());
        let mut s = small(Variant::Fan);
        s.depth = 2;
        assert!(s.validate().is_err());
        let net = Network::init(small(Variant::Fcn), 0).unwrap();
        assert!(net.forward_single(0.0, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn zero_parameters_give_zero_field() {
        for v in [Variant::Fcn, Variant::Fan, Variant::FanTime] {
            let spec = small(v);
            let n = spec.layout().unwrap().n_params();
            let net = Network::new(spec, vec![0.0; n]).unwrap();
            assert_eq!(net.forward_single(0.7, &[0.3, -1.0, 2.0]).unwrap(), vec![0.0; 3]);
        }
    }

    #[test]
    fn trig_features_bounded() {
        let mut spec = small(Variant::Fan);
        spec.frequencies = vec![1000.0];
        let net = Network::init(spec, 5).unwrap();
        let x = Array2::from_shape_fn((4, 3), |(i, j)| 50.0 * (i as f64 - j as f64));
        let (_, cache) = net.forward_cached(&[0.0; 4], x.view()).unwrap();
        let n_trig = 4;
        // the trig block of layer 1 is the input of layer 2
        let LayerCache::Dense { input, .. } = &cache.layers[2] else {
            panic!("last hidden layer is dense");
        };
        assert!(input.slice(s![.., ..n_trig]).iter().all(|v| v.abs() <= 1.0));
    }
}
