//! GCN layers, the pairwise edge head and their hand-derived gradients.
//!
//! Layer update: `H' = relu(Â H W + X W_in)` with `H⁰ = X`. The edge head maps
//! `[h_a ⊕ h_b]` to a logit `wᵀ[h_a ⊕ h_b] + b`, read through the logistic;
//! with a hidden head the logit is `wᵀ relu(Uᵀ[h_a ⊕ h_b] + c) + b`.

use std::fs;
use std::path::Path;

use ndarray::{s, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adjacency::NormalizedAdjacency;
use crate::error::{Error, Result};

pub const GCN1_MAGIC: [u8; 4] = *b"GCN1";

#[derive(Debug, Clone, PartialEq)]
pub struct GcnLayer {
    /// `D_l x D_{l+1}`, applied to the aggregated previous layer.
    pub weight: Array2<f64>,
    /// `D_input x D_{l+1}`, applied to the raw input features.
    pub input_weight: Array2<f64>,
}

/// Optional hidden layer of the edge head.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenHead {
    /// `2 D_L x m`: first `D_L` rows for the lower-id endpoint.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnModel {
    dims: Vec<usize>,
    pub layers: Vec<GcnLayer>,
    pub head_hidden: Option<HiddenHead>,
    /// Length `2 * D_L` (first half for the lower-id endpoint), or `m` when
    /// the head has a hidden layer.
    pub head_weight: Array1<f64>,
    pub head_bias: f64,
}

/// Per-node projections `H U_first` and `H U_second` of a hidden head, so a
/// pair's hidden pre-activation is a row sum plus the bias.
struct PairProjection {
    first: Array2<f64>,
    second: Array2<f64>,
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Activations {
    /// `Â H^(l)` per layer.
    pub aggregated: Vec<Array2<f64>>,
    /// Pre-activation `Z^(l)` per layer.
    pub pre: Vec<Array2<f64>>,
    /// `H^(0) = X` through `H^(L)`.
    pub hidden: Vec<Array2<f64>>,
}

impl Activations {
    pub fn output(&self) -> &Array2<f64> {
        self.hidden.last().expect("at least the input layer")
    }
}

/// One ordered scoring term of the edge loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeTerm {
    pub a: usize,
    pub b: usize,
    pub target: f64,
    pub weight: f64,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn logistic(x: f64) -> f64 {
    sigmoid(x)
}

fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-limit..limit))
}

impl GcnModel {
    /// Glorot-uniform initialization with a linear edge head.
    /// `dims = [D_input, D_1, ..., D_L]`.
    pub fn new(dims: &[usize], seed: u64) -> Result<Self> {
        Self::with_head(dims, 0, seed)
    }

    /// Like [`GcnModel::new`]; `head_hidden > 0` adds a ReLU layer of that
    /// width to the edge head.
    pub fn with_head(dims: &[usize], head_hidden: usize, seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::InvalidParameter(format!(
                "GCN dims {dims:?} need an input size and at least one positive layer size"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = dims[0];
        let layers = dims
            .windows(2)
            .map(|w| GcnLayer {
                weight: glorot(w[0], w[1], &mut rng),
                input_weight: glorot(input, w[1], &mut rng),
            })
            .collect();
        let out = *dims.last().expect("len >= 2");
        let (head_hidden, head_in) = if head_hidden > 0 {
            let hidden = HiddenHead {
                weight: glorot(2 * out, head_hidden, &mut rng),
                bias: Array1::zeros(head_hidden),
            };
            (Some(hidden), head_hidden)
        } else {
            (None, 2 * out)
        };
        let limit = (6.0 / (head_in + 1) as f64).sqrt();
        let head_weight = Array1::from_shape_fn(head_in, |_| rng.random_range(-limit..limit));
        Ok(Self {
            dims: dims.to_vec(),
            layers,
            head_hidden,
            head_weight,
            head_bias: 0.0,
        })
    }

    /// A linear-head model with every parameter set to zero.
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        Self::zeros_with_head(dims, 0)
    }

    pub fn zeros_with_head(dims: &[usize], head_hidden: usize) -> Result<Self> {
        let mut m = Self::with_head(dims, head_hidden, 0)?;
        m.set_params(&vec![0.0; m.num_params()])?;
        Ok(m)
    }

    /// Width of the edge head's hidden layer; 0 for a linear head.
    pub fn head_hidden_dim(&self) -> usize {
        self.head_hidden.as_ref().map_or(0, |h| h.bias.len())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().expect("len >= 2")
    }

    pub fn num_params(&self) -> usize {
        let input = self.dims[0];
        self.dims
            .windows(2)
            .map(|w| w[0] * w[1] + input * w[1])
            .sum::<usize>()
            + self.head_hidden.as_ref().map_or(0, |h| h.weight.len() + h.bias.len())
            + self.head_weight.len()
            + 1
    }

    /// Parameters flattened in declaration order: per layer `W` then `W_in`
    /// (row-major), then the head's hidden `U` and `c` if present, then the
    /// head weights, then the head bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.weight.iter());
            out.extend(l.input_weight.iter());
        }
        if let Some(h) = &self.head_hidden {
            out.extend(h.weight.iter());
            out.extend(h.bias.iter());
        }
        out.extend(self.head_weight.iter());
        out.push(self.head_bias);
        out
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(Error::DimensionMismatch(format!(
                "{} parameters given, model has {}",
                values.len(),
                self.num_params()
            )));
        }
        let mut it = values.iter().copied();
        for l in &mut self.layers {
            l.weight.iter_mut().for_each(|v| *v = it.next().expect("counted"));
            l.input_weight.iter_mut().for_each(|v| *v = it.next().expect("counted"));
        }
        if let Some(h) = &mut self.head_hidden {
            h.weight.iter_mut().for_each(|v| *v = it.next().expect("counted"));
            h.bias.iter_mut().for_each(|v| *v = it.next().expect("counted"));
        }
        self.head_weight.iter_mut().for_each(|v| *v = it.next().expect("counted"));
        self.head_bias = it.next().expect("counted");
        Ok(())
    }

    /// Rounds every parameter to the nearest `f32`, the checkpoint precision.
    pub fn round_to_f32(&mut self) {
        let p: Vec<f64> = self.params().iter().map(|&v| f64::from(v as f32)).collect();
        self.set_params(&p).expect("same length");
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|v| v.is_finite())
    }

    pub fn forward(&self, a_hat: &NormalizedAdjacency, x: &Array2<f64>) -> Result<Activations> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "features have {} columns, model expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        if a_hat.n() != x.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "adjacency has {} nodes, features have {} rows",
                a_hat.n(),
                x.nrows()
            )));
        }
        let mut aggregated = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut hidden = vec![x.clone()];
        for layer in &self.layers {
            let h = hidden.last().expect("non-empty");
            let agg = a_hat.matmul(&h.view());
            let z = agg.dot(&layer.weight) + x.dot(&layer.input_weight);
            let next = z.mapv(|v| v.max(0.0));
            aggregated.push(agg);
            pre.push(z);
            hidden.push(next);
        }
        Ok(Activations {
            aggregated,
            pre,
            hidden,
        })
    }

    fn project(&self, h: &Array2<f64>) -> Option<PairProjection> {
        let d = self.output_dim();
        self.head_hidden.as_ref().map(|hh| PairProjection {
            first: h.dot(&hh.weight.slice(s![..d, ..])),
            second: h.dot(&hh.weight.slice(s![d.., ..])),
        })
    }

    /// Hidden head pre-activation of the ordered pair.
    fn hidden_pre(&self, proj: &PairProjection, a: usize, b: usize) -> Array1<f64> {
        let c = &self.head_hidden.as_ref().expect("hidden head").bias;
        &proj.first.row(a) + &proj.second.row(b) + c
    }

    fn logit_with(&self, h: &Array2<f64>, proj: Option<&PairProjection>, a: usize, b: usize) -> f64 {
        match proj {
            Some(p) => {
                let u = self.hidden_pre(p, a, b).mapv(|v| v.max(0.0));
                self.head_weight.dot(&u) + self.head_bias
            }
            None => {
                let d = self.output_dim();
                let w_first = self.head_weight.slice(s![..d]);
                let w_second = self.head_weight.slice(s![d..]);
                w_first.dot(&h.row(a)) + w_second.dot(&h.row(b)) + self.head_bias
            }
        }
    }

    /// Logit for the ordered pair `(a, b)`: `a` uses the first half of the head.
    pub fn ordered_logit(&self, h: &Array2<f64>, a: usize, b: usize) -> f64 {
        match &self.head_hidden {
            Some(hh) => {
                let d = self.output_dim();
                let pre = hh.weight.slice(s![..d, ..]).t().dot(&h.row(a))
                    + hh.weight.slice(s![d.., ..]).t().dot(&h.row(b))
                    + &hh.bias;
                self.head_weight.dot(&pre.mapv(|v| v.max(0.0))) + self.head_bias
            }
            None => self.logit_with(h, None, a, b),
        }
    }

    /// Logits of many ordered pairs from one shared projection.
    pub fn ordered_logits(&self, h: &Array2<f64>, pairs: impl IntoIterator<Item = (usize, usize)>) -> Vec<f64> {
        let proj = self.project(h);
        pairs
            .into_iter()
            .map(|(a, b)| self.logit_with(h, proj.as_ref(), a, b))
            .collect()
    }

    /// Edge probability with the lower id placed first.
    pub fn edge_probability(&self, h: &Array2<f64>, i: usize, j: usize) -> Result<f64> {
        if i == j {
            return Err(Error::InvalidParameter(format!("edge probability of ({i}, {i})")));
        }
        for node in [i, j] {
            if node >= h.nrows() {
                return Err(Error::NodeOutOfRange {
                    node,
                    n: h.nrows(),
                });
            }
        }
        Ok(sigmoid(self.ordered_logit(h, i.min(j), i.max(j))))
    }

    /// Weighted binary cross-entropy over `terms`, normalized by total weight.
    pub fn edge_loss(&self, h: &Array2<f64>, terms: &[EdgeTerm]) -> f64 {
        let total: f64 = terms.iter().map(|t| t.weight).sum();
        if total == 0.0 {
            return 0.0;
        }
        let proj = self.project(h);
        terms
            .iter()
            .map(|t| {
                let s = self.logit_with(h, proj.as_ref(), t.a, t.b);
                t.weight * (softplus(s) - t.target * s)
            })
            .sum::<f64>()
            / total
    }

    /// Loss and analytic gradient (flattened like [`GcnModel::params`]).
    pub fn loss_and_gradient(
        &self,
        a_hat: &NormalizedAdjacency,
        x: &Array2<f64>,
        terms: &[EdgeTerm],
    ) -> Result<(f64, Vec<f64>)> {
        let act = self.forward(a_hat, x)?;
        let loss = self.edge_loss(act.output(), terms);
        let grad = self.backward(a_hat, x, &act, terms);
        Ok((loss, grad))
    }

    pub fn backward(
        &self,
        a_hat: &NormalizedAdjacency,
        x: &Array2<f64>,
        act: &Activations,
        terms: &[EdgeTerm],
    ) -> Vec<f64> {
        let d = self.output_dim();
        let h = act.output();
        let total: f64 = terms.iter().map(|t| t.weight).sum();
        let mut d_head = Array1::<f64>::zeros(self.head_weight.len());
        let mut d_bias = 0.0;
        let mut d_hidden = Array2::<f64>::zeros(h.raw_dim());
        let mut d_head_hidden = None;
        if total > 0.0 {
            match (&self.head_hidden, self.project(h)) {
                (Some(hh), Some(proj)) => {
                    let m = hh.bias.len();
                    let mut d_first = Array2::<f64>::zeros((h.nrows(), m));
                    let mut d_second = Array2::<f64>::zeros((h.nrows(), m));
                    let mut d_c = Array1::<f64>::zeros(m);
                    for t in terms {
                        let pre = self.hidden_pre(&proj, t.a, t.b);
                        let u = pre.mapv(|v| v.max(0.0));
                        let s = self.head_weight.dot(&u) + self.head_bias;
                        let g = t.weight * (sigmoid(s) - t.target) / total;
                        if g == 0.0 {
                            continue;
                        }
                        d_head.scaled_add(g, &u);
                        d_bias += g;
                        let du = ndarray::Zip::from(&pre)
                            .and(&self.head_weight)
                            .map_collect(|&z, &w| if z > 0.0 { g * w } else { 0.0 });
                        d_first.row_mut(t.a).scaled_add(1.0, &du);
                        d_second.row_mut(t.b).scaled_add(1.0, &du);
                        d_c += &du;
                    }
                    let mut d_u = Array2::<f64>::zeros(hh.weight.raw_dim());
                    d_u.slice_mut(s![..d, ..]).assign(&h.t().dot(&d_first));
                    d_u.slice_mut(s![d.., ..]).assign(&h.t().dot(&d_second));
                    d_hidden = d_first.dot(&hh.weight.slice(s![..d, ..]).t())
                        + d_second.dot(&hh.weight.slice(s![d.., ..]).t());
                    d_head_hidden = Some((d_u, d_c));
                }
                _ => {
                    let w_first = self.head_weight.slice(s![..d]);
                    let w_second = self.head_weight.slice(s![d..]);
                    for t in terms {
                        let s = self.logit_with(h, None, t.a, t.b);
                        let g = t.weight * (sigmoid(s) - t.target) / total;
                        if g == 0.0 {
                            continue;
                        }
                        d_head.slice_mut(s![..d]).scaled_add(g, &h.row(t.a));
                        d_head.slice_mut(s![d..]).scaled_add(g, &h.row(t.b));
                        d_bias += g;
                        d_hidden.row_mut(t.a).scaled_add(g, &w_first);
                        d_hidden.row_mut(t.b).scaled_add(g, &w_second);
                    }
                }
            }
        }
        if d_head_hidden.is_none() {
            if let Some(hh) = &self.head_hidden {
                d_head_hidden = Some((Array2::zeros(hh.weight.raw_dim()), Array1::zeros(hh.bias.len())));
            }
        }

        let mut layer_grads = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let mut dz = d_hidden;
            ndarray::Zip::from(&mut dz)
                .and(&act.pre[l])
                .for_each(|g, &z| {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                });
            let d_weight = act.aggregated[l].t().dot(&dz);
            let d_input = x.t().dot(&dz);
            d_hidden = if l > 0 {
                let back = dz.dot(&layer.weight.t());
                a_hat.matmul(&back.view())
            } else {
                Array2::zeros((0, 0))
            };
            layer_grads.push((d_weight, d_input));
        }
        layer_grads.reverse();

        let mut out = Vec::with_capacity(self.num_params());
        for (dw, dwin) in &layer_grads {
            out.extend(dw.iter());
            out.extend(dwin.iter());
        }
        if let Some((du, dc)) = &d_head_hidden {
            out.extend(du.iter());
            out.extend(dc.iter());
        }
        out.extend(d_head.iter());
        out.push(d_bias);
        out
    }

    /// Sign pattern of every pre-activation, including the edge head's for
    /// each term; used to detect ReLU kinks.
    pub fn relu_mask(&self, act: &Activations, terms: &[EdgeTerm]) -> Vec<bool> {
        let mut mask: Vec<bool> = act.pre.iter().flat_map(|z| z.iter().map(|&v| v > 0.0)).collect();
        if let Some(proj) = self.project(act.output()) {
            for t in terms {
                mask.extend(self.hidden_pre(&proj, t.a, t.b).iter().map(|&v| v > 0.0));
            }
        }
        mask
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&GCN1_MAGIC);
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.head_hidden_dim() as u32).to_le_bytes());
        for v in self.params() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let take_u32 = |pos: usize| -> Result<u32> {
            bytes
                .get(pos..pos + 4)
                .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
                .ok_or(Error::Truncated {
                    expected: pos + 4,
                    found: bytes.len(),
                })
        };
        if bytes.len() < 4 {
            return Err(Error::Truncated {
                expected: 8,
                found: bytes.len(),
            });
        }
        let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
        if magic != GCN1_MAGIC {
            return Err(Error::BadMagic {
                expected: GCN1_MAGIC,
                found: magic,
            });
        }
        let layers = take_u32(4)? as usize;
        if layers == 0 || layers > 1024 {
            return Err(Error::Shape(format!("layer count {layers}")));
        }
        let dims = (0..=layers)
            .map(|k| take_u32(8 + 4 * k).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let head_pos = 8 + 4 * (layers + 1);
        let head_hidden = take_u32(head_pos)? as usize;
        if head_hidden > 1 << 20 {
            return Err(Error::Shape(format!("edge head width {head_hidden}")));
        }
        let mut model = Self::zeros_with_head(&dims, head_hidden)?;
        let start = head_pos + 4;
        let expected = start + 4 * model.num_params();
        if bytes.len() != expected {
            return Err(Error::Truncated {
                expected,
                found: bytes.len(),
            });
        }
        let params: Vec<f64> = bytes[start..]
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
            .collect();
        if let Some(pos) = params.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: 0, col: pos });
        }
        model.set_params(&params)?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Euclidean norm of a flattened gradient.
pub fn grad_norm(g: &[f64]) -> f64 {
    g.iter().map(|v| v * v).sum::<f64>().sqrt()
}
