//! Graph attention network over change graphs with a mean-pool readout and
//! an MLP head. Forward and backward passes are written out by hand.

mod checkpoint;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alpha::AlphaAst;
use crate::linalg::{axpy, dot, sigmoid, softplus, Matrix};

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC};

pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, thiserror::Error)]
pub enum GatError {
    #[error("bad model configuration: {0}")]
    BadConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("checkpoint: {0}")]
    Format(String),
    #[error("unsupported checkpoint version {0:?}")]
    Version(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GatConfig {
    pub layers: usize,
    pub d_in: usize,
    pub d_hidden: usize,
    pub mlp_hidden: usize,
    pub seed: u64,
}

impl Default for GatConfig {
    fn default() -> Self {
        GatConfig {
            layers: 2,
            d_in: 67,
            d_hidden: 64,
            mlp_hidden: 64,
            seed: 0,
        }
    }
}

impl GatConfig {
    pub fn validate(&self) -> Result<(), GatError> {
        if self.layers == 0 {
            return Err(GatError::BadConfig(
                "at least one attention layer is required".into(),
            ));
        }
        for (name, v) in [
            ("d_in", self.d_in),
            ("d_hidden", self.d_hidden),
            ("mlp_hidden", self.mlp_hidden),
        ] {
            if v == 0 {
                return Err(GatError::BadConfig(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GatLayerParams {
    /// `d_out × d_in` feature transform.
    pub w: Matrix,
    /// Attention vector of length `2·d_out`: the first half scores the
    /// receiving node, the second half the neighbor.
    pub a: Vec<f64>,
}

impl GatLayerParams {
    pub fn d_out(&self) -> usize {
        self.w.rows()
    }

    pub fn d_in(&self) -> usize {
        self.w.cols()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpHead {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

/// All trainable tensors. Also used to hold gradients and optimizer moments.
#[derive(Clone, Debug, PartialEq)]
pub struct GatParams {
    pub layers: Vec<GatLayerParams>,
    pub mlp: MlpHead,
}

impl GatParams {
    pub fn zeros_like(&self) -> GatParams {
        let mut z = self.clone();
        z.for_each_tensor_mut(|t| t.iter_mut().for_each(|x| *x = 0.0));
        z
    }

    /// Visits every tensor in declaration order: per layer `w` then `a`,
    /// then `w1`, `b1`, `w2`, `b2`.
    pub fn for_each_tensor(&self, mut f: impl FnMut(&[f64])) {
        for l in &self.layers {
            f(l.w.as_slice());
            f(&l.a);
        }
        f(self.mlp.w1.as_slice());
        f(&self.mlp.b1);
        f(&self.mlp.w2);
        f(std::slice::from_ref(&self.mlp.b2));
    }

    pub fn for_each_tensor_mut(&mut self, mut f: impl FnMut(&mut [f64])) {
        for l in &mut self.layers {
            f(l.w.as_mut_slice());
            f(&mut l.a);
        }
        f(self.mlp.w1.as_mut_slice());
        f(&mut self.mlp.b1);
        f(&mut self.mlp.w2);
        f(std::slice::from_mut(&mut self.mlp.b2));
    }

    pub fn len(&self) -> usize {
        let mut n = 0;
        self.for_each_tensor(|t| n += t.len());
        n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        self.for_each_tensor(|t| out.extend_from_slice(t));
        out
    }

    /// Overwrites every entry from `flat` (declaration order).
    pub fn load_flat(&mut self, flat: &[f64]) -> Result<(), GatError> {
        if flat.len() != self.len() {
            return Err(GatError::ShapeMismatch(format!(
                "{} values for {} parameters",
                flat.len(),
                self.len()
            )));
        }
        let mut at = 0;
        self.for_each_tensor_mut(|t| {
            t.copy_from_slice(&flat[at..at + t.len()]);
            at += t.len();
        });
        Ok(())
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, scale: f64, other: &GatParams) {
        let flat = other.to_flat();
        let mut at = 0;
        self.for_each_tensor_mut(|t| {
            axpy(scale, &flat[at..at + t.len()], t);
            at += t.len();
        });
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.for_each_tensor(|t| ok &= t.iter().all(|x| x.is_finite()));
        ok
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GatModel {
    pub config: GatConfig,
    pub params: GatParams,
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize, n: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit);
    (0..n).map(|_| dist.sample(rng)).collect()
}

pub fn init_model(config: &GatConfig) -> Result<GatModel, GatError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut layers = Vec::with_capacity(config.layers);
    let mut d_in = config.d_in;
    for _ in 0..config.layers {
        let d_out = config.d_hidden;
        let w = Matrix::from_vec(d_out, d_in, glorot(&mut rng, d_in, d_out, d_out * d_in));
        let a = glorot(&mut rng, 2 * d_out, 1, 2 * d_out);
        layers.push(GatLayerParams { w, a });
        d_in = d_out;
    }
    let h = config.mlp_hidden;
    let mlp = MlpHead {
        w1: Matrix::from_vec(h, d_in, glorot(&mut rng, d_in, h, h * d_in)),
        b1: vec![0.0; h],
        w2: glorot(&mut rng, h, 1, h),
        b2: 0.0,
    };
    Ok(GatModel {
        config: config.clone(),
        params: GatParams { layers, mlp },
    })
}

/// Per-node neighbor index lists. Each list is sorted, duplicate-free and
/// contains the node itself.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Neighborhoods(Vec<Vec<usize>>);

impl Neighborhoods {
    /// Self-loops plus both directions of every edge.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Neighborhoods {
        let mut lists: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for (a, b) in edges {
            lists[a].push(b);
            lists[b].push(a);
        }
        for l in &mut lists {
            l.sort_unstable();
            l.dedup();
        }
        Neighborhoods(lists)
    }

    /// Takes explicit lists; every list must contain its own node and only
    /// in-range indices. Lists are sorted and deduplicated.
    pub fn from_lists(mut lists: Vec<Vec<usize>>) -> Result<Neighborhoods, GatError> {
        let n = lists.len();
        for (i, l) in lists.iter_mut().enumerate() {
            l.sort_unstable();
            l.dedup();
            if l.binary_search(&i).is_err() {
                return Err(GatError::ShapeMismatch(format!(
                    "neighborhood of node {i} lacks the node itself"
                )));
            }
            if l.last().is_some_and(|&j| j >= n) {
                return Err(GatError::ShapeMismatch(format!(
                    "neighborhood of node {i} references a missing node"
                )));
            }
        }
        Ok(Neighborhoods(lists))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn of(&self, i: usize) -> &[usize] {
        &self.0[i]
    }

    pub fn lists(&self) -> &[Vec<usize>] {
        &self.0
    }
}

/// Model input for one graph: node features plus neighborhoods.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphInput {
    pub features: Matrix,
    pub neighbors: Neighborhoods,
}

impl GraphInput {
    pub fn new(features: Matrix, neighbors: Neighborhoods) -> Result<GraphInput, GatError> {
        if features.rows() != neighbors.len() {
            return Err(GatError::ShapeMismatch(format!(
                "{} feature rows for {} neighborhoods",
                features.rows(),
                neighbors.len()
            )));
        }
        Ok(GraphInput {
            features,
            neighbors,
        })
    }

    /// Neighborhoods from the graph's edges (annotations ignored).
    pub fn from_alpha(graph: &AlphaAst, features: Matrix) -> Result<GraphInput, GatError> {
        let n = graph.nodes.len();
        GraphInput::new(
            features,
            Neighborhoods::from_edges(n, graph.edges.iter().map(|e| (e.src, e.dst))),
        )
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

#[inline]
fn leaky_relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

struct LayerCache {
    input: Matrix,
    z: Matrix,
    /// Raw scores before LeakyReLU, aligned with the neighbor lists.
    pre: Vec<Vec<f64>>,
    alpha: Vec<Vec<f64>>,
    mixed: Matrix,
    activation: Activation,
}

fn check_layer(layer: &GatLayerParams, h: &Matrix, nbrs: &Neighborhoods) -> Result<(), GatError> {
    if h.cols() != layer.d_in() {
        return Err(GatError::ShapeMismatch(format!(
            "features have {} columns, layer expects {}",
            h.cols(),
            layer.d_in()
        )));
    }
    if layer.a.len() != 2 * layer.d_out() {
        return Err(GatError::ShapeMismatch(
            "attention vector length is not 2·d_out".into(),
        ));
    }
    if h.rows() != nbrs.len() {
        return Err(GatError::ShapeMismatch(format!(
            "{} feature rows for {} neighborhoods",
            h.rows(),
            nbrs.len()
        )));
    }
    Ok(())
}

#[allow(clippy::needless_range_loop)]
fn layer_forward_cached(
    layer: &GatLayerParams,
    h: &Matrix,
    nbrs: &Neighborhoods,
    activation: Activation,
) -> Result<(Matrix, LayerCache), GatError> {
    check_layer(layer, h, nbrs)?;
    let d_out = layer.d_out();
    let z = h.matmul_t(&layer.w);
    let (a_self, a_nbr) = layer.a.split_at(d_out);
    let s: Vec<f64> = (0..z.rows()).map(|i| dot(a_self, z.row(i))).collect();
    let t: Vec<f64> = (0..z.rows()).map(|j| dot(a_nbr, z.row(j))).collect();
    let mut pre = Vec::with_capacity(z.rows());
    let mut alpha = Vec::with_capacity(z.rows());
    let mut mixed = Matrix::zeros(z.rows(), d_out);
    for i in 0..z.rows() {
        let row_pre: Vec<f64> = nbrs.of(i).iter().map(|&j| s[i] + t[j]).collect();
        let e: Vec<f64> = row_pre.iter().map(|&x| leaky_relu(x)).collect();
        let max = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut w: Vec<f64> = e.iter().map(|x| (x - max).exp()).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        let out = mixed.row_mut(i);
        for (&j, &a) in nbrs.of(i).iter().zip(&w) {
            axpy(a, z.row(j), out);
        }
        pre.push(row_pre);
        alpha.push(w);
    }
    let mut out = mixed.clone();
    if activation == Activation::Relu {
        out.as_mut_slice().iter_mut().for_each(|x| *x = x.max(0.0));
    }
    let cache = LayerCache {
        input: h.clone(),
        z,
        pre,
        alpha,
        mixed,
        activation,
    };
    Ok((out, cache))
}

/// Normalized attention coefficients, one row per node aligned with
/// `nbrs.of(i)`.
pub fn attention_weights(
    layer: &GatLayerParams,
    h: &Matrix,
    nbrs: &Neighborhoods,
) -> Result<Vec<Vec<f64>>, GatError> {
    layer_forward_cached(layer, h, nbrs, Activation::Identity).map(|(_, c)| c.alpha)
}

pub fn gat_layer_forward(
    layer: &GatLayerParams,
    h: &Matrix,
    nbrs: &Neighborhoods,
    activation: Activation,
) -> Result<Matrix, GatError> {
    layer_forward_cached(layer, h, nbrs, activation).map(|(out, _)| out)
}

/// Gradient of one layer given the gradient at its output. Accumulates
/// into `grad` and returns the gradient with respect to the layer input.
#[allow(clippy::needless_range_loop)]
fn layer_backward(
    layer: &GatLayerParams,
    cache: &LayerCache,
    nbrs: &Neighborhoods,
    d_out_grad: &Matrix,
    grad: &mut GatLayerParams,
) -> Matrix {
    let n = cache.z.rows();
    let d_out = layer.d_out();
    let mut dm = d_out_grad.clone();
    if cache.activation == Activation::Relu {
        for (g, m) in dm.as_mut_slice().iter_mut().zip(cache.mixed.as_slice()) {
            if *m <= 0.0 {
                *g = 0.0;
            }
        }
    }
    let mut dz = Matrix::zeros(n, d_out);
    let mut ds = vec![0.0; n];
    let mut dt = vec![0.0; n];
    let mut d_alpha = Vec::new();
    for i in 0..n {
        let nb = &cache.alpha[i];
        d_alpha.clear();
        let dmi = dm.row(i);
        for (k, &j) in nbrs.of(i).iter().enumerate() {
            d_alpha.push(dot(dmi, cache.z.row(j)));
            axpy(nb[k], dmi, dz.row_mut(j));
        }
        let weighted: f64 = nb.iter().zip(&d_alpha).map(|(a, g)| a * g).sum();
        for (k, &j) in nbrs.of(i).iter().enumerate() {
            let de = nb[k] * (d_alpha[k] - weighted);
            let dpre = if cache.pre[i][k] > 0.0 {
                de
            } else {
                LEAKY_SLOPE * de
            };
            ds[i] += dpre;
            dt[j] += dpre;
        }
    }
    let (a_self, a_nbr) = layer.a.split_at(d_out);
    let (ga_self, ga_nbr) = grad.a.split_at_mut(d_out);
    for i in 0..n {
        axpy(ds[i], cache.z.row(i), ga_self);
        axpy(dt[i], cache.z.row(i), ga_nbr);
        let row = dz.row_mut(i);
        axpy(ds[i], a_self, row);
        axpy(dt[i], a_nbr, row);
    }
    dz.add_t_matmul_into(&cache.input, &mut grad.w);
    dz.matmul(&layer.w)
}

/// Mean of the node rows.
pub fn readout(h: &Matrix) -> Result<Vec<f64>, GatError> {
    if h.rows() == 0 {
        return Err(GatError::EmptyGraph);
    }
    let mut out = vec![0.0; h.cols()];
    for i in 0..h.rows() {
        axpy(1.0, h.row(i), &mut out);
    }
    let inv = 1.0 / h.rows() as f64;
    out.iter_mut().for_each(|x| *x *= inv);
    Ok(out)
}

struct ForwardPass {
    layers: Vec<LayerCache>,
    pooled: Vec<f64>,
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    logit: f64,
}

fn layer_activation(model: &GatModel, l: usize) -> Activation {
    if l + 1 == model.params.layers.len() {
        Activation::Identity
    } else {
        Activation::Relu
    }
}

fn forward(model: &GatModel, graph: &GraphInput) -> Result<ForwardPass, GatError> {
    if graph.is_empty() {
        return Err(GatError::EmptyGraph);
    }
    let mut caches = Vec::with_capacity(model.params.layers.len());
    let mut h = graph.features.clone();
    for (l, layer) in model.params.layers.iter().enumerate() {
        let (out, cache) =
            layer_forward_cached(layer, &h, &graph.neighbors, layer_activation(model, l))?;
        caches.push(cache);
        h = out;
    }
    let pooled = readout(&h)?;
    let mlp = &model.params.mlp;
    if mlp.w1.cols() != pooled.len()
        || mlp.w2.len() != mlp.w1.rows()
        || mlp.b1.len() != mlp.w1.rows()
    {
        return Err(GatError::ShapeMismatch(
            "classifier head does not fit the last layer".into(),
        ));
    }
    let hidden_pre: Vec<f64> = (0..mlp.w1.rows())
        .map(|k| dot(mlp.w1.row(k), &pooled) + mlp.b1[k])
        .collect();
    let hidden: Vec<f64> = hidden_pre.iter().map(|x| x.max(0.0)).collect();
    let logit = dot(&mlp.w2, &hidden) + mlp.b2;
    Ok(ForwardPass {
        layers: caches,
        pooled,
        hidden_pre,
        hidden,
        logit,
    })
}

/// Final-layer node representations (before pooling).
pub fn node_embeddings(model: &GatModel, graph: &GraphInput) -> Result<Matrix, GatError> {
    let mut h = graph.features.clone();
    for (l, layer) in model.params.layers.iter().enumerate() {
        h = gat_layer_forward(layer, &h, &graph.neighbors, layer_activation(model, l))?;
    }
    Ok(h)
}

pub fn predict_logit(model: &GatModel, graph: &GraphInput) -> Result<f64, GatError> {
    forward(model, graph).map(|f| f.logit)
}

/// Probability that the graph is a fixing commit.
pub fn predict(model: &GatModel, graph: &GraphInput) -> Result<f64, GatError> {
    predict_logit(model, graph).map(sigmoid)
}

fn backward(
    model: &GatModel,
    graph: &GraphInput,
    fwd: &ForwardPass,
    d_logit: f64,
    grad: &mut GatParams,
) {
    let mlp = &model.params.mlp;
    let g = &mut grad.mlp;
    axpy(d_logit, &fwd.hidden, &mut g.w2);
    g.b2 += d_logit;
    let mut d_pooled = vec![0.0; fwd.pooled.len()];
    for k in 0..mlp.w1.rows() {
        if fwd.hidden_pre[k] <= 0.0 {
            continue;
        }
        let du = d_logit * mlp.w2[k];
        g.b1[k] += du;
        axpy(du, &fwd.pooled, g.w1.row_mut(k));
        axpy(du, mlp.w1.row(k), &mut d_pooled);
    }
    let n = graph.len();
    let inv = 1.0 / n as f64;
    let mut d_h = Matrix::zeros(n, d_pooled.len());
    for i in 0..n {
        axpy(inv, &d_pooled, d_h.row_mut(i));
    }
    for l in (0..model.params.layers.len()).rev() {
        d_h = layer_backward(
            &model.params.layers[l],
            &fwd.layers[l],
            &graph.neighbors,
            &d_h,
            &mut grad.layers[l],
        );
    }
}

#[derive(Clone, Debug)]
pub struct BatchResult {
    /// Weighted cross-entropy averaged over the batch.
    pub loss: f64,
    pub gradients: GatParams,
    /// One logit per batch item, in batch order.
    pub logits: Vec<f64>,
}

/// Weighted binary cross-entropy of a logit; positives are scaled by
/// `pos_weight`.
pub fn weighted_bce(logit: f64, label: bool, pos_weight: f64) -> f64 {
    if label {
        pos_weight * softplus(-logit)
    } else {
        softplus(logit)
    }
}

/// Mean weighted cross-entropy over `batch` and its exact gradient.
/// Per-graph work may run in parallel; the gradient sum is taken in batch
/// order.
pub fn loss_and_gradients(
    model: &GatModel,
    batch: &[(&GraphInput, bool)],
    pos_weight: f64,
) -> Result<BatchResult, GatError> {
    if batch.is_empty() {
        return Err(GatError::EmptyBatch);
    }
    let scale = 1.0 / batch.len() as f64;
    let per_graph: Vec<Result<(f64, f64, GatParams), GatError>> = batch
        .par_iter()
        .map(|&(graph, label)| {
            let fwd = forward(model, graph)?;
            let loss = weighted_bce(fwd.logit, label, pos_weight);
            let p = sigmoid(fwd.logit);
            let d_logit = if label { pos_weight * (p - 1.0) } else { p } * scale;
            let mut grad = model.params.zeros_like();
            backward(model, graph, &fwd, d_logit, &mut grad);
            Ok((fwd.logit, loss, grad))
        })
        .collect();
    let mut gradients = model.params.zeros_like();
    let mut loss = 0.0;
    let mut logits = Vec::with_capacity(batch.len());
    for r in per_graph {
        let (logit, l, g) = r?;
        loss += l;
        logits.push(logit);
        gradients.add_scaled(1.0, &g);
    }
    Ok(BatchResult {
        loss: loss * scale,
        gradients,
        logits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn rand_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    fn small_model(seed: u64, d_in: usize) -> GatModel {
        init_model(&GatConfig {
            layers: 2,
            d_in,
            d_hidden: 4,
            mlp_hidden: 3,
            seed,
        })
        .unwrap()
    }

    fn path_graph(rng: &mut ChaCha8Rng, n: usize, d: usize) -> GraphInput {
        let edges: Vec<(usize, usize)> = (1..n).map(|i| (rng.gen_range(0..i), i)).collect();
        GraphInput::new(rand_matrix(rng, n, d), Neighborhoods::from_edges(n, edges)).unwrap()
    }

    #[test]
    fn shapes_and_determinism() {
        let cfg = GatConfig::default();
        let m = init_model(&cfg).unwrap();
        assert_eq!(m.params.layers[0].w.shape(), (64, 67));
        assert_eq!(m.params.layers[1].w.shape(), (64, 64));
        assert_eq!(m.params.layers[1].a.len(), 128);
        assert_eq!(m.params.mlp.w1.shape(), (64, 64));
        assert_eq!(init_model(&cfg).unwrap(), m);
        assert!(matches!(
            init_model(&GatConfig {
                layers: 0,
                ..cfg.clone()
            }),
            Err(GatError::BadConfig(_))
        ));
        assert!(matches!(
            init_model(&GatConfig { d_hidden: 0, ..cfg }),
            Err(GatError::BadConfig(_))
        ));
    }

    #[test]
    fn two_node_scalar_fixture() {
        let layer = GatLayerParams {
            w: Matrix::from_vec(1, 1, vec![2.0]),
            a: vec![1.0, -1.0],
        };
        let h = Matrix::from_vec(2, 1, vec![1.0, 3.0]);
        let nbrs = Neighborhoods::from_edges(2, [(0, 1)]);
        // z = (2, 6); pre_ij = z_i - z_j
        let lrelu = |x: f64| if x > 0.0 { x } else { 0.2 * x };
        let e00 = lrelu(0.0);
        let e01 = lrelu(2.0 - 6.0);
        let e10 = lrelu(6.0 - 2.0);
        let e11 = lrelu(0.0);
        let a00 = e00.exp() / (e00.exp() + e01.exp());
        let a10 = e10.exp() / (e10.exp() + e11.exp());
        let alpha = attention_weights(&layer, &h, &nbrs).unwrap();
        assert!((alpha[0][0] - a00).abs() < 1e-12);
        assert!((alpha[0][1] - (1.0 - a00)).abs() < 1e-12);
        assert!((alpha[1][0] - a10).abs() < 1e-12);
        let out = gat_layer_forward(&layer, &h, &nbrs, Activation::Relu).unwrap();
        assert!((out[(0, 0)] - (a00 * 2.0 + (1.0 - a00) * 6.0)).abs() < 1e-12);
        assert!((out[(1, 0)] - (a10 * 2.0 + (1.0 - a10) * 6.0)).abs() < 1e-12);
    }

    #[test]
    fn singleton_and_uniform_attention() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = GatLayerParams {
            w: rand_matrix(&mut rng, 3, 2),
            a: (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        let single = Matrix::from_vec(1, 2, vec![0.3, -0.7]);
        let n1 = Neighborhoods::from_edges(1, []);
        assert_eq!(
            attention_weights(&layer, &single, &n1).unwrap(),
            vec![vec![1.0]]
        );
        let out = gat_layer_forward(&layer, &single, &n1, Activation::Relu).unwrap();
        for k in 0..3 {
            let wh = dot(layer.w.row(k), single.row(0));
            assert_eq!(out[(0, k)], wh.max(0.0));
        }
        let same = Matrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5], vec![0.5, 0.5]]);
        let star = Neighborhoods::from_edges(3, [(0, 1), (0, 2)]);
        let alpha = attention_weights(&layer, &same, &star).unwrap();
        for row in &alpha {
            for a in row {
                assert!((a - 1.0 / row.len() as f64).abs() < 1e-15);
            }
        }
        let zero = Matrix::zeros(3, 2);
        let out = gat_layer_forward(&layer, &zero, &star, Activation::Relu).unwrap();
        assert!(out.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn readout_is_the_mean() {
        assert!(matches!(
            readout(&Matrix::zeros(0, 3)),
            Err(GatError::EmptyGraph)
        ));
        let v = Matrix::from_rows(&[vec![1.0, -2.0]]);
        assert_eq!(readout(&v).unwrap(), vec![1.0, -2.0]);
        let pm = Matrix::from_rows(&[vec![1.5, -2.0], vec![-1.5, 2.0]]);
        assert_eq!(readout(&pm).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn zero_model_predicts_half() {
        let mut m = small_model(3, 2);
        m.params
            .for_each_tensor_mut(|t| t.iter_mut().for_each(|x| *x = 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = path_graph(&mut rng, 5, 2);
        assert_eq!(predict(&m, &g).unwrap(), 0.5);
        let p0 = predict(&small_model(3, 2), &g).unwrap();
        let mut bumped = small_model(3, 2);
        bumped.params.mlp.b2 += 0.1;
        assert!(predict(&bumped, &g).unwrap() > p0);
    }

    #[test]
    fn mismatched_features_are_rejected() {
        let m = small_model(0, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = path_graph(&mut rng, 4, 2);
        assert!(matches!(predict(&m, &g), Err(GatError::ShapeMismatch(_))));
        assert!(matches!(
            loss_and_gradients(&m, &[], 1.0),
            Err(GatError::EmptyBatch)
        ));
        assert!(Neighborhoods::from_lists(vec![vec![1], vec![1]]).is_err());
        assert!(Neighborhoods::from_lists(vec![vec![0, 2], vec![1]]).is_err());
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let model = small_model(5, 3);
        let g1 = path_graph(&mut rng, 6, 3);
        let g2 = path_graph(&mut rng, 4, 3);
        let batch = [(&g1, true), (&g2, false)];
        let res = loss_and_gradients(&model, &batch, 1.7).unwrap();
        let analytic = res.gradients.to_flat();
        let base = model.params.to_flat();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for k in 0..base.len() {
            let mut m = model.clone();
            let mut p = base.clone();
            p[k] = base[k] + h;
            m.params.load_flat(&p).unwrap();
            let plus = loss_and_gradients(&m, &batch, 1.7).unwrap().loss;
            p[k] = base[k] - h;
            m.params.load_flat(&p).unwrap();
            let minus = loss_and_gradients(&m, &batch, 1.7).unwrap().loss;
            let numeric = (plus - minus) / (2.0 * h);
            let err =
                (numeric - analytic[k]).abs() / numeric.abs().max(analytic[k].abs()).max(1e-6);
            worst = worst.max(err);
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn duplicated_graph_gives_the_same_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = small_model(1, 3);
        let g = path_graph(&mut rng, 5, 3);
        let one = loss_and_gradients(&model, &[(&g, true)], 2.0).unwrap();
        let two = loss_and_gradients(&model, &[(&g, true), (&g, true)], 2.0).unwrap();
        assert!((one.loss - two.loss).abs() < 1e-15);
        for (a, b) in one.gradients.to_flat().iter().zip(two.gradients.to_flat()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn confident_predictions_have_small_loss() {
        assert!(weighted_bce(20.0, true, 1.0) <= 1e-6);
        assert!(weighted_bce(-20.0, false, 1.0) <= 1e-6);
        assert!((weighted_bce(0.0, true, 3.0) - 3.0 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn glorot_sample_mean_is_near_zero() {
        let m = init_model(&GatConfig {
            d_in: 67,
            ..GatConfig::default()
        })
        .unwrap();
        let flat: Vec<f64> = m.params.to_flat().into_iter().take(10_000).collect();
        assert_eq!(flat.len(), 10_000);
        let mean = flat.iter().sum::<f64>() / flat.len() as f64;
        assert!(mean.abs() < 0.01, "{mean}");
    }
}
