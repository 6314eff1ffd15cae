//! Fixed-topology Q-network: two inputs, two ReLU hidden layers, one output per action.
//!
//! All parameters live in one flat buffer. The order is fixed and is also the
//! snapshot order: layer 1 weights, layer 1 biases, layer 2 weights, layer 2
//! biases, layer 3 weights, layer 3 biases. Weights of a layer with `fan_in`
//! inputs and `fan_out` outputs are stored row-major as a `fan_in x fan_out`
//! matrix, so `w[i * fan_out + j]` connects input `i` to output `j`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::env::{Action, CarState};

pub const INPUTS: usize = 2;
pub const OUTPUTS: usize = Action::COUNT;
pub const DEFAULT_HIDDEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("layer sizes must be nonzero, got {0:?}")]
    InvalidShape([usize; 4]),
    #[error("parameter shapes differ: {0:?} vs {1:?}")]
    ShapeMismatch([usize; 4], [usize; 4]),
    #[error("non-finite network input")]
    NonFiniteInput,
    #[error("empty batch")]
    EmptyBatch,
    #[error("batch length mismatch: {states} states, {actions} actions, {targets} targets")]
    LengthMismatch {
        states: usize,
        actions: usize,
        targets: usize,
    },
    #[error("bad parameter snapshot: {0}")]
    Snapshot(String),
}

/// Action values for one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QValues(pub [f64; OUTPUTS]);

impl QValues {
    /// Greedy action, ties broken towards the lowest index.
    pub fn argmax(&self) -> Action {
        let mut best = 0;
        for a in 1..OUTPUTS {
            if self.0[a] > self.0[best] {
                best = a;
            }
        }
        Action::ALL[best]
    }

    pub fn max(&self) -> f64 {
        self.0[self.argmax().index()]
    }

    pub fn get(&self, action: Action) -> f64 {
        self.0[action.index()]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerView<'a> {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: &'a [f64],
    pub biases: &'a [f64],
}

/// Network parameters (or a gradient / moment buffer of the same shape).
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    sizes: [usize; 4],
    data: Vec<f64>,
}

fn param_count(sizes: &[usize; 4]) -> usize {
    (0..3).map(|l| sizes[l] * sizes[l + 1] + sizes[l + 1]).sum()
}

impl MlpParams {
    /// All-zero parameters for `2 -> hidden1 -> hidden2 -> 3`.
    pub fn zeros(hidden1: usize, hidden2: usize) -> Result<Self, NnError> {
        Self::zeros_with_sizes([INPUTS, hidden1, hidden2, OUTPUTS])
    }

    fn zeros_with_sizes(sizes: [usize; 4]) -> Result<Self, NnError> {
        if sizes.contains(&0) || sizes[0] != INPUTS || sizes[3] != OUTPUTS {
            return Err(NnError::InvalidShape(sizes));
        }
        Ok(Self {
            sizes,
            data: vec![0.0; param_count(&sizes)],
        })
    }

    pub fn zeros_like(other: &MlpParams) -> Self {
        Self {
            sizes: other.sizes,
            data: vec![0.0; other.data.len()],
        }
    }

    pub fn sizes(&self) -> [usize; 4] {
        self.sizes
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn same_shape(&self, other: &MlpParams) -> Result<(), NnError> {
        if self.sizes == other.sizes {
            Ok(())
        } else {
            Err(NnError::ShapeMismatch(self.sizes, other.sizes))
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    /// Offsets of (weights, biases) for layer `l` in `0..3`.
    fn offsets(&self, l: usize) -> (usize, usize, usize) {
        let mut start = 0;
        for k in 0..l {
            start += self.sizes[k] * self.sizes[k + 1] + self.sizes[k + 1];
        }
        let w_len = self.sizes[l] * self.sizes[l + 1];
        (start, start + w_len, start + w_len + self.sizes[l + 1])
    }

    pub fn layer(&self, l: usize) -> LayerView<'_> {
        let (w, b, end) = self.offsets(l);
        LayerView {
            fan_in: self.sizes[l],
            fan_out: self.sizes[l + 1],
            weights: &self.data[w..b],
            biases: &self.data[b..end],
        }
    }

    /// Mutable (weights, biases) of layer `l`.
    pub fn layer_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        let (w, b, end) = self.offsets(l);
        let (weights, rest) = self.data[w..end].split_at_mut(b - w);
        (weights, rest)
    }

    fn split_layers(&self) -> [LayerView<'_>; 3] {
        [self.layer(0), self.layer(1), self.layer(2)]
    }

    /// Text snapshot: a `mlp` header with the layer sizes, then one value per line
    /// in the documented flat order. Values use the shortest round-trip form.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.data.len() * 24);
        let [a, b, c, d] = self.sizes;
        let _ = writeln!(out, "mlp {a} {b} {c} {d}");
        for x in &self.data {
            let _ = writeln!(out, "{x:?}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, NnError> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| NnError::Snapshot("missing header".into()))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some("mlp") {
            return Err(NnError::Snapshot(format!("bad header {header:?}")));
        }
        let sizes: Vec<usize> = fields
            .map(|f| f.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|e| NnError::Snapshot(e.to_string()))?;
        let sizes: [usize; 4] = sizes
            .try_into()
            .map_err(|_| NnError::Snapshot("expected four layer sizes".into()))?;
        let mut params = Self::zeros_with_sizes(sizes)?;
        let values: Vec<f64> = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| NnError::Snapshot(e.to_string()))?;
        if values.len() != params.data.len() {
            return Err(NnError::Snapshot(format!(
                "expected {} values, found {}",
                params.data.len(),
                values.len()
            )));
        }
        params.data = values;
        Ok(params)
    }
}

/// Glorot-uniform bound for a layer.
pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Default `2 -> 32 -> 32 -> 3` network with Glorot-uniform weights and zero biases.
pub fn xavier_init(init_seed: u64) -> MlpParams {
    xavier_init_sized(DEFAULT_HIDDEN, DEFAULT_HIDDEN, init_seed)
        .expect("default layer sizes are valid")
}

pub fn xavier_init_sized(
    hidden1: usize,
    hidden2: usize,
    init_seed: u64,
) -> Result<MlpParams, NnError> {
    let mut params = MlpParams::zeros(hidden1, hidden2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
    for l in 0..3 {
        let bound = xavier_bound(params.sizes[l], params.sizes[l + 1]);
        let (weights, _) = params.layer_mut(l);
        for w in weights.iter_mut() {
            *w = rng.random_range(-bound..=bound);
        }
    }
    Ok(params)
}

/// Width of the fixed-size fast path; matches the default hidden layer.
const LANES: usize = DEFAULT_HIDDEN;

#[inline(always)]
fn dot_fixed(a: &[f64; LANES], b: &[f64; LANES]) -> f64 {
    let mut acc = [0.0f64; 4];
    for k in (0..LANES).step_by(4) {
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}

/// Four-lane dot product. The summation order is fixed so results are reproducible,
/// and the fixed-size path sums in exactly the same order.
#[inline(always)]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    if let (Ok(a), Ok(b)) = (<&[f64; LANES]>::try_from(a), <&[f64; LANES]>::try_from(b)) {
        return dot_fixed(a, b);
    }
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline(always)]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    if let (Ok(x), Ok(y)) = (<&[f64; LANES]>::try_from(x), <&mut [f64; LANES]>::try_from(&mut *y)) {
        for k in 0..LANES {
            y[k] += alpha * x[k];
        }
        return;
    }
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `pre = b + x W`. Zero inputs are skipped, which ReLU layers produce often.
#[inline(always)]
fn affine(layer: &LayerView<'_>, x: &[f64], pre: &mut [f64]) {
    pre.copy_from_slice(layer.biases);
    for (&xi, row) in x.iter().zip(layer.weights.chunks_exact(layer.fan_out)) {
        if xi != 0.0 {
            axpy(xi, row, pre);
        }
    }
}

/// Output layer, `q = b + x W` with one accumulator per action.
#[inline(always)]
fn affine_out(layer: &LayerView<'_>, x: &[f64]) -> [f64; OUTPUTS] {
    let mut q = [0.0; OUTPUTS];
    for (&xi, row) in x.iter().zip(layer.weights.chunks_exact(OUTPUTS)) {
        q[0] += xi * row[0];
        q[1] += xi * row[1];
        q[2] += xi * row[2];
    }
    for (qj, bj) in q.iter_mut().zip(layer.biases) {
        *qj += bj;
    }
    q
}

#[inline(always)]
fn relu_into(pre: &[f64], out: &mut [f64]) {
    for (o, &p) in out.iter_mut().zip(pre) {
        *o = if p > 0.0 { p } else { 0.0 };
    }
}

/// Reusable activation buffers for one forward/backward pass.
#[derive(Debug, Clone)]
pub struct Scratch {
    z1: Vec<f64>,
    a1: Vec<f64>,
    z2: Vec<f64>,
    a2: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
}

impl Scratch {
    pub fn new(params: &MlpParams) -> Self {
        let [_, h1, h2, _] = params.sizes;
        Self {
            z1: vec![0.0; h1],
            a1: vec![0.0; h1],
            z2: vec![0.0; h2],
            a2: vec![0.0; h2],
            d1: vec![0.0; h1],
            d2: vec![0.0; h2],
        }
    }

    fn fits(&self, params: &MlpParams) -> bool {
        self.z1.len() == params.sizes[1] && self.z2.len() == params.sizes[2]
    }
}

fn check_input(state: &CarState) -> Result<[f64; 2], NnError> {
    let x = state.as_input();
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(NnError::NonFiniteInput)
    }
}

/// True when the AVX2 copies of the hot loops can run. Those copies contain no
/// fused multiply-adds and every reduction keeps its fixed order, so they produce
/// bit-identical results to the portable ones.
#[inline(always)]
fn use_avx2() -> bool {
    #[cfg(target_arch = "x86_64")]
    {
        std::arch::is_x86_feature_detected!("avx2")
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        false
    }
}

#[cfg(target_arch = "x86_64")]
mod wide {
    use super::*;

    #[target_feature(enable = "avx2")]
    pub(super) fn forward_raw(params: &MlpParams, x: &[f64; 2], s: &mut Scratch) -> [f64; OUTPUTS] {
        params.forward_raw(x, s)
    }

    #[target_feature(enable = "avx2")]
    pub(super) fn accumulate_grads(
        params: &MlpParams,
        states: &[CarState],
        actions: &[Action],
        targets: &[f64],
        grads: &mut MlpParams,
        scratch: &mut Scratch,
    ) -> Result<f64, NnError> {
        super::accumulate_grads(params, states, actions, targets, grads, scratch)
    }
}

impl MlpParams {
    #[inline(always)]
    fn forward_raw(&self, x: &[f64; 2], s: &mut Scratch) -> [f64; OUTPUTS] {
        let [l1, l2, l3] = self.split_layers();
        affine(&l1, x, &mut s.z1);
        relu_into(&s.z1, &mut s.a1);
        affine(&l2, &s.a1, &mut s.z2);
        relu_into(&s.z2, &mut s.a2);
        affine_out(&l3, &s.a2)
    }

    pub fn forward(&self, state: &CarState) -> Result<QValues, NnError> {
        let mut scratch = Scratch::new(self);
        self.forward_with(state, &mut scratch)
    }

    pub fn forward_with(&self, state: &CarState, scratch: &mut Scratch) -> Result<QValues, NnError> {
        let x = check_input(state)?;
        if !scratch.fits(self) {
            *scratch = Scratch::new(self);
        }
        #[cfg(target_arch = "x86_64")]
        if use_avx2() {
            // SAFETY: AVX2 support was detected at runtime
            return Ok(QValues(unsafe { wide::forward_raw(self, &x, scratch) }));
        }
        Ok(QValues(self.forward_raw(&x, scratch)))
    }

    pub fn forward_batch(&self, states: &[CarState]) -> Result<Vec<QValues>, NnError> {
        let mut scratch = Scratch::new(self);
        states
            .iter()
            .map(|s| self.forward_with(s, &mut scratch))
            .collect()
    }
}

/// Mean-squared TD loss together with its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grads: MlpParams,
}

/// Loss `(1/B) sum (target_i - Q(s_i, a_i))^2` and its exact gradient; targets are constants.
pub fn td_loss_and_grad(
    params: &MlpParams,
    states: &[CarState],
    actions: &[Action],
    targets: &[f64],
) -> Result<LossGrad, NnError> {
    let mut grads = MlpParams::zeros_like(params);
    let mut scratch = Scratch::new(params);
    let loss = td_loss_and_grad_into(params, states, actions, targets, &mut grads, &mut scratch)?;
    Ok(LossGrad { loss, grads })
}

/// Allocation-free variant of [`td_loss_and_grad`]; `grads` is overwritten.
pub fn td_loss_and_grad_into(
    params: &MlpParams,
    states: &[CarState],
    actions: &[Action],
    targets: &[f64],
    grads: &mut MlpParams,
    scratch: &mut Scratch,
) -> Result<f64, NnError> {
    let batch = states.len();
    if batch != actions.len() || batch != targets.len() {
        return Err(NnError::LengthMismatch {
            states: batch,
            actions: actions.len(),
            targets: targets.len(),
        });
    }
    if batch == 0 {
        return Err(NnError::EmptyBatch);
    }
    params.same_shape(grads)?;
    if !scratch.fits(params) {
        *scratch = Scratch::new(params);
    }
    grads.fill(0.0);
    #[cfg(target_arch = "x86_64")]
    if use_avx2() {
        // SAFETY: AVX2 support was detected at runtime
        let loss = unsafe { wide::accumulate_grads(params, states, actions, targets, grads, scratch) }?;
        return Ok(loss / batch as f64);
    }
    let loss = accumulate_grads(params, states, actions, targets, grads, scratch)?;
    Ok(loss / batch as f64)
}

/// Sums squared residuals and accumulates gradients over the batch.
#[inline(always)]
fn accumulate_grads(
    params: &MlpParams,
    states: &[CarState],
    actions: &[Action],
    targets: &[f64],
    grads: &mut MlpParams,
    scratch: &mut Scratch,
) -> Result<f64, NnError> {
    let batch = states.len();
    let [h1, h2] = [params.sizes[1], params.sizes[2]];
    let (off2, off3) = (params.offsets(1).0, params.offsets(2).0);
    let w2 = params.layer(1).weights;
    let w3 = params.layer(2).weights;
    let scale = 2.0 / batch as f64;
    let mut loss = 0.0;

    for ((state, &action), &target) in states.iter().zip(actions).zip(targets) {
        let x = check_input(state)?;
        let q = params.forward_raw(&x, scratch);
        let a = action.index();
        let residual = q[a] - target;
        loss += residual * residual;
        let dq = scale * residual;

        let g = grads.as_mut_slice();
        let (g1, g23) = g.split_at_mut(off2);
        let (g2, g3) = g23.split_at_mut(off3 - off2);

        // output layer: only the taken action's column receives gradient
        let (gw3, gb3) = g3.split_at_mut(h2 * OUTPUTS);
        gb3[a] += dq;
        for ((((g_row, w_row), &act), &pre), d) in gw3
            .chunks_exact_mut(OUTPUTS)
            .zip(w3.chunks_exact(OUTPUTS))
            .zip(&scratch.a2)
            .zip(&scratch.z2)
            .zip(scratch.d2.iter_mut())
        {
            g_row[a] += act * dq;
            *d = if pre > 0.0 { w_row[a] * dq } else { 0.0 };
        }

        let (gw2, gb2) = g2.split_at_mut(h1 * h2);
        axpy(1.0, &scratch.d2, gb2);
        for (((g_row, w_row), &act), d) in gw2
            .chunks_exact_mut(h2)
            .zip(w2.chunks_exact(h2))
            .zip(&scratch.a1)
            .zip(scratch.d1.iter_mut())
        {
            // a1 = relu(z1), so an inactive unit has neither weight gradient nor delta
            if act > 0.0 {
                axpy(act, &scratch.d2, g_row);
                *d = dot(w_row, &scratch.d2);
            } else {
                *d = 0.0;
            }
        }

        let (gw1, gb1) = g1.split_at_mut(INPUTS * h1);
        axpy(1.0, &scratch.d1, gb1);
        for (&xi, g_row) in x.iter().zip(gw1.chunks_exact_mut(h1)) {
            axpy(xi, &scratch.d1, g_row);
        }
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn xavier_bounds_and_zero_biases() {
        let p = xavier_init(11);
        let expected = [0.420_084_025_208_402_9, 0.306_186_217_847_897_2, 0.414_039_335_605_412_5];
        for (l, bound) in expected.into_iter().enumerate() {
            let layer = p.layer(l);
            assert!(approx(xavier_bound(layer.fan_in, layer.fan_out), bound, 1e-15));
            assert!(layer.weights.iter().all(|w| w.abs() <= bound));
            assert!(layer.biases.iter().all(|&b| b == 0.0));
        }
        assert_eq!(p, xavier_init(11));
        assert_ne!(p, xavier_init(12));
    }

    #[test]
    fn zero_params_give_zero_q() {
        let p = MlpParams::zeros(32, 32).unwrap();
        let q = p.forward(&CarState::new(-0.3, 0.01)).unwrap();
        assert_eq!(q.0, [0.0; 3]);
    }

    #[test]
    fn output_bias_passthrough() {
        let mut p = MlpParams::zeros(32, 32).unwrap();
        p.layer_mut(2).1.copy_from_slice(&[1.0, 2.0, 3.0]);
        let q = p.forward(&CarState::new(0.1, -0.02)).unwrap();
        assert_eq!(q.0, [1.0, 2.0, 3.0]);
    }

    #[test]
    fn single_path_by_hand() {
        // 2 -> 1 -> 1 -> 3 with every path weight 0.5 from input 0
        let mut p = MlpParams::zeros(1, 1).unwrap();
        p.layer_mut(0).0.copy_from_slice(&[0.5, 0.0]);
        p.layer_mut(1).0.copy_from_slice(&[0.5]);
        p.layer_mut(2).0.copy_from_slice(&[0.5, -0.5, 1.0]);
        p.layer_mut(2).1.copy_from_slice(&[0.0, 0.1, 0.0]);
        let q = p.forward(&CarState::new(1.0, 0.0)).unwrap();
        // h1 = relu(0.5), h2 = relu(0.25)
        assert!(approx(q.0[0], 0.125, 1e-12));
        assert!(approx(q.0[1], -0.125 + 0.1, 1e-12));
        assert!(approx(q.0[2], 0.25, 1e-12));
    }

    #[test]
    fn non_finite_input_rejected() {
        let p = xavier_init(0);
        assert_eq!(
            p.forward(&CarState::new(f64::NAN, 0.0)),
            Err(NnError::NonFiniteInput)
        );
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(QValues([-1.0, 5.0, 2.0]).argmax(), Action::Coast);
        assert_eq!(QValues([3.0, 3.0, 0.0]).argmax(), Action::Left);
        assert_eq!(QValues([0.0, 1.0, 1.0]).argmax(), Action::Coast);
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let p = xavier_init(3);
        let states = [CarState::new(-0.5, 0.01), CarState::new(0.2, -0.03)];
        let actions = [Action::Left, Action::Right];
        let targets: Vec<f64> = states
            .iter()
            .zip(&actions)
            .map(|(s, &a)| p.forward(s).unwrap().get(a))
            .collect();
        let lg = td_loss_and_grad(&p, &states, &actions, &targets).unwrap();
        assert_eq!(lg.loss, 0.0);
        assert!(lg.grads.as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn single_sample_output_bias_gradient() {
        let p = MlpParams::zeros(32, 32).unwrap();
        let lg = td_loss_and_grad(&p, &[CarState::new(-0.5, 0.0)], &[Action::Left], &[1.0]).unwrap();
        assert_eq!(lg.loss, 1.0);
        let b3 = lg.grads.layer(2).biases;
        assert_eq!(b3, &[-2.0, 0.0, 0.0]);
    }

    #[test]
    fn length_mismatch_and_empty_batch() {
        let p = xavier_init(0);
        let s = [CarState::new(-0.5, 0.0)];
        assert!(matches!(
            td_loss_and_grad(&p, &s, &[], &[1.0]),
            Err(NnError::LengthMismatch { .. })
        ));
        assert_eq!(td_loss_and_grad(&p, &[], &[], &[]), Err(NnError::EmptyBatch));
    }

    #[test]
    fn unused_action_rows_get_no_gradient() {
        let p = xavier_init(5);
        let states = [CarState::new(-0.5, 0.01), CarState::new(-0.9, -0.02)];
        let lg = td_loss_and_grad(&p, &states, &[Action::Right, Action::Right], &[3.0, -2.0]).unwrap();
        let l3 = lg.grads.layer(2);
        for i in 0..l3.fan_in {
            assert_eq!(l3.weights[i * 3], 0.0);
            assert_eq!(l3.weights[i * 3 + 1], 0.0);
        }
        assert_eq!(l3.biases[0], 0.0);
        assert_eq!(l3.biases[1], 0.0);
        assert_ne!(l3.biases[2], 0.0);
    }

    #[test]
    fn snapshot_text_round_trip() {
        let p = xavier_init(9);
        let text = p.to_text();
        assert!(text.starts_with("mlp 2 32 32 3\n"));
        assert_eq!(MlpParams::from_text(&text).unwrap(), p);
        assert!(MlpParams::from_text("mlp 2 32 32 3\n1.0\n").is_err());
        assert!(MlpParams::from_text("nope").is_err());
    }

    #[test]
    fn rejects_zero_width_layers() {
        assert!(matches!(MlpParams::zeros(0, 4), Err(NnError::InvalidShape(_))));
    }
}
