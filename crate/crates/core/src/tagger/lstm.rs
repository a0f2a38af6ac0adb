//! Single-layer LSTM with gates stacked as [input, forget, cell, output].

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// 4H × d_in
    pub w_x: Array2<f64>,
    /// 4H × H
    pub w_h: Array2<f64>,
    /// 4H
    pub b: Array1<f64>,
}

fn uniform(rng: &mut impl Rng, rows: usize, cols: usize, fan_in: usize) -> Array2<f64> {
    let r = 1.0 / (fan_in as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-r..r))
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        LstmParams {
            w_x: Array2::zeros((4 * hidden, input_dim)),
            w_h: Array2::zeros((4 * hidden, hidden)),
            b: Array1::zeros(4 * hidden),
        }
    }

    /// Uniform ±1/√fan_in weights, zero biases except the forget gate at 1.
    pub fn init(input_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut b = Array1::zeros(4 * hidden);
        b.slice_mut(s![hidden..2 * hidden]).fill(1.0);
        LstmParams {
            w_x: uniform(rng, 4 * hidden, input_dim, input_dim),
            w_h: uniform(rng, 4 * hidden, hidden, hidden),
            b,
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_h.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.w_x.ncols()
    }
}

/// Activates pre-activations `z` in place; returns the new (h, c).
fn cell(z: &mut [f64], c_prev: &[f64], h: &mut [f64], c: &mut [f64]) {
    let n = c.len();
    let (zi, rest) = z.split_at_mut(n);
    let (zf, rest) = rest.split_at_mut(n);
    let (zg, zo) = rest.split_at_mut(n);
    for k in 0..n {
        zi[k] = sigmoid(zi[k]);
        zf[k] = sigmoid(zf[k]);
        zg[k] = zg[k].tanh();
        zo[k] = sigmoid(zo[k]);
        c[k] = zf[k] * c_prev[k] + zi[k] * zg[k];
        h[k] = zo[k] * c[k].tanh();
    }
}

/// One time step.
pub fn lstm_step(
    p: &LstmParams,
    x: ArrayView1<'_, f64>,
    h_prev: ArrayView1<'_, f64>,
    c_prev: ArrayView1<'_, f64>,
) -> (Array1<f64>, Array1<f64>) {
    let n = p.hidden();
    let mut z = p.w_x.dot(&x) + p.w_h.dot(&h_prev) + &p.b;
    let (mut h, mut c) = (Array1::zeros(n), Array1::zeros(n));
    cell(
        z.as_slice_mut().expect("contiguous"),
        &c_prev.to_vec(),
        h.as_slice_mut().expect("contiguous"),
        c.as_slice_mut().expect("contiguous"),
    );
    (h, c)
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct LstmTrace {
    /// L × 4H activated gates.
    gates: Array2<f64>,
    c: Array2<f64>,
    pub h: Array2<f64>,
}

pub(crate) fn lstm_forward(p: &LstmParams, x: ArrayView2<'_, f64>) -> LstmTrace {
    let (l, n) = (x.nrows(), p.hidden());
    let mut gates = x.dot(&p.w_x.t());
    gates += &p.b;
    let mut c = Array2::zeros((l, n));
    let mut h = Array2::zeros((l, n));
    let zero = vec![0.0; n];
    for t in 0..l {
        if t > 0 {
            let rec = p.w_h.dot(&h.row(t - 1));
            let mut row = gates.row_mut(t);
            row += &rec;
        }
        let (c_prev, mut c_rest) = c.view_mut().split_at(Axis(0), t);
        let c_prev = if t > 0 { c_prev.row(t - 1).to_slice().expect("contiguous") } else { &zero[..] };
        cell(
            gates.row_mut(t).into_slice().expect("contiguous"),
            c_prev,
            h.row_mut(t).into_slice().expect("contiguous"),
            c_rest.row_mut(0).into_slice().expect("contiguous"),
        );
    }
    LstmTrace { gates, c, h }
}

/// Accumulates parameter gradients into `grad` given dLoss/dh (L × H).
pub(crate) fn lstm_backward(
    p: &LstmParams,
    x: ArrayView2<'_, f64>,
    trace: &LstmTrace,
    dh: ArrayView2<'_, f64>,
    grad: &mut LstmParams,
) {
    let (l, n) = (x.nrows(), p.hidden());
    let mut dz = Array2::zeros((l, 4 * n));
    let mut dh_next = Array1::<f64>::zeros(n);
    let mut dc_next = vec![0.0; n];
    for t in (0..l).rev() {
        let g = trace.gates.row(t);
        let c = trace.c.row(t);
        let mut dzt = dz.row_mut(t);
        for k in 0..n {
            let (i, f, gg, o) = (g[k], g[n + k], g[2 * n + k], g[3 * n + k]);
            let tc = c[k].tanh();
            let dht = dh[[t, k]] + dh_next[k];
            let dc = dc_next[k] + dht * o * (1.0 - tc * tc);
            let c_prev = if t > 0 { trace.c[[t - 1, k]] } else { 0.0 };
            dzt[k] = dc * gg * i * (1.0 - i);
            dzt[n + k] = dc * c_prev * f * (1.0 - f);
            dzt[2 * n + k] = dc * i * (1.0 - gg * gg);
            dzt[3 * n + k] = dht * tc * o * (1.0 - o);
            dc_next[k] = dc * f;
        }
        dh_next = p.w_h.t().dot(&dz.row(t));
    }
    general_mat_mul(1.0, &dz.t(), &x, 1.0, &mut grad.w_x);
    if l > 1 {
        general_mat_mul(1.0, &dz.slice(s![1.., ..]).t(), &trace.h.slice(s![..l - 1, ..]), 1.0, &mut grad.w_h);
    }
    grad.b += &dz.sum_axis(Axis(0));
}
