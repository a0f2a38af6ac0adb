//! BiLSTM-CRF sequence tagger over sentence vectors.

mod crf;
mod lstm;
mod train;

use std::path::Path;

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use crf::{
    crf_log_partition, crf_nll, crf_nll_grad, crf_score, init_transitions, logsumexp, start_state, stop_state,
    viterbi_decode,
};
pub use lstm::{lstm_step, LstmParams};
pub use train::{mean_nll, train_tagger, train_tagger_with_dev, EpochStats, TaggedSequence, TrainConfig, TrainOutcome};

use crate::container::Container;
use crate::error::{Error, Result};
use lstm::{lstm_backward, lstm_forward, LstmTrace};

#[derive(Debug, Clone, PartialEq)]
pub struct TaggerModel {
    pub labels: Vec<String>,
    pub fwd: LstmParams,
    pub bwd: LstmParams,
    /// 2H × Y
    pub w_e: Array2<f64>,
    pub b_e: Array1<f64>,
    /// (Y + 2) × (Y + 2)
    pub transitions: Array2<f64>,
}

/// Parameter block names, in `params()` order.
pub const TENSORS: [&str; 9] = [
    "fwd.w_x",
    "fwd.w_h",
    "fwd.b",
    "bwd.w_x",
    "bwd.w_h",
    "bwd.b",
    "emit.w",
    "emit.b",
    "crf.transitions",
];

fn reversed(x: ArrayView2<'_, f64>) -> Array2<f64> {
    x.slice(s![..;-1, ..]).to_owned()
}

/// Forward and backward hidden states concatenated per position (L × 2H).
pub fn bilstm_encode(fwd: &LstmParams, bwd: &LstmParams, x: ArrayView2<'_, f64>) -> Array2<f64> {
    let f = lstm_forward(fwd, x);
    let b = lstm_forward(bwd, reversed(x).view());
    concat(&f, &b)
}

fn concat(f: &LstmTrace, b: &LstmTrace) -> Array2<f64> {
    let (l, n) = f.h.dim();
    let mut out = Array2::zeros((l, 2 * n));
    out.slice_mut(s![.., ..n]).assign(&f.h);
    out.slice_mut(s![.., n..]).assign(&b.h.slice(s![..;-1, ..]));
    out
}

impl TaggerModel {
    pub fn new(input_dim: usize, hidden: usize, labels: Vec<String>, seed: u64) -> Self {
        let y = labels.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fwd = LstmParams::init(input_dim, hidden, &mut rng);
        let bwd = LstmParams::init(input_dim, hidden, &mut rng);
        let r = 1.0 / ((2 * hidden) as f64).sqrt();
        let w_e = Array2::from_shape_simple_fn((2 * hidden, y), || rng.random_range(-r..r));
        TaggerModel {
            labels,
            fwd,
            bwd,
            w_e,
            b_e: Array1::zeros(y),
            transitions: init_transitions(y),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let (d, h, y) = (self.input_dim(), self.hidden(), self.num_labels());
        TaggerModel {
            labels: self.labels.clone(),
            fwd: LstmParams::zeros(d, h),
            bwd: LstmParams::zeros(d, h),
            w_e: Array2::zeros((2 * h, y)),
            b_e: Array1::zeros(y),
            transitions: Array2::zeros((y + 2, y + 2)),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.fwd.input_dim()
    }

    pub fn hidden(&self) -> usize {
        self.fwd.hidden()
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    /// Parameter tensors as flat slices, in a fixed order.
    pub fn params(&self) -> [&[f64]; 9] {
        [
            self.fwd.w_x.as_slice().expect("standard layout"),
            self.fwd.w_h.as_slice().expect("standard layout"),
            self.fwd.b.as_slice().expect("standard layout"),
            self.bwd.w_x.as_slice().expect("standard layout"),
            self.bwd.w_h.as_slice().expect("standard layout"),
            self.bwd.b.as_slice().expect("standard layout"),
            self.w_e.as_slice().expect("standard layout"),
            self.b_e.as_slice().expect("standard layout"),
            self.transitions.as_slice().expect("standard layout"),
        ]
    }

    pub fn params_mut(&mut self) -> [&mut [f64]; 9] {
        [
            self.fwd.w_x.as_slice_mut().expect("standard layout"),
            self.fwd.w_h.as_slice_mut().expect("standard layout"),
            self.fwd.b.as_slice_mut().expect("standard layout"),
            self.bwd.w_x.as_slice_mut().expect("standard layout"),
            self.bwd.w_h.as_slice_mut().expect("standard layout"),
            self.bwd.b.as_slice_mut().expect("standard layout"),
            self.w_e.as_slice_mut().expect("standard layout"),
            self.b_e.as_slice_mut().expect("standard layout"),
            self.transitions.as_slice_mut().expect("standard layout"),
        ]
    }

    fn check_input(&self, x: ArrayView2<'_, f64>) -> Result<()> {
        if x.nrows() == 0 {
            return Err(Error::EmptySequence);
        }
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: x.ncols(),
            });
        }
        Ok(())
    }

    /// Emission scores (L × Y) for a note's sentence vectors (L × d).
    pub fn emissions(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        let h = bilstm_encode(&self.fwd, &self.bwd, x);
        Ok(h.dot(&self.w_e) + &self.b_e)
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        let em = self.emissions(x)?;
        Ok(viterbi_decode(em.view(), self.transitions.view())?.0)
    }

    pub fn nll(&self, x: ArrayView2<'_, f64>, gold: &[usize]) -> Result<f64> {
        let em = self.emissions(x)?;
        crf_nll(em.view(), self.transitions.view(), gold)
    }

    /// NLL and Viterbi path from one forward pass.
    pub fn nll_and_predict(&self, x: ArrayView2<'_, f64>, gold: &[usize]) -> Result<(f64, Vec<usize>)> {
        let em = self.emissions(x)?;
        let nll = crf_nll(em.view(), self.transitions.view(), gold)?;
        Ok((nll, viterbi_decode(em.view(), self.transitions.view())?.0))
    }

    /// NLL of one note; adds its gradient to `grad`.
    pub fn loss_and_grad(&self, x: ArrayView2<'_, f64>, gold: &[usize], grad: &mut TaggerModel) -> Result<f64> {
        self.check_input(x)?;
        let n = self.hidden();
        let xr = reversed(x);
        let tf = lstm_forward(&self.fwd, x);
        let tb = lstm_forward(&self.bwd, xr.view());
        let h = concat(&tf, &tb);
        let em = h.dot(&self.w_e) + &self.b_e;
        let (nll, d_em, d_tr) = crf_nll_grad(em.view(), self.transitions.view(), gold)?;

        grad.transitions += &d_tr;
        grad.b_e += &d_em.sum_axis(Axis(0));
        general_mat_mul(1.0, &h.t(), &d_em, 1.0, &mut grad.w_e);
        let dh = d_em.dot(&self.w_e.t());
        lstm_backward(&self.fwd, x, &tf, dh.slice(s![.., ..n]), &mut grad.fwd);
        lstm_backward(&self.bwd, xr.view(), &tb, dh.slice(s![..;-1, n..]), &mut grad.bwd);
        Ok(nll)
    }

    pub fn write_to(&self, c: &mut Container, prefix: &str) {
        c.insert_text(&format!("{prefix}labels"), self.labels.join("\n"));
        let shapes = self.shapes();
        for ((name, data), shape) in TENSORS.iter().zip(self.params()).zip(shapes) {
            c.insert_f64(&format!("{prefix}{name}"), &shape, data.to_vec());
        }
    }

    pub fn read_from(c: &Container, prefix: &str) -> Result<Self> {
        let labels: Vec<String> = c.text(&format!("{prefix}labels"))?.split('\n').map(String::from).collect();
        let (_, w_x) = c.f64_any(&format!("{prefix}fwd.w_x"))?;
        let (shape, _) = c.f64_any(&format!("{prefix}fwd.w_x"))?;
        if shape.len() != 2 || shape[0] % 4 != 0 || w_x.is_empty() {
            return Err(Error::ShapeMismatch {
                name: format!("{prefix}fwd.w_x"),
                expected: vec![0, 0],
                found: shape.to_vec(),
            });
        }
        let mut model = TaggerModel::new(shape[1], shape[0] / 4, labels, 0);
        let shapes = model.shapes();
        for ((name, dst), shape) in TENSORS.iter().zip(model.params_mut()).zip(shapes) {
            dst.copy_from_slice(c.f64(&format!("{prefix}{name}"), &shape)?);
        }
        Ok(model)
    }

    fn shapes(&self) -> [Vec<usize>; 9] {
        let (d, h, y) = (self.input_dim(), self.hidden(), self.num_labels());
        [
            vec![4 * h, d],
            vec![4 * h, h],
            vec![4 * h],
            vec![4 * h, d],
            vec![4 * h, h],
            vec![4 * h],
            vec![2 * h, y],
            vec![y],
            vec![y + 2, y + 2],
        ]
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut c = Container::new();
        self.write_to(&mut c, "tagger.");
        c.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&Container::load(path)?, "tagger.")
    }
}
