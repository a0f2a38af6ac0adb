//! Linear-chain CRF over per-sentence emission scores.
//!
//! The transition table is `(Y + 2) × (Y + 2)`: rows are the previous state,
//! columns the next, with `Y` as START and `Y + 1` as STOP.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

pub fn start_state(num_labels: usize) -> usize {
    num_labels
}

pub fn stop_state(num_labels: usize) -> usize {
    num_labels + 1
}

/// Transitions initialized to zero, with moves into START and out of STOP
/// forbidden.
pub fn init_transitions(num_labels: usize) -> Array2<f64> {
    let n = num_labels + 2;
    let mut t = Array2::zeros((n, n));
    for i in 0..n {
        t[[i, start_state(num_labels)]] = f64::NEG_INFINITY;
        t[[stop_state(num_labels), i]] = f64::NEG_INFINITY;
    }
    t
}

pub fn logsumexp(xs: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m.is_nan() {
        return m;
    }
    m + xs.into_iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn check(em: ArrayView2<'_, f64>, trans: ArrayView2<'_, f64>) -> Result<usize> {
    if em.nrows() == 0 {
        return Err(Error::EmptySequence);
    }
    let y = em.ncols();
    if trans.dim() != (y + 2, y + 2) {
        return Err(Error::DimensionMismatch {
            expected: y + 2,
            found: trans.nrows(),
        });
    }
    Ok(y)
}

fn check_path(path: &[usize], len: usize, y: usize) -> Result<()> {
    if path.len() != len {
        return Err(Error::DimensionMismatch {
            expected: len,
            found: path.len(),
        });
    }
    if let Some(&bad) = path.iter().find(|&&l| l >= y) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            num_labels: y,
        });
    }
    Ok(())
}

/// Forward log-scores α (L × Y) and log Z.
fn forward(em: ArrayView2<'_, f64>, trans: ArrayView2<'_, f64>, y: usize) -> (Array2<f64>, f64) {
    let l = em.nrows();
    let (s, e) = (start_state(y), stop_state(y));
    let mut alpha = Array2::zeros((l, y));
    for j in 0..y {
        alpha[[0, j]] = trans[[s, j]] + em[[0, j]];
    }
    for t in 1..l {
        for j in 0..y {
            alpha[[t, j]] = em[[t, j]] + logsumexp((0..y).map(|i| alpha[[t - 1, i]] + trans[[i, j]]));
        }
    }
    let log_z = logsumexp((0..y).map(|j| alpha[[l - 1, j]] + trans[[j, e]]));
    (alpha, log_z)
}

fn backward(em: ArrayView2<'_, f64>, trans: ArrayView2<'_, f64>, y: usize) -> Array2<f64> {
    let l = em.nrows();
    let e = stop_state(y);
    let mut beta = Array2::zeros((l, y));
    for i in 0..y {
        beta[[l - 1, i]] = trans[[i, e]];
    }
    for t in (0..l - 1).rev() {
        for i in 0..y {
            beta[[t, i]] = logsumexp((0..y).map(|j| trans[[i, j]] + em[[t + 1, j]] + beta[[t + 1, j]]));
        }
    }
    beta
}

/// log Σ over all label paths of exp(score).
pub fn crf_log_partition(em: ArrayView2<'_, f64>, trans: ArrayView2<'_, f64>) -> Result<f64> {
    let y = check(em, trans)?;
    Ok(forward(em, trans, y).1)
}

/// Unnormalized score of one path, START and STOP transitions included.
pub fn crf_score(em: ArrayView2<'_, f64>, trans: ArrayView2<'_, f64>, path: &[usize]) -> Result<f64> {
    let y = check(em, trans)?;
    check_path(path, em.nrows(), y)?;
    let mut score = trans[[start_state(y), path[0]]] + trans[[path[path.len() - 1], stop_state(y)]];
    for (t, &p) in path.iter().enumerate() {
        score += em[[t, p]];
        if t > 0 {
            score += trans[[path[t - 1], p]];
        }
    }
    Ok(score)
}

/// −log p(gold | emissions).
pub fn crf_nll(em: ArrayView2<'_, f64>, trans: ArrayView2<'_, f64>, gold: &[usize]) -> Result<f64> {
    Ok(crf_log_partition(em, trans)? - crf_score(em, trans, gold)?)
}

/// NLL and its gradients with respect to the emissions and transitions.
pub fn crf_nll_grad(
    em: ArrayView2<'_, f64>,
    trans: ArrayView2<'_, f64>,
    gold: &[usize],
) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    let y = check(em, trans)?;
    check_path(gold, em.nrows(), y)?;
    let l = em.nrows();
    let (s, e) = (start_state(y), stop_state(y));
    let (alpha, log_z) = forward(em, trans, y);
    let beta = backward(em, trans, y);
    let nll = log_z - crf_score(em, trans, gold)?;

    // Expected counts under the model minus the gold counts.
    let mut d_em = Array2::zeros((l, y));
    let mut d_tr = Array2::zeros((y + 2, y + 2));
    for t in 0..l {
        for j in 0..y {
            d_em[[t, j]] = (alpha[[t, j]] + beta[[t, j]] - log_z).exp();
        }
    }
    for j in 0..y {
        d_tr[[s, j]] = d_em[[0, j]];
        d_tr[[j, e]] = d_em[[l - 1, j]];
    }
    for t in 1..l {
        for i in 0..y {
            let a = alpha[[t - 1, i]];
            for j in 0..y {
                d_tr[[i, j]] += (a + trans[[i, j]] + em[[t, j]] + beta[[t, j]] - log_z).exp();
            }
        }
    }
    for (t, &g) in gold.iter().enumerate() {
        d_em[[t, g]] -= 1.0;
        if t > 0 {
            d_tr[[gold[t - 1], g]] -= 1.0;
        }
    }
    d_tr[[s, gold[0]]] -= 1.0;
    d_tr[[gold[l - 1], e]] -= 1.0;
    Ok((nll, d_em, d_tr))
}

/// Highest-scoring path and its score. Ties go to the lower label id.
pub fn viterbi_decode(em: ArrayView2<'_, f64>, trans: ArrayView2<'_, f64>) -> Result<(Vec<usize>, f64)> {
    let y = check(em, trans)?;
    let l = em.nrows();
    let (s, e) = (start_state(y), stop_state(y));
    let mut delta: Array1<f64> = (0..y).map(|j| trans[[s, j]] + em[[0, j]]).collect();
    let mut back = vec![vec![0usize; y]; l];
    for t in 1..l {
        let mut next = Array1::zeros(y);
        for j in 0..y {
            let (mut best, mut arg) = (f64::NEG_INFINITY, 0);
            for i in 0..y {
                let v = delta[i] + trans[[i, j]];
                if v > best {
                    best = v;
                    arg = i;
                }
            }
            next[j] = best + em[[t, j]];
            back[t][j] = arg;
        }
        delta = next;
    }
    let (mut best, mut last) = (f64::NEG_INFINITY, 0);
    for j in 0..y {
        let v = delta[j] + trans[[j, e]];
        if v > best {
            best = v;
            last = j;
        }
    }
    let mut path = vec![last; l];
    for t in (1..l).rev() {
        path[t - 1] = back[t][path[t]];
    }
    Ok((path, best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn logsumexp_basics() {
        assert_abs_diff_eq!(logsumexp([1.0, 2.0]), 2.313_261_687_518_223, epsilon = 1e-12);
        assert_eq!(logsumexp([f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        assert_abs_diff_eq!(logsumexp([1000.0, 1000.0]), 1000.0 + 2f64.ln(), epsilon = 1e-9);
    }

    #[test]
    fn uniform_scores_count_paths() {
        let em = Array2::zeros((2, 2));
        let tr = init_transitions(2);
        assert_abs_diff_eq!(crf_log_partition(em.view(), tr.view()).unwrap(), 4f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn viterbi_small_case() {
        let em = array![[1.0, 0.0], [0.5, 1.0]];
        let mut tr = init_transitions(2);
        tr[[0, 1]] = -5.0;
        let (path, score) = viterbi_decode(em.view(), tr.view()).unwrap();
        assert_eq!(path, [0, 0]);
        assert_abs_diff_eq!(score, 1.5, epsilon = 1e-12);
    }

    #[test]
    fn ties_prefer_lower_labels() {
        let em = Array2::zeros((3, 3));
        let (path, _) = viterbi_decode(em.view(), init_transitions(3).view()).unwrap();
        assert_eq!(path, [0, 0, 0]);
    }

    #[test]
    fn errors() {
        let tr = init_transitions(2);
        assert!(matches!(
            crf_log_partition(Array2::zeros((0, 2)).view(), tr.view()),
            Err(Error::EmptySequence)
        ));
        assert!(matches!(
            crf_nll(Array2::zeros((2, 2)).view(), tr.view(), &[0, 2]),
            Err(Error::LabelOutOfRange { label: 2, num_labels: 2 })
        ));
        assert!(matches!(
            crf_log_partition(Array2::zeros((2, 3)).view(), tr.view()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn forbidden_moves_have_zero_gradient() {
        let em = array![[0.3, -1.0, 2.0], [0.1, 0.2, 0.3]];
        let mut tr = init_transitions(3);
        tr[[1, 2]] = 0.7;
        let (_, _, d_tr) = crf_nll_grad(em.view(), tr.view(), &[2, 0]).unwrap();
        for i in 0..5 {
            assert_eq!(d_tr[[i, 3]], 0.0);
            assert_eq!(d_tr[[4, i]], 0.0);
        }
    }
}
