use super::operator::TraceOperator;
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EigenMethod {
    Plain,
    Cesaro,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Iterations between stagnation checks.
    pub window: usize,
    /// Residual accepted for a Cesaro-averaged fixed point.
    pub cesaro_tol: f64,
}

impl Default for PowerOptions {
    fn default() -> Self {
        PowerOptions { tol: 1e-10, max_iter: 100_000, window: 1000, cesaro_tol: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EigenResult {
    pub lambda: f64,
    /// Cell masses, total one.
    pub phi: Vec<f64>,
    /// `||A phi - phi||_1`.
    pub residual: f64,
    pub iterations: usize,
    pub method: EigenMethod,
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn normalize(x: &mut [f64]) -> f64 {
    let s: f64 = x.iter().sum();
    if s > 0.0 {
        x.iter_mut().for_each(|v| *v /= s);
    }
    s
}

/// Power iteration from the uniform vector for a column-stochastic operator.
///
/// Plain iteration stops when successive iterates are `tol`-close in `l1`. When the
/// change stops decreasing over a window, iterates are averaged over consecutive
/// windows instead; a window average is returned once its residual is below `cesaro_tol`.
pub fn leading_eigenpair(op: &dyn TraceOperator, opts: &PowerOptions) -> Result<EigenResult> {
    let n = op.rows();
    if n == 0 || op.cols() != n {
        return Err(Error::GridMismatch("power iteration needs a non-empty square operator".into()));
    }
    let mut x = vec![1.0 / n as f64; n];
    let mut y = vec![0.0; n];
    let mut lambda = 1.0;
    let mut change = f64::INFINITY;
    let mut checkpoint = f64::INFINITY;
    let mut it = 0;
    let mut recent = std::collections::VecDeque::new();
    while it < opts.max_iter {
        op.apply_into(&x, &mut y);
        lambda = normalize(&mut y);
        change = l1(&x, &y);
        std::mem::swap(&mut x, &mut y);
        it += 1;
        if change <= opts.tol {
            op.apply_into(&x, &mut y);
            let residual = l1(&x, &y);
            return Ok(EigenResult { lambda, phi: x, residual, iterations: it, method: EigenMethod::Plain });
        }
        recent.push_back(change);
        if recent.len() > opts.window {
            recent.pop_front();
        }
        if it % opts.window == 0 {
            if change > 0.5 * checkpoint {
                break;
            }
            checkpoint = change;
        }
    }
    let oscillation = if recent.is_empty() {
        0.0
    } else {
        recent.iter().copied().fold(0.0, f64::max) - recent.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let budget = opts.max_iter.saturating_sub(it).max(opts.window);
    let mut avg = vec![0.0; n];
    let mut count = 0.0;
    let mut residual = f64::INFINITY;
    for k in 0..budget {
        op.apply_into(&x, &mut y);
        normalize(&mut y);
        std::mem::swap(&mut x, &mut y);
        count += 1.0;
        avg.iter_mut().zip(&x).for_each(|(a, v)| *a += (v - *a) / count);
        if (k + 1) % opts.window == 0 || k + 1 == budget {
            op.apply_into(&avg, &mut y);
            residual = residual.min(l1(&avg, &y));
            if l1(&avg, &y) <= opts.cesaro_tol {
                let phi = avg.clone();
                return Ok(EigenResult { lambda, phi, residual, iterations: it + k + 1, method: EigenMethod::Cesaro });
            }
            avg.iter_mut().for_each(|a| *a = 0.0);
            count = 0.0;
        }
    }
    Err(Error::NoConvergence { iterations: it + budget, change: change.min(residual), oscillation })
}

/// `|lambda_2|` from power iteration on zero-sum vectors, which the column-stochastic
/// operator maps to zero-sum vectors; this is the deflation `A - phi 1^T`.
pub fn subdominant_modulus(op: &dyn TraceOperator, phi: &[f64], iterations: usize, seed: u64) -> f64 {
    let n = op.rows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let project = |x: &mut Vec<f64>| {
        let s: f64 = x.iter().sum();
        let t: f64 = phi.iter().sum();
        x.iter_mut().zip(phi).for_each(|(v, p)| *v -= s * p / t);
    };
    let norm = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
    project(&mut x);
    let mut y = vec![0.0; n];
    let tail = (iterations / 4).max(1);
    let mut log_sum = 0.0;
    let mut counted = 0;
    for k in 0..iterations {
        let nx = norm(&x);
        if nx == 0.0 || !nx.is_finite() {
            return 0.0;
        }
        x.iter_mut().for_each(|v| *v /= nx);
        op.apply_into(&x, &mut y);
        std::mem::swap(&mut x, &mut y);
        project(&mut x);
        if k >= iterations - tail {
            let r = norm(&x);
            if r < 1e-300 {
                return 0.0;
            }
            log_sum += r.ln();
            counted += 1;
        }
    }
    (log_sum / counted as f64).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::operator::SparseMatrix;

    #[test]
    fn two_state_chain() {
        let m = SparseMatrix::from_triplets(2, 2, &[(0, 0, 0.9), (1, 0, 0.1), (0, 1, 0.3), (1, 1, 0.7)]).unwrap();
        let r = leading_eigenpair(&m, &PowerOptions::default()).unwrap();
        assert!((r.phi[0] - 0.75).abs() < 1e-9);
        assert!((r.lambda - 1.0).abs() < 1e-12);
        assert!((subdominant_modulus(&m, &r.phi, 200, 1) - 0.6).abs() < 1e-9);
    }

    #[test]
    fn permutation_and_projector() {
        let perm = SparseMatrix::from_triplets(2, 2, &[(1, 0, 1.0), (0, 1, 1.0)]).unwrap();
        let r = leading_eigenpair(&perm, &PowerOptions::default()).unwrap();
        assert_eq!(r.iterations, 1);
        assert!((subdominant_modulus(&perm, &r.phi, 100, 3) - 1.0).abs() < 1e-12);
        let rank_one = SparseMatrix::from_triplets(3, 3, &(0..3).flat_map(|c| [(0, c, 0.2), (1, c, 0.3), (2, c, 0.5)]).collect::<Vec<_>>()).unwrap();
        let r = leading_eigenpair(&rank_one, &PowerOptions::default()).unwrap();
        assert!(subdominant_modulus(&rank_one, &r.phi, 50, 3) < 1e-12);
    }

    #[test]
    fn cyclic_start_needs_averaging() {
        let perm = SparseMatrix::from_triplets(3, 3, &[(1, 0, 1.0), (2, 1, 1.0), (0, 2, 1.0)]).unwrap();
        let opts = PowerOptions { max_iter: 5000, window: 100, ..PowerOptions::default() };
        assert_eq!(leading_eigenpair(&perm, &opts).unwrap().method, EigenMethod::Plain);
        let swap = SparseMatrix::from_triplets(3, 3, &[(1, 0, 1.0), (0, 1, 1.0), (0, 2, 1.0)]).unwrap();
        let r = leading_eigenpair(&swap, &opts).unwrap();
        assert_eq!(r.method, EigenMethod::Cesaro);
        assert!((r.phi[0] - 0.5).abs() < 1e-3 && r.phi[2] == 0.0);
        let cycle = SparseMatrix::from_triplets(4, 4, &[(1, 0, 1.0), (2, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)]).unwrap();
        let strict = PowerOptions { cesaro_tol: 1e-12, ..opts };
        assert!(matches!(leading_eigenpair(&cycle, &strict), Err(Error::NoConvergence { .. })));
    }
}
