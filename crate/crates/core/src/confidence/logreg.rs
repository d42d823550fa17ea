use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_LAMBDA: f64 = 1.0;
const GRAD_TOL: f64 = 1e-6;
const MAX_ITER: usize = 100;

/// L2-regularized logistic regression on standardized features.
///
/// Minimizes `J(w, b) = mean_i logloss(y_i, σ(w·z_i + b)) + λ/2 ‖w‖²`
/// where `z` is the feature vector standardized with training means and
/// population standard deviations. The bias is not penalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub lambda: f64,
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^t) without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

impl LogisticModel {
    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        self.bias
            + self
                .standardize(x)
                .iter()
                .zip(&self.weights)
                .map(|(z, w)| z * w)
                .sum::<f64>()
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.decision(x))
    }

    /// Regularized objective on raw features, for checks.
    pub fn objective(&self, x: &[Vec<f64>], y: &[bool]) -> f64 {
        let loss: f64 = x
            .iter()
            .zip(y)
            .map(|(xi, &yi)| {
                let t = self.decision(xi);
                if yi {
                    softplus(-t)
                } else {
                    softplus(t)
                }
            })
            .sum::<f64>()
            / x.len() as f64;
        loss + 0.5 * self.lambda * self.weights.iter().map(|w| w * w).sum::<f64>()
    }
}

pub fn train_logreg(x: &[Vec<f64>], y: &[bool], lambda: f64) -> Result<LogisticModel> {
    let n = x.len();
    if n == 0 || y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
        return Err(Error::SingleClass);
    }
    let d = x[0].len();
    let mean: Vec<f64> = (0..d).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let scale: Vec<f64> = (0..d)
        .map(|j| {
            let var = x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n as f64;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    // Design matrix with a trailing column of ones for the bias.
    let z = DMatrix::from_fn(n, d + 1, |i, j| if j < d { (x[i][j] - mean[j]) / scale[j] } else { 1.0 });
    let t = DVector::from_iterator(n, y.iter().map(|&v| f64::from(u8::from(v))));
    let mut reg = DVector::from_element(d + 1, lambda);
    reg[d] = 0.0;

    let objective = |beta: &DVector<f64>| -> f64 {
        let eta = &z * beta;
        let loss: f64 = eta
            .iter()
            .zip(t.iter())
            .map(|(&e, &ti)| if ti > 0.5 { softplus(-e) } else { softplus(e) })
            .sum::<f64>()
            / n as f64;
        loss + 0.5 * (0..d).map(|j| lambda * beta[j] * beta[j]).sum::<f64>()
    };

    let mut beta = DVector::zeros(d + 1);
    let mut converged = false;
    for _ in 0..MAX_ITER {
        let p = (&z * &beta).map(sigmoid);
        let grad = z.transpose() * (&p - &t) / n as f64 + reg.component_mul(&beta);
        if grad.norm() < GRAD_TOL {
            converged = true;
            break;
        }
        let s = p.map(|v| v * (1.0 - v) / n as f64);
        let mut h = z.transpose() * DMatrix::from_fn(n, d + 1, |i, j| s[i] * z[(i, j)]);
        for j in 0..=d {
            h[(j, j)] += reg[j] + 1e-12;
        }
        let step = h
            .cholesky()
            .ok_or_else(|| Error::InvalidInput("logistic Hessian is not positive definite".into()))?
            .solve(&grad);
        // Backtracking keeps the iteration monotone far from the optimum.
        let f0 = objective(&beta);
        let slope = grad.dot(&step);
        let mut a = 1.0;
        loop {
            let cand = &beta - &step * a;
            if objective(&cand) <= f0 - 1e-4 * a * slope || a < 1e-10 {
                beta = cand;
                break;
            }
            a *= 0.5;
        }
    }
    if !converged {
        tracing::warn!("logistic regression stopped after {MAX_ITER} Newton steps");
    }
    Ok(LogisticModel {
        mean,
        scale,
        weights: beta.iter().take(d).copied().collect(),
        bias: beta[d],
        lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn noisy(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.gen_range(-2.0..2.0), rng.gen_range(0.0..10.0), 3.0])
            .collect();
        let y = x
            .iter()
            .map(|r| r[0] + 0.2 * r[1] + rng.gen_range(-1.0..1.0) > 1.0)
            .collect();
        (x, y)
    }

    #[test]
    fn separable_1d_is_monotone() {
        let x: Vec<Vec<f64>> = (-10..=10).filter(|&v| v != 0).map(|v| vec![f64::from(v)]).collect();
        let y: Vec<bool> = x.iter().map(|r| r[0] > 0.0).collect();
        let m = train_logreg(&x, &y, DEFAULT_LAMBDA).unwrap();
        let ps: Vec<f64> = (-20..=20).map(|v| m.predict_proba(&[f64::from(v) / 2.0])).collect();
        assert!(ps.windows(2).all(|w| w[0] < w[1]));
        assert!((m.predict_proba(&[0.0]) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn gradient_vanishes_by_finite_differences() {
        let (x, y) = noisy(60, 1);
        let m = train_logreg(&x, &y, DEFAULT_LAMBDA).unwrap();
        let f0 = m.objective(&x, &y);
        let h = 1e-5;
        for j in 0..=m.weights.len() {
            let bump = |delta: f64| {
                let mut q = m.clone();
                if j < q.weights.len() {
                    q.weights[j] += delta;
                } else {
                    q.bias += delta;
                }
                q.objective(&x, &y)
            };
            let g = (bump(h) - bump(-h)) / (2.0 * h);
            assert!(g.abs() < 1e-6, "coordinate {j}: {g}");
            assert!(bump(1e-3) >= f0 && bump(-1e-3) >= f0);
        }
        // brute-force objective from the definition
        let direct: f64 = x
            .iter()
            .zip(&y)
            .map(|(r, &t)| {
                let p = m.predict_proba(r);
                if t {
                    -p.ln()
                } else {
                    -(1.0 - p).ln()
                }
            })
            .sum::<f64>()
            / x.len() as f64
            + 0.5 * m.weights.iter().map(|w| w * w).sum::<f64>();
        assert!((direct - f0).abs() < 1e-12);
    }

    #[test]
    fn duplicated_data_same_fit() {
        let (x, y) = noisy(50, 2);
        let a = train_logreg(&x, &y, 1.0).unwrap();
        let (x2, y2) = ([x.clone(), x.clone()].concat(), [y.clone(), y.clone()].concat());
        let b = train_logreg(&x2, &y2, 1.0).unwrap();
        for (p, q) in a.weights.iter().zip(&b.weights) {
            assert!((p - q).abs() < 1e-8);
        }
        assert!((a.bias - b.bias).abs() < 1e-8);
    }

    #[test]
    fn single_class_rejected() {
        assert!(matches!(train_logreg(&[vec![1.0]], &[true], 1.0), Err(Error::SingleClass)));
    }
}
