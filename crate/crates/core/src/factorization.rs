//! Non-negative matrix factorisation `X ≈ S · W` with Lee–Seung
//! multiplicative updates on the Frobenius objective.
//!
//! `S` (channels × r) is the spatial synergy matrix, `W` (r × samples) the
//! temporal weighting. Columns of `S` are unit-L2 on return, with the scale
//! carried by the matching rows of `W`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{open_unit, rng};
use crate::tensor::Matrix;

/// Floor applied to every multiplicative-update denominator.
pub const DIVISION_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Fit stops once the relative decrease of the objective drops below this.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 500,
            tolerance: 1e-6,
            seed: 0,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::arg("max_iterations must be at least 1"));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::arg(format!(
                "tolerance must be positive and finite, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmfModel {
    /// Spatial profile, channels × r, unit-norm columns.
    pub synergy: Matrix,
    /// Temporal profile, r × samples.
    pub weights: Matrix,
    /// `‖X − SW‖_F / ‖X‖_F`, zero for an all-zero input.
    pub final_error: f64,
    pub iterations: usize,
    /// `‖X − SW‖_F` at initialisation and after every update step.
    pub objective_history: Vec<f64>,
}

fn residual_norm(x: &Matrix, s: &Matrix, w: &Matrix) -> f64 {
    let approx = s.matmul(w).expect("factor shapes checked");
    x.data()
        .iter()
        .zip(approx.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// `target ← target ⊙ numer / max(denom, floor)`, elementwise.
pub(crate) fn multiplicative_step(target: &mut [f64], numer: &[f64], denom: &[f64]) {
    for ((t, &n), &d) in target.iter_mut().zip(numer).zip(denom) {
        *t *= n / d.max(DIVISION_FLOOR);
    }
}

pub fn nmf(x: &Matrix, rank: usize, opts: &FitOptions) -> Result<NmfModel> {
    opts.validate()?;
    let (m, n) = (x.rows(), x.cols());
    if rank == 0 || rank > m.min(n) {
        return Err(Error::arg(format!(
            "rank {rank} outside 1..={} for a {m}x{n} matrix",
            m.min(n)
        )));
    }
    if let Some(pos) = x.data().iter().position(|v| !(*v >= 0.0)) {
        return Err(Error::input(format!(
            "entry ({}, {}) is {}; NMF input must be non-negative",
            pos % m,
            pos / m,
            x.data()[pos]
        )));
    }

    let x_norm = x.frobenius_norm();
    if x_norm == 0.0 {
        let u = 1.0 / (m as f64).sqrt();
        return Ok(NmfModel {
            synergy: Matrix::from_fn(m, rank, |_, _| u),
            weights: Matrix::zeros(rank, n),
            final_error: 0.0,
            iterations: 0,
            objective_history: vec![0.0],
        });
    }

    let mut r = rng(opts.seed);
    let mut s = Matrix::from_fn(m, rank, |_, _| open_unit(&mut r));
    let mut w = Matrix::from_fn(rank, n, |_, _| open_unit(&mut r));

    let mut history = vec![residual_norm(x, &s, &w)];
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        // W ← W ⊙ SᵀX / (SᵀS W)
        let numer = s.t_matmul(x)?;
        let denom = s.gram().matmul(&w)?;
        multiplicative_step(w.data_mut(), numer.data(), denom.data());
        // S ← S ⊙ XWᵀ / (S WWᵀ)
        let numer = x.matmul_t(&w)?;
        let denom = s.matmul(&w.matmul_t(&w)?)?;
        multiplicative_step(s.data_mut(), numer.data(), denom.data());

        iterations += 1;
        let prev = *history.last().unwrap();
        let obj = residual_norm(x, &s, &w);
        history.push(obj);
        if obj == 0.0 || (prev - obj) / prev < opts.tolerance {
            break;
        }
    }

    normalise_columns(&mut s, &mut w);
    rescale_to_best_fit(x, &s, &mut w);
    let final_error = (residual_norm(x, &s, &w) / x_norm).min(1.0);

    Ok(NmfModel {
        synergy: s,
        weights: w,
        final_error,
        iterations,
        objective_history: history,
    })
}

/// Moves column norms of `s` into the rows of `w`. A zero column becomes the
/// uniform unit vector with a zero weight row.
fn normalise_columns(s: &mut Matrix, w: &mut Matrix) {
    let m = s.rows();
    for j in 0..s.cols() {
        let norm = s.column(j).iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            s.column_mut(j).iter_mut().for_each(|v| *v /= norm);
        } else {
            s.column_mut(j).fill(1.0 / (m as f64).sqrt());
        }
        for k in 0..w.cols() {
            w.set(j, k, w.get(j, k) * norm);
        }
    }
}

/// Scales `w` by the least-squares optimal non-negative factor along the ray
/// through the current approximation.
fn rescale_to_best_fit(x: &Matrix, s: &Matrix, w: &mut Matrix) {
    let approx = s.matmul(w).expect("factor shapes checked");
    let num: f64 = x.data().iter().zip(approx.data()).map(|(a, b)| a * b).sum();
    let den: f64 = approx.data().iter().map(|b| b * b).sum();
    if den > 0.0 && num > 0.0 {
        let alpha = num / den;
        w.data_mut().iter_mut().for_each(|v| *v *= alpha);
    }
}

/// Rank-1 NMF spatial feature of a channels × samples envelope: the unit
/// synergy vector (one entry per channel).
pub fn nmf_synergy_feature(epoch: &Matrix, opts: &FitOptions) -> Result<Vec<f64>> {
    let model = nmf(epoch, 1, opts)?;
    Ok(model.synergy.column(0).to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn outer(s: &[f64], w: &[f64]) -> Matrix {
        Matrix::from_fn(s.len(), w.len(), |i, j| s[i] * w[j])
    }

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        d / (na * nb)
    }

    fn positive_vec(seed: u64, n: usize) -> Vec<f64> {
        let mut r = rng(seed);
        (0..n).map(|_| 0.1 + r.random::<f64>()).collect()
    }

    #[test]
    fn rank_one_recovery() {
        let s = positive_vec(1, 6);
        let w = positive_vec(2, 40);
        let x = outer(&s, &w);
        let model = nmf(&x, 1, &FitOptions::default()).unwrap();
        assert!(model.final_error < 1e-6, "error {}", model.final_error);
        assert!(cosine(model.synergy.column(0), &s) > 1.0 - 1e-9);
    }

    #[test]
    fn zero_input_is_degenerate_not_error() {
        let x = Matrix::zeros(4, 7);
        let model = nmf(&x, 2, &FitOptions::default()).unwrap();
        assert_eq!(model.final_error, 0.0);
        assert!(model.weights.data().iter().all(|&v| v == 0.0));
        assert!(model
            .synergy
            .data()
            .iter()
            .all(|&v| (v - 0.5).abs() < 1e-15));
        let f = nmf_synergy_feature(&x, &FitOptions::default()).unwrap();
        assert_eq!(f, vec![0.5; 4]);
    }

    #[test]
    fn identity_full_rank() {
        let x = Matrix::identity(4);
        for seed in 0..8 {
            let model = nmf(&x, 4, &FitOptions::default().with_seed(seed)).unwrap();
            assert!(
                model.final_error < 1e-6,
                "seed {seed}: error {}",
                model.final_error
            );
        }
    }

    #[test]
    fn argument_errors() {
        let x = Matrix::from_fn(3, 5, |_, _| 1.0);
        let o = FitOptions::default();
        assert!(matches!(nmf(&x, 0, &o), Err(Error::InvalidArgument(_))));
        assert!(matches!(nmf(&x, 4, &o), Err(Error::InvalidArgument(_))));
        let mut neg = x.clone();
        neg.set(1, 2, -1e-3);
        assert!(matches!(nmf(&neg, 1, &o), Err(Error::InvalidInput(_))));
        let bad = FitOptions {
            max_iterations: 0,
            ..o
        };
        assert!(nmf(&x, 1, &bad).is_err());
        let bad = FitOptions {
            tolerance: 0.0,
            ..o
        };
        assert!(nmf(&x, 1, &bad).is_err());
    }

    #[test]
    fn feature_concentrated_channel() {
        let w = positive_vec(5, 50);
        let x = Matrix::from_fn(8, 50, |i, j| if i == 3 { w[j] } else { 0.0 });
        let f = nmf_synergy_feature(&x, &FitOptions::default()).unwrap();
        assert!((f[3] - 1.0).abs() < 1e-12);
        assert!(f.iter().enumerate().all(|(i, &v)| i == 3 || v == 0.0));
    }

    #[test]
    fn feature_planted_spatial_vector() {
        let mut s = positive_vec(7, 10);
        let n = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        s.iter_mut().for_each(|v| *v /= n);
        let env = positive_vec(8, 500);
        let f = nmf_synergy_feature(&outer(&s, &env), &FitOptions::default()).unwrap();
        assert!(1.0 - cosine(&f, &s) < 1e-4);
    }

    #[test]
    fn deterministic_per_seed() {
        let x = Matrix::from_fn(5, 30, |i, j| ((i * 7 + j * 3) % 11) as f64);
        let o = FitOptions::default().with_seed(99);
        assert_eq!(nmf(&x, 2, &o).unwrap(), nmf(&x, 2, &o).unwrap());
    }
}
