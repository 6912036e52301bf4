//! Non-negative Tucker decomposition `X ≈ G ×_1 B1 ×_2 B2 … ×_N BN` and
//! projection of unseen tensors onto a trained model with one mode left free.
//!
//! Fitting alternates over the factors and then the core; each block is a
//! non-negative least-squares problem with every other block frozen. The
//! first sweeps take a few Lee–Seung multiplicative steps per block, later
//! sweeps solve each block exactly with an active-set method. Both kinds of
//! step are monotone, so the Frobenius objective never increases.
//!
//! The largest mode acts as the pivot of a sweep: its factor is updated
//! first, the data tensor is then contracted once along that mode, and all
//! remaining factors plus the core are updated from the much smaller
//! contracted tensor. This keeps each sweep to two passes over the data.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorization::{multiplicative_step, FitOptions};
use crate::io::{
    decode_ntf1, encode_ntf1, load_matrix_ntf1, load_ntf1, save_matrix_ntf1, save_ntf1,
    write_atomic,
};
use crate::nnls::nnls_gram;
use crate::seed::{derive_seed, open_unit, rng};
use crate::tensor::{
    dot, frobenius_norm, mode_n_product, multi_mode_product, reconstruct, unfold, DenseTensor,
    Matrix,
};

/// Per-mode component counts `J_k`. Serialised as a list; a
/// comma-separated string is also accepted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RanksRepr", into = "Vec<usize>")]
pub struct TuckerRanks(Vec<usize>);

#[derive(Deserialize)]
#[serde(untagged)]
enum RanksRepr {
    List(Vec<usize>),
    Text(String),
}

impl TryFrom<RanksRepr> for TuckerRanks {
    type Error = Error;
    fn try_from(r: RanksRepr) -> Result<Self> {
        match r {
            RanksRepr::List(v) => TuckerRanks::new(v),
            RanksRepr::Text(s) => s.parse(),
        }
    }
}

impl From<TuckerRanks> for Vec<usize> {
    fn from(r: TuckerRanks) -> Vec<usize> {
        r.0
    }
}

impl Default for TuckerRanks {
    fn default() -> Self {
        TuckerRanks(vec![2; 4])
    }
}

impl TuckerRanks {
    pub fn new(ranks: Vec<usize>) -> Result<Self> {
        if ranks.is_empty() || ranks.contains(&0) {
            return Err(Error::arg(format!("ranks must be positive, got {ranks:?}")));
        }
        Ok(TuckerRanks(ranks))
    }

    /// The same rank on every one of `order` modes.
    pub fn uniform(order: usize, rank: usize) -> Result<Self> {
        Self::new(vec![rank; order])
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn validate_for(&self, shape: &[usize]) -> Result<()> {
        if self.0.len() != shape.len() {
            return Err(Error::arg(format!(
                "{} ranks for a tensor of order {}",
                self.0.len(),
                shape.len()
            )));
        }
        for (k, (&j, &i)) in self.0.iter().zip(shape).enumerate() {
            if j > i {
                return Err(Error::arg(format!("rank {j} exceeds size {i} of mode {k}")));
            }
        }
        Ok(())
    }
}

impl std::str::FromStr for TuckerRanks {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let ranks = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::arg(format!("bad rank {p:?} in {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        TuckerRanks::new(ranks)
    }
}

impl std::fmt::Display for TuckerRanks {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|r| r.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuckerModel {
    pub core: DenseTensor,
    /// `factors[k]` is `I_k × J_k` with unit-L2 columns.
    pub factors: Vec<Matrix>,
    pub final_error: f64,
    pub explained_variance: f64,
    pub iterations: usize,
    /// `‖X − X̂‖_F` at initialisation and after each full sweep.
    pub objective_history: Vec<f64>,
    pub seed: u64,
}

impl TuckerModel {
    pub fn order(&self) -> usize {
        self.factors.len()
    }

    pub fn ranks(&self) -> TuckerRanks {
        TuckerRanks(self.core.shape().to_vec())
    }

    /// Input shape the model was fitted to.
    pub fn data_shape(&self) -> Vec<usize> {
        self.factors.iter().map(Matrix::rows).collect()
    }

    pub fn reconstruct(&self) -> Result<DenseTensor> {
        reconstruct(&self.core, &self.factors)
    }

    fn metadata(&self) -> String {
        let mut s = String::new();
        let join = |v: &[usize]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        writeln!(s, "order={}", self.order()).unwrap();
        writeln!(s, "shape={}", join(&self.data_shape())).unwrap();
        writeln!(s, "ranks={}", self.ranks()).unwrap();
        writeln!(s, "final_error={}", self.final_error).unwrap();
        writeln!(s, "explained_variance={}", self.explained_variance).unwrap();
        writeln!(s, "iterations={}", self.iterations).unwrap();
        writeln!(s, "seed={}", self.seed).unwrap();
        s
    }

    /// Canonical byte image of the model (core, factors, metadata).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = encode_ntf1(&self.core);
        for f in &self.factors {
            out.extend(encode_ntf1(&f.to_tensor()));
        }
        out.extend(self.metadata().into_bytes());
        out
    }

    /// Writes `core.ntf1`, `factor_<k>.ntf1` and `metadata.txt` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_ntf1(&self.core, &dir.join("core.ntf1"))?;
        for (k, f) in self.factors.iter().enumerate() {
            save_matrix_ntf1(f, &dir.join(format!("factor_{k}.ntf1")))?;
        }
        write_atomic(&dir.join("metadata.txt"), self.metadata().as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join("metadata.txt");
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let mut fields = std::collections::HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: meta_path.clone(),
                line: i + 1,
                message: format!("expected key=value, got {line:?}"),
            })?;
            fields.insert(k.trim().to_string(), (i + 1, v.trim().to_string()));
        }
        let get = |key: &str| -> Result<(usize, String)> {
            fields.get(key).cloned().ok_or_else(|| Error::Parse {
                path: meta_path.clone(),
                line: 0,
                message: format!("missing key {key:?}"),
            })
        };
        fn num<T: std::str::FromStr>(path: &Path, (line, v): (usize, String)) -> Result<T> {
            v.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("bad number {v:?}"),
            })
        }
        let order: usize = num(&meta_path, get("order")?)?;
        let core = load_ntf1(&dir.join("core.ntf1"))?;
        let factors = (0..order)
            .map(|k| load_matrix_ntf1(&dir.join(format!("factor_{k}.ntf1"))))
            .collect::<Result<Vec<_>>>()?;
        check_model_shapes(&core, &factors)?;
        Ok(TuckerModel {
            core,
            factors,
            final_error: num(&meta_path, get("final_error")?)?,
            explained_variance: num(&meta_path, get("explained_variance")?)?,
            iterations: num(&meta_path, get("iterations")?)?,
            objective_history: Vec::new(),
            seed: num(&meta_path, get("seed")?)?,
        })
    }

    /// Rebuilds a model from its [`to_bytes`](Self::to_bytes) image
    /// (objective history is not part of the image).
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let p = Path::new("<bytes>");
        let mut rest = bytes;
        let next = |rest: &mut &[u8]| -> Result<DenseTensor> {
            let len = ntf1_len(rest).ok_or_else(|| Error::Format {
                path: p.into(),
                message: "truncated model image".into(),
            })?;
            let t = decode_ntf1(&rest[..len], p)?;
            *rest = &rest[len..];
            Ok(t)
        };
        let core = next(&mut rest)?;
        let mut factors = Vec::new();
        for _ in 0..core.order() {
            let t = next(&mut rest)?;
            let (r, c) = (t.shape()[0], *t.shape().get(1).unwrap_or(&1));
            factors.push(Matrix::new(r, c, t.into_data())?);
        }
        check_model_shapes(&core, &factors)?;
        let text = std::str::from_utf8(rest).map_err(|_| Error::Format {
            path: p.into(),
            message: "metadata is not UTF-8".into(),
        })?;
        let field = |key: &str| -> f64 {
            text.lines()
                .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
                .and_then(|v| v.parse().ok())
                .unwrap_or(f64::NAN)
        };
        let seed = text
            .lines()
            .find_map(|l| l.strip_prefix("seed="))
            .and_then(|v| v.parse().ok())
            .unwrap_or(0);
        Ok(TuckerModel {
            core,
            factors,
            final_error: field("final_error"),
            explained_variance: field("explained_variance"),
            iterations: field("iterations") as usize,
            objective_history: Vec::new(),
            seed,
        })
    }
}

fn ntf1_len(bytes: &[u8]) -> Option<usize> {
    let order = u32::from_le_bytes(bytes.get(4..8)?.try_into().ok()?) as usize;
    let header = 8 + 8 * order;
    let mut numel = 1usize;
    for c in bytes.get(8..header)?.chunks_exact(8) {
        numel = numel.checked_mul(u64::from_le_bytes(c.try_into().ok()?) as usize)?;
    }
    let len = header + 8 * numel;
    (bytes.len() >= len).then_some(len)
}

fn check_model_shapes(core: &DenseTensor, factors: &[Matrix]) -> Result<()> {
    if factors.len() != core.order() {
        return Err(Error::arg(format!(
            "{} factors for a core of order {}",
            factors.len(),
            core.order()
        )));
    }
    for (k, f) in factors.iter().enumerate() {
        if f.cols() != core.shape()[k] {
            return Err(Error::arg(format!(
                "factor {k} has {} columns, core mode {k} has size {}",
                f.cols(),
                core.shape()[k]
            )));
        }
    }
    Ok(())
}

fn check_non_negative(x: &DenseTensor) -> Result<()> {
    if let Some(pos) = x.data().iter().position(|v| !(*v >= 0.0)) {
        return Err(Error::input(format!(
            "entry {pos} is {}; input tensor must be non-negative",
            x.data()[pos]
        )));
    }
    Ok(())
}

/// `unfold(g ×_{k≠mode} grams[k], mode) · unfold(g, mode)ᵀ`: the Gram matrix
/// of the mode-`mode` design matrix, `J_mode × J_mode`.
fn mode_gram(core: &DenseTensor, grams: &[Matrix], mode: usize) -> Result<Matrix> {
    let products: Vec<(usize, &Matrix)> = grams
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != mode)
        .collect();
    let weighted = multi_mode_product(core, &products)?;
    unfold(&weighted, mode)?.matmul_t(&unfold(core, mode)?)
}

/// Exact block update of one factor given the data contracted on all other
/// modes (`contracted`, with mode `mode` still at full size). Each row is an
/// independent NNLS problem sharing the Gram matrix of the design.
fn update_factor(
    factor: &mut Matrix,
    contracted: &DenseTensor,
    core: &DenseTensor,
    grams: &[Matrix],
    mode: usize,
    solver: BlockSolver,
) -> Result<()> {
    let numer = unfold(contracted, mode)?.matmul_t(&unfold(core, mode)?)?;
    let hess = mode_gram(core, grams, mode)?;
    match solver {
        BlockSolver::Exact => *factor = solve_rows(&numer, &hess),
        BlockSolver::Multiplicative(steps) => {
            for _ in 0..steps {
                let denom = factor.matmul(&hess)?;
                multiplicative_step(factor.data_mut(), numer.data(), denom.data());
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum BlockSolver {
    /// This many Lee–Seung steps on the block.
    Multiplicative(usize),
    /// Active-set NNLS to optimality.
    Exact,
}

/// Sweeps of multiplicative updates before switching to exact block solves.
/// Exact solves from a random start commit to sparse supports too early and
/// stall in poor stationary points; the warm-up avoids that.
const WARMUP_SWEEPS: usize = 50;
const WARMUP_STEPS: usize = 10;

/// Row-wise `min_{b ≥ 0} ½ b H bᵀ − n_i bᵀ` for every row `n_i` of `numer`.
fn solve_rows(numer: &Matrix, hess: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(numer.rows(), numer.cols());
    for i in 0..numer.rows() {
        let row = nnls_gram(hess.data(), &numer.row(i));
        for (j, v) in row.into_iter().enumerate() {
            out.set(i, j, v);
        }
    }
    out
}

/// Core sizes up to this many entries are solved exactly; larger cores fall
/// back to repeated multiplicative steps.
const EXACT_CORE_LIMIT: usize = 512;
const CORE_MU_STEPS: usize = 25;

/// Block update of the core given `projected = X ×_k B_kᵀ`.
fn update_core(
    core: &mut DenseTensor,
    projected: &DenseTensor,
    grams: &[Matrix],
    solver: BlockSolver,
) -> Result<()> {
    let n = core.len();
    let mu_steps = match solver {
        BlockSolver::Multiplicative(s) => s,
        BlockSolver::Exact => CORE_MU_STEPS,
    };
    if n <= EXACT_CORE_LIMIT && solver == BlockSolver::Exact {
        // Q = ⊗ B_kᵀB_k in storage order.
        let shape = core.shape().to_vec();
        let index = |mut lin: usize| -> Vec<usize> {
            shape
                .iter()
                .map(|&d| {
                    let i = lin % d;
                    lin /= d;
                    i
                })
                .collect()
        };
        let idx: Vec<Vec<usize>> = (0..n).map(index).collect();
        let mut q = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                q[a + n * b] = grams
                    .iter()
                    .enumerate()
                    .map(|(k, g)| g.get(idx[a][k], idx[b][k]))
                    .product();
            }
        }
        let solved = nnls_gram(&q, projected.data());
        core.data_mut().copy_from_slice(&solved);
    } else {
        let all: Vec<(usize, &Matrix)> = grams.iter().enumerate().collect();
        for _ in 0..mu_steps {
            let denom = multi_mode_product(core, &all)?;
            multiplicative_step(core.data_mut(), projected.data(), denom.data());
        }
    }
    Ok(())
}

fn transposes_except(factors: &[Matrix], skip: &[usize]) -> Vec<(usize, Matrix)> {
    factors
        .iter()
        .enumerate()
        .filter(|(k, _)| !skip.contains(k))
        .map(|(k, f)| (k, f.transpose()))
        .collect()
}

fn contract(x: &DenseTensor, mats: &[(usize, Matrix)]) -> Result<DenseTensor> {
    let refs: Vec<(usize, &Matrix)> = mats.iter().map(|(k, m)| (*k, m)).collect();
    multi_mode_product(x, &refs)
}

#[derive(Clone, Copy)]
enum Start {
    Spectral,
    Random,
}

/// Leading eigenvectors of `X_(n) X_(n)ᵀ`, each reduced to its dominant-sign
/// part, plus a small seeded jitter so no entry starts at zero.
fn spectral_start(
    x: &DenseTensor,
    mode: usize,
    rank: usize,
    r: &mut impl rand::Rng,
) -> Result<Matrix> {
    let g = unfold(x, mode)?.transpose().gram();
    let n = g.rows();
    let eig = SymmetricEigen::new(DMatrix::from_column_slice(n, n, g.data()));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let jitter = 0.1 / (n as f64).sqrt();
    let mut out = Matrix::zeros(n, rank);
    for (j, &k) in order.iter().take(rank).enumerate() {
        let u = eig.eigenvectors.column(k);
        let pos: f64 = u.iter().map(|v| v.max(0.0).powi(2)).sum();
        let neg: f64 = u.iter().map(|v| (-v).max(0.0).powi(2)).sum();
        let (sign, norm) = if pos >= neg {
            (1.0, pos.sqrt())
        } else {
            (-1.0, neg.sqrt())
        };
        for i in 0..n {
            out.set(i, j, (sign * u[i]).max(0.0) / norm + jitter * open_unit(r));
        }
    }
    Ok(out)
}

/// Non-negative Tucker decomposition, started from the leading singular
/// subspaces of the unfoldings (truncated one mode at a time, smallest
/// first). `opts.seed` only drives a small jitter.
pub fn ntd(x: &DenseTensor, ranks: &TuckerRanks, opts: &FitOptions) -> Result<TuckerModel> {
    ntd_from(x, ranks, opts, Start::Spectral)
}

fn ntd_from(
    x: &DenseTensor,
    ranks: &TuckerRanks,
    opts: &FitOptions,
    start: Start,
) -> Result<TuckerModel> {
    opts.validate()?;
    ranks.validate_for(x.shape())?;
    check_non_negative(x)?;
    let order = x.order();
    let shape = x.shape().to_vec();
    let rk = ranks.as_slice();

    let x_norm = frobenius_norm(x);
    if x_norm == 0.0 {
        return Ok(TuckerModel {
            core: DenseTensor::zeros(rk)?,
            factors: shape
                .iter()
                .zip(rk)
                .map(|(&i, &j)| Matrix::from_fn(i, j, |_, _| 1.0 / (i as f64).sqrt()))
                .collect(),
            final_error: 0.0,
            explained_variance: 1.0,
            iterations: 0,
            objective_history: vec![0.0],
            seed: opts.seed,
        });
    }
    let x_sq = x_norm * x_norm;

    let mut r = rng(opts.seed);
    let (mut factors, mut core) = match start {
        Start::Spectral => {
            // Smallest modes first: contracting them early shrinks the
            // tensor the large modes are analysed on.
            let mut modes: Vec<usize> = (0..order).collect();
            modes.sort_by_key(|&k| (shape[k], k));
            let mut factors = vec![Matrix::zeros(0, 0); order];
            let mut core = x.clone();
            for k in modes {
                factors[k] = spectral_start(&core, k, rk[k], &mut r)?;
                core = mode_n_product(&core, &factors[k].transpose(), k)?;
            }
            (factors, core)
        }
        Start::Random => {
            let factors = shape
                .iter()
                .zip(rk)
                .map(|(&i, &j)| Matrix::from_fn(i, j, |_, _| open_unit(&mut r)))
                .collect();
            (factors, DenseTensor::from_fn(rk, |_| open_unit(&mut r))?)
        }
    };

    // Largest mode first, ties to the lowest index.
    let pivot = (0..order)
        .max_by(|&a, &b| shape[a].cmp(&shape[b]).then(b.cmp(&a)))
        .unwrap();

    let objective =
        |core: &DenseTensor, grams: &[Matrix], projected: &DenseTensor| -> Result<f64> {
            let all: Vec<(usize, &Matrix)> = grams.iter().enumerate().collect();
            let fit_sq = dot(core.data(), multi_mode_product(core, &all)?.data());
            let cross = dot(projected.data(), core.data());
            Ok((x_sq - 2.0 * cross + fit_sq).max(0.0).sqrt())
        };

    let mut grams: Vec<Matrix> = factors.iter().map(Matrix::gram).collect();
    let initial_proj = contract(x, &transposes_except(&factors, &[]))?;
    let mut history = vec![objective(&core, &grams, &initial_proj)?];
    let mut iterations = 0;

    let mut polishing = false;
    while iterations < opts.max_iterations {
        let solver = if polishing || iterations >= WARMUP_SWEEPS {
            polishing = true;
            BlockSolver::Exact
        } else {
            BlockSolver::Multiplicative(WARMUP_STEPS)
        };
        let y = contract(x, &transposes_except(&factors, &[pivot]))?;
        update_factor(&mut factors[pivot], &y, &core, &grams, pivot, solver)?;
        grams[pivot] = factors[pivot].gram();

        let z = contract(x, &[(pivot, factors[pivot].transpose())])?;
        for mode in (0..order).filter(|&k| k != pivot) {
            let y = contract(&z, &transposes_except(&factors, &[pivot, mode]))?;
            update_factor(&mut factors[mode], &y, &core, &grams, mode, solver)?;
            grams[mode] = factors[mode].gram();
        }

        let projected = contract(&z, &transposes_except(&factors, &[pivot]))?;
        update_core(&mut core, &projected, &grams, solver)?;

        iterations += 1;
        let prev = *history.last().unwrap();
        let obj = objective(&core, &grams, &projected)?;
        history.push(obj);
        if obj == 0.0 || (prev - obj) / prev < opts.tolerance {
            if !polishing {
                polishing = true;
                continue;
            }
            break;
        }
    }

    normalise_factors(&mut core, &mut factors)?;
    let mut approx = reconstruct(&core, &factors)?;
    let cross = dot(x.data(), approx.data());
    let fit_sq = dot(approx.data(), approx.data());
    if cross > 0.0 && fit_sq > 0.0 {
        let alpha = cross / fit_sq;
        core.scale(alpha);
        approx.scale(alpha);
    }
    let final_error = (residual(x, &approx) / x_norm).min(1.0);

    Ok(TuckerModel {
        core,
        factors,
        final_error,
        explained_variance: 1.0 - final_error * final_error,
        iterations,
        objective_history: history,
        seed: opts.seed,
    })
}

/// Runs [`ntd`], then `starts - 1` further fits from uniform random starts
/// seeded from `opts.seed`, and keeps the lowest final error (earliest start
/// on ties).
pub fn ntd_multistart(
    x: &DenseTensor,
    ranks: &TuckerRanks,
    opts: &FitOptions,
    starts: usize,
) -> Result<TuckerModel> {
    if starts == 0 {
        return Err(Error::arg("need at least one start"));
    }
    let mut best: Option<TuckerModel> = None;
    for s in 0..starts as u64 {
        let m = if s == 0 {
            ntd(x, ranks, opts)?
        } else {
            ntd_from(
                x,
                ranks,
                &opts.with_seed(derive_seed(opts.seed, &[s])),
                Start::Random,
            )?
        };
        if best.as_ref().is_none_or(|b| m.final_error < b.final_error) {
            best = Some(m);
        }
    }
    Ok(best.unwrap())
}

fn residual(x: &DenseTensor, approx: &DenseTensor) -> f64 {
    x.data()
        .iter()
        .zip(approx.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Unit-L2 factor columns with the norms pushed into the core. A zero column
/// is replaced by the uniform unit vector; its core slice is already zero
/// after scaling.
fn normalise_factors(core: &mut DenseTensor, factors: &mut [Matrix]) -> Result<()> {
    let mut scalings = Vec::with_capacity(factors.len());
    for f in factors.iter_mut() {
        let n = f.rows();
        let mut diag = Matrix::zeros(f.cols(), f.cols());
        for j in 0..f.cols() {
            let norm = f.column(j).iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                f.column_mut(j).iter_mut().for_each(|v| *v /= norm);
            } else {
                f.column_mut(j).fill(1.0 / (n as f64).sqrt());
            }
            diag.set(j, j, norm);
        }
        scalings.push(diag);
    }
    let products: Vec<(usize, &Matrix)> = scalings.iter().enumerate().collect();
    *core = multi_mode_product(core, &products)?;
    Ok(())
}

/// Fraction of `‖X‖²` captured by the model: `1 − (‖X − X̂‖ / ‖X‖)²`,
/// clamped to `[0, 1]`.
pub fn explained_variance(x: &DenseTensor, model: &TuckerModel) -> Result<f64> {
    if x.shape() != model.data_shape().as_slice() {
        return Err(Error::arg(format!(
            "tensor shape {:?} does not match model shape {:?}",
            x.shape(),
            model.data_shape()
        )));
    }
    let approx = model.reconstruct()?;
    let res = residual(x, &approx);
    let norm = frobenius_norm(x);
    if norm == 0.0 {
        return if res == 0.0 {
            Ok(1.0)
        } else {
            Err(Error::input(
                "explained variance undefined for a zero tensor with a nonzero model",
            ))
        };
    }
    Ok((1.0 - (res / norm).powi(2)).clamp(0.0, 1.0))
}

/// Non-negative least-squares estimate of the free-mode factor
/// (`I'_free × J_free`) for `x`, holding the core and every other factor of
/// `model` fixed. Each row (one slice of `x` along the free mode) is solved
/// exactly; the result is homogeneous of degree one in `x`.
pub fn project(x: &DenseTensor, model: &TuckerModel, free_mode: usize) -> Result<Matrix> {
    let order = model.order();
    if free_mode >= order {
        return Err(Error::arg(format!(
            "free mode {free_mode} out of range for order {order}"
        )));
    }
    if x.order() != order {
        return Err(Error::arg(format!(
            "tensor of order {} cannot be projected on an order-{order} model",
            x.order()
        )));
    }
    for (k, (&a, f)) in x.shape().iter().zip(&model.factors).enumerate() {
        if k != free_mode && a != f.rows() {
            return Err(Error::arg(format!(
                "mode {k} has size {a}, model expects {}",
                f.rows()
            )));
        }
    }
    check_non_negative(x)?;

    let core = &model.core;
    let grams: Vec<Matrix> = model.factors.iter().map(Matrix::gram).collect();
    let y = contract(x, &transposes_except(&model.factors, &[free_mode]))?;
    let numer = unfold(&y, free_mode)?.matmul_t(&unfold(core, free_mode)?)?;
    let hess = mode_gram(core, &grams, free_mode)?;
    Ok(solve_rows(&numer, &hess))
}
