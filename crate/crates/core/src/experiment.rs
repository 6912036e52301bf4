//! Per-subject, per-DoF comparison of Tucker and NMF synergy features under
//! a k-NN classifier.
//!
//! For one subject and DoF the repetitions of both movements are split into
//! training and test sets. The Tucker pipeline fits a non-negative Tucker
//! model to the 4th-order training tensor (channels × samples × frequencies
//! × repetitions), uses the rows of the repetition-mode factor as training
//! features, and projects the test tensor onto the model with the
//! repetition mode free to get test features. The NMF pipeline uses the
//! rank-1 spatial synergy of each repetition's envelope.
//!
//! Seeds: for subject `s` and DoF `d`, the split uses
//! `derive_seed(seed, [s, d, 0])`, the Tucker fit `[s, d, 1]` and NMF
//! `[s, d, 2]`.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::classification::{
    error_rate, knn_fit, split, LabelledPoint, SplitAssignment, SplitPlan,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::factorization::{nmf_synergy_feature, FitOptions};
use crate::seed::derive_seed;
use crate::tensor::Matrix;
use crate::tfa::{
    tensorise_epochs, Direction, Dof, EmgEpoch, MovementLabel, TrialTensor, WaveletSpec,
};
use crate::tucker::{ntd_multistart, project, TuckerModel, TuckerRanks};

/// Repetition mode of the trial tensor.
pub const REPETITION_MODE: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub wavelet: WaveletSpec,
    pub ranks: TuckerRanks,
    pub fit: FitOptions,
    pub split: SplitPlan,
    /// Neighbours in the k-NN vote.
    pub k: usize,
    /// Tucker fits per model; the lowest-error fit is kept.
    pub tucker_starts: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            wavelet: WaveletSpec::default(),
            ranks: TuckerRanks::default(),
            fit: FitOptions::default(),
            split: SplitPlan::default(),
            k: 3,
            tucker_starts: 1,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.fit.validate()?;
        if self.ranks.as_slice().len() != 4 {
            return Err(Error::arg(format!(
                "trial tensors are 4th order, got {} ranks",
                self.ranks.as_slice().len()
            )));
        }
        if self.k == 0 {
            return Err(Error::arg("k must be at least 1"));
        }
        if self.tucker_starts == 0 {
            return Err(Error::arg("tucker_starts must be at least 1"));
        }
        Ok(())
    }

    fn seed_for(&self, subject: u32, dof: Dof, stream: u64) -> u64 {
        derive_seed(self.seed, &[subject as u64, dof.get() as u64, stream])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Tucker3,
    Nmf,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::Tucker3, Method::Nmf];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Tucker3 => "tucker3",
            Method::Nmf => "nmf",
        }
    }

    fn title(self) -> &'static str {
        match self {
            Method::Tucker3 => "Tucker3",
            Method::Nmf => "NMF",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tucker" | "tucker3" => Ok(Method::Tucker3),
            "nmf" => Ok(Method::Nmf),
            _ => Err(Error::arg(format!(
                "unknown method {s:?} (expected tucker or nmf)"
            ))),
        }
    }
}

/// Training and test epochs of one subject and DoF, positive movement first
/// within each set.
#[derive(Debug, Clone)]
pub struct DofEpochs<'a> {
    pub train: Vec<&'a EmgEpoch>,
    pub test: Vec<&'a EmgEpoch>,
}

impl DofEpochs<'_> {
    pub fn train_labels(&self) -> Vec<MovementLabel> {
        self.train.iter().map(|e| e.label).collect()
    }

    pub fn test_labels(&self) -> Vec<MovementLabel> {
        self.test.iter().map(|e| e.label).collect()
    }
}

pub fn split_dof<'a>(
    dataset: &'a Dataset,
    subject: u32,
    dof: Dof,
    cfg: &ExperimentConfig,
) -> Result<DofEpochs<'a>> {
    let by_dir = Direction::BOTH.map(|d| dataset.epochs_for(subject, MovementLabel::new(dof, d)));
    let n = by_dir[0].len();
    if n == 0 || by_dir[1].len() != n {
        return Err(Error::input(format!(
            "subject {subject} DoF {dof}: need the same nonzero number of repetitions of both movements, found {} and {}",
            by_dir[0].len(),
            by_dir[1].len()
        )));
    }
    let SplitAssignment { train, test } = split(n, &cfg.split, cfg.seed_for(subject, dof, 0))?;
    let pick = |sets: &[Vec<usize>; 2]| -> Vec<&'a EmgEpoch> {
        let by_dir = &by_dir;
        (0..2)
            .flat_map(|d| sets[d].iter().map(move |&i| by_dir[d][i]))
            .collect()
    };
    Ok(DofEpochs {
        train: pick(&train),
        test: pick(&test),
    })
}

/// Fits the Tucker model on training epochs only.
pub fn train_tucker(
    train: &[&EmgEpoch],
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<(TuckerModel, TrialTensor)> {
    let tensor = tensorise_epochs(train, &cfg.wavelet)?;
    let model = ntd_multistart(
        &tensor.tensor,
        &cfg.ranks,
        &cfg.fit.with_seed(seed),
        cfg.tucker_starts,
    )?;
    Ok((model, tensor))
}

/// Repetition-mode features of `epochs` under a trained model, one row per
/// epoch.
pub fn tucker_features(
    model: &TuckerModel,
    epochs: &[&EmgEpoch],
    wavelet: &WaveletSpec,
) -> Result<Matrix> {
    let t = tensorise_epochs(epochs, wavelet)?;
    project(&t.tensor, model, REPETITION_MODE)
}

fn points(features: &Matrix, labels: &[MovementLabel]) -> Vec<LabelledPoint> {
    labels
        .iter()
        .enumerate()
        .map(|(i, &label)| LabelledPoint {
            features: features.row(i),
            label,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult {
    pub error_rate: f64,
    /// Repetition number of each test epoch.
    pub repetitions: Vec<u32>,
    pub truth: Vec<MovementLabel>,
    pub predicted: Vec<MovementLabel>,
}

fn classify(
    train: Vec<LabelledPoint>,
    test: Vec<LabelledPoint>,
    test_epochs: &[&EmgEpoch],
    k: usize,
) -> Result<PipelineResult> {
    let model = knn_fit(train, k)?;
    let predicted = test
        .iter()
        .map(|p| model.predict(&p.features))
        .collect::<Result<Vec<_>>>()?;
    let truth: Vec<MovementLabel> = test.iter().map(|p| p.label).collect();
    Ok(PipelineResult {
        error_rate: error_rate(&predicted, &truth)?,
        repetitions: test_epochs.iter().map(|e| e.repetition).collect(),
        truth,
        predicted,
    })
}

pub fn run_tucker_pipeline(
    dataset: &Dataset,
    subject: u32,
    dof: Dof,
    cfg: &ExperimentConfig,
) -> Result<PipelineResult> {
    cfg.validate()?;
    let epochs = split_dof(dataset, subject, dof, cfg)?;
    let (model, train_tensor) = train_tucker(&epochs.train, cfg, cfg.seed_for(subject, dof, 1))?;
    let train_points = points(&model.factors[REPETITION_MODE], &train_tensor.labels);
    drop(train_tensor);
    let test_features = tucker_features(&model, &epochs.test, &cfg.wavelet)?;
    classify(
        train_points,
        points(&test_features, &epochs.test_labels()),
        &epochs.test,
        cfg.k,
    )
}

/// Rank-1 NMF spatial synergy of every epoch, one row per epoch.
pub fn nmf_features(epochs: &[&EmgEpoch], fit: &FitOptions) -> Result<Matrix> {
    let rows = epochs
        .iter()
        .map(|e| nmf_synergy_feature(&e.envelope, fit))
        .collect::<Result<Vec<_>>>()?;
    Matrix::from_rows(&rows)
}

pub fn run_nmf_pipeline(
    dataset: &Dataset,
    subject: u32,
    dof: Dof,
    cfg: &ExperimentConfig,
) -> Result<PipelineResult> {
    cfg.validate()?;
    let epochs = split_dof(dataset, subject, dof, cfg)?;
    let fit = cfg.fit.with_seed(cfg.seed_for(subject, dof, 2));
    let train = nmf_features(&epochs.train, &fit)?;
    let test = nmf_features(&epochs.test, &fit)?;
    classify(
        points(&train, &epochs.train_labels()),
        points(&test, &epochs.test_labels()),
        &epochs.test,
        cfg.k,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportCell {
    pub subject: u32,
    pub dof: Dof,
    pub method: Method,
    pub error_rate: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub cells: Vec<ReportCell>,
    pub config: ExperimentConfig,
}

impl ExperimentReport {
    pub fn subjects(&self) -> Vec<u32> {
        let mut s: Vec<u32> = self.cells.iter().map(|c| c.subject).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Mean error over subjects for one method and DoF.
    pub fn average(&self, method: Method, dof: Dof) -> Option<f64> {
        let v: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| c.method == method && c.dof == dof)
            .map(|c| c.error_rate)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Mean over every cell of one method.
    pub fn overall_average(&self, method: Method) -> Option<f64> {
        let v: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| c.method == method)
            .map(|c| c.error_rate)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// `subject,dof,method,error_rate`, one row per cell. Timings are left
    /// out so the file is reproducible.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("subject,dof,method,error_rate\n");
        for c in &self.cells {
            writeln!(
                s,
                "{},{},{},{}",
                c.subject,
                c.dof,
                c.method.as_str(),
                c.error_rate
            )
            .unwrap();
        }
        s
    }

    /// Average error (%) per method and DoF.
    pub fn summary_table(&self) -> String {
        let dofs: Vec<Dof> = Dof::ALL
            .into_iter()
            .filter(|&d| self.cells.iter().any(|c| c.dof == d))
            .collect();
        let mut s = format!(
            "Average classification error rate across {} subject(s) (%)\n",
            self.subjects().len()
        );
        write!(s, "{:<10}", "Method").unwrap();
        for d in &dofs {
            write!(s, "{:>10}", format!("DoF{d}")).unwrap();
        }
        s.push('\n');
        for m in Method::ALL {
            if !self.cells.iter().any(|c| c.method == m) {
                continue;
            }
            write!(s, "{:<10}", m.title()).unwrap();
            for &d in &dofs {
                match self.average(m, d) {
                    Some(v) => write!(s, "{:>10.3}", 100.0 * v).unwrap(),
                    None => write!(s, "{:>10}", "-").unwrap(),
                }
            }
            s.push('\n');
        }
        s
    }

    /// Config, seeds and timings as `key=value` lines.
    pub fn metadata(&self) -> String {
        let mut s = String::new();
        writeln!(s, "seed={}", self.config.seed).unwrap();
        writeln!(s, "config={}", serde_json::to_string(&self.config).unwrap()).unwrap();
        for c in &self.cells {
            writeln!(
                s,
                "seconds.subject{}.dof{}.{}={:.3}",
                c.subject,
                c.dof,
                c.method.as_str(),
                c.seconds
            )
            .unwrap();
        }
        s
    }
}

/// Both pipelines for every subject and DoF in the dataset.
pub fn run_comparison(dataset: &Dataset, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    run_selected(dataset, cfg, &Method::ALL, &Dof::ALL)
}

/// The chosen methods and DoFs for every subject, in (subject, DoF, method)
/// order.
pub fn run_selected(
    dataset: &Dataset,
    cfg: &ExperimentConfig,
    methods: &[Method],
    dofs: &[Dof],
) -> Result<ExperimentReport> {
    cfg.validate()?;
    let subjects = dataset.subjects();
    if subjects.is_empty() {
        return Err(Error::input("dataset has no epochs"));
    }
    let mut cells = Vec::new();
    for &subject in &subjects {
        for &dof in dofs {
            for &method in methods {
                let start = Instant::now();
                let r = match method {
                    Method::Tucker3 => run_tucker_pipeline(dataset, subject, dof, cfg),
                    Method::Nmf => run_nmf_pipeline(dataset, subject, dof, cfg),
                }
                .map_err(|e| {
                    Error::input(format!(
                        "subject {subject} DoF {dof} {}: {e}",
                        method.as_str()
                    ))
                })?;
                cells.push(ReportCell {
                    subject,
                    dof,
                    method,
                    error_rate: r.error_rate,
                    seconds: start.elapsed().as_secs_f64(),
                });
            }
        }
    }
    Ok(ExperimentReport {
        cells,
        config: cfg.clone(),
    })
}
