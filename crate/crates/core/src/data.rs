//! Synthetic EMG envelopes with planted synergies, and the per-epoch CSV
//! dataset layout `subject_<id>/dof<k>_<direction>_rep<j>.csv`.
//!
//! Each epoch is
//! `gain · spatial[c] · profile(t) · (1 + depth · sin(2π f t + φ)) + noise`,
//! where `profile` is a raised-cosine bump over the central 60 % of the
//! epoch, `f` is drawn from the movement's carrier band and the noise is
//! half-normal.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::seed::{derive_seed, rng};
use crate::tensor::Matrix;
use crate::tfa::{Direction, Dof, EmgEpoch, MovementLabel};

/// How the default movements differ from each other within a DoF.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassContrast {
    /// Distinct spatial vectors and carrier bands.
    Full,
    /// Both directions share the spatial vector; only the carrier band differs.
    SpectralOnly,
    /// Both directions are generated from identical patterns.
    None,
}

impl std::str::FromStr for ClassContrast {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(ClassContrast::Full),
            "spectral-only" => Ok(ClassContrast::SpectralOnly),
            "none" => Ok(ClassContrast::None),
            _ => Err(Error::arg(format!(
                "unknown contrast {s:?} (expected full, spectral-only or none)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MovementPattern {
    pub label: MovementLabel,
    /// Non-negative, unit L2, one entry per channel.
    pub spatial: Vec<f64>,
    /// Carrier band `[low, high]` in Hz.
    pub band: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub channels: usize,
    pub sample_rate: f64,
    pub epoch_seconds: f64,
    pub repetitions_per_movement: usize,
    pub subjects: usize,
    pub seed: u64,
    /// Half-normal noise scale relative to the epoch's peak channel amplitude.
    pub noise_level: f64,
    pub modulation_depth: f64,
    /// Per-repetition gain is drawn from `1 ± gain_jitter`.
    pub gain_jitter: f64,
    /// Per-subject, per-channel spatial gain is drawn from `1 ± subject_jitter`.
    pub subject_jitter: f64,
    pub contrast: ClassContrast,
    /// Explicit patterns; when absent the six default wrist movements are
    /// built from `channels` and `contrast`.
    pub movements: Option<Vec<MovementPattern>>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            channels: 10,
            sample_rate: 100.0,
            epoch_seconds: 5.0,
            repetitions_per_movement: 10,
            subjects: 1,
            seed: 0,
            noise_level: 0.05,
            modulation_depth: 0.5,
            gain_jitter: 0.1,
            subject_jitter: 0.2,
            contrast: ClassContrast::Full,
            movements: None,
        }
    }
}

/// Carrier bands of the default movements, indexed `[dof - 1][direction]`.
const DEFAULT_BANDS: [[[f64; 2]; 2]; 3] = [
    [[3.0, 5.0], [12.0, 16.0]],
    [[4.0, 6.0], [15.0, 19.0]],
    [[5.0, 7.0], [18.0, 22.0]],
];

fn default_spatial(channels: usize, movement: usize) -> Vec<f64> {
    let centre = (movement as f64 + 0.5) * channels as f64 / 6.0 - 0.5;
    let width = (channels as f64 / 8.0).max(0.5);
    let mut v: Vec<f64> = (0..channels)
        .map(|c| 0.05 + (-0.5 * ((c as f64 - centre) / width).powi(2)).exp())
        .collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

impl SynthSpec {
    pub fn samples(&self) -> usize {
        (self.epoch_seconds * self.sample_rate).round() as usize
    }

    /// The movement patterns generated, explicit or default.
    pub fn patterns(&self) -> Vec<MovementPattern> {
        if let Some(m) = &self.movements {
            return m.clone();
        }
        MovementLabel::all()
            .into_iter()
            .enumerate()
            .map(|(i, label)| {
                let d = label.dof.get() as usize - 1;
                let shared = self.contrast != ClassContrast::Full;
                let spatial_from = if shared { 2 * d } else { i };
                let band = match (self.contrast, label.direction) {
                    (ClassContrast::None, _) | (_, Direction::Positive) => DEFAULT_BANDS[d][0],
                    _ => DEFAULT_BANDS[d][1],
                };
                MovementPattern {
                    label,
                    spatial: default_spatial(self.channels, spatial_from),
                    band,
                }
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if self.channels == 0 || self.repetitions_per_movement == 0 || self.subjects == 0 {
            return Err(Error::arg(
                "channels, repetitions and subjects must be positive",
            ));
        }
        if !positive(self.sample_rate) || !positive(self.epoch_seconds) {
            return Err(Error::arg("sample rate and epoch length must be positive"));
        }
        if self.samples() < 2 {
            return Err(Error::arg("epoch must span at least 2 samples"));
        }
        for (name, v) in [
            ("noise_level", self.noise_level),
            ("modulation_depth", self.modulation_depth),
            ("gain_jitter", self.gain_jitter),
            ("subject_jitter", self.subject_jitter),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::arg(format!("{name} must be non-negative, got {v}")));
            }
        }
        if self.modulation_depth > 1.0 || self.gain_jitter >= 1.0 || self.subject_jitter >= 1.0 {
            return Err(Error::arg(
                "modulation_depth must be at most 1 and jitters below 1 to keep envelopes non-negative",
            ));
        }
        let nyquist = self.sample_rate / 2.0;
        let patterns = self.patterns();
        if patterns.is_empty() {
            return Err(Error::arg("no movements to generate"));
        }
        for (i, p) in patterns.iter().enumerate() {
            if patterns[..i].iter().any(|q| q.label == p.label) {
                return Err(Error::arg(format!("movement {} listed twice", p.label)));
            }
            if p.spatial.len() != self.channels {
                return Err(Error::arg(format!(
                    "{}: spatial vector has {} entries for {} channels",
                    p.label,
                    p.spatial.len(),
                    self.channels
                )));
            }
            let norm = p.spatial.iter().map(|x| x * x).sum::<f64>().sqrt();
            if p.spatial.iter().any(|&x| !(x >= 0.0)) || (norm - 1.0).abs() > 1e-9 {
                return Err(Error::arg(format!(
                    "{}: spatial vector must be non-negative with unit norm",
                    p.label
                )));
            }
            let [lo, hi] = p.band;
            if !(lo > 0.0 && lo <= hi && hi < nyquist) {
                return Err(Error::arg(format!(
                    "{}: carrier band [{lo}, {hi}] Hz must lie in (0, {nyquist})",
                    p.label
                )));
            }
        }
        Ok(())
    }
}

/// A collection of epochs with a common channel count and sample rate.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub epochs: Vec<EmgEpoch>,
}

impl Dataset {
    pub fn new(epochs: Vec<EmgEpoch>) -> Result<Self> {
        let d = Dataset { epochs };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.epochs.first() else {
            return Ok(());
        };
        for e in &self.epochs {
            e.validate()?;
            if e.channels() != first.channels() || e.sample_rate != first.sample_rate {
                return Err(Error::input(format!(
                    "subject {} {} rep {}: {} channels at {} Hz, dataset has {} at {} Hz",
                    e.subject,
                    e.label,
                    e.repetition,
                    e.channels(),
                    e.sample_rate,
                    first.channels(),
                    first.sample_rate
                )));
            }
        }
        Ok(())
    }

    /// Subject ids in ascending order.
    pub fn subjects(&self) -> Vec<u32> {
        let mut s: Vec<u32> = self.epochs.iter().map(|e| e.subject).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Epochs of one subject and movement, ordered by repetition.
    pub fn epochs_for(&self, subject: u32, label: MovementLabel) -> Vec<&EmgEpoch> {
        let mut v: Vec<&EmgEpoch> = self
            .epochs
            .iter()
            .filter(|e| e.subject == subject && e.label == label)
            .collect();
        v.sort_by_key(|e| e.repetition);
        v
    }

    pub fn subject(&self, subject: u32) -> Dataset {
        Dataset {
            epochs: self
                .epochs
                .iter()
                .filter(|e| e.subject == subject)
                .cloned()
                .collect(),
        }
    }

    fn sort(&mut self) {
        self.epochs
            .sort_by_key(|e| (e.subject, e.label.dof, e.label.direction, e.repetition));
    }
}

fn raised_cosine(t: f64, duration: f64) -> f64 {
    let (a, w) = (0.2 * duration, 0.6 * duration);
    if t < a || t > a + w {
        0.0
    } else {
        0.5 * (1.0 - (2.0 * PI * (t - a) / w).cos())
    }
}

pub fn generate(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let patterns = spec.patterns();
    let n = spec.samples();
    let half_normal: Normal<f64> = Normal::new(0.0, 1.0).expect("unit normal");
    let mut epochs =
        Vec::with_capacity(spec.subjects * patterns.len() * spec.repetitions_per_movement);
    for subject in 1..=spec.subjects as u32 {
        let mut r = rng(derive_seed(spec.seed, &[subject as u64, u64::MAX]));
        let channel_gain: Vec<f64> = (0..spec.channels)
            .map(|_| 1.0 + spec.subject_jitter * r.random_range(-1.0..=1.0))
            .collect();
        for (m, p) in patterns.iter().enumerate() {
            let spatial: Vec<f64> = p
                .spatial
                .iter()
                .zip(&channel_gain)
                .map(|(a, b)| a * b)
                .collect();
            let peak = spatial.iter().cloned().fold(0.0, f64::max);
            for rep in 1..=spec.repetitions_per_movement as u32 {
                let mut r = rng(derive_seed(
                    spec.seed,
                    &[subject as u64, m as u64, rep as u64],
                ));
                let gain = 1.0 + spec.gain_jitter * r.random_range(-1.0..=1.0);
                let freq = r.random_range(p.band[0]..=p.band[1]);
                let phase = r.random_range(0.0..2.0 * PI);
                let temporal: Vec<f64> = (0..n)
                    .map(|i| {
                        let t = i as f64 / spec.sample_rate;
                        raised_cosine(t, spec.epoch_seconds)
                            * (1.0 + spec.modulation_depth * (2.0 * PI * freq * t + phase).sin())
                    })
                    .collect();
                let noise_scale = spec.noise_level * gain * peak;
                let envelope = Matrix::from_fn(spec.channels, n, |c, i| {
                    let clean = gain * spatial[c] * temporal[i];
                    if noise_scale > 0.0 {
                        clean + noise_scale * half_normal.sample(&mut r).abs()
                    } else {
                        clean
                    }
                });
                epochs.push(EmgEpoch {
                    envelope,
                    sample_rate: spec.sample_rate,
                    label: p.label,
                    subject,
                    repetition: rep,
                });
            }
        }
    }
    let mut d = Dataset { epochs };
    d.sort();
    Ok(d)
}

/// Epoch file name within its subject directory.
pub fn epoch_file_name(label: MovementLabel, repetition: u32) -> String {
    format!(
        "dof{}_{}_rep{}.csv",
        label.dof,
        label.direction.as_str(),
        repetition
    )
}

fn parse_file_name(name: &str) -> Option<(MovementLabel, u32)> {
    let stem = name.strip_suffix(".csv")?.strip_prefix("dof")?;
    let mut parts = stem.splitn(3, '_');
    let dof = Dof::new(parts.next()?.parse().ok()?).ok()?;
    let direction = parts.next()?.parse().ok()?;
    let rep = parts.next()?.strip_prefix("rep")?.parse().ok()?;
    Some((MovementLabel::new(dof, direction), rep))
}

pub fn epoch_csv_header(channels: usize) -> String {
    let mut h = String::from("time");
    for c in 1..=channels {
        write!(h, ",ch{c}").unwrap();
    }
    h.push_str(",dof,direction,repetition,subject");
    h
}

/// Epoch CSV text. Values use the shortest representation that round-trips.
pub fn epoch_to_csv(e: &EmgEpoch) -> String {
    let mut s = epoch_csv_header(e.channels());
    s.push('\n');
    let tail = format!(
        ",{},{},{},{}\n",
        e.label.dof,
        e.label.direction.as_str(),
        e.repetition,
        e.subject
    );
    for i in 0..e.samples() {
        write!(s, "{}", i as f64 / e.sample_rate).unwrap();
        for c in 0..e.channels() {
            write!(s, ",{}", e.envelope.get(c, i)).unwrap();
        }
        s.push_str(&tail);
    }
    s
}

pub fn write_epoch_csv(e: &EmgEpoch, path: &Path) -> Result<()> {
    write_atomic(path, epoch_to_csv(e).as_bytes())
}

pub fn read_epoch_csv(path: &Path) -> Result<EmgEpoch> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_epoch_csv(&text, path)
}

pub fn parse_epoch_csv(text: &str, path: &Path) -> Result<EmgEpoch> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let (_, header) = lines
        .next()
        .filter(|(_, h)| !h.trim().is_empty())
        .ok_or_else(|| parse_err(1, "empty file".into()))?;
    let fields: Vec<&str> = header.split(',').map(str::trim).collect();
    if fields.len() < 6 {
        return Err(parse_err(
            1,
            format!("header has {} columns, need at least 6", fields.len()),
        ));
    }
    let channels = fields.len() - 5;
    let expected = epoch_csv_header(channels);
    if fields.join(",") != expected {
        return Err(parse_err(1, format!("header must be {expected:?}")));
    }

    let mut times = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut meta: Option<(MovementLabel, u32, u32)> = None;
    for (no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != channels + 5 {
            return Err(parse_err(
                no,
                format!(
                    "row has {} fields, header has {}",
                    cells.len(),
                    channels + 5
                ),
            ));
        }
        let num = |i: usize| -> Result<f64> {
            cells[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    parse_err(
                        no,
                        format!("column {}: {:?} is not a number", fields[i], cells[i]),
                    )
                })
        };
        times.push(num(0)?);
        for c in 1..=channels {
            let v = num(c)?;
            if v < 0.0 {
                return Err(Error::Validation {
                    path: path.to_path_buf(),
                    line: no,
                    message: format!("{} is negative ({v})", fields[c]),
                });
            }
            values.push(v);
        }
        let dof = cells[channels + 1]
            .parse::<u8>()
            .ok()
            .and_then(|k| Dof::new(k).ok())
            .ok_or_else(|| parse_err(no, format!("bad dof {:?}", cells[channels + 1])))?;
        let direction: Direction = cells[channels + 2]
            .parse()
            .map_err(|_| parse_err(no, format!("bad direction {:?}", cells[channels + 2])))?;
        let rep: u32 = cells[channels + 3]
            .parse()
            .map_err(|_| parse_err(no, format!("bad repetition {:?}", cells[channels + 3])))?;
        let subject: u32 = cells[channels + 4]
            .parse()
            .map_err(|_| parse_err(no, format!("bad subject {:?}", cells[channels + 4])))?;
        let row_meta = (MovementLabel::new(dof, direction), rep, subject);
        match meta {
            None => meta = Some(row_meta),
            Some(m) if m != row_meta => {
                return Err(parse_err(
                    no,
                    "label columns differ from the first row".into(),
                ));
            }
            _ => {}
        }
    }
    let (label, repetition, subject) = meta.ok_or_else(|| parse_err(2, "no data rows".into()))?;
    let n = times.len();
    if n < 2 {
        return Err(parse_err(
            2,
            "need at least 2 samples to infer the sample rate".into(),
        ));
    }
    let span = times[n - 1] - times[0];
    if !(span > 0.0) {
        return Err(parse_err(n + 1, "time column is not increasing".into()));
    }
    let mut sample_rate = (n - 1) as f64 / span;
    if (sample_rate - sample_rate.round()).abs() < 1e-6 * sample_rate {
        sample_rate = sample_rate.round();
    }
    let dt = 1.0 / sample_rate;
    for (i, &t) in times.iter().enumerate() {
        if (t - times[0] - i as f64 * dt).abs() > 1e-3 * dt {
            return Err(parse_err(i + 2, format!("non-uniform sampling at t = {t}")));
        }
    }
    // rows were pushed sample by sample, which is channels × samples column-major
    let envelope = Matrix::new(channels, n, values)?;
    Ok(EmgEpoch {
        envelope,
        sample_rate,
        label,
        subject,
        repetition,
    })
}

pub fn subject_dir(root: &Path, subject: u32) -> PathBuf {
    root.join(format!("subject_{subject}"))
}

/// Writes every epoch under `root`, creating subject directories as needed.
pub fn save_csv(dataset: &Dataset, root: &Path) -> Result<()> {
    for e in &dataset.epochs {
        let dir = subject_dir(root, e.subject);
        fs::create_dir_all(&dir).map_err(|err| Error::io(&dir, err))?;
        write_epoch_csv(e, &dir.join(epoch_file_name(e.label, e.repetition)))?;
    }
    Ok(())
}

/// Loads every `subject_<id>/*.csv` under `root`. A CSV whose name does not
/// follow the layout, or whose labels disagree with its name, is an error.
pub fn load_csv(root: &Path) -> Result<Dataset> {
    let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut epochs = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let Some(id) = name.strip_prefix("subject_") else {
            continue;
        };
        let subject: u32 = id.parse().map_err(|_| {
            Error::input(format!(
                "{}: bad subject directory name",
                entry.path().display()
            ))
        })?;
        let dir = entry.path();
        for f in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let f = f.map_err(|e| Error::io(&dir, e))?;
            let fname = f.file_name().to_string_lossy().into_owned();
            if !fname.ends_with(".csv") || fname.starts_with('.') {
                continue;
            }
            let path = f.path();
            let (label, rep) = parse_file_name(&fname).ok_or_else(|| Error::Format {
                path: path.clone(),
                message: "file name must look like dof<k>_<direction>_rep<j>.csv".into(),
            })?;
            let e = read_epoch_csv(&path)?;
            if e.label != label || e.repetition != rep || e.subject != subject {
                return Err(Error::Format {
                    path,
                    message: format!(
                        "contents say subject {} {} rep {}, path says subject {subject} {label} rep {rep}",
                        e.subject, e.label, e.repetition
                    ),
                });
            }
            epochs.push(e);
        }
    }
    if epochs.is_empty() {
        return Err(Error::input(format!(
            "{}: no epoch CSV files found",
            root.display()
        )));
    }
    let mut d = Dataset::new(epochs)?;
    d.sort();
    Ok(d)
}
