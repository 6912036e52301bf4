//! Log-normal continuous wavelet transform of EMG envelopes and assembly of
//! the channels × samples × frequencies (× repetitions) tensors.
//!
//! The mother wavelet is defined in the frequency domain as
//! `Ψ̂(f; f_k, q) = exp(−(q·ln(f/f_k))² / 2)` for `f > 0` and zero otherwise,
//! i.e. a Gaussian in log-frequency. Centre frequencies are log-uniformly
//! spaced, so every bin has the same relative bandwidth. Filtering is done
//! by FFT on the signal zero-padded to the next power of two; the stored
//! coefficient is the magnitude of the analytic band-passed signal, scaled so
//! a tone of amplitude `A` at exactly `f_k` gives `A`.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, Matrix};

/// Wrist degree of freedom, 1 to 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Dof(u8);

impl Dof {
    pub const ALL: [Dof; 3] = [Dof(1), Dof(2), Dof(3)];

    pub fn new(k: u8) -> Result<Self> {
        if (1..=3).contains(&k) {
            Ok(Dof(k))
        } else {
            Err(Error::arg(format!("DoF must be 1, 2 or 3, got {k}")))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn description(self) -> &'static str {
        match self.0 {
            1 => "wrist flexion and extension",
            2 => "wrist radial and ulnar deviation",
            _ => "wrist supination and pronation",
        }
    }
}

impl TryFrom<u8> for Dof {
    type Error = Error;
    fn try_from(k: u8) -> Result<Self> {
        Dof::new(k)
    }
}

impl From<Dof> for u8 {
    fn from(d: Dof) -> u8 {
        d.0
    }
}

impl std::fmt::Display for Dof {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Positive,
    Negative,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Positive, Direction::Negative];

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Positive => "positive",
            Direction::Negative => "negative",
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "positive" | "+" => Ok(Direction::Positive),
            "negative" | "-" => Ok(Direction::Negative),
            _ => Err(Error::arg(format!("unknown direction {s:?}"))),
        }
    }
}

/// One movement: a DoF and its direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MovementLabel {
    pub dof: Dof,
    pub direction: Direction,
}

impl MovementLabel {
    pub fn new(dof: Dof, direction: Direction) -> Self {
        MovementLabel { dof, direction }
    }

    /// All six wrist movements, DoF-major, positive first.
    pub fn all() -> Vec<MovementLabel> {
        Dof::ALL
            .iter()
            .flat_map(|&d| Direction::BOTH.map(|dir| MovementLabel::new(d, dir)))
            .collect()
    }

    pub fn name(self) -> &'static str {
        match (self.dof.0, self.direction) {
            (1, Direction::Positive) => "flexion",
            (1, Direction::Negative) => "extension",
            (2, Direction::Positive) => "radial deviation",
            (2, Direction::Negative) => "ulnar deviation",
            (_, Direction::Positive) => "supination",
            (_, Direction::Negative) => "pronation",
        }
    }
}

impl std::fmt::Display for MovementLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "dof{}_{}", self.dof, self.direction.as_str())
    }
}

/// One repetition of one movement: an RMS envelope, channels × samples.
#[derive(Debug, Clone, PartialEq)]
pub struct EmgEpoch {
    pub envelope: Matrix,
    pub sample_rate: f64,
    pub label: MovementLabel,
    pub subject: u32,
    pub repetition: u32,
}

impl EmgEpoch {
    pub fn channels(&self) -> usize {
        self.envelope.rows()
    }

    pub fn samples(&self) -> usize {
        self.envelope.cols()
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.envelope.row(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(Error::arg(format!("bad sample rate {}", self.sample_rate)));
        }
        if !self.envelope.is_non_negative() {
            return Err(Error::input(format!(
                "subject {} {} rep {}: envelope has negative entries",
                self.subject, self.label, self.repetition
            )));
        }
        Ok(())
    }
}

/// Log-normal filter bank parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveletSpec {
    pub f_min: f64,
    pub f_max: f64,
    pub n_bins: usize,
    /// Resolution `q`: larger values give narrower bands.
    pub quality: f64,
}

/// `π / √ln 2 ≈ 3.773`. The −6 dB half-width of a band is then
/// `√(2 ln 2) / q = √2·ln 2 / π` in natural-log frequency, about ±37 % around
/// the centre.
pub const DEFAULT_QUALITY: f64 = 3.773_437_335_505_587;

impl Default for WaveletSpec {
    fn default() -> Self {
        WaveletSpec {
            f_min: 0.5,
            f_max: 50.0,
            n_bins: 282,
            quality: DEFAULT_QUALITY,
        }
    }
}

impl WaveletSpec {
    pub fn validate(&self, sample_rate: f64) -> Result<()> {
        let nyquist = sample_rate / 2.0;
        if !(self.f_min > 0.0 && self.f_min < self.f_max) {
            return Err(Error::arg(format!(
                "need 0 < f_min < f_max, got {} and {}",
                self.f_min, self.f_max
            )));
        }
        if self.f_max > nyquist {
            return Err(Error::arg(format!(
                "f_max {} Hz exceeds the Nyquist frequency {nyquist} Hz",
                self.f_max
            )));
        }
        if self.n_bins < 2 {
            return Err(Error::arg(format!(
                "need at least 2 bins, got {}",
                self.n_bins
            )));
        }
        if !(self.quality > 0.0 && self.quality.is_finite()) {
            return Err(Error::arg(format!(
                "quality must be positive, got {}",
                self.quality
            )));
        }
        Ok(())
    }

    /// Log-uniform centre frequencies from `f_min` to `f_max` inclusive.
    pub fn centre_frequencies(&self) -> Vec<f64> {
        let (lo, hi) = (self.f_min.ln(), self.f_max.ln());
        let step = (hi - lo) / (self.n_bins - 1) as f64;
        (0..self.n_bins)
            .map(|k| {
                if k + 1 == self.n_bins {
                    self.f_max
                } else {
                    (lo + step * k as f64).exp()
                }
            })
            .collect()
    }

    /// Index of the centre frequency closest to `f` on a log scale.
    pub fn nearest_bin(&self, f: f64) -> usize {
        let lf = f.ln();
        self.centre_frequencies()
            .iter()
            .enumerate()
            .min_by(|a, b| {
                (a.1.ln() - lf)
                    .abs()
                    .partial_cmp(&(b.1.ln() - lf).abs())
                    .unwrap()
            })
            .map(|(k, _)| k)
            .unwrap()
    }
}

/// Precomputed FFT plans and filter bank for one signal length.
pub struct LogNormalCwt {
    samples: usize,
    fft_len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Per bin: first FFT index and window weights over positive frequencies.
    windows: Vec<(usize, Vec<f64>)>,
}

impl LogNormalCwt {
    pub fn new(samples: usize, sample_rate: f64, spec: &WaveletSpec) -> Result<Self> {
        if samples == 0 {
            return Err(Error::arg("signal is empty"));
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::arg(format!("bad sample rate {sample_rate}")));
        }
        spec.validate(sample_rate)?;
        let fft_len = samples.next_power_of_two().max(2);
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(fft_len);
        let inverse = planner.plan_fft_inverse(fft_len);
        let df = sample_rate / fft_len as f64;
        let half = fft_len / 2;
        let windows = spec
            .centre_frequencies()
            .into_iter()
            .map(|fc| {
                let weights: Vec<f64> = (1..=half)
                    .map(|j| {
                        let z = spec.quality * (j as f64 * df / fc).ln();
                        (-0.5 * z * z).exp()
                    })
                    .collect();
                // Trim the negligible tails.
                let first = weights.iter().position(|&w| w > 1e-18).unwrap_or(0);
                let last = weights
                    .iter()
                    .rposition(|&w| w > 1e-18)
                    .map_or(0, |p| p + 1);
                (first + 1, weights[first..last.max(first)].to_vec())
            })
            .collect();
        Ok(LogNormalCwt {
            samples,
            fft_len,
            forward,
            inverse,
            windows,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.windows.len()
    }

    /// Magnitude scalogram, samples × bins.
    pub fn transform(&self, signal: &[f64]) -> Result<Matrix> {
        let mut out = Matrix::zeros(self.samples, self.n_bins());
        self.transform_into(signal, out.data_mut())?;
        Ok(out)
    }

    /// Writes the scalogram column-major (time fastest) into `dst`.
    fn transform_into(&self, signal: &[f64], dst: &mut [f64]) -> Result<()> {
        if signal.len() != self.samples {
            return Err(Error::arg(format!(
                "signal has {} samples, transform built for {}",
                signal.len(),
                self.samples
            )));
        }
        let n = self.samples;
        let mut spectrum: Vec<Complex<f64>> = signal
            .iter()
            .map(|&v| Complex::new(v, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(self.fft_len)
            .collect();
        self.forward.process(&mut spectrum);

        // Analytic-signal gain 2, inverse FFT normalisation 1/L.
        let gain = 2.0 / self.fft_len as f64;
        let mut buf = vec![Complex::new(0.0, 0.0); self.fft_len];
        for (k, (start, weights)) in self.windows.iter().enumerate() {
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for (off, &w) in weights.iter().enumerate() {
                let j = start + off;
                buf[j] = spectrum[j] * (w * gain);
            }
            self.inverse.process(&mut buf);
            for (d, c) in dst[k * n..(k + 1) * n].iter_mut().zip(&buf) {
                *d = c.norm();
            }
        }
        Ok(())
    }
}

/// Magnitude scalogram of one signal, samples × `spec.n_bins`.
pub fn lognormal_cwt(signal: &[f64], sample_rate: f64, spec: &WaveletSpec) -> Result<Matrix> {
    LogNormalCwt::new(signal.len(), sample_rate, spec)?.transform(signal)
}

/// Channels × samples × frequencies tensor of one epoch.
pub fn epoch_to_tensor3(epoch: &EmgEpoch, spec: &WaveletSpec) -> Result<DenseTensor> {
    epoch.validate()?;
    let cwt = LogNormalCwt::new(epoch.samples(), epoch.sample_rate, spec)?;
    epoch_tensor_with(&cwt, epoch)
}

fn epoch_tensor_with(cwt: &LogNormalCwt, epoch: &EmgEpoch) -> Result<DenseTensor> {
    let (c, s, f) = (epoch.channels(), epoch.samples(), cwt.n_bins());
    let mut data = vec![0.0; c * s * f];
    let mut scratch = vec![0.0; s * f];
    for ch in 0..c {
        cwt.transform_into(&epoch.channel(ch), &mut scratch)?;
        // scratch[t + s·k] → data[ch + c·(t + s·k)]
        for (lin, &v) in scratch.iter().enumerate() {
            data[ch + c * lin] = v;
        }
    }
    DenseTensor::new(vec![c, s, f], data)
}

/// 4th-order channels × samples × frequencies × repetitions tensor with one
/// label per repetition slice.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialTensor {
    pub tensor: DenseTensor,
    pub labels: Vec<MovementLabel>,
    pub spec: WaveletSpec,
}

impl TrialTensor {
    pub fn repetitions(&self) -> usize {
        self.labels.len()
    }

    /// Label sidecar text: one `dof,direction` line per repetition slice.
    pub fn labels_text(&self) -> String {
        self.labels
            .iter()
            .map(|l| format!("{},{}\n", l.dof, l.direction.as_str()))
            .collect()
    }
}

/// Concatenates equally shaped 3rd-order tensors along a new 4th mode, in
/// input order.
pub fn stack_repetitions(
    tensors: &[DenseTensor],
    labels: &[MovementLabel],
    spec: &WaveletSpec,
) -> Result<TrialTensor> {
    if tensors.is_empty() {
        return Err(Error::arg("no tensors to stack"));
    }
    if tensors.len() != labels.len() {
        return Err(Error::arg(format!(
            "{} tensors but {} labels",
            tensors.len(),
            labels.len()
        )));
    }
    let shape = tensors[0].shape();
    if shape.len() != 3 {
        return Err(Error::arg(format!(
            "expected 3rd-order tensors, got shape {shape:?}"
        )));
    }
    if let Some((i, t)) = tensors.iter().enumerate().find(|(_, t)| t.shape() != shape) {
        return Err(Error::arg(format!(
            "tensor {i} has shape {:?}, expected {shape:?}",
            t.shape()
        )));
    }
    let mut data = Vec::with_capacity(tensors[0].len() * tensors.len());
    for t in tensors {
        data.extend_from_slice(t.data());
    }
    let mut full = shape.to_vec();
    full.push(tensors.len());
    Ok(TrialTensor {
        tensor: DenseTensor::new(full, data)?,
        labels: labels.to_vec(),
        spec: *spec,
    })
}

/// Tensorises epochs one at a time straight into the 4th-order buffer.
pub fn tensorise_epochs(epochs: &[&EmgEpoch], spec: &WaveletSpec) -> Result<TrialTensor> {
    let first = epochs
        .first()
        .ok_or_else(|| Error::arg("no epochs to tensorise"))?;
    let (c, s) = (first.channels(), first.samples());
    let cwt = LogNormalCwt::new(s, first.sample_rate, spec)?;
    let block = c * s * spec.n_bins;
    let mut data = Vec::with_capacity(block * epochs.len());
    for e in epochs {
        e.validate()?;
        if e.channels() != c || e.samples() != s || e.sample_rate != first.sample_rate {
            return Err(Error::arg(format!(
                "epoch subject {} {} rep {} is {}x{} at {} Hz, expected {c}x{s} at {} Hz",
                e.subject,
                e.label,
                e.repetition,
                e.channels(),
                e.samples(),
                e.sample_rate,
                first.sample_rate
            )));
        }
        data.extend(epoch_tensor_with(&cwt, e)?.into_data());
    }
    Ok(TrialTensor {
        tensor: DenseTensor::new(vec![c, s, spec.n_bins, epochs.len()], data)?,
        labels: epochs.iter().map(|e| e.label).collect(),
        spec: *spec,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tone(freq: f64, amp: f64, n: usize, fs: f64) -> Vec<f64> {
        (0..n)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / fs).sin())
            .collect()
    }

    /// Mean magnitude per bin over the central third, away from edge effects.
    fn mean_magnitudes(s: &Matrix) -> Vec<f64> {
        let (a, b) = (s.rows() / 3, 2 * s.rows() / 3);
        (0..s.cols())
            .map(|k| s.column(k)[a..b].iter().sum::<f64>() / (b - a) as f64)
            .collect()
    }

    fn argmax(v: &[f64]) -> usize {
        v.iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0
    }

    #[test]
    fn default_quality_value() {
        assert!((DEFAULT_QUALITY - PI / 2f64.ln().sqrt()).abs() < 1e-14);
    }

    #[test]
    fn centre_frequencies_log_uniform() {
        let spec = WaveletSpec::default();
        let f = spec.centre_frequencies();
        assert_eq!(f.len(), 282);
        assert_eq!(f[0], 0.5);
        assert_eq!(f[281], 50.0);
        let d0 = f[1].ln() - f[0].ln();
        for w in f.windows(2) {
            assert!(w[1] > w[0]);
            assert!(((w[1].ln() - w[0].ln()) - d0).abs() < 1e-12);
        }
    }

    #[test]
    fn peak_at_tone_frequency() {
        let spec = WaveletSpec::default();
        let s = lognormal_cwt(&tone(10.0, 1.0, 500, 100.0), 100.0, &spec).unwrap();
        assert_eq!((s.rows(), s.cols()), (500, 282));
        assert_eq!(argmax(&mean_magnitudes(&s)), spec.nearest_bin(10.0));
    }

    #[test]
    fn two_tones_two_peaks() {
        let spec = WaveletSpec::default();
        let a = tone(5.0, 1.0, 500, 100.0);
        let b = tone(25.0, 1.0, 500, 100.0);
        let sig: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let m = mean_magnitudes(&lognormal_cwt(&sig, 100.0, &spec).unwrap());
        let top = m.iter().cloned().fold(0.0, f64::max);
        let maxima: Vec<usize> = (1..m.len() - 1)
            .filter(|&k| m[k] > m[k - 1] && m[k] >= m[k + 1] && m[k] > 0.1 * top)
            .collect();
        assert_eq!(maxima, vec![spec.nearest_bin(5.0), spec.nearest_bin(25.0)]);
    }

    #[test]
    fn zero_signal_zero_scalogram() {
        let s = lognormal_cwt(&[0.0; 64], 100.0, &WaveletSpec::default()).unwrap();
        assert!(s.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn invalid_arguments() {
        let spec = WaveletSpec::default();
        assert!(lognormal_cwt(&[], 100.0, &spec).is_err());
        assert!(lognormal_cwt(&[1.0; 10], 80.0, &spec).is_err());
        let bad = WaveletSpec { n_bins: 1, ..spec };
        assert!(lognormal_cwt(&[1.0; 10], 100.0, &bad).is_err());
        let bad = WaveletSpec { f_min: 0.0, ..spec };
        assert!(bad.validate(100.0).is_err());
        let bad = WaveletSpec {
            quality: -1.0,
            ..spec
        };
        assert!(bad.validate(100.0).is_err());
    }

    fn epoch(channels: usize, samples: usize, f: impl Fn(usize, usize) -> f64) -> EmgEpoch {
        EmgEpoch {
            envelope: Matrix::from_fn(channels, samples, f),
            sample_rate: 100.0,
            label: MovementLabel::new(Dof::new(1).unwrap(), Direction::Positive),
            subject: 1,
            repetition: 1,
        }
    }

    #[test]
    fn epoch_tensor_matches_channel_scalograms() {
        let spec = WaveletSpec {
            n_bins: 16,
            ..Default::default()
        };
        let e = epoch(3, 128, |c, t| 1.0 + ((c + 1) as f64 * 0.1 * t as f64).sin());
        let t = epoch_to_tensor3(&e, &spec).unwrap();
        assert_eq!(t.shape(), &[3, 128, 16]);
        for c in 0..3 {
            let s = lognormal_cwt(&e.channel(c), 100.0, &spec).unwrap();
            for k in 0..16 {
                for i in 0..128 {
                    assert_eq!(t.get(&[c, i, k]), s.get(i, k));
                }
            }
        }
        let zero = epoch_to_tensor3(&epoch(2, 64, |_, _| 0.0), &spec).unwrap();
        assert!(zero.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stacking() {
        let spec = WaveletSpec::default();
        let l = MovementLabel::new(Dof::new(2).unwrap(), Direction::Negative);
        let a = DenseTensor::from_fn(&[2, 3, 4], |i| (i[0] + i[1] + i[2]) as f64).unwrap();
        let b = DenseTensor::from_fn(&[2, 3, 4], |i| (i[0] * i[1] * i[2]) as f64).unwrap();
        let single = stack_repetitions(std::slice::from_ref(&a), &[l], &spec).unwrap();
        assert_eq!(single.tensor.shape(), &[2, 3, 4, 1]);
        assert_eq!(single.tensor.last_mode_slice(0).unwrap(), a);
        let both = stack_repetitions(&[a.clone(), b.clone()], &[l, l], &spec).unwrap();
        assert_eq!(both.tensor.last_mode_slice(1).unwrap(), b);
        assert!(stack_repetitions(&[a.clone()], &[l, l], &spec).is_err());
        let c = DenseTensor::zeros(&[2, 3, 5]).unwrap();
        assert!(stack_repetitions(&[a, c], &[l, l], &spec).is_err());
    }

    #[test]
    fn streaming_tensorisation_equals_stacking() {
        let spec = WaveletSpec {
            n_bins: 8,
            ..Default::default()
        };
        let e1 = epoch(2, 50, |c, t| (c + t) as f64 * 0.01);
        let e2 = epoch(2, 50, |c, t| ((c * t) % 7) as f64);
        let stacked = stack_repetitions(
            &[
                epoch_to_tensor3(&e1, &spec).unwrap(),
                epoch_to_tensor3(&e2, &spec).unwrap(),
            ],
            &[e1.label, e2.label],
            &spec,
        )
        .unwrap();
        assert_eq!(tensorise_epochs(&[&e1, &e2], &spec).unwrap(), stacked);
    }

    #[test]
    fn labels_and_names() {
        let all = MovementLabel::all();
        assert_eq!(all.len(), 6);
        assert_eq!(all[0].name(), "flexion");
        assert_eq!(all[5].name(), "pronation");
        assert_eq!(all[3].to_string(), "dof2_negative");
        assert!(Dof::new(0).is_err() && Dof::new(4).is_err());
        assert_eq!(
            "negative".parse::<Direction>().unwrap(),
            Direction::Negative
        );
    }
}
