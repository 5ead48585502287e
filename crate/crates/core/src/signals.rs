//! Test signals, SNR-calibrated noise and CSV trajectories.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{DerivativeOrder, Error, Result};

/// Uniformly sampled scalar series `y_k = y(k T_s)` with optional exact
/// derivative samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    sample_time_s: f64,
    values: Vec<f64>,
    truth: BTreeMap<DerivativeOrder, Vec<f64>>,
}

impl SampledSignal {
    pub fn new(sample_time_s: f64, values: Vec<f64>) -> Result<Self> {
        check_sample_time(sample_time_s)?;
        Ok(Self { sample_time_s, values, truth: BTreeMap::new() })
    }

    /// Attaches the exact `q`-th derivative samples.
    pub fn with_truth(mut self, order: DerivativeOrder, derivative: Vec<f64>) -> Result<Self> {
        if derivative.len() != self.values.len() {
            return Err(Error::invalid(format!(
                "truth derivative of order {order} has {} samples, signal has {}",
                derivative.len(),
                self.values.len()
            )));
        }
        self.truth.insert(order, derivative);
        Ok(self)
    }

    pub fn sample_time_s(&self) -> f64 {
        self.sample_time_s
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn truth(&self, order: DerivativeOrder) -> Option<&[f64]> {
        self.truth.get(&order).map(Vec::as_slice)
    }

    /// Sample instants `k T_s`.
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |k| k as f64 * self.sample_time_s)
    }

    /// Root-mean-square of the sample values; zero for an empty signal.
    pub fn rms(&self) -> f64 {
        rms(&self.values)
    }
}

fn check_sample_time(sample_time_s: f64) -> Result<()> {
    if !(sample_time_s.is_finite() && sample_time_s > 0.0) {
        return Err(Error::invalid(format!("sample time must be positive, got {sample_time_s}")));
    }
    Ok(())
}

pub(crate) fn rms(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

/// Additive white Gaussian noise specification.
///
/// The noise amplitude is `D = rms(clean) · 10^(−snr_db/20)` unless
/// `amplitude` overrides it. `snr_db = +∞` disables noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub snr_db: f64,
    pub seed: u64,
    #[serde(default)]
    pub amplitude: Option<f64>,
}

impl NoiseSpec {
    pub fn new(snr_db: f64, seed: u64) -> Self {
        Self { snr_db, seed, amplitude: None }
    }

    pub fn noiseless() -> Self {
        Self::new(f64::INFINITY, 0)
    }

    /// Fixes the noise amplitude `D` directly, ignoring `snr_db`.
    pub fn with_amplitude(amplitude: f64, seed: u64) -> Self {
        Self { snr_db: f64::NAN, seed, amplitude: Some(amplitude) }
    }

    /// Noise amplitude `D` for a clean signal with the given RMS.
    pub fn amplitude_for(&self, clean_rms: f64) -> Result<f64> {
        if let Some(d) = self.amplitude {
            if !(d.is_finite() && d >= 0.0) {
                return Err(Error::invalid(format!("noise amplitude must be finite and non-negative, got {d}")));
            }
            return Ok(d);
        }
        if self.snr_db == f64::INFINITY {
            return Ok(0.0);
        }
        if !self.snr_db.is_finite() {
            return Err(Error::invalid(format!("SNR must be finite or +inf, got {}", self.snr_db)));
        }
        if clean_rms <= 0.0 {
            return Err(Error::invalid("SNR is undefined for an all-zero signal"));
        }
        let d = clean_rms * 10f64.powf(-self.snr_db / 20.0);
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::invalid(format!("SNR {} dB gives a degenerate noise amplitude {d}", self.snr_db)));
        }
        Ok(d)
    }

    /// Sensor-noise variance `D²` for a clean signal with the given RMS.
    pub fn variance_for(&self, clean_rms: f64) -> Result<f64> {
        self.amplitude_for(clean_rms).map(|d| d * d)
    }
}

/// `n` i.i.d. standard normal draws from a ChaCha8 stream seeded with `seed`.
pub fn standard_normal_sequence(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Returns a copy of `signal` with `D·v_k` added to every sample.
pub fn add_noise(signal: &SampledSignal, spec: &NoiseSpec) -> Result<SampledSignal> {
    if signal.is_empty() {
        return Err(Error::invalid("cannot add noise to an empty signal"));
    }
    let amplitude = spec.amplitude_for(signal.rms())?;
    let mut noisy = signal.clone();
    if amplitude == 0.0 {
        return Ok(noisy);
    }
    let noise = standard_normal_sequence(spec.seed, signal.len());
    for (y, v) in noisy.values.iter_mut().zip(noise) {
        *y += amplitude * v;
    }
    Ok(noisy)
}

fn check_steps(sample_time_s: f64, num_steps: usize) -> Result<()> {
    check_sample_time(sample_time_s)?;
    if num_steps == 0 {
        return Err(Error::invalid("number of steps must be at least 1"));
    }
    Ok(())
}

/// `y(t) = a₁ sin(ω₁ t) + a₂ sin(ω₂ t)` sampled at `k T_s`, with exact first
/// and second derivatives.
pub fn generate_two_tone(
    amplitude_1: f64,
    freq_1: f64,
    amplitude_2: f64,
    freq_2: f64,
    sample_time_s: f64,
    num_steps: usize,
) -> Result<SampledSignal> {
    check_steps(sample_time_s, num_steps)?;
    let tones = [(amplitude_1, freq_1), (amplitude_2, freq_2)];
    let mut values = Vec::with_capacity(num_steps);
    let mut d1 = Vec::with_capacity(num_steps);
    let mut d2 = Vec::with_capacity(num_steps);
    for k in 0..num_steps {
        let t = k as f64 * sample_time_s;
        let (mut y, mut dy, mut ddy) = (0.0, 0.0, 0.0);
        for &(a, w) in &tones {
            let (s, c) = (w * t).sin_cos();
            y += a * s;
            dy += a * w * c;
            ddy -= a * w * w * s;
        }
        values.push(y);
        d1.push(dy);
        d2.push(ddy);
    }
    SampledSignal::new(sample_time_s, values)?
        .with_truth(DerivativeOrder::First, d1)?
        .with_truth(DerivativeOrder::Second, d2)
}

/// Relative-position profile of a lane-change manoeuvre: a constant closing
/// ramp plus a logistic lateral displacement.
///
/// `y(t) = offset + rate·t + displacement·σ((t − midpoint_s)/transition_s)`
/// with `σ(u) = 1/(1 + e^(−u))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ManeuverProfile {
    pub offset: f64,
    pub rate: f64,
    pub displacement: f64,
    pub midpoint_s: f64,
    pub transition_s: f64,
}

impl Default for ManeuverProfile {
    fn default() -> Self {
        Self { offset: -3.5, rate: 0.2, displacement: 3.5, midpoint_s: 7.5, transition_s: 0.6 }
    }
}

impl ManeuverProfile {
    fn validate(&self) -> Result<()> {
        let finite = [self.offset, self.rate, self.displacement, self.midpoint_s, self.transition_s]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("manoeuvre profile parameters must be finite"));
        }
        if self.transition_s <= 0.0 {
            return Err(Error::invalid("manoeuvre transition time must be positive"));
        }
        Ok(())
    }

    /// Position, velocity and acceleration at time `t`.
    pub fn evaluate(&self, t: f64) -> [f64; 3] {
        let u = (t - self.midpoint_s) / self.transition_s;
        let s = logistic(u);
        let ds = s * (1.0 - s);
        let dds = ds * (1.0 - 2.0 * s);
        let tau = self.transition_s;
        [
            self.offset + self.rate * t + self.displacement * s,
            self.rate + self.displacement * ds / tau,
            self.displacement * dds / (tau * tau),
        ]
    }
}

fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Samples a [`ManeuverProfile`] over `duration_s` seconds. The sample count
/// is `round(duration_s / T_s)`.
pub fn generate_maneuver_trajectory(
    duration_s: f64,
    sample_time_s: f64,
    profile: &ManeuverProfile,
) -> Result<SampledSignal> {
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(Error::invalid(format!("duration must be positive, got {duration_s}")));
    }
    check_sample_time(sample_time_s)?;
    profile.validate()?;
    let num_steps = (duration_s / sample_time_s).round() as usize;
    check_steps(sample_time_s, num_steps)?;
    let mut values = Vec::with_capacity(num_steps);
    let mut d1 = Vec::with_capacity(num_steps);
    let mut d2 = Vec::with_capacity(num_steps);
    for k in 0..num_steps {
        let [y, dy, ddy] = profile.evaluate(k as f64 * sample_time_s);
        values.push(y);
        d1.push(dy);
        d2.push(ddy);
    }
    SampledSignal::new(sample_time_s, values)?
        .with_truth(DerivativeOrder::First, d1)?
        .with_truth(DerivativeOrder::Second, d2)
}

/// Sample time assumed when a CSV file holds fewer than two rows.
pub const DEFAULT_SAMPLE_TIME_S: f64 = 1.0;

/// Writes `t,y[,d1][,d2]` rows using the shortest round-trip decimal form.
pub fn write_csv(signal: &SampledSignal, path: impl AsRef<Path>) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    write_csv_to(signal, file)
}

pub fn write_csv_to<W: Write>(signal: &SampledSignal, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let orders: Vec<DerivativeOrder> = signal.truth.keys().copied().collect();
    let mut header = vec!["t".to_string(), "y".to_string()];
    header.extend(orders.iter().map(|q| format!("d{q}")));
    w.write_record(&header).map_err(csv_io)?;
    for (k, (t, y)) in signal.times().zip(&signal.values).enumerate() {
        let mut row = vec![t.to_string(), y.to_string()];
        row.extend(orders.iter().map(|q| signal.truth[q][k].to_string()));
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Reads a signal written by [`write_csv`]. The sample time is `t₁ − t₀`;
/// with fewer than two rows it falls back to [`DEFAULT_SAMPLE_TIME_S`].
pub fn read_csv(path: impl AsRef<Path>) -> Result<SampledSignal> {
    read_csv_from(File::open(path)?)
}

pub fn read_csv_from<R: Read>(reader: R) -> Result<SampledSignal> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Format(e.to_string()))?.clone();
    let names: Vec<&str> = header.iter().collect();
    if names.len() < 2 || names[0] != "t" || names[1] != "y" {
        return Err(Error::Format(format!("expected header starting with `t,y`, got `{}`", names.join(","))));
    }
    let mut orders = Vec::new();
    for name in &names[2..] {
        let q = match *name {
            "d1" => DerivativeOrder::First,
            "d2" => DerivativeOrder::Second,
            other => return Err(Error::Format(format!("unknown column `{other}`"))),
        };
        if orders.contains(&q) {
            return Err(Error::Format(format!("duplicate column `{name}`")));
        }
        orders.push(q);
    }

    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut truth: Vec<Vec<f64>> = vec![Vec::new(); orders.len()];
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Format(e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != names.len() {
            return Err(Error::Format(format!(
                "line {line}: expected {} columns, found {}",
                names.len(),
                record.len()
            )));
        }
        let mut fields = record.iter().map(|field| {
            field.parse::<f64>().map_err(|_| Error::Parse { line, message: format!("`{field}` is not a number") })
        });
        times.push(fields.next().unwrap()?);
        values.push(fields.next().unwrap()?);
        for column in truth.iter_mut() {
            column.push(fields.next().unwrap()?);
        }
    }

    let sample_time_s = if times.len() >= 2 { times[1] - times[0] } else { DEFAULT_SAMPLE_TIME_S };
    if !(sample_time_s.is_finite() && sample_time_s > 0.0) {
        return Err(Error::Format(format!("time column must be increasing, got step {sample_time_s}")));
    }
    for (k, t) in times.iter().enumerate() {
        let expected = times[0] + k as f64 * sample_time_s;
        if (t - expected).abs() > 1e-6 * sample_time_s.max(expected.abs()) {
            return Err(Error::Format(format!("row {k}: non-uniform sampling (t = {t}, expected {expected})")));
        }
    }
    let mut signal = SampledSignal::new(sample_time_s, values)?;
    for (q, column) in orders.into_iter().zip(truth) {
        signal = signal.with_truth(q, column)?;
    }
    Ok(signal)
}
