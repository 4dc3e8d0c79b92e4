//! Time-series containers, standardization, band-pass filtering and
//! event-window segmentation.

use std::io::{Read, Write};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

/// Width of the cosine ramp at each band edge, in Hz.
pub const BAND_EDGE_TAPER_HZ: f64 = 0.5;

/// One channel of uniformly sampled data. Values are guaranteed finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    values: Vec<f64>,
    sample_rate: f64,
    label: String,
}

impl TimeSeries {
    pub fn new(label: impl Into<String>, values: Vec<f64>, sample_rate: f64) -> Result<Self> {
        let label = label.into();
        if values.is_empty() {
            return Err(Error::SeriesTooShort {
                required: 0,
                actual: 0,
            });
        }
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput(format!("{label}[{i}]")));
        }
        Ok(Self {
            values,
            sample_rate,
            label,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Duration in seconds (`len / sample_rate`).
    pub fn duration(&self) -> f64 {
        self.values.len() as f64 / self.sample_rate
    }

    /// Same label and rate, new values. Values must be finite.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.label.clone(), values, self.sample_rate)
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Equal-length, equal-rate channels with an optional event time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    channels: Vec<TimeSeries>,
    event_onset: Option<f64>,
}

impl Recording {
    pub fn new(channels: Vec<TimeSeries>, event_onset: Option<f64>) -> Result<Self> {
        let first = channels
            .first()
            .ok_or_else(|| Error::ChannelMismatch("recording has no channels".into()))?;
        let (n, fs) = (first.len(), first.sample_rate());
        for ch in &channels[1..] {
            if ch.len() != n {
                return Err(Error::ChannelMismatch(format!(
                    "channel '{}' has {} samples, expected {n}",
                    ch.label(),
                    ch.len()
                )));
            }
            if ch.sample_rate() != fs {
                return Err(Error::ChannelMismatch(format!(
                    "channel '{}' sampled at {} Hz, expected {fs}",
                    ch.label(),
                    ch.sample_rate()
                )));
            }
        }
        if let Some(t) = event_onset {
            let duration = first.duration();
            if !(t > 0.0 && t < duration) {
                return Err(Error::OutOfRange(format!(
                    "event onset {t} s outside (0, {duration}) s"
                )));
            }
        }
        Ok(Self {
            channels,
            event_onset,
        })
    }

    pub fn channels(&self) -> &[TimeSeries] {
        &self.channels
    }

    pub fn channel(&self, index: usize) -> Option<&TimeSeries> {
        self.channels.get(index)
    }

    pub fn channel_index(&self, label: &str) -> Option<usize> {
        self.channels.iter().position(|c| c.label() == label)
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn n_samples(&self) -> usize {
        self.channels[0].len()
    }

    pub fn sample_rate(&self) -> f64 {
        self.channels[0].sample_rate()
    }

    pub fn duration(&self) -> f64 {
        self.channels[0].duration()
    }

    pub fn event_onset(&self) -> Option<f64> {
        self.event_onset
    }

    /// Onset as a sample index, rounded to the nearest sample.
    pub fn onset_index(&self) -> Option<usize> {
        self.event_onset
            .map(|t| (t * self.sample_rate()).round() as usize)
    }

    pub fn labels(&self) -> Vec<String> {
        self.channels.iter().map(|c| c.label().to_string()).collect()
    }

    pub fn with_event_onset(self, event_onset: Option<f64>) -> Result<Self> {
        Self::new(self.channels, event_onset)
    }

    /// Apply `f` to every channel.
    pub fn map_channels<F>(&self, f: F) -> Result<Self>
    where
        F: Fn(&TimeSeries) -> Result<TimeSeries>,
    {
        let channels = self.channels.iter().map(f).collect::<Result<Vec<_>>>()?;
        Self::new(channels, self.event_onset)
    }
}

/// A named frequency band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub name: String,
    pub low_hz: f64,
    pub high_hz: f64,
}

impl BandSpec {
    pub fn new(name: impl Into<String>, low_hz: f64, high_hz: f64) -> Self {
        Self {
            name: name.into(),
            low_hz,
            high_hz,
        }
    }

    pub fn validate(&self, sample_rate: f64) -> Result<()> {
        let nyquist_hz = sample_rate / 2.0;
        let ok = self.low_hz.is_finite()
            && self.high_hz.is_finite()
            && self.low_hz > 0.0
            && self.low_hz < self.high_hz
            && self.high_hz < nyquist_hz;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidBand {
                low_hz: self.low_hz,
                high_hz: self.high_hz,
                nyquist_hz,
            })
        }
    }
}

/// Conventional EEG band edges. Configurable everywhere they are used.
pub fn default_bands() -> Vec<BandSpec> {
    vec![
        BandSpec::new("delta", 1.0, 4.0),
        BandSpec::new("theta", 4.0, 8.0),
        BandSpec::new("alpha", 8.0, 13.0),
        BandSpec::new("mu", 8.0, 12.0),
        BandSpec::new("beta", 13.0, 30.0),
        BandSpec::new("gamma", 30.0, 45.0),
    ]
}

/// Zero mean, unit sample standard deviation.
pub fn standardize(series: &TimeSeries) -> Result<TimeSeries> {
    let v = series.values();
    if v.len() < 2 {
        return Err(Error::SeriesTooShort {
            required: 1,
            actual: v.len(),
        });
    }
    let (m, sd) = stats::mean_std(v);
    if sd == 0.0 || !sd.is_finite() {
        return Err(Error::ZeroVariance);
    }
    series.with_values(v.iter().map(|x| (x - m) / sd).collect())
}

/// Gain of the spectral mask at frequency `f`.
fn band_gain(f: f64, low: f64, high: f64) -> f64 {
    if f < low || f > high {
        return 0.0;
    }
    let taper = BAND_EDGE_TAPER_HZ.min((high - low) / 2.0);
    let ramp = |x: f64| 0.5 * (1.0 - (std::f64::consts::PI * x / taper).cos());
    if f < low + taper {
        ramp(f - low)
    } else if f > high - taper {
        ramp(high - f)
    } else {
        1.0
    }
}

/// Zero-phase band-pass by spectral masking. The mask is 1 inside the band,
/// ramps to 0 over [`BAND_EDGE_TAPER_HZ`] just inside each edge, and is exactly
/// 0 outside the band.
pub fn bandpass(series: &TimeSeries, band: &BandSpec) -> Result<TimeSeries> {
    band.validate(series.sample_rate())?;
    let n = series.len();
    let fs = series.sample_rate();
    let mut buf: Vec<Complex<f64>> = series
        .values()
        .iter()
        .map(|&v| Complex::new(v, 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        // bins above n/2 mirror negative frequencies
        let bin = k.min(n - k);
        let f = bin as f64 * fs / n as f64;
        *c *= band_gain(f, band.low_hz, band.high_hz);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    series.with_values(buf.iter().map(|c| c.re * scale).collect())
}

/// Cut every channel to the sample range `[round(start_s*fs), round(end_s*fs))`.
pub fn segment(rec: &Recording, start_s: f64, end_s: f64) -> Result<Recording> {
    let fs = rec.sample_rate();
    let duration = rec.duration();
    let slack = 1e-9 * duration.max(1.0);
    if !(start_s.is_finite() && end_s.is_finite())
        || start_s < 0.0
        || start_s >= end_s
        || end_s > duration + slack
    {
        return Err(Error::OutOfRange(format!(
            "window ({start_s}, {end_s}) s outside recording of {duration} s"
        )));
    }
    let start = (start_s * fs).round() as usize;
    let end = ((end_s * fs).round() as usize).min(rec.n_samples());
    segment_samples(rec, start, end)
}

/// Cut every channel to sample indices `[start, end)`.
pub fn segment_samples(rec: &Recording, start: usize, end: usize) -> Result<Recording> {
    if start >= end || end > rec.n_samples() {
        return Err(Error::OutOfRange(format!(
            "sample window [{start}, {end}) outside 0..{}",
            rec.n_samples()
        )));
    }
    let channels = rec
        .channels()
        .iter()
        .map(|c| c.with_values(c.values()[start..end].to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let fs = rec.sample_rate();
    let new_duration = (end - start) as f64 / fs;
    let onset = rec
        .event_onset()
        .map(|t| t - start as f64 / fs)
        .filter(|&t| t > 0.0 && t < new_duration);
    Recording::new(channels, onset)
}

/// Read a recording from CSV: header row of channel labels, one column per
/// channel, one row per sample.
pub fn read_csv<R: Read>(reader: R, sample_rate: f64) -> Result<Recording> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let labels: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if labels.is_empty() {
        return Err(Error::Parse("CSV has no header".into()));
    }
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); labels.len()];
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != labels.len() {
            return Err(Error::Parse(format!(
                "row {} has {} fields, expected {}",
                row + 2,
                record.len(),
                labels.len()
            )));
        }
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::Parse(format!("row {}, column '{}': '{field}'", row + 2, labels[col]))
            })?;
            columns[col].push(v);
        }
    }
    let channels = labels
        .into_iter()
        .zip(columns)
        .map(|(label, values)| TimeSeries::new(label, values, sample_rate))
        .collect::<Result<Vec<_>>>()?;
    Recording::new(channels, None)
}

/// Write a recording in the format [`read_csv`] reads. Floats use the shortest
/// representation that round-trips exactly.
pub fn write_csv<W: Write>(rec: &Recording, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(rec.channels().iter().map(|c| c.label()))?;
    for i in 0..rec.n_samples() {
        wtr.write_record(rec.channels().iter().map(|c| c.values()[i].to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ts(values: Vec<f64>) -> TimeSeries {
        TimeSeries::new("x", values, 100.0).unwrap()
    }

    fn sine(freq: f64, fs: f64, n: usize) -> TimeSeries {
        let v = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / fs).sin())
            .collect();
        TimeSeries::new("s", v, fs).unwrap()
    }

    fn rms(v: &[f64]) -> f64 {
        (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
    }

    #[test]
    fn rejects_non_finite_and_bad_rate() {
        assert!(matches!(
            TimeSeries::new("x", vec![1.0, f64::NAN], 10.0),
            Err(Error::NonFiniteInput(_))
        ));
        assert!(TimeSeries::new("x", vec![1.0], 0.0).is_err());
        assert!(TimeSeries::new("x", vec![], 1.0).is_err());
    }

    #[test]
    fn standardize_three_points() {
        let out = standardize(&ts(vec![1.0, 2.0, 3.0])).unwrap();
        assert_eq!(out.values(), &[-1.0, 0.0, 1.0]);
        assert_eq!(out.label(), "x");
    }

    #[test]
    fn standardize_constant_fails() {
        assert!(matches!(
            standardize(&ts(vec![5.0, 5.0, 5.0])),
            Err(Error::ZeroVariance)
        ));
    }

    #[test]
    fn passband_sinusoid_survives() {
        let s = sine(10.0, 200.0, 1000);
        let out = bandpass(&s, &BandSpec::new("a", 8.0, 12.0)).unwrap();
        let ratio = rms(out.values()) / rms(s.values());
        assert!((ratio - 1.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn stopband_sinusoid_is_removed() {
        // 40 Hz lies on an FFT bin here, and also check an off-bin length
        for n in [1000, 1037] {
            let s = sine(40.0, 200.0, n);
            let out = bandpass(&s, &BandSpec::new("a", 8.0, 12.0)).unwrap();
            let ratio = rms(out.values()) / rms(s.values());
            assert!(ratio < 0.01, "n={n} ratio {ratio}");
        }
    }

    #[test]
    fn invalid_bands() {
        let s = sine(10.0, 100.0, 100);
        assert!(matches!(
            bandpass(&s, &BandSpec::new("bad", 12.0, 8.0)),
            Err(Error::InvalidBand { .. })
        ));
        assert!(bandpass(&s, &BandSpec::new("bad", 10.0, 50.0)).is_err());
    }

    fn five_second_recording() -> Recording {
        let a = ts((0..500).map(|i| i as f64).collect());
        let b = TimeSeries::new("y", (0..500).map(|i| -(i as f64)).collect(), 100.0).unwrap();
        Recording::new(vec![a, b], Some(1.1)).unwrap()
    }

    #[test]
    fn segment_sample_counts() {
        let rec = five_second_recording();
        let pre = segment(&rec, 0.0, 1.1).unwrap();
        assert_eq!(pre.n_samples(), 110);
        assert_eq!(pre.event_onset(), None);
        let post = segment(&rec, 1.1, 5.0).unwrap();
        assert_eq!(post.n_samples(), 390);
        assert_eq!(post.channels()[0].values()[0], 110.0);
        assert_eq!(post.channels()[1].values()[0], -110.0);
        let around = segment(&rec, 1.0, 2.0).unwrap();
        assert!((around.event_onset().unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn segment_out_of_range() {
        let rec = five_second_recording();
        assert!(matches!(segment(&rec, 4.0, 6.0), Err(Error::OutOfRange(_))));
        assert!(segment(&rec, 2.0, 2.0).is_err());
        assert!(segment(&rec, -0.1, 1.0).is_err());
    }

    #[test]
    fn recording_rejects_mismatched_channels() {
        let a = ts(vec![1.0, 2.0]);
        let b = ts(vec![1.0]);
        assert!(Recording::new(vec![a.clone(), b], None).is_err());
        assert!(Recording::new(vec![a], Some(5.0)).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let rec = five_second_recording().with_event_onset(None).unwrap();
        let mut buf = Vec::new();
        write_csv(&rec, &mut buf).unwrap();
        let back = read_csv(buf.as_slice(), 100.0).unwrap();
        assert_eq!(back, rec);
    }

    #[test]
    fn csv_rejects_garbage() {
        let data = "a,b\n1,2\n3,x\n";
        assert!(matches!(read_csv(data.as_bytes(), 1.0), Err(Error::Parse(_))));
        let data = "a,b\n1,NaN\n";
        assert!(read_csv(data.as_bytes(), 1.0).is_err());
    }
}
