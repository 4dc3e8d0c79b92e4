mod common;

use dbn_ccm::series::{bandpass, segment, segment_samples, standardize, BandSpec, Recording, TimeSeries};
use proptest::prelude::*;

use common::white_noise;

fn ts(values: Vec<f64>, fs: f64) -> TimeSeries {
    TimeSeries::new("x", values, fs).unwrap()
}

fn tone(freq: f64, fs: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|t| (2.0 * std::f64::consts::PI * freq * t as f64 / fs).sin())
        .collect()
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// Magnitude of DFT bin `k`, summed directly.
fn dft_magnitude(x: &[f64], k: usize) -> f64 {
    let n = x.len() as f64;
    let (mut re, mut im) = (0.0, 0.0);
    for (t, v) in x.iter().enumerate() {
        let a = -2.0 * std::f64::consts::PI * k as f64 * t as f64 / n;
        re += v * a.cos();
        im += v * a.sin();
    }
    (re * re + im * im).sqrt()
}

#[test]
fn in_band_tone_passes_and_out_of_band_tone_is_removed() {
    let fs = 250.0;
    let alpha = BandSpec::new("alpha", 8.0, 12.0);
    let pass = bandpass(&ts(tone(10.0, fs, 2500), fs), &alpha).unwrap();
    let amp = pass.values()[250..2250].iter().cloned().fold(0.0, |m: f64, v| m.max(v.abs()));
    assert!((amp - 1.0).abs() <= 0.05, "amplitude {amp}");
    let input = tone(40.0, fs, 2500);
    let stop = bandpass(&ts(input.clone(), fs), &alpha).unwrap();
    assert!(rms(stop.values()) < 0.01 * rms(&input));
}

#[test]
fn output_spectrum_vanishes_outside_the_band() {
    let fs = 100.0;
    let n = 500;
    let x = white_noise(n, 3);
    let out = bandpass(&ts(x.clone(), fs), &BandSpec::new("b", 10.0, 20.0)).unwrap();
    for k in 0..=n / 2 {
        let f = k as f64 * fs / n as f64;
        let mag = dft_magnitude(out.values(), k);
        if !(10.0..=20.0).contains(&f) {
            assert!(mag < 1e-9, "bin at {f} Hz has magnitude {mag}");
        } else if (10.5..=19.5).contains(&f) {
            assert!((mag - dft_magnitude(&x, k)).abs() < 1e-8 * (1.0 + mag));
        }
    }
}

#[test]
fn invalid_bands_are_rejected() {
    let x = ts(white_noise(200, 1), 100.0);
    assert!(bandpass(&x, &BandSpec::new("bad", 12.0, 8.0)).is_err());
    assert!(bandpass(&x, &BandSpec::new("nyquist", 10.0, 50.0)).is_err());
    assert!(bandpass(&x, &BandSpec::new("zero", 0.0, 10.0)).is_err());
}

#[test]
fn standardize_reference_cases() {
    let out = standardize(&ts(vec![1.0, 2.0, 3.0], 1.0)).unwrap();
    assert_eq!(out.values(), &[-1.0, 0.0, 1.0]);
    assert!(standardize(&ts(vec![5.0, 5.0, 5.0], 1.0)).is_err());
}

#[test]
fn segment_reference_cases() {
    let chans = (0..2).map(|c| TimeSeries::new(format!("c{c}"), white_noise(500, c), 100.0).unwrap()).collect();
    let rec = Recording::new(chans, None).unwrap();
    assert_eq!(segment(&rec, 0.0, 1.1).unwrap().n_samples(), 110);
    assert_eq!(segment(&rec, 1.1, 5.0).unwrap().n_samples(), 390);
    assert!(segment(&rec, 4.0, 6.0).is_err());
}

#[test]
fn non_finite_values_are_rejected() {
    assert!(TimeSeries::new("x", vec![1.0, f64::NAN], 1.0).is_err());
    assert!(TimeSeries::new("x", vec![1.0, f64::INFINITY], 1.0).is_err());
    assert!(TimeSeries::new("x", vec![1.0], 0.0).is_err());
    let a = ts(vec![1.0, 2.0], 1.0);
    let b = ts(vec![1.0, 2.0, 3.0], 1.0);
    assert!(Recording::new(vec![a, b], None).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn standardize_is_idempotent(seed in 0u64..10_000, scale in 1e-3f64..1e3, shift in -1e3f64..1e3) {
        let x: Vec<f64> = white_noise(200, seed).iter().map(|v| v * scale + shift).collect();
        let once = standardize(&ts(x, 1.0)).unwrap();
        let twice = standardize(&once).unwrap();
        prop_assert!(once.values().iter().sum::<f64>().abs() / 200.0 < 1e-12);
        for (a, b) in once.values().iter().zip(twice.values()) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn bandpass_is_linear(seed in 0u64..10_000, a in -10.0f64..10.0, b in -10.0f64..10.0, n in 64usize..600) {
        let fs = 128.0;
        let band = BandSpec::new("beta", 13.0, 30.0);
        let x = white_noise(n, seed);
        let y = white_noise(n, seed + 77_777);
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let lhs = bandpass(&ts(mix, fs), &band).unwrap();
        let fx = bandpass(&ts(x, fs), &band).unwrap();
        let fy = bandpass(&ts(y, fs), &band).unwrap();
        let scale = lhs.values().iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for ((l, p), q) in lhs.values().iter().zip(fx.values()).zip(fy.values()) {
            prop_assert!((l - (a * p + b * q)).abs() <= 1e-8 * scale);
        }
    }

    #[test]
    fn nested_segments_compose(n in 50usize..300, s1 in 0usize..40, len1 in 5usize..200, s2 in 0usize..20, len2 in 1usize..100) {
        let rec = Recording::new(vec![ts(white_noise(n, 1), 10.0), TimeSeries::new("y", white_noise(n, 2), 10.0).unwrap()], None).unwrap();
        prop_assume!(s1 + len1 <= n && s2 + len2 <= len1);
        let outer = segment_samples(&rec, s1, s1 + len1).unwrap();
        let inner = segment_samples(&outer, s2, s2 + len2).unwrap();
        let direct = segment_samples(&rec, s1 + s2, s1 + s2 + len2).unwrap();
        prop_assert_eq!(inner.channels(), direct.channels());
    }
}
