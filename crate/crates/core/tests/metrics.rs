use std::f64::consts::TAU;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sunet_core::data::{mix_at_snr, synth_clean, synth_noise, AudioBuffer, NoiseKind};
use sunet_core::metrics::{
    evaluate, pesq_external, snr, ssnr, stoi, EvalPair, MetricMeans, MetricSet, PesqCommand, SNR_CAP_DB,
    SSNR_MAX_DB, SSNR_MIN_DB,
};

/// Signals shared with the reference STOI computation below.
fn oracle_signals() -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let fs = 10000.0;
    let mut x: Vec<f64> = (0..15000)
        .map(|n| {
            let t = n as f64 / fs;
            (0.6 + 0.4 * (TAU * 3.0 * t).sin())
                * ((TAU * 220.0 * t).sin() + 0.5 * (TAU * 440.0 * t + 0.3).sin() + 0.25 * (TAU * 1250.0 * t).sin())
        })
        .collect();
    x[6000..8000].iter_mut().for_each(|v| *v = 0.0);
    let mut s: u64 = 12345;
    let u: Vec<f64> = (0..x.len())
        .map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / 2f64.powi(53) - 0.5
        })
        .collect();
    let y1 = x.iter().zip(&u).map(|(a, b)| a + 0.3 * b).collect();
    let y2 = x
        .iter()
        .zip(&u)
        .enumerate()
        .map(|(n, (a, b))| 0.5 * a + 0.2 * (TAU * 3000.0 * n as f64 / fs).sin() + 0.05 * b)
        .collect();
    (x, y1, y2)
}

// Reference values from pystoi 0.4 (`stoi(x, y, 10000)`) on the same signals.
const PYSTOI_Y1: f64 = 0.6128409041438848;
const PYSTOI_Y2: f64 = 0.6867550476168058;

#[test]
fn stoi_matches_reference_implementation_at_10khz() {
    let (x, y1, y2) = oracle_signals();
    assert!((stoi(&x, &y1, 10000).unwrap() - PYSTOI_Y1).abs() < 1e-6);
    assert!((stoi(&x, &y2, 10000).unwrap() - PYSTOI_Y2).abs() < 1e-6);
    assert!(stoi(&x, &x, 10000).unwrap() > 0.999_999);
}

fn speech_like(seed: u64, secs: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    synth_clean(&mut rng, (secs * 16000.0) as usize, 16000)
}

#[test]
fn stoi_of_identical_signals() {
    let c = speech_like(1, 2.0);
    assert!(stoi(&c, &c, 16000).unwrap() >= 0.99);
}

/// Voiced-speech stand-in: 32 harmonics of a slowly gliding 125 Hz
/// fundamental under a 4 Hz syllabic envelope. Broadband, unlike the sparse
/// tones of `synth_clean`, which leave most STOI bands nearly empty.
fn harmonic_speech(secs: f64) -> Vec<f64> {
    let fs = 16000.0;
    let mut phase = 0.0;
    (0..(secs * fs) as usize)
        .map(|n| {
            let t = n as f64 / fs;
            phase += TAU * 125.0 * (1.0 + 0.05 * (TAU * 0.7 * t).sin()) / fs;
            let voiced: f64 = (1..=32).map(|k| (k as f64 * phase).sin() / (k as f64).sqrt()).sum();
            voiced * (0.55 + 0.45 * (TAU * 4.0 * t).sin())
        })
        .collect()
}

#[test]
fn stoi_of_pure_noise_is_low() {
    let c = harmonic_speech(2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = synth_noise(&mut rng, NoiseKind::White, c.len(), 16000);
    let score = stoi(&c, &n, 16000).unwrap();
    assert!(score <= 0.35, "{score}");
    // Regression constant for this seeded pair.
    assert!((score - STOI_NOISE_REGRESSION).abs() < 1e-9, "{score}");
}

const STOI_NOISE_REGRESSION: f64 = 0.008_172_238_411_481_281;

#[test]
fn stoi_rises_with_snr() {
    let c = speech_like(4, 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = synth_noise(&mut rng, NoiseKind::White, c.len() + 8000, 16000);
    let mut last = f64::NEG_INFINITY;
    for target in [-5.0, 0.0, 5.0, 10.0, 15.0] {
        let mut mix_rng = ChaCha8Rng::seed_from_u64(6);
        let y = mix_at_snr(&c, &n, target, &mut mix_rng).unwrap().noisy;
        let s = stoi(&c, &y, 16000).unwrap();
        assert!(s >= last, "stoi {s} at {target} dB below {last}");
        last = s;
    }
}

#[test]
fn mixing_round_trip_on_listed_targets() {
    let c = speech_like(7, 1.5);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = synth_noise(&mut rng, NoiseKind::Pink, 12000, 16000);
    for target in [-10.0, 0.0, 2.5, 7.5, 17.5, 40.0] {
        let y = mix_at_snr(&c, &n, target, &mut rng).unwrap().noisy;
        let measured = snr(&c, &y).unwrap();
        assert!((measured - target).abs() < 1e-6, "{measured} vs {target}");
    }
}

#[test]
fn ssnr_of_identical_signals_is_the_upper_clamp() {
    let c = speech_like(9, 1.0);
    assert_eq!(ssnr(&c, &c).unwrap(), SSNR_MAX_DB);
    assert_eq!(snr(&c, &c).unwrap(), SNR_CAP_DB);
}

fn pairs(n: usize) -> Vec<EvalPair> {
    (0..n)
        .map(|i| {
            let clean = speech_like(20 + i as u64, 1.0 + 0.25 * i as f64);
            let mut rng = ChaCha8Rng::seed_from_u64(40 + i as u64);
            let noise = synth_noise(&mut rng, NoiseKind::White, clean.len(), 16000);
            let noisy = mix_at_snr(&clean, &noise, 5.0 * i as f64, &mut rng).unwrap().noisy;
            EvalPair {
                id: format!("u{i}"),
                clean: AudioBuffer::new(16000, clean),
                noisy: AudioBuffer::new(16000, noisy),
            }
        })
        .collect()
}

#[test]
fn identity_system_reproduces_input_row() {
    let p = pairs(3);
    let outs = p.iter().map(|x| x.noisy.clone()).collect();
    let r = evaluate(&p, &[("Identity".into(), outs)], MetricSet::default(), None).unwrap();
    assert_eq!(r.systems[0].rows, r.systems[1].rows);
    assert_eq!(r.systems[0].name, "Input");
}

#[test]
fn perfect_system_and_means() {
    let p = pairs(4);
    let outs = p.iter().map(|x| x.clean.clone()).collect();
    let r = evaluate(&p, &[("Oracle".into(), outs)], MetricSet::default(), None).unwrap();
    let oracle = r.system("Oracle").unwrap();
    assert!(oracle.rows.iter().all(|row| row.snr == SNR_CAP_DB));
    assert!(oracle.rows.iter().all(|row| row.stoi.unwrap() >= 0.99));
    assert!(oracle.rows.iter().all(|row| row.pesq.is_none()));
    for s in &r.systems {
        let n = s.rows.len() as f64;
        let snr_mean = s.rows.iter().map(|r| r.snr).sum::<f64>() / n;
        let stoi_mean = s.rows.iter().map(|r| r.stoi.unwrap()).sum::<f64>() / n;
        assert!((s.means.snr - snr_mean).abs() < 1e-9);
        assert!((s.means.stoi.unwrap() - stoi_mean).abs() < 1e-9);
        assert_eq!(s.means, MetricMeans::of(&s.rows));
    }
    let tsv = r.to_tsv();
    assert_eq!(tsv.lines().count(), 1 + 2 * 4 + 2);
    assert!(r.table().contains("Oracle"));
}

#[test]
fn misaligned_systems_are_rejected() {
    let p = pairs(2);
    assert!(evaluate(&p, &[("x".into(), vec![])], MetricSet::default(), None).is_err());
}

#[test]
fn metric_set_controls_columns() {
    let p = pairs(2);
    let set = MetricSet::parse(&["snr"]).unwrap();
    let r = evaluate(&p, &[], set, None).unwrap();
    assert!(r.systems[0].rows.iter().all(|row| row.ssnr.is_none() && row.stoi.is_none()));
    assert!(MetricSet::parse(&["snr", "mos"]).is_err());
}

#[cfg(unix)]
mod pesq {
    use super::*;
    use std::os::unix::fs::PermissionsExt;
    use std::path::Path;

    fn script(dir: &Path, name: &str, body: &str) -> String {
        let path = dir.join(name);
        std::fs::write(&path, format!("#!/bin/sh\n{body}\n")).unwrap();
        std::fs::set_permissions(&path, std::fs::Permissions::from_mode(0o755)).unwrap();
        path.display().to_string()
    }

    #[test]
    fn adapter_contract() {
        let dir = tempfile::tempdir().unwrap();
        let (c, t) = (Path::new("c.wav"), Path::new("t.wav"));
        assert_eq!(pesq_external(c, t, None), None);
        let ok = script(dir.path(), "ok.sh", "echo \"scoring $1 $2\"; echo 2.50");
        assert_eq!(pesq_external(c, t, Some(&PesqCommand::new(format!("{ok} {{clean}} {{test}}")))), Some(2.5));
        let fail = script(dir.path(), "fail.sh", "echo 4.0; exit 3");
        assert_eq!(pesq_external(c, t, Some(&PesqCommand::new(fail))), None);
        let silent = script(dir.path(), "silent.sh", "echo no score");
        assert_eq!(pesq_external(c, t, Some(&PesqCommand::new(silent))), None);
        assert_eq!(pesq_external(c, t, Some(&PesqCommand::new("/no/such/binary"))), None);
    }

    #[test]
    fn evaluate_fills_pesq_when_configured() {
        let dir = tempfile::tempdir().unwrap();
        let ok = script(dir.path(), "ok.sh", "test -s \"$1\" && test -s \"$2\" && echo 3.25");
        let p = pairs(2);
        let cmd = PesqCommand::new(format!("{ok} {{clean}} {{test}}"));
        let r = evaluate(&p, &[], MetricSet::default(), Some(&cmd)).unwrap();
        assert_eq!(r.systems[0].means.pesq, Some(3.25));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mix_then_measure(target in -10.0f64..40.0, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = synth_clean(&mut rng, 4000, 16000);
        let n = synth_noise(&mut rng, NoiseKind::White, 3000, 16000);
        let y = mix_at_snr(&c, &n, target, &mut rng).unwrap().noisy;
        prop_assert!((snr(&c, &y).unwrap() - target).abs() < 1e-6);
    }

    #[test]
    fn ssnr_stays_within_clamps(seed in 0u64..1000, gain in 0.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = synth_clean(&mut rng, 3000, 16000);
        let n = synth_noise(&mut rng, NoiseKind::Pink, 3000, 16000);
        let y: Vec<f64> = c.iter().zip(&n).map(|(a, b)| a + gain * b).collect();
        let v = ssnr(&c, &y).unwrap();
        prop_assert!((SSNR_MIN_DB..=SSNR_MAX_DB).contains(&v));
    }

    #[test]
    fn snr_and_ssnr_ignore_common_scale(seed in 0u64..1000, k in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = synth_clean(&mut rng, 3000, 16000);
        let n = synth_noise(&mut rng, NoiseKind::White, 3000, 16000);
        let y: Vec<f64> = c.iter().zip(&n).map(|(a, b)| a + 0.05 * b).collect();
        let cs: Vec<f64> = c.iter().map(|v| v * k).collect();
        let ys: Vec<f64> = y.iter().map(|v| v * k).collect();
        prop_assert!((snr(&c, &y).unwrap() - snr(&cs, &ys).unwrap()).abs() < 1e-9);
        prop_assert!((ssnr(&c, &y).unwrap() - ssnr(&cs, &ys).unwrap()).abs() < 1e-9);
    }
}

#[test]
fn stoi_ignores_test_scale() {
    let c = speech_like(11, 1.5);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = synth_noise(&mut rng, NoiseKind::Babble, c.len(), 16000);
    let y = mix_at_snr(&c, &n, 5.0, &mut rng).unwrap().noisy;
    let base = stoi(&c, &y, 16000).unwrap();
    for alpha in [0.5, 2.0, 10.0] {
        let ys: Vec<f64> = y.iter().map(|v| v * alpha).collect();
        assert!((stoi(&c, &ys, 16000).unwrap() - base).abs() < 1e-6);
    }
}
