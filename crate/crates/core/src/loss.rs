//! Reconstruction losses with analytic gradients with respect to the
//! time-domain estimate.
//!
//! The scale-equalized SI-SDR term scales the *estimate* onto the reference
//! (this is the training loss; the evaluation metric in [`crate::metrics`]
//! projects the other way). The magnitude term is a mean absolute difference
//! of STFT magnitudes, chained back to the time domain through the linear
//! analysis adjoint.

use crate::error::{Error, Result};
use crate::signal::{stft, stft_adjoint, ComplexSpectrogram, StftConfig, Waveform};

/// Default weight of the auxiliary reference term in the stage-two loss.
pub const DEFAULT_AUX_WEIGHT: f64 = 1.2;

/// Relative floor applied to the SI-SDR residual, in units of the reference
/// energy. A perfect reconstruction bottoms out at -80 dB instead of
/// diverging.
pub const SI_SDR_FLOOR: f64 = 1e-8;

const LN10: f64 = std::f64::consts::LN_10;

/// Scalar loss values, broken into their documented parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub total: f64,
    pub si_sdr_se: f64,
    pub mag: f64,
    /// Distillation term; only present for the stage-two loss.
    pub distill: Option<f64>,
    /// Auxiliary reference term; only present for the stage-two loss.
    pub aux: Option<f64>,
}

/// Gradient of a scalar loss with respect to the time-domain estimate.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub d_estimate: Vec<f64>,
}

impl LossGrad {
    fn zeros(len: usize) -> LossGrad {
        LossGrad {
            d_estimate: vec![0.0; len],
        }
    }

    fn add_scaled(&mut self, other: &LossGrad, scale: f64) {
        for (a, b) in self.d_estimate.iter_mut().zip(&other.d_estimate) {
            *a += scale * b;
        }
    }
}

fn check_pair(est: &Waveform, reference: &Waveform) -> Result<()> {
    if est.len() != reference.len() {
        return Err(Error::input(format!(
            "length mismatch: estimate {} vs reference {}",
            est.len(),
            reference.len()
        )));
    }
    if est.is_empty() {
        return Err(Error::input("empty signals"));
    }
    Ok(())
}

/// Scale-equalized SI-SDR loss: the estimate is scaled by the least-squares
/// factor onto the reference before the residual is measured.
///
/// A zero estimate falls back to a zero scaling factor, which yields a loss of
/// exactly 0 with a zero gradient.
pub fn si_sdr_se_loss(est: &Waveform, reference: &Waveform) -> Result<(f64, LossGrad)> {
    check_pair(est, reference)?;
    let u = &reference.samples;
    let uh = &est.samples;
    let u_energy: f64 = u.iter().map(|x| x * x).sum();
    if u_energy == 0.0 {
        return Err(Error::input("si-sdr reference must be non-zero"));
    }
    let uh_energy: f64 = uh.iter().map(|x| x * x).sum();
    let floor = SI_SDR_FLOOR * u_energy;

    if uh_energy == 0.0 {
        // beta is undefined; the zero-scaling branch leaves the residual at
        // the reference itself.
        return Ok((0.0, LossGrad::zeros(uh.len())));
    }

    let dot: f64 = uh.iter().zip(u).map(|(a, b)| a * b).sum();
    let beta = dot / uh_energy;
    let residual: Vec<f64> = uh.iter().zip(u).map(|(a, b)| beta * a - b).collect();
    let res_energy: f64 = residual.iter().map(|x| x * x).sum();
    let denom = res_energy.max(floor);
    let value = -10.0 * (u_energy / denom).log10();

    if res_energy <= floor {
        return Ok((value, LossGrad::zeros(uh.len())));
    }

    // d/d_est of ||beta(est) est - u||^2, with beta treated as a function of
    // the estimate. The residual is orthogonal to the estimate, so the
    // beta-variation term vanishes analytically; it is kept for exactness.
    let res_dot_uh: f64 = residual.iter().zip(uh).map(|(a, b)| a * b).sum();
    let coef = 20.0 / (LN10 * denom);
    let grad: Vec<f64> = uh
        .iter()
        .zip(u)
        .zip(&residual)
        .map(|((&uhi, &ui), &ri)| {
            let dbeta = (ui * uh_energy - 2.0 * uhi * dot) / (uh_energy * uh_energy);
            coef * (beta * ri + res_dot_uh * dbeta)
        })
        .collect();
    Ok((value, LossGrad { d_estimate: grad }))
}

/// Mean absolute difference of STFT magnitudes over all time-frequency bins,
/// with the gradient chained back to the time-domain estimate.
pub fn mag_loss(
    est: &Waveform,
    reference: &Waveform,
    cfg: &StftConfig,
) -> Result<(f64, LossGrad)> {
    check_pair(est, reference)?;
    let spec_est = stft(est, cfg)?;
    let spec_ref = stft(reference, cfg)?;
    let bins = (spec_est.t * spec_est.f) as f64;

    let mut value = 0.0;
    let mut cot = ComplexSpectrogram::zeros_like(&spec_est);
    for (i, (e, r)) in spec_est
        .frames
        .iter()
        .zip(spec_ref.frames.iter())
        .enumerate()
    {
        let me = e.norm();
        let mr = r.norm();
        let diff = me - mr;
        value += diff.abs();
        let sign = if diff > 0.0 {
            1.0
        } else if diff < 0.0 {
            -1.0
        } else {
            0.0
        };
        // Subgradient 0 at zero magnitude.
        if sign != 0.0 && me > 0.0 {
            cot.frames[i] = *e * (sign / (bins * me));
        }
    }
    value /= bins;
    let grad = stft_adjoint(&cot);
    Ok((value, LossGrad { d_estimate: grad }))
}

/// Combined reconstruction loss: SI-SDR-SE plus magnitude term.
pub fn rec_loss(
    est: &Waveform,
    reference: &Waveform,
    cfg: &StftConfig,
) -> Result<(LossReport, LossGrad)> {
    let (si, mut grad) = si_sdr_se_loss(est, reference)?;
    let (mag, mag_grad) = mag_loss(est, reference, cfg)?;
    grad.add_scaled(&mag_grad, 1.0);
    Ok((
        LossReport {
            total: si + mag,
            si_sdr_se: si,
            mag,
            distill: None,
            aux: None,
        },
        grad,
    ))
}

/// Stage-one objective: reconstruct the observed mixture from its
/// re-reverberated copy.
pub fn stage1_loss(
    est: &Waveform,
    mixture: &Waveform,
    cfg: &StftConfig,
) -> Result<(LossReport, LossGrad)> {
    rec_loss(est, mixture, cfg)
}

/// Stage-two objective: distillation toward the teacher target plus the
/// weighted auxiliary constraint on the observed mixture.
///
/// The teacher target is a plain value; no gradient flows through it.
pub fn stage2_loss(
    est: &Waveform,
    teacher_target: &Waveform,
    mixture: &Waveform,
    aux_weight: f64,
    cfg: &StftConfig,
) -> Result<(LossReport, LossGrad)> {
    if !(aux_weight > 0.0) {
        return Err(Error::config(format!(
            "aux weight must be positive, got {aux_weight}"
        )));
    }
    let (distill, mut grad) = rec_loss(est, teacher_target, cfg)?;
    let (aux, aux_grad) = rec_loss(est, mixture, cfg)?;
    grad.add_scaled(&aux_grad, aux_weight);
    Ok((
        LossReport {
            total: distill.total + aux_weight * aux.total,
            si_sdr_se: distill.si_sdr_se + aux_weight * aux.si_sdr_se,
            mag: distill.mag + aux_weight * aux.mag,
            distill: Some(distill.total),
            aux: Some(aux.total),
        },
        grad,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn cfg_small() -> StftConfig {
        StftConfig::new(64, 16, 64).unwrap()
    }

    fn noise(len: usize, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::new((0..len).map(|_| rng.gen_range(-0.5..0.5)).collect(), 16_000)
    }

    fn finite_diff<F: Fn(&Waveform) -> f64>(w: &Waveform, i: usize, f: F) -> f64 {
        let h = 1e-6;
        let mut plus = w.clone();
        plus.samples[i] += h;
        let mut minus = w.clone();
        minus.samples[i] -= h;
        (f(&plus) - f(&minus)) / (2.0 * h)
    }

    fn check_grad<F: Fn(&Waveform) -> f64>(w: &Waveform, grad: &LossGrad, f: F, coords: &[usize]) {
        // Vector-relative comparison over the sampled coordinates; individual
        // near-zero entries are pure finite-difference noise.
        let mut num = 0.0;
        let mut den = 0.0;
        for &i in coords {
            let fd = finite_diff(w, i, &f);
            let an = grad.d_estimate[i];
            num += (fd - an) * (fd - an);
            den += fd.abs().max(an.abs()).powi(2);
        }
        let rel = (num / den.max(1e-300)).sqrt();
        assert!(rel < 1e-4, "gradient mismatch: vector relative error {rel}");
    }

    fn sample_coords(len: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        (0..n).map(|_| rng.gen_range(0..len)).collect()
    }

    #[test]
    fn si_sdr_perfect_reconstruction_hits_floor() {
        let w = noise(400, 1);
        let (v, g) = si_sdr_se_loss(&w, &w).unwrap();
        assert!((v - -80.0).abs() < 1e-9);
        assert!(g.d_estimate.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn si_sdr_is_scale_invariant() {
        let w = noise(400, 2);
        let (v0, _) = si_sdr_se_loss(&w, &w).unwrap();
        for c in [2.0, -3.0, 0.5, 1e3] {
            let scaled = Waveform::new(w.samples.iter().map(|x| c * x).collect(), 16_000);
            let (v, _) = si_sdr_se_loss(&scaled, &w).unwrap();
            assert!((v - v0).abs() < 1e-9, "c {c}: {v} vs {v0}");
        }
        let e = noise(400, 3);
        let (v0, _) = si_sdr_se_loss(&e, &w).unwrap();
        for c in [2.0, -3.0, 0.5, 1e3] {
            let scaled = Waveform::new(e.samples.iter().map(|x| c * x).collect(), 16_000);
            let (v, _) = si_sdr_se_loss(&scaled, &w).unwrap();
            assert!((v - v0).abs() < 1e-9, "c {c}: {v} vs {v0}");
        }
    }

    #[test]
    fn si_sdr_orthogonal_estimate_scores_zero() {
        // sin and cos over whole periods are orthogonal.
        let n = 512;
        let reference = Waveform::new(
            (0..n).map(|i| (2.0 * PI * 8.0 * i as f64 / n as f64).sin()).collect(),
            16_000,
        );
        let est = Waveform::new(
            (0..n).map(|i| (2.0 * PI * 8.0 * i as f64 / n as f64).cos()).collect(),
            16_000,
        );
        let (v, _) = si_sdr_se_loss(&est, &reference).unwrap();
        assert!(v.abs() < 1e-9, "value {v}");
    }

    #[test]
    fn si_sdr_zero_estimate_branch() {
        let reference = noise(100, 4);
        let est = Waveform::zeros(100, 16_000);
        let (v, g) = si_sdr_se_loss(&est, &reference).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.d_estimate.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn si_sdr_rejects_zero_reference() {
        let est = noise(100, 5);
        assert!(si_sdr_se_loss(&est, &Waveform::zeros(100, 16_000)).is_err());
    }

    #[test]
    fn si_sdr_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for inst in 0..20 {
            let reference = noise(300, 100 + inst);
            let est = noise(300, 200 + inst);
            let (_, g) = si_sdr_se_loss(&est, &reference).unwrap();
            let coords = sample_coords(300, 6, &mut rng);
            check_grad(
                &est,
                &g,
                |w| si_sdr_se_loss(w, &reference).unwrap().0,
                &coords,
            );
        }
    }

    #[test]
    fn mag_loss_zero_for_equal_and_negated() {
        let cfg = cfg_small();
        let w = noise(400, 7);
        let (v, _) = mag_loss(&w, &w, &cfg).unwrap();
        assert_eq!(v, 0.0);
        let neg = Waveform::new(w.samples.iter().map(|x| -x).collect(), 16_000);
        let (v, _) = mag_loss(&neg, &w, &cfg).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn mag_loss_matches_independent_oracle() {
        // Straight-line reimplementation: frame, window, plain DFT sums.
        let cfg = cfg_small();
        let est = noise(300, 8);
        let reference = noise(300, 9);
        let (v, _) = mag_loss(&est, &reference, &cfg).unwrap();

        let dft_mags = |w: &Waveform| -> Vec<f64> {
            let head = cfg.win_len - cfg.hop_len;
            let t = (cfg.win_len / cfg.hop_len - 1) + (w.len() - 1) / cfg.hop_len + 1;
            let padded_len = (t - 1) * cfg.hop_len + cfg.win_len;
            let mut padded = vec![0.0; padded_len];
            padded[head..head + w.len()].copy_from_slice(&w.samples);
            let f_bins = cfg.fft_len / 2 + 1;
            let mut mags = Vec::new();
            for ti in 0..t {
                for k in 0..f_bins {
                    let (mut re, mut im) = (0.0, 0.0);
                    for n in 0..cfg.win_len {
                        let x = padded[ti * cfg.hop_len + n] * cfg.window[n];
                        let th = 2.0 * PI * (k * n) as f64 / cfg.fft_len as f64;
                        re += x * th.cos();
                        im -= x * th.sin();
                    }
                    mags.push((re * re + im * im).sqrt());
                }
            }
            mags
        };
        let me = dft_mags(&est);
        let mr = dft_mags(&reference);
        let oracle: f64 =
            me.iter().zip(&mr).map(|(a, b)| (a - b).abs()).sum::<f64>() / me.len() as f64;
        assert!((v - oracle).abs() / oracle < 1e-10, "{v} vs {oracle}");
    }

    #[test]
    fn mag_loss_gradient_matches_finite_differences() {
        let cfg = cfg_small();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for inst in 0..20 {
            let reference = noise(300, 300 + inst);
            let est = noise(300, 400 + inst);
            let (_, g) = mag_loss(&est, &reference, &cfg).unwrap();
            let coords = sample_coords(300, 5, &mut rng);
            check_grad(
                &est,
                &g,
                |w| mag_loss(w, &reference, &cfg).unwrap().0,
                &coords,
            );
        }
    }

    #[test]
    fn rec_loss_combines_parts_and_grads() {
        let cfg = cfg_small();
        let est = noise(300, 11);
        let reference = noise(300, 12);
        let (report, grad) = rec_loss(&est, &reference, &cfg).unwrap();
        let (si, gs) = si_sdr_se_loss(&est, &reference).unwrap();
        let (mg, gm) = mag_loss(&est, &reference, &cfg).unwrap();
        assert!((report.total - (si + mg)).abs() < 1e-12);
        assert_eq!(report.si_sdr_se, si);
        assert_eq!(report.mag, mg);
        for i in 0..300 {
            assert!(
                (grad.d_estimate[i] - (gs.d_estimate[i] + gm.d_estimate[i])).abs() < 1e-15
            );
        }
    }

    #[test]
    fn rec_loss_gradient_matches_finite_differences() {
        let cfg = cfg_small();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for inst in 0..20 {
            let reference = noise(256, 500 + inst);
            let est = noise(256, 600 + inst);
            let (_, g) = rec_loss(&est, &reference, &cfg).unwrap();
            let coords = sample_coords(256, 5, &mut rng);
            check_grad(
                &est,
                &g,
                |w| rec_loss(w, &reference, &cfg).unwrap().0.total,
                &coords,
            );
        }
    }

    #[test]
    fn stage1_is_rec_loss() {
        let cfg = cfg_small();
        let est = noise(300, 14);
        let y = noise(300, 15);
        let (a, ga) = stage1_loss(&est, &y, &cfg).unwrap();
        let (b, gb) = rec_loss(&est, &y, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ga.d_estimate, gb.d_estimate);
    }

    #[test]
    fn stage2_collapses_when_teacher_equals_mixture() {
        let cfg = cfg_small();
        let est = noise(300, 16);
        let y = noise(300, 17);
        let omega = DEFAULT_AUX_WEIGHT;
        let (report, _) = stage2_loss(&est, &y, &y, omega, &cfg).unwrap();
        let (rec, _) = rec_loss(&est, &y, &cfg).unwrap();
        assert!((report.total - (1.0 + omega) * rec.total).abs() < 1e-12);
    }

    #[test]
    fn stage2_combination_is_exact() {
        let cfg = cfg_small();
        let est = noise(300, 18);
        let teacher = noise(300, 19);
        let y = noise(300, 20);
        let omega = 1.2;
        let (report, grad) = stage2_loss(&est, &teacher, &y, omega, &cfg).unwrap();
        let (rt, gt) = rec_loss(&est, &teacher, &cfg).unwrap();
        let (ry, gy) = rec_loss(&est, &y, &cfg).unwrap();
        assert!((report.total - (rt.total + omega * ry.total)).abs() < 1e-12);
        assert_eq!(report.distill, Some(rt.total));
        assert_eq!(report.aux, Some(ry.total));
        for i in 0..300 {
            let expect = gt.d_estimate[i] + omega * gy.d_estimate[i];
            assert!((grad.d_estimate[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn stage2_rejects_nonpositive_weight() {
        let cfg = cfg_small();
        let w = noise(100, 21);
        assert!(stage2_loss(&w, &w, &w, 0.0, &cfg).is_err());
        assert!(stage2_loss(&w, &w, &w, -1.0, &cfg).is_err());
    }

    #[test]
    fn stage2_gradient_matches_finite_differences() {
        let cfg = cfg_small();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for inst in 0..20 {
            let teacher = noise(256, 700 + inst);
            let y = noise(256, 800 + inst);
            let est = noise(256, 900 + inst);
            let (_, g) = stage2_loss(&est, &teacher, &y, 1.2, &cfg).unwrap();
            let coords = sample_coords(256, 4, &mut rng);
            check_grad(
                &est,
                &g,
                |w| stage2_loss(w, &teacher, &y, 1.2, &cfg).unwrap().0.total,
                &coords,
            );
        }
    }
}
