//! Output SINR of linear receivers and its aggregation.
//!
//! Signal and interference terms always use the true channels, also when the
//! weights were built from estimates, so the figure measures the link the
//! receiver actually gets. Within one trial the linear SINR is averaged over
//! subcarriers, packets and users; the trial mean is converted to dB; mean and
//! sample standard deviation are then taken over trials in dB.

use num_complex::Complex64;

use crate::clutter::ClutterCovariance;
use crate::detection::ReceiverKind;
use crate::estimation::CsiMode;
use crate::linalg::CVector;
use crate::{Error, Result};

/// Limits applied when reporting SINR in dB.
pub const SINR_DB_FLOOR: f64 = -300.0;
pub const SINR_DB_CEIL: f64 = 300.0;

/// Fewest paired symbols accepted by [`empirical_sinr`].
pub const MIN_EMPIRICAL_SYMBOLS: usize = 1000;

/// Relative distortion energy indistinguishable from double-precision rounding.
const ROUNDOFF_DISTORTION: f64 = 1e-24;

/// Linear output SINR of weight `w` for user `k`:
/// `p_k |w^H h_k|^2 / (sum_{j != k} p_j |w^H h_j|^2 + sigma^2 ||w||^2 + w^H K_C w)`.
pub fn analytic_sinr(
    w: &CVector,
    channels: &[&CVector],
    powers: &[f64],
    sigma_w2: f64,
    clutter: &ClutterCovariance,
    k: usize,
) -> Result<f64> {
    let ww = w.norm_squared();
    if ww == 0.0 {
        return Err(Error::InvalidArgument("zero weight vector".into()));
    }
    if k >= channels.len() || powers.len() != channels.len() {
        return Err(Error::InvalidArgument("user index or power list out of range".into()));
    }
    let mut interference = sigma_w2 * ww + clutter.quad_form(w);
    let mut signal = 0.0;
    for (j, (h, &p)) in channels.iter().zip(powers).enumerate() {
        let g = p * w.dotc(h).norm_sqr();
        if j == k {
            signal = g;
        } else {
            interference += g;
        }
    }
    Ok(if interference > 0.0 { signal / interference } else { f64::INFINITY })
}

pub fn analytic_sinr_db(
    w: &CVector,
    channels: &[&CVector],
    powers: &[f64],
    sigma_w2: f64,
    clutter: &ClutterCovariance,
    k: usize,
) -> Result<f64> {
    analytic_sinr(w, channels, powers, sigma_w2, clutter, k).map(sinr_db)
}

/// Linear to dB, clamped to `[SINR_DB_FLOOR, SINR_DB_CEIL]`.
pub fn sinr_db(linear: f64) -> f64 {
    if linear.is_nan() {
        return f64::NAN;
    }
    if linear <= 0.0 {
        return SINR_DB_FLOOR;
    }
    (10.0 * linear.log10()).clamp(SINR_DB_FLOOR, SINR_DB_CEIL)
}

/// SINR measured from soft outputs against the transmitted symbols.
///
/// The best complex gain `a = <X_hat, X> / <X, X>` is treated as signal and
/// the residual `X_hat - a X` as distortion. Returns a linear ratio.
pub fn empirical_sinr(soft: &[Complex64], truth: &[Complex64]) -> Result<f64> {
    if soft.len() != truth.len() {
        return Err(Error::InvalidArgument(format!("{} soft symbols vs {} true symbols", soft.len(), truth.len())));
    }
    if soft.len() < MIN_EMPIRICAL_SYMBOLS {
        return Err(Error::TooFewSymbols { got: soft.len(), need: MIN_EMPIRICAL_SYMBOLS });
    }
    let energy: f64 = truth.iter().map(|x| x.norm_sqr()).sum();
    if energy == 0.0 {
        return Err(Error::InvalidArgument("reference symbols are all zero".into()));
    }
    let cross: Complex64 = soft.iter().zip(truth).map(|(s, x)| s * x.conj()).sum();
    let a = cross / energy;
    let distortion: f64 = soft.iter().zip(truth).map(|(s, x)| (s - a * x).norm_sqr()).sum();
    let signal = a.norm_sqr() * energy;
    // Residuals at rounding level mean the output is an exact scaled copy.
    Ok(if distortion > ROUNDOFF_DISTORTION * signal { signal / distortion } else { f64::INFINITY })
}

/// Linear SINR samples of one receiver over one trial.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrialSinr {
    pub values: Vec<f64>,
    pub degenerate: usize,
}

impl TrialSinr {
    pub fn push(&mut self, linear: f64) {
        self.values.push(linear);
    }

    pub fn push_degenerate(&mut self) {
        self.degenerate += 1;
    }

    /// Mean linear SINR, or `None` when every symbol was degenerate.
    pub fn mean_linear(&self) -> Option<f64> {
        if self.values.is_empty() {
            return None;
        }
        Some(sorted_sum(self.values.iter().copied()) / self.values.len() as f64)
    }

    pub fn mean_db(&self) -> Option<f64> {
        self.mean_linear().map(sinr_db)
    }
}

/// Summary of one sweep point for one receiver and CSI mode.
#[derive(Clone, Debug, PartialEq)]
pub struct SinrRecord {
    pub receiver: ReceiverKind,
    pub csi_mode: CsiMode,
    pub antennas: usize,
    pub users: usize,
    pub cnr_db: f64,
    pub sinr_db_mean: f64,
    pub sinr_db_std: f64,
    /// Trials that contributed at least one non-degenerate symbol.
    pub trials: usize,
    pub degenerate_count: usize,
}

/// Identifies the sweep point a record belongs to.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecordKey {
    pub receiver: ReceiverKind,
    pub csi_mode: CsiMode,
    pub antennas: usize,
    pub users: usize,
    pub cnr_db: f64,
}

/// Folds per-trial samples into a record: mean and sample standard deviation
/// over trials of the per-trial dB value. The result does not depend on the
/// order of `trials`.
pub fn aggregate(key: RecordKey, trials: &[TrialSinr]) -> Result<SinrRecord> {
    if trials.is_empty() {
        return Err(Error::Empty);
    }
    let mut db: Vec<f64> = trials.iter().filter_map(TrialSinr::mean_db).collect();
    db.sort_by(f64::total_cmp);
    let degenerate_count = trials.iter().map(|t| t.degenerate).sum();
    let n = db.len();
    let (mean, std) = match n {
        0 => (f64::NAN, f64::NAN),
        1 => (db[0], 0.0),
        _ => {
            let mean = db.iter().sum::<f64>() / n as f64;
            let mut dev: Vec<f64> = db.iter().map(|v| (v - mean) * (v - mean)).collect();
            dev.sort_by(f64::total_cmp);
            (mean, (dev.iter().sum::<f64>() / (n - 1) as f64).sqrt())
        }
    };
    Ok(SinrRecord {
        receiver: key.receiver,
        csi_mode: key.csi_mode,
        antennas: key.antennas,
        users: key.users,
        cnr_db: key.cnr_db,
        sinr_db_mean: mean,
        sinr_db_std: std,
        trials: n,
        degenerate_count,
    })
}

fn sorted_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clutter::steering_vector;
    use crate::detection::{receiver_weights, ReceiverWeights};
    use crate::linalg::{complex_gaussian, complex_gaussian_vector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn key() -> RecordKey {
        RecordKey { receiver: ReceiverKind::Cm, csi_mode: CsiMode::Perfect, antennas: 4, users: 1, cnr_db: 0.0 }
    }

    fn trial(values: &[f64]) -> TrialSinr {
        TrialSinr { values: values.to_vec(), degenerate: 0 }
    }

    struct Instance {
        h: Vec<CVector>,
        powers: Vec<f64>,
        sigma: f64,
        clutter: ClutterCovariance,
    }

    fn instance(seed: u64, m: usize, users: usize, scatterers: usize, clutter_power: f64) -> Instance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = (0..users).map(|_| complex_gaussian_vector(&mut rng, m, 1e-9)).collect();
        let powers = (0..users).map(|j| 0.1 / (1.0 + j as f64)).collect();
        let clutter = ClutterCovariance {
            steering: (0..scatterers).map(|q| steering_vector(-1.2 + 0.9 * q as f64, m, 0.5)).collect(),
            weights: (0..scatterers).map(|q| clutter_power / (1.0 + q as f64)).collect(),
        };
        Instance { h, powers, sigma: 1e-12, clutter }
    }

    fn weights_for(inst: &Instance, kind: ReceiverKind, k: usize) -> ReceiverWeights {
        let refs: Vec<&CVector> = inst.h.iter().collect();
        receiver_weights(kind, &refs, &inst.clutter, &inst.powers, inst.sigma, k).unwrap()
    }

    fn sinr(inst: &Instance, w: &CVector, k: usize) -> f64 {
        let refs: Vec<&CVector> = inst.h.iter().collect();
        analytic_sinr(w, &refs, &inst.powers, inst.sigma, &inst.clutter, k).unwrap()
    }

    #[test]
    fn matched_filter_single_user() {
        let inst = instance(1, 8, 1, 0, 0.0);
        let got = sinr(&inst, &inst.h[0], 0);
        let want = inst.powers[0] * inst.h[0].norm_squared() / inst.sigma;
        assert!((got - want).abs() <= 1e-9 * want);
        let cm = weights_for(&inst, ReceiverKind::Cm, 0);
        assert!((sinr(&inst, &cm.w, 0) - want).abs() <= 1e-9 * want);
    }

    #[test]
    fn orthogonal_weight_hits_floor() {
        let inst = instance(2, 2, 1, 0, 0.0);
        let h = &inst.h[0];
        let mut w = CVector::zeros(2);
        w[0] = -h[1].conj();
        w[1] = h[0].conj();
        let refs = [h];
        let lin = analytic_sinr(&w, &refs, &inst.powers, inst.sigma, &inst.clutter, 0).unwrap();
        assert!(lin < 1e-20);
        assert_eq!(sinr_db(0.0), SINR_DB_FLOOR);
        assert!(analytic_sinr(&CVector::zeros(2), &refs, &inst.powers, inst.sigma, &inst.clutter, 0).is_err());
    }

    #[test]
    fn scale_invariance() {
        for kind in ReceiverKind::ALL {
            let inst = instance(3, 8, 3, 2, 1e-9);
            let w = weights_for(&inst, kind, 1);
            let scaled = &w.w * Complex64::new(0.0, 3.7);
            let a = sinr(&inst, &w.w, 1);
            let b = sinr(&inst, &scaled, 1);
            assert!((a - b).abs() <= 1e-12 * a, "{kind}");
        }
    }

    #[test]
    fn lmmse_single_user_equals_cm() {
        let inst = instance(4, 16, 1, 0, 0.0);
        let a = sinr(&inst, &weights_for(&inst, ReceiverKind::Lmmse, 0).w, 0);
        let b = sinr(&inst, &weights_for(&inst, ReceiverKind::Cm, 0).w, 0);
        assert!((a - b).abs() <= 1e-9 * b);
    }

    #[test]
    fn lmmse_dominates_on_random_instances() {
        for seed in 0..50 {
            let users = 1 + (seed as usize % 4);
            let scat = seed as usize % 3;
            let inst = instance(100 + seed, 8, users, scat, 10f64.powi(seed as i32 % 7 - 12));
            for k in 0..users {
                let best = sinr(&inst, &weights_for(&inst, ReceiverKind::Lmmse, k).w, k);
                for kind in [ReceiverKind::Cm, ReceiverKind::Zf, ReceiverKind::Fzf] {
                    let other = sinr(&inst, &weights_for(&inst, kind, k).w, k);
                    assert!(best >= other * (1.0 - 1e-9), "seed {seed} {kind}: {best} < {other}");
                }
            }
        }
    }

    #[test]
    fn cm_sinr_non_increasing_in_clutter_scale() {
        let inst = instance(5, 8, 1, 2, 1e-10);
        let w = weights_for(&inst, ReceiverKind::Cm, 0).w;
        let refs: Vec<&CVector> = inst.h.iter().collect();
        let mut prev = f64::INFINITY;
        for s in [0.0, 1e-3, 1.0, 10.0, 1e3, 1e6] {
            let v = analytic_sinr(&w, &refs, &inst.powers, inst.sigma, &inst.clutter.scaled(s), 0).unwrap();
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn empirical_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 100_000;
        let x: Vec<Complex64> = (0..n).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
        assert_eq!(sinr_db(empirical_sinr(&x, &x).unwrap()), SINR_DB_CEIL);
        let five: Vec<Complex64> = x.iter().map(|v| v * 5.0).collect();
        assert_eq!(sinr_db(empirical_sinr(&five, &x).unwrap()), SINR_DB_CEIL);
        let noisy: Vec<Complex64> = x.iter().map(|v| v + complex_gaussian(&mut rng, 1.0)).collect();
        assert!(sinr_db(empirical_sinr(&noisy, &x).unwrap()).abs() < 0.2);
        assert!(matches!(empirical_sinr(&x[..999], &x[..999]), Err(Error::TooFewSymbols { got: 999, .. })));
    }

    #[test]
    fn analytic_matches_empirical() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let inst = instance(8, 6, 2, 1, 3e-11);
        let k = 0;
        let b = &inst.clutter.steering[0];
        let cvar = inst.clutter.weights[0];
        for kind in ReceiverKind::ALL {
            let w = weights_for(&inst, kind, k);
            let n = 100_000;
            let mut soft = Vec::with_capacity(n);
            let mut truth = Vec::with_capacity(n);
            for _ in 0..n {
                let xs: Vec<Complex64> = (0..2).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
                let mut y = b * complex_gaussian(&mut rng, cvar);
                for a in 0..6 {
                    y[a] += complex_gaussian(&mut rng, inst.sigma);
                }
                for j in 0..2 {
                    y += &inst.h[j] * (xs[j] * inst.powers[j].sqrt());
                }
                soft.push(w.soft(&y));
                truth.push(xs[k]);
            }
            let emp = sinr_db(empirical_sinr(&soft, &truth).unwrap());
            let ana = sinr_db(sinr(&inst, &w.w, k));
            assert!((emp - ana).abs() < 0.2, "{kind}: {emp} vs {ana}");
        }
    }

    #[test]
    fn aggregate_examples() {
        let one = aggregate(key(), &[trial(&[10.0])]).unwrap();
        assert!((one.sinr_db_mean - 10.0).abs() < 1e-12);
        assert_eq!(one.sinr_db_std, 0.0);
        assert_eq!(one.trials, 1);

        // Within-trial linear averaging: 10 dB and 20 dB trials average to 15 dB.
        let two = aggregate(key(), &[trial(&[5.0, 15.0]), trial(&[100.0])]).unwrap();
        assert!((two.sinr_db_mean - 15.0).abs() < 1e-12);
        assert!((two.sinr_db_std - 50f64.sqrt()).abs() < 1e-12);

        assert!(matches!(aggregate(key(), &[]), Err(Error::Empty)));
    }

    #[test]
    fn aggregate_is_order_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let trials: Vec<TrialSinr> = (0..40)
            .map(|_| {
                let values: Vec<f64> = (0..17).map(|_| rng.random::<f64>() * 1e3).collect();
                TrialSinr { values, degenerate: rng.random_range(0..3) }
            })
            .collect();
        let a = aggregate(key(), &trials).unwrap();
        let mut shuffled: Vec<TrialSinr> = trials.iter().rev().cloned().collect();
        for t in &mut shuffled {
            t.values.reverse();
        }
        shuffled.swap(3, 17);
        let b = aggregate(key(), &shuffled).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_trials_are_counted_not_averaged() {
        let t = vec![trial(&[100.0]), TrialSinr { values: vec![], degenerate: 7 }];
        let r = aggregate(key(), &t).unwrap();
        assert_eq!(r.trials, 1);
        assert_eq!(r.degenerate_count, 7);
        assert!((r.sinr_db_mean - 20.0).abs() < 1e-12);
    }

}
