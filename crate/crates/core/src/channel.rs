//! User drops and uplink channel vectors.
//!
//! The channel from user `k` to the array on coherence block `q` is
//! `h_k^(q) = beta_k * g_k^(q)` with `g_k^(q) ~ CN(0, I_M)` independent across
//! blocks and `beta_k^2` the path-loss-and-shadowing power gain.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::linalg::{complex_gaussian_vector, db_to_linear, CVector};
use crate::scenario::{PropagationParams, SystemScenario};
use crate::{Error, Result};

/// Three-slope path-loss law with a Hata-type fixed term.
///
/// With `f` in MHz, heights in meters and distances in kilometers:
///
/// ```text
/// L  = 46.3 + 33.9 log10 f - 13.82 log10 h_ap - (1.1 log10 f - 0.7) h_u + (1.56 log10 f - 0.8)
/// PL = -L - 35 log10 d                          d > d1
///      -L - 15 log10 d1 - 20 log10 d            d0 < d <= d1
///      -L - 15 log10 d1 - 20 log10 d0           d <= d0
/// ```
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathLossModel {
    pub d0: f64,
    pub d1: f64,
    pub h_ap: f64,
    pub h_user: f64,
    pub freq_mhz: f64,
}

impl Default for PathLossModel {
    fn default() -> Self {
        PathLossModel { d0: 10.0, d1: 50.0, h_ap: 15.0, h_user: 1.65, freq_mhz: 3000.0 }
    }
}

impl PathLossModel {
    pub fn from_scenario(scn: &SystemScenario) -> Self {
        let p: &PropagationParams = &scn.propagation;
        PathLossModel { d0: p.pl_d0, d1: p.pl_d1, h_ap: p.h_ap, h_user: p.h_user, freq_mhz: scn.carrier_freq / 1e6 }
    }

    /// Distance-independent term `L` in dB.
    pub fn fixed_loss_db(&self) -> f64 {
        let lf = self.freq_mhz.log10();
        46.3 + 33.9 * lf - 13.82 * self.h_ap.log10() - (1.1 * lf - 0.7) * self.h_user + (1.56 * lf - 0.8)
    }

    /// Path gain in dB (negative) at distance `d` meters.
    pub fn path_loss_db(&self, d: f64) -> Result<f64> {
        if !(d > 0.0) {
            return Err(Error::InvalidArgument(format!("distance must be positive, got {d}")));
        }
        let l = self.fixed_loss_db();
        let (d_km, d0_km, d1_km) = (d / 1e3, self.d0 / 1e3, self.d1 / 1e3);
        Ok(if d > self.d1 {
            -l - 35.0 * d_km.log10()
        } else if d > self.d0 {
            -l - 15.0 * d1_km.log10() - 20.0 * d_km.log10()
        } else {
            -l - 15.0 * d1_km.log10() - 20.0 * d0_km.log10()
        })
    }
}

/// `count` user distances, i.i.d. uniform on `[d_min, d_max]`.
pub fn draw_positions<R: Rng + ?Sized>(rng: &mut R, count: usize, d_min: f64, d_max: f64) -> Result<Vec<f64>> {
    if !(d_min > 0.0 && d_min <= d_max) {
        return Err(Error::InvalidArgument(format!("invalid distance range [{d_min}, {d_max}]")));
    }
    Ok((0..count).map(|_| d_min + (d_max - d_min) * rng.random::<f64>()).collect())
}

#[derive(Clone, Debug)]
pub struct UplinkChannelSet {
    /// Distance to the array in meters, per user.
    pub distances: Vec<f64>,
    /// Shadowing term in dB, per user (zero inside the far breakpoint).
    pub shadowing_db: Vec<f64>,
    /// Large-scale amplitude `beta_k`.
    pub beta: Vec<f64>,
    /// Small-scale fading, indexed `[user][block]`.
    pub g: Vec<Vec<CVector>>,
    /// `h = beta * g`, indexed `[user][block]`.
    pub h: Vec<Vec<CVector>>,
}

impl UplinkChannelSet {
    pub fn from_parts(distances: Vec<f64>, shadowing_db: Vec<f64>, beta: Vec<f64>, g: Vec<Vec<CVector>>) -> Self {
        let h = g
            .iter()
            .zip(&beta)
            .map(|(blocks, &b)| blocks.iter().map(|v| v * num_complex::Complex64::from(b)).collect())
            .collect();
        UplinkChannelSet { distances, shadowing_db, beta, g, h }
    }

    pub fn users(&self) -> usize {
        self.h.len()
    }

    pub fn blocks(&self) -> usize {
        self.h.first().map_or(0, Vec::len)
    }

    pub fn antennas(&self) -> usize {
        self.h.first().and_then(|b| b.first()).map_or(0, |v| v.len())
    }

    /// Channel vectors of every user on block `q`.
    pub fn block(&self, q: usize) -> Vec<&CVector> {
        self.h.iter().map(|per_user| &per_user[q]).collect()
    }
}

/// Large-scale power gain `beta_k^2` in dB for each user, and the shadowing
/// term that went into it. Shadowing only applies beyond the far breakpoint.
pub fn draw_large_scale<R: Rng + ?Sized>(
    rng: &mut R,
    model: &PathLossModel,
    distances: &[f64],
    shadowing_sigma_db: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let normal = Normal::new(0.0, shadowing_sigma_db)
        .map_err(|e| Error::InvalidArgument(format!("shadowing deviation: {e}")))?;
    let mut gain_db = Vec::with_capacity(distances.len());
    let mut shadow = Vec::with_capacity(distances.len());
    for &d in distances {
        // One draw per user regardless of distance keeps the stream aligned.
        let s = normal.sample(rng);
        let s = if d > model.d1 { s } else { 0.0 };
        gain_db.push(model.path_loss_db(d)? + s);
        shadow.push(s);
    }
    Ok((gain_db, shadow))
}

/// Small-scale fading `g`, indexed `[user][block]`, each entry `CN(0, 1)`.
pub fn draw_fading<R: Rng + ?Sized>(rng: &mut R, users: usize, blocks: usize, antennas: usize) -> Vec<Vec<CVector>> {
    (0..users)
        .map(|_| (0..blocks).map(|_| complex_gaussian_vector(rng, antennas, 1.0)).collect())
        .collect()
}

pub fn draw_channels<R: Rng + ?Sized>(
    rng: &mut R,
    scn: &SystemScenario,
    distances: &[f64],
    shadowing_sigma_db: f64,
) -> Result<UplinkChannelSet> {
    let model = PathLossModel::from_scenario(scn);
    let (gain_db, shadow) = draw_large_scale(rng, &model, distances, shadowing_sigma_db)?;
    let beta = gain_db.iter().map(|&g| db_to_linear(g).sqrt()).collect();
    let g = draw_fading(rng, distances.len(), scn.blocks(), scn.antennas);
    Ok(UplinkChannelSet::from_parts(distances.to_vec(), shadow, beta, g))
}
