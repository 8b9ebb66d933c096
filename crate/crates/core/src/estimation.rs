//! Pilot-matched channel estimation per coherence block.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::airlink::{extract_block, PilotBook, ReceivedFrame};
use crate::channel::UplinkChannelSet;
use crate::linalg::{CMatrix, CVector};
use crate::scenario::SystemScenario;
use crate::{Error, Result};

/// Which channel knowledge the receivers are built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CsiMode {
    Perfect,
    PilotMatched,
}

impl CsiMode {
    pub const ALL: [CsiMode; 2] = [CsiMode::Perfect, CsiMode::PilotMatched];

    pub fn name(self) -> &'static str {
        match self {
            CsiMode::Perfect => "perfect",
            CsiMode::PilotMatched => "pm",
        }
    }
}

impl fmt::Display for CsiMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CsiMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "perfect" => Ok(CsiMode::Perfect),
            "pm" | "pilot-matched" => Ok(CsiMode::PilotMatched),
            other => Err(Error::InvalidArgument(format!("unknown CSI mode `{other}` (perfect|pm)"))),
        }
    }
}

/// Estimator family. Only pilot matching exists; the enum keeps room for
/// clutter-aware variants.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EstimatorKind {
    #[default]
    PilotMatched,
}

/// Channel vectors the receivers work with, `h_hat[k][q]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelEstimate {
    pub h_hat: Vec<Vec<CVector>>,
    pub csi_mode: CsiMode,
}

impl ChannelEstimate {
    /// Genie-aided estimate: the true channels.
    pub fn perfect(channels: &UplinkChannelSet) -> Self {
        Self { h_hat: channels.h.clone(), csi_mode: CsiMode::Perfect }
    }

    pub fn users(&self) -> usize {
        self.h_hat.len()
    }

    pub fn blocks(&self) -> usize {
        self.h_hat.first().map_or(0, Vec::len)
    }

    /// All users' vectors on block `q`.
    pub fn block(&self, q: usize) -> Vec<&CVector> {
        self.h_hat.iter().map(|per_user| &per_user[q]).collect()
    }

    /// `self + s * other`, entry by entry.
    pub fn add_scaled(&self, other: &ChannelEstimate, s: f64) -> ChannelEstimate {
        let h_hat = self
            .h_hat
            .iter()
            .zip(&other.h_hat)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y * Complex64::from(s)).collect())
            .collect();
        ChannelEstimate { h_hat, csi_mode: self.csi_mode }
    }
}

/// `h_hat = Y_q conj(P_k) / (sqrt(p_k) ||P_k||^2)`.
pub fn pm_estimate(
    block_obs: &CMatrix,
    pilots: &PilotBook,
    k: usize,
    q: usize,
    scn: &SystemScenario,
) -> Result<CVector> {
    let p = pilots.block_vector(k, q);
    if p.len() != block_obs.ncols() {
        return Err(Error::InvalidArgument(format!(
            "block observable has {} columns, pilot has {}",
            block_obs.ncols(),
            p.len()
        )));
    }
    let energy = p.norm_squared();
    if energy == 0.0 || scn.user_power <= 0.0 {
        return Err(Error::InvalidArgument("zero pilot norm".into()));
    }
    let scale = 1.0 / (scn.user_power.sqrt() * energy);
    Ok(block_obs * p.conjugate() * Complex64::from(scale))
}

/// Runs [`pm_estimate`] for every user and block of the training frames.
pub fn estimate_all(frames: &[ReceivedFrame], pilots: &PilotBook, scn: &SystemScenario) -> Result<ChannelEstimate> {
    if frames.len() != scn.training_packets {
        return Err(Error::InvalidArgument(format!(
            "expected {} training frames, got {}",
            scn.training_packets,
            frames.len()
        )));
    }
    let blocks = scn.blocks();
    let mut h_hat = vec![Vec::with_capacity(blocks); scn.users];
    for q in 0..blocks {
        let obs = extract_block(frames, q, scn)?;
        for (k, per_user) in h_hat.iter_mut().enumerate() {
            per_user.push(pm_estimate(&obs, pilots, k, q, scn)?);
        }
    }
    Ok(ChannelEstimate { h_hat, csi_mode: CsiMode::PilotMatched })
}

/// `||h_hat - h||^2 / ||h||^2`, averaged over users and blocks.
pub fn nmse(h_hat: &ChannelEstimate, h: &UplinkChannelSet) -> Result<f64> {
    if h_hat.users() != h.users() || h_hat.blocks() != h.blocks() {
        return Err(Error::InvalidArgument("estimate and channel shapes differ".into()));
    }
    let mut acc = 0.0;
    let mut count = 0usize;
    for (est, truth) in h_hat.h_hat.iter().zip(&h.h) {
        for (e, t) in est.iter().zip(truth) {
            let energy = t.norm_squared();
            if energy == 0.0 {
                return Err(Error::InvalidArgument("zero true channel".into()));
            }
            acc += (e - t).norm_squared() / energy;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Empty);
    }
    Ok(acc / count as f64)
}
