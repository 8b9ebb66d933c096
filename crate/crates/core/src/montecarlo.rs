//! Seeded Monte Carlo trials and SINR-vs-CNR sweeps.
//!
//! One trial is one drop: user positions, large-scale gains, block fading and
//! a scatterer scene. Every random quantity comes from its own substream keyed
//! by `(master seed, trial index, purpose)`, so a trial's realization does not
//! depend on the worker that runs it, on the CNR grid, or on which receivers
//! are evaluated. All CNR points of a trial share the same drop: the clutter
//! is computed once at unit radar power and rescaled.
//!
//! The reported SINR is the analytic output SINR of each receiver's weight
//! vector against the true channels and the true clutter covariance, evaluated
//! on every data packet and on a strided subset of subcarriers.

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::airlink::{build_pilot_book, synth_training_packet, ReceivedFrame};
use crate::channel::{draw_fading, draw_large_scale, draw_positions, PathLossModel, UplinkChannelSet};
use crate::clutter::{clutter_matrix_with, cnr_scale, draw_scene, ClutterArtifacts, ClutterCovariance, RadarWaveform, SceneParams};
use crate::detection::{
    cm_weights, fzf_basis, projected_weights, zf_basis, LmmseSolver, NullBasis, ReceiverKind, ReceiverWeights,
};
use crate::dft::IsometricDft;
use crate::estimation::{estimate_all, ChannelEstimate, CsiMode};
use crate::linalg::{db_to_linear, CVector};
use crate::metrics::{aggregate, analytic_sinr, RecordKey, SinrRecord, TrialSinr};
use crate::scenario::{noise_power, SystemScenario};
use crate::{Error, Result};

/// Independent random substreams of one trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Purpose {
    Positions,
    Shadowing,
    Fading,
    Scene,
    Noise,
    Symbols,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Positions => 1,
            Purpose::Shadowing => 2,
            Purpose::Fading => 3,
            Purpose::Scene => 4,
            Purpose::Noise => 5,
            Purpose::Symbols => 6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TrialSeed {
    pub master: u64,
    pub trial: u64,
}

impl TrialSeed {
    pub fn new(master: u64, trial: u64) -> Self {
        TrialSeed { master, trial }
    }

    /// ChaCha8 keyed by `master | trial | purpose`.
    pub fn stream(&self, purpose: Purpose) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.master.to_le_bytes());
        key[8..16].copy_from_slice(&self.trial.to_le_bytes());
        key[16..24].copy_from_slice(&purpose.tag().to_le_bytes());
        ChaCha8Rng::from_seed(key)
    }
}

/// What a single trial evaluates.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialPlan {
    /// CNR grid in dB; `-inf` switches clutter off.
    pub cnr_db: Vec<f64>,
    pub csi_modes: Vec<CsiMode>,
    pub receivers: Vec<ReceiverKind>,
    /// Evaluate subcarriers `0, stride, 2 stride, ...`.
    pub stride: usize,
    /// Collect null-fidelity and LMMSE-dominance statistics.
    pub diagnostics: bool,
}

/// A full sweep: the trial plan repeated over an `M x K` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPlan {
    pub base: SystemScenario,
    pub cnr_db: Vec<f64>,
    pub antennas: Vec<usize>,
    pub users: Vec<usize>,
    pub csi_modes: Vec<CsiMode>,
    pub receivers: Vec<ReceiverKind>,
    pub trials: usize,
    pub master_seed: u64,
    pub stride: usize,
}

pub const DEFAULT_CNR_GRID: [f64; 6] = [-10.0, 0.0, 10.0, 20.0, 30.0, 40.0];
pub const DEFAULT_STRIDE: usize = 8;

impl SweepPlan {
    /// Every receiver, both CSI modes, the default CNR grid, the base
    /// scenario's `M` and `K`, 100 trials.
    pub fn new(base: SystemScenario) -> Self {
        SweepPlan {
            cnr_db: DEFAULT_CNR_GRID.to_vec(),
            antennas: vec![base.antennas],
            users: vec![base.users],
            csi_modes: CsiMode::ALL.to_vec(),
            receivers: ReceiverKind::ALL.to_vec(),
            trials: 100,
            master_seed: 0,
            stride: DEFAULT_STRIDE,
            base,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if self.trials == 0 {
            return bad("trials ≥ 1");
        }
        if self.stride == 0 {
            return bad("stride ≥ 1");
        }
        if self.cnr_db.is_empty()
            || self.antennas.is_empty()
            || self.users.is_empty()
            || self.csi_modes.is_empty()
            || self.receivers.is_empty()
        {
            return bad("every sweep grid needs at least one entry");
        }
        if self.cnr_db.iter().any(|c| c.is_nan() || *c == f64::INFINITY) {
            return bad("CNR values must be finite or -inf");
        }
        for &m in &self.antennas {
            for &k in &self.users {
                let scn = self.scenario(m, k);
                scn.validate()?;
                build_pilot_book(&scn)?;
            }
        }
        Ok(())
    }

    pub fn scenario(&self, antennas: usize, users: usize) -> SystemScenario {
        let mut scn = self.base.clone();
        scn.antennas = antennas;
        scn.users = users;
        scn
    }

    pub fn trial_plan(&self, diagnostics: bool) -> TrialPlan {
        TrialPlan {
            cnr_db: self.cnr_db.clone(),
            csi_modes: self.csi_modes.clone(),
            receivers: self.receivers.clone(),
            stride: self.stride,
            diagnostics,
        }
    }

    /// Grid points in output order.
    pub fn points(&self) -> Vec<(usize, usize)> {
        self.antennas.iter().flat_map(|&m| self.users.iter().map(move |&k| (m, k))).collect()
    }
}

/// Worst-case statistics gathered when [`TrialPlan::diagnostics`] is set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialDiagnostics {
    /// Max of `w^H K_C w / (lambda_max(K_C) ||w||^2)` over ZF weights.
    pub zf_null_residual: f64,
    /// Max of `|w_k^H h_hat_j| / (||w_k|| ||h_hat_j||)`, `j != k`, over FZF weights.
    pub fzf_null_residual: f64,
    /// Min over perfect-CSI symbols of `SINR_lmmse / max(SINR_other) - 1`.
    pub lmmse_margin: f64,
    /// Symbols that entered the statistics above.
    pub checked: usize,
}

impl Default for TrialDiagnostics {
    fn default() -> Self {
        TrialDiagnostics { zf_null_residual: 0.0, fzf_null_residual: 0.0, lmmse_margin: f64::INFINITY, checked: 0 }
    }
}

impl TrialDiagnostics {
    pub fn merge(&self, other: &TrialDiagnostics) -> TrialDiagnostics {
        TrialDiagnostics {
            zf_null_residual: self.zf_null_residual.max(other.zf_null_residual),
            fzf_null_residual: self.fzf_null_residual.max(other.fzf_null_residual),
            lmmse_margin: self.lmmse_margin.min(other.lmmse_margin),
            checked: self.checked + other.checked,
        }
    }
}

/// SINR samples of one trial, indexed `[cnr][csi mode][receiver]` in plan order.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialOutput {
    pub sinr: Vec<Vec<Vec<TrialSinr>>>,
    pub diagnostics: TrialDiagnostics,
    /// NMSE of the pilot-matched estimates per CNR point, when PM is evaluated.
    pub nmse: Vec<f64>,
}

/// Everything drawn for one drop, independent of the CNR point.
pub struct TrialRealization {
    pub channels: UplinkChannelSet,
    pub steering: Vec<CVector>,
    pub artifacts: ClutterArtifacts,
    /// Estimates from the training observable without clutter.
    pub estimate_base: ChannelEstimate,
    /// Estimates from the unit-power clutter alone.
    pub estimate_clutter: ChannelEstimate,
}

impl TrialRealization {
    pub fn draw(scn: &SystemScenario, seed: TrialSeed, with_estimates: bool) -> Result<Self> {
        let p = &scn.propagation;
        let distances = draw_positions(&mut seed.stream(Purpose::Positions), scn.users, p.d_min, p.d_max)?;
        let model = PathLossModel::from_scenario(scn);
        let (gain_db, shadow) =
            draw_large_scale(&mut seed.stream(Purpose::Shadowing), &model, &distances, p.shadowing_sigma_db)?;
        let beta = gain_db.iter().map(|&g| db_to_linear(g).sqrt()).collect();
        let g = draw_fading(&mut seed.stream(Purpose::Fading), scn.users, scn.blocks(), scn.antennas);
        let channels = UplinkChannelSet::from_parts(distances, shadow, beta, g);

        let scene = draw_scene(&mut seed.stream(Purpose::Scene), &SceneParams::from_scenario(scn));
        let waveform = RadarWaveform::from_scenario(scn)?;
        let dft = IsometricDft::new(scn.subcarriers);
        let artifacts = ClutterArtifacts::build_with(&scene, &waveform, scn, &dft);
        let steering = scene.steering(scn.antennas, scn.element_spacing);

        let (estimate_base, estimate_clutter) = if with_estimates {
            let book = build_pilot_book(scn)?;
            let noise = noise_power(scn);
            let powers = vec![scn.user_power; scn.users];
            let mut rng = seed.stream(Purpose::Noise);
            let base: Vec<ReceivedFrame> = (0..scn.training_packets)
                .map(|t| synth_training_packet(&channels, &book, t, None, Some((&noise, &mut rng)), &powers, scn))
                .collect();
            let clutter: Vec<ReceivedFrame> = (0..scn.training_packets)
                .map(|t| ReceivedFrame { y: clutter_matrix_with(&scene, &waveform, t, scn, &dft) })
                .collect();
            (estimate_all(&base, &book, scn)?, estimate_all(&clutter, &book, scn)?)
        } else {
            (ChannelEstimate::perfect(&channels), ChannelEstimate::perfect(&channels))
        };
        Ok(TrialRealization { channels, steering, artifacts, estimate_base, estimate_clutter })
    }
}

/// Scale on the unit-power clutter for each CNR point (0 for `-inf`).
fn clutter_scales(artifacts: &ClutterArtifacts, scn: &SystemScenario, cnr_db: &[f64]) -> Result<Vec<f64>> {
    let noise = noise_power(scn);
    cnr_db
        .iter()
        .map(|&c| if c == f64::NEG_INFINITY { Ok(0.0) } else { cnr_scale(artifacts, &noise, c) })
        .collect()
}

pub fn run_trial(scn: &SystemScenario, plan: &TrialPlan, seed: TrialSeed) -> Result<TrialOutput> {
    let wants_pm = plan.csi_modes.contains(&CsiMode::PilotMatched);
    let real = TrialRealization::draw(scn, seed, wants_pm)?;
    let scales = clutter_scales(&real.artifacts, scn, &plan.cnr_db)?;
    let sigma_w2 = noise_power(scn).sigma_w2;
    let powers = vec![scn.user_power; scn.users];
    let m = scn.antennas;
    let users = scn.users;

    let perfect = ChannelEstimate::perfect(&real.channels);
    let pm: Vec<ChannelEstimate> = if wants_pm {
        scales.iter().map(|&s| real.estimate_base.add_scaled(&real.estimate_clutter, s.sqrt())).collect()
    } else {
        Vec::new()
    };
    let nmse = pm.iter().map(|e| crate::estimation::nmse(e, &real.channels)).collect::<Result<Vec<f64>>>()?;

    let mut sinr =
        vec![vec![vec![TrialSinr::default(); plan.receivers.len()]; plan.csi_modes.len()]; plan.cnr_db.len()];
    let mut diag = TrialDiagnostics::default();
    let needs = |k: ReceiverKind| plan.receivers.contains(&k) || plan.diagnostics;

    for ell in scn.data_packets() {
        for n in (0..scn.subcarriers).step_by(plan.stride) {
            let q = scn.block_of(n);
            let truth = real.channels.block(q);
            let unit_cov = real.artifacts.covariance(ell, n, &real.steering);
            let clutter_basis = zf_basis(&unit_cov, m);
            let empty = NullBasis::empty(m);
            // Perfect-CSI FZF bases do not depend on the CNR (beyond on/off).
            let perfect_fzf: Vec<(NullBasis, NullBasis)> = if needs(ReceiverKind::Fzf)
                && plan.csi_modes.contains(&CsiMode::Perfect)
            {
                let h = perfect.block(q);
                (0..users)
                    .map(|k| (fzf_basis(&h, k, &unit_cov, m), fzf_basis(&h, k, &ClutterCovariance::zero(), m)))
                    .collect()
            } else {
                Vec::new()
            };

            for (ci, &s) in scales.iter().enumerate() {
                let cov = unit_cov.scaled(s);
                let on = s > 0.0 && !cov.is_zero();
                let zf = if on { &clutter_basis } else { &empty };
                let lambda_max = if plan.diagnostics && on { cov.lambda_max() } else { 0.0 };

                for (mi, &mode) in plan.csi_modes.iter().enumerate() {
                    let est = match mode {
                        CsiMode::Perfect => &perfect,
                        CsiMode::PilotMatched => &pm[ci],
                    };
                    let h_hat = est.block(q);
                    let solver = if needs(ReceiverKind::Lmmse) {
                        Some(LmmseSolver::new(&h_hat, &powers, sigma_w2, &cov)?)
                    } else {
                        None
                    };
                    for k in 0..users {
                        let weights = |kind: ReceiverKind| -> Result<ReceiverWeights> {
                            match kind {
                                ReceiverKind::Cm => cm_weights(h_hat[k], powers[k]),
                                ReceiverKind::Zf => projected_weights(kind, h_hat[k], zf, powers[k]),
                                ReceiverKind::Fzf => {
                                    if mode == CsiMode::Perfect && !perfect_fzf.is_empty() {
                                        let (with, without) = &perfect_fzf[k];
                                        projected_weights(kind, h_hat[k], if on { with } else { without }, powers[k])
                                    } else {
                                        let basis = fzf_basis(&h_hat, k, &cov, m);
                                        projected_weights(kind, h_hat[k], &basis, powers[k])
                                    }
                                }
                                ReceiverKind::Lmmse => {
                                    solver.as_ref().expect("solver built when LMMSE is needed").weights(h_hat[k], powers[k])
                                }
                            }
                        };
                        let evaluate = |w: &ReceiverWeights| analytic_sinr(&w.w, &truth, &powers, sigma_w2, &cov, k);

                        let mut per_kind: [Option<f64>; 4] = [None; 4];
                        for kind in ReceiverKind::ALL {
                            if !needs(kind) {
                                continue;
                            }
                            match weights(kind) {
                                Ok(w) => {
                                    per_kind[kind as usize] = Some(evaluate(&w)?);
                                    if plan.diagnostics {
                                        record_nulls(&mut diag, kind, &w, &cov, lambda_max, &h_hat, k);
                                    }
                                }
                                Err(Error::DegenerateProjection) => {}
                                Err(e) => return Err(e),
                            }
                        }
                        for (ri, &kind) in plan.receivers.iter().enumerate() {
                            let slot = &mut sinr[ci][mi][ri];
                            match per_kind[kind as usize] {
                                Some(v) => slot.push(v),
                                None => slot.push_degenerate(),
                            }
                        }
                        if plan.diagnostics && mode == CsiMode::Perfect {
                            if let Some(best) = per_kind[ReceiverKind::Lmmse as usize] {
                                let other = [ReceiverKind::Cm, ReceiverKind::Zf, ReceiverKind::Fzf]
                                    .iter()
                                    .filter_map(|&kd| per_kind[kd as usize])
                                    .fold(0.0f64, f64::max);
                                if other > 0.0 {
                                    diag.lmmse_margin = diag.lmmse_margin.min(best / other - 1.0);
                                }
                                diag.checked += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(TrialOutput { sinr, diagnostics: diag, nmse })
}

fn record_nulls(
    diag: &mut TrialDiagnostics,
    kind: ReceiverKind,
    w: &ReceiverWeights,
    cov: &ClutterCovariance,
    lambda_max: f64,
    h_hat: &[&CVector],
    k: usize,
) {
    let ww = w.w.norm_squared();
    match kind {
        ReceiverKind::Zf if lambda_max > 0.0 => {
            diag.zf_null_residual = diag.zf_null_residual.max(cov.quad_form(&w.w) / (lambda_max * ww));
        }
        ReceiverKind::Fzf => {
            for (j, h) in h_hat.iter().enumerate() {
                if j != k && h.norm() > 0.0 {
                    let r = w.w.dotc(h).norm() / (ww.sqrt() * h.norm());
                    diag.fzf_null_residual = diag.fzf_null_residual.max(r);
                }
            }
        }
        _ => {}
    }
}

/// Progress report passed to the sweep callback after each finished trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Progress {
    /// Zero-based `(M, K)` grid point and the number of points.
    pub point: usize,
    pub points: usize,
    pub antennas: usize,
    pub users: usize,
    pub trials_done: usize,
    pub trials: usize,
}

pub type ProgressFn<'a> = &'a (dyn Fn(Progress) + Sync);

#[derive(Clone, Copy, Default)]
pub struct SweepOptions<'a> {
    /// Worker threads; 0 picks the number of available cores.
    pub workers: usize,
    pub diagnostics: bool,
    pub progress: Option<ProgressFn<'a>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepOutput {
    pub records: Vec<SinrRecord>,
    pub diagnostics: TrialDiagnostics,
    /// Per grid point, per trial outputs, in plan order.
    pub trials: Vec<Vec<TrialOutput>>,
}

/// Records over the grid, ordered by `M`, `K`, CNR, CSI mode, receiver.
pub fn run_sweep(plan: &SweepPlan, workers: usize) -> Result<Vec<SinrRecord>> {
    Ok(run_sweep_with(plan, SweepOptions { workers, ..Default::default() })?.records)
}

pub fn run_sweep_with(plan: &SweepPlan, options: SweepOptions<'_>) -> Result<SweepOutput> {
    plan.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    let trial_plan = plan.trial_plan(options.diagnostics);
    let points = plan.points();
    let mut records = Vec::new();
    let mut diagnostics = TrialDiagnostics::default();
    let mut all_trials = Vec::with_capacity(points.len());

    for (pi, &(m, k)) in points.iter().enumerate() {
        let scn = plan.scenario(m, k);
        let done = AtomicUsize::new(0);
        let outputs: Vec<TrialOutput> = pool.install(|| {
            (0..plan.trials)
                .into_par_iter()
                .map(|t| {
                    let out = run_trial(&scn, &trial_plan, TrialSeed::new(plan.master_seed, t as u64));
                    let finished = done.fetch_add(1, Ordering::Relaxed) + 1;
                    if let Some(cb) = options.progress {
                        cb(Progress {
                            point: pi,
                            points: points.len(),
                            antennas: m,
                            users: k,
                            trials_done: finished,
                            trials: plan.trials,
                        });
                    }
                    out
                })
                .collect::<Result<Vec<_>>>()
        })?;

        for (ci, &cnr) in plan.cnr_db.iter().enumerate() {
            for (mi, &csi_mode) in plan.csi_modes.iter().enumerate() {
                for (ri, &receiver) in plan.receivers.iter().enumerate() {
                    let samples: Vec<TrialSinr> = outputs.iter().map(|o| o.sinr[ci][mi][ri].clone()).collect();
                    let key = RecordKey { receiver, csi_mode, antennas: m, users: k, cnr_db: cnr };
                    records.push(aggregate(key, &samples)?);
                }
            }
        }
        for o in &outputs {
            diagnostics = diagnostics.merge(&o.diagnostics);
        }
        all_trials.push(outputs);
    }
    Ok(SweepOutput { records, diagnostics, trials: all_trials })
}

pub const CSV_HEADER: &str = "cnr_db,receiver,csi_mode,M,K,sinr_db_mean,sinr_db_std,trials,degenerate_count";

pub fn write_csv<W: Write>(records: &[SinrRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            format_g6(r.cnr_db),
            r.receiver,
            r.csi_mode,
            r.antennas,
            r.users,
            format_g6(r.sinr_db_mean),
            format_g6(r.sinr_db_std),
            r.trials,
            r.degenerate_count
        )?;
    }
    Ok(())
}

pub fn csv_string(records: &[SinrRecord]) -> String {
    let mut buf = Vec::new();
    write_csv(records, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("CSV is ASCII")
}

/// Six significant digits in the style of C's `%g`.
pub fn format_g6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (5 - exp) as usize;
        strip_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Deterministic complex symbol stream for data-packet experiments.
pub fn symbol_stream(seed: TrialSeed) -> ChaCha8Rng {
    seed.stream(Purpose::Symbols)
}
