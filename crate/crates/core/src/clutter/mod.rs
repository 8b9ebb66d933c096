//! Radar waveform, scatterer scene, and the clutter it produces at the array.
//!
//! Each scatterer `q` returns `echo_count` replicas of the radar code, the
//! `m`-th delayed by `tau_q + m/W`, with complex gain `beta_{q,m}` and angle
//! of arrival `theta_q`. After the rectangular matched front end, chip `p` of
//! echo `m` contributes the triangle `r_psi(t - p T_s - m/W - tau_q)` to the
//! sample at time `t`. Per packet `l` the post-CP samples are transformed by
//! the isometric DFT, giving the `M x N` clutter matrix
//!
//! ```text
//! C(l) = sum_q sum_m sqrt(P_T) beta_{q,m} b(theta_q) R_{q,l,m}
//! R_{q,l,m} = sum_p c_p r_{q,p,m}(l)^T W_FFT
//! ```
//!
//! and, per subcarrier `n`, the covariance
//! `K_C = sum_q sum_m P_T sigma^2(q,m) |R_{q,l,m}(n)|^2 b(theta_q) b(theta_q)^H`.

mod oracle;

pub use oracle::{time_domain_oracle, ORACLE_WORK_LIMIT};

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dft::IsometricDft;
use crate::linalg::{complex_gaussian, CMatrix, CVector};
use crate::scenario::{CodeFamily, DelayLayout, NoiseBudget, SystemScenario};
use crate::{Error, Result};

/// Unit-energy radar code of `len` chips.
pub fn radar_code(len: usize, family: CodeFamily, seed: u64) -> Result<Vec<Complex64>> {
    if len == 0 {
        return Err(Error::InvalidArgument("radar code length must be at least 1".into()));
    }
    let norm = 1.0 / (len as f64).sqrt();
    let l = len as f64;
    Ok(match family {
        CodeFamily::P4 => (0..len)
            .map(|p| {
                let p = p as f64;
                Complex64::from_polar(norm, PI * p * (p - l) / l)
            })
            .collect(),
        CodeFamily::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..len).map(|_| Complex64::from_polar(norm, 2.0 * PI * rng.random::<f64>())).collect()
        }
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RadarWaveform {
    pub code: Vec<Complex64>,
    /// Transmit power scale `P_T` in Watts.
    pub power: f64,
}

impl RadarWaveform {
    pub fn from_scenario(scn: &SystemScenario) -> Result<Self> {
        let r = &scn.radar;
        Ok(RadarWaveform { code: radar_code(r.code_length, r.code_family, r.code_seed)?, power: 1.0 })
    }

    pub fn with_power(&self, power: f64) -> Self {
        RadarWaveform { code: self.code.clone(), power }
    }
}

/// Autocorrelation of the unit-energy rectangular pulse of width `symbol_time`.
pub fn pulse_autocorrelation(tau: f64, symbol_time: f64) -> f64 {
    (1.0 - tau.abs() / symbol_time).max(0.0)
}

/// ULA response: entry `m` is `exp(-j 2 pi m d sin(theta))`, `d` in wavelengths.
pub fn steering_vector(theta: f64, antennas: usize, d_over_lambda: f64) -> CVector {
    let phase = -2.0 * PI * d_over_lambda * theta.sin();
    CVector::from_iterator(antennas, (0..antennas).map(|m| Complex64::from_polar(1.0, phase * m as f64)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scatterer {
    /// Seconds after the radar fires.
    pub delay: f64,
    /// Radians in `[-pi/2, pi/2]`.
    pub angle: f64,
    /// `sigma_beta^2(q, m)` per echo.
    pub echo_variance: Vec<f64>,
    /// Drawn `beta_{q,m}` per echo.
    pub coefficients: Vec<Complex64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScattererScene {
    pub scatterers: Vec<Scatterer>,
}

impl ScattererScene {
    pub fn len(&self) -> usize {
        self.scatterers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scatterers.is_empty()
    }

    /// Steering vectors of every scatterer for an `antennas`-element array.
    pub fn steering(&self, antennas: usize, d_over_lambda: f64) -> Vec<CVector> {
        self.scatterers.iter().map(|s| steering_vector(s.angle, antennas, d_over_lambda)).collect()
    }

    /// Fresh reflection coefficients with the same geometry and variances.
    pub fn redraw_coefficients<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for s in &mut self.scatterers {
            for (beta, &var) in s.coefficients.iter_mut().zip(&s.echo_variance) {
                *beta = complex_gaussian(rng, var);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneParams {
    pub n_scatterers: usize,
    pub tau_max: f64,
    pub layout: DelayLayout,
    pub echo_count: usize,
    pub echo_decay: f64,
    /// Common scale `A` of the echo power profile.
    pub amplitude: f64,
}

impl SceneParams {
    pub fn from_scenario(scn: &SystemScenario) -> Self {
        let r = &scn.radar;
        SceneParams {
            n_scatterers: r.n_scatterers,
            tau_max: r.tau_max,
            layout: r.delay_layout,
            echo_count: r.echo_count,
            echo_decay: r.echo_decay,
            amplitude: 1.0,
        }
    }
}

/// Angles uniform on `[-pi/2, pi/2]`; delays uniform on `[0, tau_max]`, either
/// i.i.d. or one per equal-width stratum; echo variances
/// `A exp(-m / decay)`; coefficients circular complex Gaussian.
pub fn draw_scene<R: Rng + ?Sized>(rng: &mut R, params: &SceneParams) -> ScattererScene {
    let n = params.n_scatterers;
    let variances: Vec<f64> =
        (0..params.echo_count).map(|m| params.amplitude * (-(m as f64) / params.echo_decay).exp()).collect();
    let scatterers = (0..n)
        .map(|q| {
            let angle = PI * (rng.random::<f64>() - 0.5);
            let u: f64 = rng.random();
            let delay = match params.layout {
                DelayLayout::Uniform => params.tau_max * u,
                DelayLayout::Stratified => params.tau_max * (q as f64 + u) / n as f64,
            };
            let coefficients = variances.iter().map(|&v| complex_gaussian(rng, v)).collect();
            Scatterer { delay, angle, echo_variance: variances.clone(), coefficients }
        })
        .collect();
    ScattererScene { scatterers }
}

/// Packet-relative sample geometry.
#[derive(Clone, Copy, Debug)]
struct Timing {
    symbol_time: f64,
    echo_spacing: f64,
    packet_samples: usize,
    cp_len: usize,
    n: usize,
}

impl Timing {
    fn new(scn: &SystemScenario) -> Self {
        Timing {
            symbol_time: scn.symbol_time(),
            echo_spacing: 1.0 / scn.bandwidth(),
            packet_samples: scn.packet_samples(),
            cp_len: scn.cp_len,
            n: scn.subcarriers,
        }
    }

    /// Peak position, in samples of packet `ell`'s post-CP window, of chip
    /// `p` of echo `m` from a scatterer at `delay`. The window sample `i`
    /// then carries `r_psi((i - u) T_s)`.
    fn peak(&self, ell: usize, delay: f64, p: usize, m: usize) -> f64 {
        let base = (ell * self.packet_samples + self.cp_len + 1) as f64 - p as f64;
        (delay + m as f64 * self.echo_spacing) / self.symbol_time - base
    }

    /// At most two nonzero samples of the triangle peaking at `u`.
    fn taps(&self, u: f64) -> impl Iterator<Item = (usize, f64)> {
        let i0 = u.floor();
        let f = u - i0;
        let n = self.n as f64;
        [(i0, 1.0 - f), (i0 + 1.0, f)]
            .into_iter()
            .filter(move |&(i, w)| w > 0.0 && i >= 0.0 && i < n)
            .map(|(i, w)| (i as usize, w))
    }
}

/// Scatterers whose echo interval `[tau_q, tau_q + (M_echo + L) T_s]` meets
/// packet `ell`'s post-CP window `[ell T_pkt + T_cp, (ell + 1) T_pkt]`.
pub fn active_scatterers(scene: &ScattererScene, ell: usize, scn: &SystemScenario) -> Vec<usize> {
    let ts = scn.symbol_time();
    let start = ell as f64 * scn.packet_duration() + scn.cp_duration();
    let end = (ell + 1) as f64 * scn.packet_duration();
    let span = (scn.radar.echo_count + scn.radar.code_length) as f64 * ts;
    scene
        .scatterers
        .iter()
        .enumerate()
        .filter(|(_, s)| s.delay <= end && s.delay + span >= start)
        .map(|(q, _)| q)
        .collect()
}

/// Scatterers with at least one nonzero sample in packet `ell`'s window.
///
/// Differs from [`active_scatterers`] only at the window end: a scatterer
/// whose delay exceeds the window end by less than one sample still leaks
/// the leading edge of its first chip into the last sample.
pub fn contributing_scatterers(scene: &ScattererScene, ell: usize, scn: &SystemScenario, code_len: usize) -> Vec<usize> {
    let ts = scn.symbol_time();
    let first = ell as f64 * scn.packet_duration() + scn.cp_duration() + ts;
    let last = (ell + 1) as f64 * scn.packet_duration();
    scene
        .scatterers
        .iter()
        .enumerate()
        .filter(|(_, s)| {
            let m_last = s.coefficients.len().max(1) - 1;
            let lo = s.delay - ts;
            let hi = s.delay + (code_len as f64 - 1.0) * ts + m_last as f64 / scn.bandwidth() + ts;
            lo < last && hi > first
        })
        .map(|(q, _)| q)
        .collect()
}

/// Window samples `r_{q,p,m}(ell)` evaluated directly from the pulse
/// autocorrelation.
pub fn r_vector(scene: &ScattererScene, q: usize, p: usize, m: usize, ell: usize, scn: &SystemScenario) -> Vec<f64> {
    let ts = scn.symbol_time();
    let w = scn.bandwidth();
    let tau = scene.scatterers[q].delay;
    let start = ell as f64 * scn.packet_duration() + scn.cp_duration();
    (0..scn.subcarriers)
        .map(|i| {
            let t = start + (i + 1) as f64 * ts - p as f64 * ts - m as f64 / w - tau;
            pulse_autocorrelation(t, ts)
        })
        .collect()
}

/// Code-weighted window samples of one echo, `sum_p c_p r_{q,p,m}(ell)`.
fn echo_samples(
    timing: &Timing,
    code: &[Complex64],
    delay: f64,
    ell: usize,
    m: usize,
    out: &mut [Complex64],
    weight: Complex64,
) {
    for (p, &c) in code.iter().enumerate() {
        let u = timing.peak(ell, delay, p, m);
        for (i, tap) in timing.taps(u) {
            out[i] += weight * c * tap;
        }
    }
}

/// `R_{q,ell,m}`: the isometric DFT of echo `m`'s code-weighted window samples.
pub fn r_tilde(
    scene: &ScattererScene,
    waveform: &RadarWaveform,
    q: usize,
    ell: usize,
    m: usize,
    scn: &SystemScenario,
) -> Vec<Complex64> {
    let timing = Timing::new(scn);
    let mut buf = vec![Complex64::new(0.0, 0.0); scn.subcarriers];
    echo_samples(&timing, &waveform.code, scene.scatterers[q].delay, ell, m, &mut buf, Complex64::new(1.0, 0.0));
    IsometricDft::new(scn.subcarriers).forward_in_place(&mut buf);
    buf
}

/// Single DFT bin of `R_{q,ell,m}`, evaluated from the sparse window samples.
fn r_tilde_bin(timing: &Timing, code: &[Complex64], delay: f64, ell: usize, m: usize, n: usize) -> Complex64 {
    let len = timing.n as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for (p, &c) in code.iter().enumerate() {
        let u = timing.peak(ell, delay, p, m);
        for (i, tap) in timing.taps(u) {
            let phase = -2.0 * PI * ((i * n) % timing.n) as f64 / len;
            acc += c * tap * Complex64::from_polar(1.0, phase);
        }
    }
    acc / len.sqrt()
}

fn build_clutter_matrix(
    scene: &ScattererScene,
    waveform: &RadarWaveform,
    ell: usize,
    scn: &SystemScenario,
    dft: &IsometricDft,
    flip_odd_echoes: bool,
) -> CMatrix {
    let timing = Timing::new(scn);
    let n = scn.subcarriers;
    let amp = waveform.power.sqrt();
    let mut out = CMatrix::zeros(scn.antennas, n);
    let mut row = vec![Complex64::new(0.0, 0.0); n];
    for q in contributing_scatterers(scene, ell, scn, waveform.code.len()) {
        let s = &scene.scatterers[q];
        row.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        for (m, &beta) in s.coefficients.iter().enumerate() {
            let sign = if flip_odd_echoes && m % 2 == 1 { -1.0 } else { 1.0 };
            echo_samples(&timing, &waveform.code, s.delay, ell, m, &mut row, beta * amp * sign);
        }
        dft.forward_in_place(&mut row);
        let b = steering_vector(s.angle, scn.antennas, scn.element_spacing);
        for (col, &r) in row.iter().enumerate() {
            for a in 0..scn.antennas {
                out[(a, col)] += b[a] * r;
            }
        }
    }
    out
}

/// The `M x N` clutter matrix of packet `ell`.
pub fn clutter_matrix(scene: &ScattererScene, waveform: &RadarWaveform, ell: usize, scn: &SystemScenario) -> CMatrix {
    build_clutter_matrix(scene, waveform, ell, scn, &IsometricDft::new(scn.subcarriers), false)
}

/// [`clutter_matrix`] with a shared DFT plan.
pub fn clutter_matrix_with(
    scene: &ScattererScene,
    waveform: &RadarWaveform,
    ell: usize,
    scn: &SystemScenario,
    dft: &IsometricDft,
) -> CMatrix {
    build_clutter_matrix(scene, waveform, ell, scn, dft, false)
}

/// Fault-injection hook for the verification suite: negates every odd echo.
#[doc(hidden)]
pub fn clutter_matrix_sign_flipped(
    scene: &ScattererScene,
    waveform: &RadarWaveform,
    ell: usize,
    scn: &SystemScenario,
) -> CMatrix {
    build_clutter_matrix(scene, waveform, ell, scn, &IsometricDft::new(scn.subcarriers), true)
}

/// Clutter covariance in factored form, `sum_j weights[j] b_j b_j^H`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClutterCovariance {
    pub steering: Vec<CVector>,
    pub weights: Vec<f64>,
}

impl ClutterCovariance {
    pub fn zero() -> Self {
        ClutterCovariance::default()
    }

    pub fn is_zero(&self) -> bool {
        self.weights.iter().all(|&w| w == 0.0)
    }

    pub fn to_matrix(&self, antennas: usize) -> CMatrix {
        let mut k = CMatrix::zeros(antennas, antennas);
        for (b, &w) in self.steering.iter().zip(&self.weights) {
            k += b * b.adjoint() * Complex64::from(w);
        }
        k
    }

    /// `v^H K v`, summed term by term so that no cancellation occurs.
    pub fn quad_form(&self, v: &CVector) -> f64 {
        self.steering.iter().zip(&self.weights).map(|(b, &w)| w * b.dotc(v).norm_sqr()).sum()
    }

    pub fn trace(&self) -> f64 {
        self.steering.iter().zip(&self.weights).map(|(b, &w)| w * b.norm_squared()).sum()
    }

    /// Largest eigenvalue, from the small Gram matrix of the scaled generators.
    pub fn lambda_max(&self) -> f64 {
        let gens = self.generators();
        if gens.is_empty() {
            return 0.0;
        }
        let r = gens.len();
        let gram = DMatrix::from_fn(r, r, |i, j| gens[i].dotc(&gens[j]));
        SymmetricEigen::new(gram).eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v))
    }

    /// `sqrt(w_j) b_j` for every strictly positive weight.
    pub fn generators(&self) -> Vec<CVector> {
        self.steering
            .iter()
            .zip(&self.weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(b, &w)| b * Complex64::from(w.sqrt()))
            .collect()
    }

    /// Steering vectors that carry strictly positive weight.
    pub fn support(&self) -> Vec<&CVector> {
        self.steering.iter().zip(&self.weights).filter(|(_, &w)| w > 0.0).map(|(b, _)| b).collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        ClutterCovariance { steering: self.steering.clone(), weights: self.weights.iter().map(|w| w * factor).collect() }
    }
}

/// Covariance of column `n` of the clutter matrix of packet `ell`.
pub fn clutter_covariance(
    scene: &ScattererScene,
    waveform: &RadarWaveform,
    ell: usize,
    n: usize,
    scn: &SystemScenario,
) -> ClutterCovariance {
    let timing = Timing::new(scn);
    let mut cov = ClutterCovariance::zero();
    for q in contributing_scatterers(scene, ell, scn, waveform.code.len()) {
        let s = &scene.scatterers[q];
        let weight: f64 = s
            .echo_variance
            .iter()
            .enumerate()
            .map(|(m, &var)| var * r_tilde_bin(&timing, &waveform.code, s.delay, ell, m, n).norm_sqr())
            .sum();
        cov.steering.push(steering_vector(s.angle, scn.antennas, scn.element_spacing));
        cov.weights.push(waveform.power * weight);
    }
    cov
}

/// Per-subcarrier clutter power of each contributing scatterer in one packet.
#[derive(Clone, Debug, PartialEq)]
pub struct PacketClutter {
    /// Scatterer indices.
    pub scatterers: Vec<usize>,
    /// `power[j][n] = P_T sum_m sigma^2(q_j, m) |R_{q_j,ell,m}(n)|^2`.
    pub power: Vec<Vec<f64>>,
}

/// Clutter second-order statistics for every packet of a slot.
#[derive(Clone, Debug, PartialEq)]
pub struct ClutterArtifacts {
    pub packets: Vec<PacketClutter>,
    pub subcarriers: usize,
}

impl ClutterArtifacts {
    pub fn build(scene: &ScattererScene, waveform: &RadarWaveform, scn: &SystemScenario) -> Self {
        Self::build_with(scene, waveform, scn, &IsometricDft::new(scn.subcarriers))
    }

    pub fn build_with(scene: &ScattererScene, waveform: &RadarWaveform, scn: &SystemScenario, dft: &IsometricDft) -> Self {
        let timing = Timing::new(scn);
        let n = scn.subcarriers;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let packets = (0..scn.packets_per_slot)
            .map(|ell| {
                let scatterers = contributing_scatterers(scene, ell, scn, waveform.code.len());
                let power = scatterers
                    .iter()
                    .map(|&q| {
                        let s = &scene.scatterers[q];
                        let mut acc = vec![0.0; n];
                        for (m, &var) in s.echo_variance.iter().enumerate() {
                            if var == 0.0 {
                                continue;
                            }
                            buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
                            echo_samples(&timing, &waveform.code, s.delay, ell, m, &mut buf, Complex64::new(1.0, 0.0));
                            dft.forward_in_place(&mut buf);
                            for (a, z) in acc.iter_mut().zip(&buf) {
                                *a += waveform.power * var * z.norm_sqr();
                            }
                        }
                        acc
                    })
                    .collect();
                PacketClutter { scatterers, power }
            })
            .collect();
        ClutterArtifacts { packets, subcarriers: n }
    }

    /// Mean over packets and subcarriers of `tr(K_C) / M`, i.e. the
    /// per-antenna clutter power averaged over the slot.
    pub fn mean_clutter_power(&self) -> f64 {
        let total: f64 = self.packets.iter().flat_map(|p| p.power.iter()).flat_map(|row| row.iter()).sum();
        total / (self.packets.len() * self.subcarriers) as f64
    }

    /// Linear clutter-to-noise ratio of the slot.
    pub fn cnr(&self, noise: &NoiseBudget) -> f64 {
        self.mean_clutter_power() / noise.sigma_w2
    }

    pub fn covariance(&self, ell: usize, n: usize, steering: &[CVector]) -> ClutterCovariance {
        let pkt = &self.packets[ell];
        ClutterCovariance {
            steering: pkt.scatterers.iter().map(|&q| steering[q].clone()).collect(),
            weights: pkt.power.iter().map(|row| row[n]).collect(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        ClutterArtifacts {
            packets: self
                .packets
                .iter()
                .map(|p| PacketClutter {
                    scatterers: p.scatterers.clone(),
                    power: p.power.iter().map(|row| row.iter().map(|v| v * factor).collect()).collect(),
                })
                .collect(),
            subcarriers: self.subcarriers,
        }
    }
}

/// Scale factor on `P_T sigma_beta^2` that brings the slot CNR to `target_cnr_db`.
pub fn cnr_scale(artifacts: &ClutterArtifacts, noise: &NoiseBudget, target_cnr_db: f64) -> Result<f64> {
    let current = artifacts.cnr(noise);
    if !(current > 0.0) {
        return Err(Error::ZeroClutter);
    }
    Ok(10f64.powf(target_cnr_db / 10.0) / current)
}

/// Waveform with its power rescaled so the slot CNR equals `target_cnr_db`.
pub fn calibrate_cnr(
    scene: &ScattererScene,
    waveform: &RadarWaveform,
    scn: &SystemScenario,
    target_cnr_db: f64,
    noise: &NoiseBudget,
) -> Result<RadarWaveform> {
    let artifacts = ClutterArtifacts::build(scene, waveform, scn);
    let factor = cnr_scale(&artifacts, noise, target_cnr_db)?;
    Ok(waveform.with_power(waveform.power * factor))
}
