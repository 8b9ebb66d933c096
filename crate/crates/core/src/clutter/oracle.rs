//! Brute-force reference for the clutter matrix: evaluate the sampled
//! clutter waveform on the post-CP window of one packet by direct summation
//! over every scatterer, echo and chip (no active-set pruning, no sparse
//! taps), then apply the DFT as an explicit matrix product.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::{pulse_autocorrelation, steering_vector, RadarWaveform, ScattererScene};
use crate::linalg::CMatrix;
use crate::scenario::SystemScenario;
use crate::{Error, Result};

/// Upper bound on `N * scatterers * echoes * chips`.
pub const ORACLE_WORK_LIMIT: f64 = 5e8;

pub fn time_domain_oracle(
    scene: &ScattererScene,
    waveform: &RadarWaveform,
    ell: usize,
    scn: &SystemScenario,
) -> Result<CMatrix> {
    let n = scn.subcarriers;
    let echoes = scene.scatterers.iter().map(|s| s.coefficients.len()).max().unwrap_or(0);
    let work = n as f64 * scene.len() as f64 * echoes as f64 * waveform.code.len() as f64;
    if n > 4096 || work > ORACLE_WORK_LIMIT {
        return Err(Error::OracleTooLarge(format!("N = {n}, work = {work:.3e}")));
    }
    if ell >= scn.packets_per_slot {
        return Err(Error::InvalidArgument(format!("packet {ell} outside the slot")));
    }

    let ts = scn.symbol_time();
    let w = scn.bandwidth();
    let amp = waveform.power.sqrt();
    let m_ant = scn.antennas;

    // Sampled clutter at eta * T_s over packet ell's post-CP window.
    let first = ell * scn.packet_samples() + scn.cp_len + 1;
    let mut window = vec![vec![Complex64::new(0.0, 0.0); m_ant]; n];
    for s in &scene.scatterers {
        let b = steering_vector(s.angle, m_ant, scn.element_spacing);
        for (i, sample) in window.iter_mut().enumerate() {
            let eta = first + i;
            let mut scalar = Complex64::new(0.0, 0.0);
            for (m, &beta) in s.coefficients.iter().enumerate() {
                for (p, &c) in waveform.code.iter().enumerate() {
                    let arg = (eta as f64 - p as f64) * ts - m as f64 / w - s.delay;
                    let r = pulse_autocorrelation(arg, ts);
                    if r != 0.0 {
                        scalar += amp * beta * c * r;
                    }
                }
            }
            if scalar != Complex64::new(0.0, 0.0) {
                for (a, bv) in sample.iter_mut().zip(b.iter()) {
                    *a += bv * scalar;
                }
            }
        }
    }

    // DFT by explicit summation.
    let norm = 1.0 / (n as f64).sqrt();
    let twiddle: Vec<Complex64> = (0..n).map(|k| Complex64::from_polar(norm, -2.0 * PI * k as f64 / n as f64)).collect();
    let mut out = CMatrix::zeros(m_ant, n);
    for col in 0..n {
        for (i, sample) in window.iter().enumerate() {
            let tw = twiddle[(i * col) % n];
            for a in 0..m_ant {
                out[(a, col)] += sample[a] * tw;
            }
        }
    }
    Ok(out)
}
