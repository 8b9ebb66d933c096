//! Frequency-domain observables at the array.
//!
//! Column `n` of a received packet is
//! `y(n) = sum_k sqrt(p_k) X_k(n) h_k^(block(n)) + w(n) + c(n)`, where `X_k`
//! is either the DFT of the user's data block or of its pilot block.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, RngCore};

use crate::channel::UplinkChannelSet;
use crate::dft::IsometricDft;
use crate::linalg::{complex_gaussian, CMatrix, CVector};
use crate::scenario::{NoiseBudget, SystemScenario};
use crate::{Error, Result};

/// One packet of data symbols for every user.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolGrid {
    /// QPSK symbols before the transmit DFT, `[user][sample]`.
    pub time: Vec<Vec<Complex64>>,
    /// Isometric DFT of `time`, `[user][subcarrier]`.
    pub freq: Vec<Vec<Complex64>>,
}

pub fn draw_data_symbols<R: Rng + ?Sized>(rng: &mut R, scn: &SystemScenario, dft: &IsometricDft) -> SymbolGrid {
    let a = std::f64::consts::FRAC_1_SQRT_2;
    let time: Vec<Vec<Complex64>> = (0..scn.users)
        .map(|_| {
            (0..scn.subcarriers)
                .map(|_| {
                    let bits = rng.next_u32();
                    let re = if bits & 1 == 0 { a } else { -a };
                    let im = if bits & 2 == 0 { a } else { -a };
                    Complex64::new(re, im)
                })
                .collect()
        })
        .collect();
    let freq = time.iter().map(|x| dft.forward(x)).collect();
    SymbolGrid { time, freq }
}

/// Known training sequences.
///
/// On every coherence block, the pilot of user `k` stacked over the training
/// packets (packet-major) is column `k` of a `T C`-point DFT matrix:
/// entry `t` equals `exp(-j 2 pi k t / (T C))`.
#[derive(Clone, Debug, PartialEq)]
pub struct PilotBook {
    /// Time-domain pilots `p_k(l)`, `[user][packet][sample]`.
    pub time: Vec<Vec<Vec<Complex64>>>,
    /// `W_FFT p_k(l)`, `[user][packet][subcarrier]`.
    pub freq: Vec<Vec<Vec<Complex64>>>,
    coherence_width: usize,
}

impl PilotBook {
    pub fn users(&self) -> usize {
        self.freq.len()
    }

    pub fn packets(&self) -> usize {
        self.freq.first().map_or(0, Vec::len)
    }

    /// `P_k^(q)`: the user's frequency-domain pilots on block `q`, stacked
    /// over the training packets.
    pub fn block_vector(&self, k: usize, q: usize) -> CVector {
        let c = self.coherence_width;
        let per_packet = &self.freq[k];
        CVector::from_iterator(
            per_packet.len() * c,
            per_packet.iter().flat_map(|pkt| pkt[q * c..(q + 1) * c].iter().copied()),
        )
    }
}

pub fn build_pilot_book(scn: &SystemScenario) -> Result<PilotBook> {
    let t = scn.training_packets;
    let c = scn.coherence_width;
    let len = t * c;
    if scn.users > len {
        return Err(Error::InvalidArgument(format!(
            "{} users exceed the {len} orthogonal pilots available (T_train * C)",
            scn.users
        )));
    }
    let dft = IsometricDft::new(scn.subcarriers);
    let mut time = Vec::with_capacity(scn.users);
    let mut freq = Vec::with_capacity(scn.users);
    for k in 0..scn.users {
        let mut f_packets = Vec::with_capacity(t);
        let mut t_packets = Vec::with_capacity(t);
        for ell in 0..t {
            let f: Vec<Complex64> = (0..scn.subcarriers)
                .map(|n| {
                    let slot = ell * c + n % c;
                    Complex64::from_polar(1.0, -2.0 * PI * ((k * slot) % len) as f64 / len as f64)
                })
                .collect();
            t_packets.push(dft.inverse(&f));
            f_packets.push(f);
        }
        time.push(t_packets);
        freq.push(f_packets);
    }
    Ok(PilotBook { time, freq, coherence_width: c })
}

/// `M x N` frequency-domain observable of one packet.
#[derive(Clone, Debug, PartialEq)]
pub struct ReceivedFrame {
    pub y: CMatrix,
}

impl ReceivedFrame {
    pub fn column(&self, n: usize) -> CVector {
        self.y.column(n).into_owned()
    }
}

/// Additive noise source: per-entry variance and the stream to draw from.
pub type NoiseSource<'a> = (&'a NoiseBudget, &'a mut dyn RngCore);

fn synthesize(
    channels: &UplinkChannelSet,
    symbols: &[&[Complex64]],
    clutter: Option<&CMatrix>,
    noise: Option<NoiseSource<'_>>,
    powers: &[f64],
    scn: &SystemScenario,
) -> ReceivedFrame {
    let m = scn.antennas;
    let mut y = match clutter {
        Some(c) => c.clone(),
        None => CMatrix::zeros(m, scn.subcarriers),
    };
    for (k, x) in symbols.iter().enumerate() {
        let amp = powers[k].sqrt();
        for n in 0..scn.subcarriers {
            let h = &channels.h[k][scn.block_of(n)];
            let s = x[n] * amp;
            let mut col = y.column_mut(n);
            for a in 0..m {
                col[a] += h[a] * s;
            }
        }
    }
    if let Some((budget, rng)) = noise {
        for n in 0..scn.subcarriers {
            for a in 0..m {
                y[(a, n)] += complex_gaussian(rng, budget.sigma_w2);
            }
        }
    }
    ReceivedFrame { y }
}

pub fn synth_data_packet(
    channels: &UplinkChannelSet,
    symbols: &SymbolGrid,
    clutter: Option<&CMatrix>,
    noise: Option<NoiseSource<'_>>,
    powers: &[f64],
    scn: &SystemScenario,
) -> ReceivedFrame {
    let x: Vec<&[Complex64]> = symbols.freq.iter().map(Vec::as_slice).collect();
    synthesize(channels, &x, clutter, noise, powers, scn)
}

/// Training packet `ell` (zero-based, `ell < T_train`).
pub fn synth_training_packet(
    channels: &UplinkChannelSet,
    pilots: &PilotBook,
    ell: usize,
    clutter: Option<&CMatrix>,
    noise: Option<NoiseSource<'_>>,
    powers: &[f64],
    scn: &SystemScenario,
) -> ReceivedFrame {
    let x: Vec<&[Complex64]> = pilots.freq.iter().map(|per_packet| per_packet[ell].as_slice()).collect();
    synthesize(channels, &x, clutter, noise, powers, scn)
}

/// Block observable of coherence block `q` (zero-based): columns
/// `qC .. (q+1)C` of every training frame, concatenated packet-major.
pub fn extract_block(frames: &[ReceivedFrame], q: usize, scn: &SystemScenario) -> Result<CMatrix> {
    if q >= scn.blocks() {
        return Err(Error::InvalidArgument(format!("block {q} out of range (Q = {})", scn.blocks())));
    }
    let c = scn.coherence_width;
    let m = frames.first().map_or(scn.antennas, |f| f.y.nrows());
    let mut out = CMatrix::zeros(m, frames.len() * c);
    for (t, frame) in frames.iter().enumerate() {
        out.columns_mut(t * c, c).copy_from(&frame.y.columns(q * c, c));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::draw_channels;
    use crate::scenario::noise_power;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scn(m: usize, k: usize) -> SystemScenario {
        let mut s = SystemScenario::new(m, k);
        s.subcarriers = 64;
        s.coherence_width = 8;
        s.training_packets = 3;
        s
    }

    fn channels(s: &SystemScenario, seed: u64) -> UplinkChannelSet {
        let d: Vec<f64> = (0..s.users).map(|k| 60.0 + 40.0 * k as f64).collect();
        draw_channels(&mut ChaCha8Rng::seed_from_u64(seed), s, &d, 0.0).unwrap()
    }

    fn frob(a: &CMatrix) -> f64 {
        a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    #[test]
    fn qpsk_symbols() {
        let s = scn(2, 3);
        let dft = IsometricDft::new(s.subcarriers);
        let g = draw_data_symbols(&mut ChaCha8Rng::seed_from_u64(1), &s, &dft);
        for (x, big_x) in g.time.iter().zip(&g.freq) {
            assert!(x.iter().all(|z| (z.norm() - 1.0).abs() < 1e-15));
            let e: f64 = big_x.iter().map(|z| z.norm_sqr()).sum();
            assert!((e - s.subcarriers as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn frequency_symbols_are_zero_mean() {
        let mut s = scn(1, 1);
        s.subcarriers = 8;
        s.coherence_width = 8;
        let dft = IsometricDft::new(8);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let trials = 10_000;
        let mut mean = Complex64::new(0.0, 0.0);
        let mut power = 0.0;
        for _ in 0..trials {
            let g = draw_data_symbols(&mut rng, &s, &dft);
            mean += g.freq[0][3] / trials as f64;
            power += g.freq[0][3].norm_sqr() / trials as f64;
        }
        assert!(mean.norm() < 0.05);
        assert!((power - 1.0).abs() < 0.05);
    }

    #[test]
    fn pilot_book_orthogonality() {
        let s = scn(4, 24);
        let book = build_pilot_book(&s).unwrap();
        let len = (s.training_packets * s.coherence_width) as f64;
        for q in 0..s.blocks() {
            for j in 0..s.users {
                let pj = book.block_vector(j, q);
                assert_eq!(pj.len(), len as usize);
                for k in 0..s.users {
                    let g = pj.dotc(&book.block_vector(k, q));
                    let want = if j == k { len } else { 0.0 };
                    assert!((g - Complex64::new(want, 0.0)).norm() < 1e-10);
                }
            }
        }
        // Time-domain pilots map back onto the frequency-domain ones.
        let dft = IsometricDft::new(s.subcarriers);
        for (tk, fk) in book.time.iter().zip(&book.freq) {
            for (t, f) in tk.iter().zip(fk) {
                for (a, b) in dft.forward(t).iter().zip(f) {
                    assert!((a - b).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn pilot_capacity() {
        let s = SystemScenario::new(8, 112);
        assert!(build_pilot_book(&s).is_ok());
        let s = SystemScenario::new(8, 113);
        assert!(build_pilot_book(&s).is_err());
        let single = build_pilot_book(&scn(2, 1)).unwrap();
        let p = single.block_vector(0, 2);
        assert!(p.iter().all(|z| (z.norm() - 1.0).abs() < 1e-15));
    }

    #[test]
    fn noiseless_single_user_columns() {
        let s = scn(3, 1);
        let ch = channels(&s, 3);
        let ones = SymbolGrid { time: vec![vec![]], freq: vec![vec![Complex64::new(1.0, 0.0); s.subcarriers]] };
        let frame = synth_data_packet(&ch, &ones, None, None, &[0.1], &s);
        for n in 0..s.subcarriers {
            let want = &ch.h[0][s.block_of(n)] * Complex64::from(0.1f64.sqrt());
            assert!((frame.column(n) - &want).norm() <= 1e-15 * want.norm());
        }
    }

    #[test]
    fn columns_share_channel_within_a_block() {
        // Single user, noise and clutter off: y(n) / X(n) is constant on a block.
        let s = scn(4, 1);
        let ch = channels(&s, 4);
        let dft = IsometricDft::new(s.subcarriers);
        let sym = draw_data_symbols(&mut ChaCha8Rng::seed_from_u64(5), &s, &dft);
        let frame = synth_data_packet(&ch, &sym, None, None, &[0.1], &s);
        for q in 0..s.blocks() {
            let first = frame.column(q * s.coherence_width) / sym.freq[0][q * s.coherence_width];
            for n in q * s.coherence_width..(q + 1) * s.coherence_width {
                let col = frame.column(n) / sym.freq[0][n];
                assert!((col - &first).norm() <= 1e-12 * first.norm());
            }
        }
    }

    #[test]
    fn noise_variance() {
        let mut s = scn(4, 1);
        s.subcarriers = 2048;
        s.coherence_width = 8;
        let ch = channels(&s, 6);
        let zero = SymbolGrid { time: vec![vec![]], freq: vec![vec![Complex64::new(0.0, 0.0); s.subcarriers]] };
        let nb = noise_power(&s);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let frame = synth_data_packet(&ch, &zero, None, Some((&nb, &mut rng)), &[0.1], &s);
        let var = frame.y.iter().map(|z| z.norm_sqr()).sum::<f64>() / frame.y.len() as f64;
        assert!((var - nb.sigma_w2).abs() < 0.03 * nb.sigma_w2);
    }

    #[test]
    fn synthesis_is_deterministic() {
        let s = scn(3, 2);
        let ch = channels(&s, 8);
        let dft = IsometricDft::new(s.subcarriers);
        let sym = draw_data_symbols(&mut ChaCha8Rng::seed_from_u64(9), &s, &dft);
        let clutter = CMatrix::from_fn(3, s.subcarriers, |a, n| Complex64::new(a as f64 * 1e-7, n as f64 * 1e-8));
        let a = synth_data_packet(&ch, &sym, Some(&clutter), None, &[0.1, 0.1], &s);
        let b = synth_data_packet(&ch, &sym, Some(&clutter), None, &[0.1, 0.1], &s);
        assert_eq!(a, b);
    }

    #[test]
    fn training_with_data_as_pilots_equals_data_packet() {
        let s = scn(3, 2);
        let ch = channels(&s, 10);
        let dft = IsometricDft::new(s.subcarriers);
        let sym = draw_data_symbols(&mut ChaCha8Rng::seed_from_u64(11), &s, &dft);
        let book = PilotBook {
            time: sym.time.iter().map(|t| vec![t.clone()]).collect(),
            freq: sym.freq.iter().map(|f| vec![f.clone()]).collect(),
            coherence_width: s.coherence_width,
        };
        let nb = noise_power(&s);
        let mut r1 = ChaCha8Rng::seed_from_u64(12);
        let mut r2 = ChaCha8Rng::seed_from_u64(12);
        let a = synth_data_packet(&ch, &sym, None, Some((&nb, &mut r1)), &[0.1, 0.2], &s);
        let b = synth_training_packet(&ch, &book, 0, None, Some((&nb, &mut r2)), &[0.1, 0.2], &s);
        assert_eq!(a, b);
    }

    #[test]
    fn zero_pilots_leave_noise_and_clutter() {
        let s = scn(2, 2);
        let ch = channels(&s, 13);
        let mut book = build_pilot_book(&s).unwrap();
        for per_user in &mut book.freq {
            for pkt in per_user.iter_mut() {
                pkt.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            }
        }
        let clutter = CMatrix::from_fn(2, s.subcarriers, |a, n| Complex64::new(1.0 + a as f64, n as f64));
        let nb = noise_power(&s);
        let mut r1 = ChaCha8Rng::seed_from_u64(14);
        let got = synth_training_packet(&ch, &book, 1, Some(&clutter), Some((&nb, &mut r1)), &[0.1, 0.1], &s);
        let mut r2 = ChaCha8Rng::seed_from_u64(14);
        let mut want = clutter.clone();
        for n in 0..s.subcarriers {
            for a in 0..2 {
                want[(a, n)] += complex_gaussian(&mut r2, nb.sigma_w2);
            }
        }
        assert_eq!(got.y, want);
    }

    #[test]
    fn training_column_is_pilot_times_channel() {
        let s = scn(3, 1);
        let ch = channels(&s, 15);
        let book = build_pilot_book(&s).unwrap();
        let dft = IsometricDft::new(s.subcarriers);
        let frame = synth_training_packet(&ch, &book, 2, None, None, &[0.1], &s);
        let pf = dft.forward(&book.time[0][2]);
        for n in 0..s.subcarriers {
            let want = &ch.h[0][s.block_of(n)] * (pf[n] * 0.1f64.sqrt());
            assert!((frame.column(n) - &want).norm() <= 1e-12 * want.norm());
        }
    }

    #[test]
    fn block_extraction_bookkeeping() {
        let s = scn(2, 1);
        let frames: Vec<ReceivedFrame> = (0..s.training_packets)
            .map(|t| ReceivedFrame {
                y: CMatrix::from_fn(2, s.subcarriers, |_, j| Complex64::new(j as f64, t as f64)),
            })
            .collect();
        let q = 5;
        let blk = extract_block(&frames, q, &s).unwrap();
        assert_eq!(blk.ncols(), s.training_packets * s.coherence_width);
        for t in 0..s.training_packets {
            for c in 0..s.coherence_width {
                let z = blk[(1, t * s.coherence_width + c)];
                assert_eq!(z, Complex64::new((q * s.coherence_width + c) as f64, t as f64));
            }
        }
        assert!(extract_block(&frames, s.blocks(), &s).is_err());

        let mut whole = s.clone();
        whole.coherence_width = whole.subcarriers;
        whole.training_packets = 1;
        let blk = extract_block(&frames[..1], 0, &whole).unwrap();
        assert_eq!(blk, frames[0].y);
    }

    #[test]
    fn block_observable_factorizes() {
        let s = scn(4, 3);
        let ch = channels(&s, 16);
        let book = build_pilot_book(&s).unwrap();
        let powers = [0.1, 0.05, 0.2];
        let frames: Vec<ReceivedFrame> = (0..s.training_packets)
            .map(|t| synth_training_packet(&ch, &book, t, None, None, &powers, &s))
            .collect();
        for q in 0..s.blocks() {
            let got = extract_block(&frames, q, &s).unwrap();
            let mut want = CMatrix::zeros(4, s.training_packets * s.coherence_width);
            for k in 0..3 {
                want += &ch.h[k][q] * book.block_vector(k, q).transpose() * Complex64::from(powers[k].sqrt());
            }
            assert!(frob(&(&got - &want)) <= 1e-12 * frob(&want));
        }
    }

    #[test]
    fn received_power_accounting() {
        // E|y(n)|^2 = sum_k p_k |h_k|^2 + M sigma^2 + tr(K_C).
        let mut s = scn(4, 2);
        s.subcarriers = 16;
        s.coherence_width = 16;
        let ch = channels(&s, 17);
        let nb = noise_power(&s);
        let clutter_dir = crate::clutter::steering_vector(0.3, 4, 0.5);
        let clutter_power = 5.0 * nb.sigma_w2;
        let dft = IsometricDft::new(s.subcarriers);
        let powers = [0.1, 0.1];
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let trials = 10_000;
        let mut acc = 0.0;
        for _ in 0..trials {
            let sym = draw_data_symbols(&mut rng, &s, &dft);
            let z = complex_gaussian(&mut rng, clutter_power);
            let clutter = CMatrix::from_fn(4, s.subcarriers, |a, _| clutter_dir[a] * z);
            let f = synth_data_packet(&ch, &sym, Some(&clutter), Some((&nb, &mut rng)), &powers, &s);
            acc += f.column(7).norm_squared() / trials as f64;
        }
        let want = powers[0] * ch.h[0][0].norm_squared()
            + powers[1] * ch.h[1][0].norm_squared()
            + 4.0 * nb.sigma_w2
            + 4.0 * clutter_power;
        assert!((acc - want).abs() < 0.03 * want, "{acc} vs {want}");
    }
}
