//! Static configuration of the simulated system.
//!
//! A scenario is read from a line-oriented `key = value` file (`#` starts a
//! comment). Every key is optional except `M` and `K`; unknown keys are
//! rejected. See `docs/scenario.md` for the full key list.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::{Error, Result};

/// Length of one uplink slot in seconds; `packets_per_slot` packets fit in it.
pub const SLOT_DURATION: f64 = 0.5e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CodeFamily {
    /// P4 polyphase code.
    P4,
    /// Seeded random unit-modulus chips.
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DelayLayout {
    /// One scatterer per equal-width stratum of `[0, tau_max]`.
    Stratified,
    /// All delays i.i.d. uniform on `[0, tau_max]`.
    Uniform,
}

/// Radar waveform and clutter-scene parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct RadarParams {
    /// Chips in the radar code (`L`).
    pub code_length: usize,
    pub code_family: CodeFamily,
    pub code_seed: u64,
    pub n_scatterers: usize,
    /// Largest scatterer delay in seconds.
    pub tau_max: f64,
    pub delay_layout: DelayLayout,
    /// Echoes generated by each scatterer, spaced `1/W` apart.
    pub echo_count: usize,
    /// Decay constant of the echo power profile, in echoes. `inf` gives a flat profile.
    pub echo_decay: f64,
}

/// Large-scale propagation parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct PropagationParams {
    pub shadowing_sigma_db: f64,
    /// User distance range in meters.
    pub d_min: f64,
    pub d_max: f64,
    /// Path-loss breakpoints in meters.
    pub pl_d0: f64,
    pub pl_d1: f64,
    /// Base-station and user antenna heights in meters.
    pub h_ap: f64,
    pub h_user: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SystemScenario {
    /// `N`
    pub subcarriers: usize,
    /// `C`
    pub coherence_width: usize,
    /// `M`
    pub antennas: usize,
    /// `K`
    pub users: usize,
    /// Hz
    pub subcarrier_spacing: f64,
    /// Samples
    pub cp_len: usize,
    pub packets_per_slot: usize,
    pub training_packets: usize,
    /// Per-user transmit power in Watts.
    pub user_power: f64,
    pub noise_psd_dbm_hz: f64,
    pub noise_figure_db: f64,
    /// Hz
    pub carrier_freq: f64,
    /// Element spacing normalized to the wavelength.
    pub element_spacing: f64,
    pub radar: RadarParams,
    pub propagation: PropagationParams,
}

impl SystemScenario {
    /// Full-scale defaults with the given array size and user count.
    pub fn new(antennas: usize, users: usize) -> Self {
        let subcarriers = 4096;
        let coherence_width = 16;
        let echo_count = subcarriers / coherence_width;
        SystemScenario {
            subcarriers,
            coherence_width,
            antennas,
            users,
            subcarrier_spacing: 30e3,
            cp_len: 288,
            packets_per_slot: 14,
            training_packets: 7,
            user_power: 0.1,
            noise_psd_dbm_hz: -174.0,
            noise_figure_db: 3.0,
            carrier_freq: 3e9,
            element_spacing: 0.5,
            radar: RadarParams {
                code_length: 32,
                code_family: CodeFamily::P4,
                code_seed: 0,
                n_scatterers: 14,
                tau_max: SLOT_DURATION,
                delay_layout: DelayLayout::Stratified,
                echo_count,
                echo_decay: echo_count as f64 / 4.0,
            },
            propagation: PropagationParams {
                shadowing_sigma_db: 8.0,
                d_min: 20.0,
                d_max: 500.0,
                pl_d0: 10.0,
                pl_d1: 50.0,
                h_ap: 15.0,
                h_user: 1.65,
            },
        }
    }

    /// Reduced profile: `N = 512` with the CP scaled to keep the CP/symbol
    /// ratio, everything else as in [`SystemScenario::new`].
    pub fn desk(antennas: usize, users: usize) -> Self {
        let mut scn = SystemScenario::new(antennas, users);
        scn.subcarriers = 512;
        scn.cp_len = 36;
        scn.radar.echo_count = 512 / 16;
        scn.radar.echo_decay = scn.radar.echo_count as f64 / 4.0;
        scn
    }

    /// `Q = N / C`
    pub fn blocks(&self) -> usize {
        self.subcarriers / self.coherence_width
    }

    /// Coherence block (zero-based) holding subcarrier `n` (zero-based).
    pub fn block_of(&self, n: usize) -> usize {
        n / self.coherence_width
    }

    /// Samples per packet including the cyclic prefix.
    pub fn packet_samples(&self) -> usize {
        self.subcarriers + self.cp_len
    }

    /// `T_s`, chosen so that `packets_per_slot` packets fill the slot.
    pub fn symbol_time(&self) -> f64 {
        SLOT_DURATION / (self.packets_per_slot * self.packet_samples()) as f64
    }

    pub fn packet_duration(&self) -> f64 {
        self.packet_samples() as f64 * self.symbol_time()
    }

    pub fn cp_duration(&self) -> f64 {
        self.cp_len as f64 * self.symbol_time()
    }

    /// `W = N * delta_f`
    pub fn bandwidth(&self) -> f64 {
        self.subcarriers as f64 * self.subcarrier_spacing
    }

    /// Zero-based indices of the data packets (those after training).
    pub fn data_packets(&self) -> std::ops::Range<usize> {
        self.training_packets..self.packets_per_slot
    }

    pub fn validate(&self) -> Result<()> {
        fn check(ok: bool, what: &str) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidScenario(what.to_string()))
            }
        }
        let r = &self.radar;
        let p = &self.propagation;
        check(self.subcarriers >= 1, "N >= 1")?;
        check(self.coherence_width >= 1, "C >= 1")?;
        check(self.subcarriers.is_multiple_of(self.coherence_width), "N mod C = 0")?;
        check(self.antennas >= 1, "M >= 1")?;
        check(self.users >= 1, "K >= 1")?;
        check(self.packets_per_slot >= 1, "packets_per_slot >= 1")?;
        check(self.training_packets >= 1, "T_train >= 1")?;
        check(self.training_packets <= self.packets_per_slot, "T_train <= packets_per_slot")?;
        check(self.subcarrier_spacing > 0.0, "delta_f > 0")?;
        check(self.user_power > 0.0, "p_k > 0")?;
        check(self.carrier_freq > 0.0, "f_c > 0")?;
        check(self.element_spacing > 0.0, "d_spacing_over_lambda > 0")?;
        check(self.noise_psd_dbm_hz.is_finite(), "noise_psd_dbm_hz finite")?;
        check(self.noise_figure_db.is_finite(), "noise_figure_db finite")?;
        check(r.code_length >= 1, "L >= 1")?;
        check(r.echo_count >= 1, "m_echo >= 1")?;
        check(r.echo_decay > 0.0, "echo_decay > 0")?;
        check(r.tau_max >= 0.0 && r.tau_max.is_finite(), "tau_max >= 0")?;
        check(p.shadowing_sigma_db >= 0.0, "shadowing_sigma_db >= 0")?;
        check(p.d_min > 0.0 && p.d_min <= p.d_max, "0 < d_min <= d_max")?;
        check(p.pl_d0 > 0.0 && p.pl_d0 < p.pl_d1, "0 < pl_d0 < pl_d1")?;
        check(p.h_ap > 0.0 && p.h_user > 0.0, "antenna heights > 0")?;
        Ok(())
    }

    /// Writes every key, so that `parse_scenario(&s.to_text())` reproduces `s`.
    pub fn to_text(&self) -> String {
        let r = &self.radar;
        let p = &self.propagation;
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("N", self.subcarriers.to_string());
        put("C", self.coherence_width.to_string());
        put("M", self.antennas.to_string());
        put("K", self.users.to_string());
        put("delta_f", self.subcarrier_spacing.to_string());
        put("N_cp", self.cp_len.to_string());
        put("packets_per_slot", self.packets_per_slot.to_string());
        put("T_train", self.training_packets.to_string());
        put("p_k", self.user_power.to_string());
        put("noise_psd_dbm_hz", self.noise_psd_dbm_hz.to_string());
        put("noise_figure_db", self.noise_figure_db.to_string());
        put("f_c", self.carrier_freq.to_string());
        put("d_spacing_over_lambda", self.element_spacing.to_string());
        put("L", r.code_length.to_string());
        put(
            "code_family",
            match r.code_family {
                CodeFamily::P4 => "p4",
                CodeFamily::Random => "random",
            }
            .to_string(),
        );
        put("code_seed", r.code_seed.to_string());
        put("n_scatterers", r.n_scatterers.to_string());
        put("tau_max", r.tau_max.to_string());
        put(
            "tau_layout",
            match r.delay_layout {
                DelayLayout::Stratified => "stratified",
                DelayLayout::Uniform => "uniform",
            }
            .to_string(),
        );
        put("m_echo", r.echo_count.to_string());
        put("echo_decay", r.echo_decay.to_string());
        put("shadowing_sigma_db", p.shadowing_sigma_db.to_string());
        put("d_min", p.d_min.to_string());
        put("d_max", p.d_max.to_string());
        put("pl_d0", p.pl_d0.to_string());
        put("pl_d1", p.pl_d1.to_string());
        put("h_ap", p.h_ap.to_string());
        put("h_user", p.h_user.to_string());
        out
    }
}

/// Every key accepted in a scenario file, in canonical order.
pub const SCENARIO_KEYS: &[&str] = &[
    "N",
    "C",
    "M",
    "K",
    "delta_f",
    "N_cp",
    "packets_per_slot",
    "T_train",
    "p_k",
    "noise_psd_dbm_hz",
    "noise_figure_db",
    "f_c",
    "d_spacing_over_lambda",
    "L",
    "code_family",
    "code_seed",
    "n_scatterers",
    "tau_max",
    "tau_layout",
    "m_echo",
    "echo_decay",
    "shadowing_sigma_db",
    "d_min",
    "d_max",
    "pl_d0",
    "pl_d1",
    "h_ap",
    "h_user",
];

fn parse_value<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Syntax {
        line,
        msg: format!("cannot parse value {value:?} for key {key}"),
    })
}

/// Parses a scenario file, fills defaults, and checks every invariant.
pub fn parse_scenario(text: &str) -> Result<SystemScenario> {
    let mut entries: Vec<(usize, &str, &str)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Syntax {
            line,
            msg: format!("expected `key = value`, found {content:?}"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if !SCENARIO_KEYS.contains(&key) {
            return Err(Error::Syntax { line, msg: format!("unknown key {key:?}") });
        }
        if entries.iter().any(|(_, k, _)| *k == key) {
            return Err(Error::Syntax { line, msg: format!("duplicate key {key:?}") });
        }
        if value.is_empty() {
            return Err(Error::Syntax { line, msg: format!("missing value for key {key}") });
        }
        entries.push((line, key, value));
    }

    let find = |key: &str| entries.iter().find(|(_, k, _)| *k == key).map(|&(l, _, v)| (l, v));
    let antennas: usize = match find("M") {
        Some((l, v)) => parse_value(l, "M", v)?,
        None => return Err(Error::InvalidScenario("missing required key M".into())),
    };
    let users: usize = match find("K") {
        Some((l, v)) => parse_value(l, "K", v)?,
        None => return Err(Error::InvalidScenario("missing required key K".into())),
    };

    let mut scn = SystemScenario::new(antennas, users);
    let mut echo_count = None;
    let mut echo_decay = None;
    for &(line, key, value) in &entries {
        match key {
            "N" => scn.subcarriers = parse_value(line, key, value)?,
            "C" => scn.coherence_width = parse_value(line, key, value)?,
            "M" | "K" => {}
            "delta_f" => scn.subcarrier_spacing = parse_value(line, key, value)?,
            "N_cp" => scn.cp_len = parse_value(line, key, value)?,
            "packets_per_slot" => scn.packets_per_slot = parse_value(line, key, value)?,
            "T_train" => scn.training_packets = parse_value(line, key, value)?,
            "p_k" => scn.user_power = parse_value(line, key, value)?,
            "noise_psd_dbm_hz" => scn.noise_psd_dbm_hz = parse_value(line, key, value)?,
            "noise_figure_db" => scn.noise_figure_db = parse_value(line, key, value)?,
            "f_c" => scn.carrier_freq = parse_value(line, key, value)?,
            "d_spacing_over_lambda" => scn.element_spacing = parse_value(line, key, value)?,
            "L" => scn.radar.code_length = parse_value(line, key, value)?,
            "code_family" => {
                scn.radar.code_family = match value {
                    "p4" => CodeFamily::P4,
                    "random" => CodeFamily::Random,
                    _ => {
                        return Err(Error::Syntax {
                            line,
                            msg: format!("unknown code family {value:?} (expected p4 or random)"),
                        })
                    }
                }
            }
            "code_seed" => scn.radar.code_seed = parse_value(line, key, value)?,
            "n_scatterers" => scn.radar.n_scatterers = parse_value(line, key, value)?,
            "tau_max" => scn.radar.tau_max = parse_value(line, key, value)?,
            "tau_layout" => {
                scn.radar.delay_layout = match value {
                    "stratified" => DelayLayout::Stratified,
                    "uniform" => DelayLayout::Uniform,
                    _ => {
                        return Err(Error::Syntax {
                            line,
                            msg: format!("unknown tau_layout {value:?} (expected stratified or uniform)"),
                        })
                    }
                }
            }
            "m_echo" => echo_count = Some(parse_value(line, key, value)?),
            "echo_decay" => echo_decay = Some(parse_value(line, key, value)?),
            "shadowing_sigma_db" => scn.propagation.shadowing_sigma_db = parse_value(line, key, value)?,
            "d_min" => scn.propagation.d_min = parse_value(line, key, value)?,
            "d_max" => scn.propagation.d_max = parse_value(line, key, value)?,
            "pl_d0" => scn.propagation.pl_d0 = parse_value(line, key, value)?,
            "pl_d1" => scn.propagation.pl_d1 = parse_value(line, key, value)?,
            "h_ap" => scn.propagation.h_ap = parse_value(line, key, value)?,
            "h_user" => scn.propagation.h_user = parse_value(line, key, value)?,
            _ => unreachable!("key list checked above"),
        }
    }
    if scn.coherence_width == 0 {
        return Err(Error::InvalidScenario("C >= 1".into()));
    }
    // Echo count follows N/C unless given explicitly; the decay follows the echo count.
    scn.radar.echo_count = echo_count.unwrap_or(scn.subcarriers / scn.coherence_width);
    scn.radar.echo_decay = echo_decay.unwrap_or(scn.radar.echo_count as f64 / 4.0);
    scn.validate()?;
    Ok(scn)
}

/// Thermal noise power per antenna per subcarrier sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseBudget {
    pub sigma_w2: f64,
}

/// Noise over the full occupied band `N * delta_f`, including the noise figure.
pub fn noise_power(scn: &SystemScenario) -> NoiseBudget {
    let psd_w_hz = 10f64.powf((scn.noise_psd_dbm_hz - 30.0) / 10.0);
    let nf = 10f64.powf(scn.noise_figure_db / 10.0);
    NoiseBudget { sigma_w2: psd_w_hz * scn.bandwidth() * nf }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_file_requires_m_and_k() {
        assert!(matches!(parse_scenario(""), Err(Error::InvalidScenario(_))));
        assert!(matches!(parse_scenario("M = 4\n"), Err(Error::InvalidScenario(_))));
    }

    #[test]
    fn defaults_are_filled() {
        let scn = parse_scenario("M = 16\nK = 1\n").unwrap();
        assert_eq!(scn.subcarriers, 4096);
        assert_eq!(scn.coherence_width, 16);
        assert_eq!(scn.blocks(), 256);
        assert_eq!(scn.cp_len, 288);
        assert_eq!(scn.packets_per_slot, 14);
        assert_eq!(scn.training_packets, 7);
        assert_eq!(scn.radar.code_length, 32);
        assert_eq!(scn.radar.echo_count, 256);
        assert_eq!(scn.user_power, 0.1);
    }

    #[test]
    fn symbol_time_matches_frame_numerology() {
        let scn = parse_scenario("N=4096\nN_cp=288\npackets_per_slot=14\nM=1\nK=1").unwrap();
        // 8.146 ns as quoted (truncated to four digits)
        assert!((scn.symbol_time() - 8.146e-9).abs() < 1e-12);
        let slot = scn.packets_per_slot as f64 * scn.packet_samples() as f64 * scn.symbol_time();
        assert!((slot - SLOT_DURATION).abs() <= 1e-12 * SLOT_DURATION);
        // 1/W differs slightly from T_s
        assert!((1.0 / scn.bandwidth() - 8.138e-9).abs() < 1e-12);
    }

    #[test]
    fn n_not_multiple_of_c_is_rejected() {
        let err = parse_scenario("N = 100\nC = 16\nM = 2\nK = 1").unwrap_err();
        match err {
            Error::InvalidScenario(msg) => assert!(msg.contains("N mod C")),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        match parse_scenario("M = 2\n# comment\nK 1\n").unwrap_err() {
            Error::Syntax { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        match parse_scenario("M = 2\nK = 1\nbogus = 3\n").unwrap_err() {
            Error::Syntax { line, msg } => {
                assert_eq!(line, 3);
                assert!(msg.contains("bogus"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_scenario("M = two\nK = 1"), Err(Error::Syntax { line: 1, .. })));
    }

    #[test]
    fn comments_and_whitespace() {
        let scn = parse_scenario("  M=8   # array\n\nK = 3#users\n tau_layout = uniform\n").unwrap();
        assert_eq!(scn.antennas, 8);
        assert_eq!(scn.users, 3);
        assert_eq!(scn.radar.delay_layout, DelayLayout::Uniform);
    }

    #[test]
    fn training_cannot_exceed_slot() {
        assert!(parse_scenario("M=2\nK=1\nT_train=15").is_err());
    }

    #[test]
    fn noise_budget_default() {
        let scn = SystemScenario::new(1, 1);
        let nb = noise_power(&scn);
        // -174 + 10 log10(122.88e6) + 3 dBm
        let dbm = -174.0 + 10.0 * (122.88e6f64).log10() + 3.0;
        let want = 10f64.powf((dbm - 30.0) / 10.0);
        assert!((nb.sigma_w2 - want).abs() < 1e-12 * want);
        assert!((nb.sigma_w2 - 9.78e-13).abs() < 0.01 * 9.78e-13);
        assert!((10.0 * (nb.sigma_w2 * 1e3).log10() + 90.1).abs() < 0.01);
    }

    #[test]
    fn noise_budget_one_hertz_no_figure() {
        let mut scn = SystemScenario::new(1, 1);
        scn.subcarriers = 1;
        scn.coherence_width = 1;
        scn.subcarrier_spacing = 1.0;
        scn.noise_figure_db = 0.0;
        let nb = noise_power(&scn);
        assert!((nb.sigma_w2 - 10f64.powf(-20.4)).abs() < 1e-12 * nb.sigma_w2);
    }

    #[test]
    fn noise_budget_linear_in_bandwidth() {
        let scn = SystemScenario::new(1, 1);
        let mut wide = scn.clone();
        wide.subcarrier_spacing *= 2.0;
        assert_eq!(noise_power(&wide).sigma_w2, 2.0 * noise_power(&scn).sigma_w2);
    }

    fn arb_scenario() -> impl Strategy<Value = SystemScenario> {
        (
            (1usize..6, 1usize..64, 1usize..200, 1usize..9, 1usize..20),
            (1e3f64..1e6, 0usize..400, 1e-3f64..2.0, -200f64..-150.0, 0f64..10.0),
            (1usize..64, any::<u64>(), 0usize..40, 0f64..1e-3, any::<bool>(), 1usize..300),
            (prop_oneof![Just(f64::INFINITY), 0.1f64..100.0], 0f64..12.0, 1f64..50.0, 0f64..1000.0),
        )
            .prop_map(|(dims, phy, radar, rest)| {
                let (cw_pow, q, m, k, slot) = dims;
                let mut scn = SystemScenario::new(m, k);
                scn.coherence_width = 1 << cw_pow;
                scn.subcarriers = scn.coherence_width * q;
                scn.packets_per_slot = slot;
                scn.training_packets = 1 + slot / 2;
                scn.subcarrier_spacing = phy.0;
                scn.cp_len = phy.1;
                scn.user_power = phy.2;
                scn.noise_psd_dbm_hz = phy.3;
                scn.noise_figure_db = phy.4;
                scn.radar.code_length = radar.0;
                scn.radar.code_seed = radar.1;
                scn.radar.n_scatterers = radar.2;
                scn.radar.tau_max = radar.3;
                scn.radar.delay_layout = if radar.4 { DelayLayout::Uniform } else { DelayLayout::Stratified };
                scn.radar.code_family = if radar.4 { CodeFamily::Random } else { CodeFamily::P4 };
                scn.radar.echo_count = radar.5;
                scn.radar.echo_decay = rest.0;
                scn.propagation.shadowing_sigma_db = rest.1;
                scn.propagation.d_min = rest.2;
                scn.propagation.d_max = rest.2 + rest.3;
                scn
            })
    }

    proptest! {
        #[test]
        fn text_round_trip(scn in arb_scenario()) {
            prop_assert!(scn.validate().is_ok());
            let back = parse_scenario(&scn.to_text()).unwrap();
            prop_assert_eq!(back, scn);
        }

        #[test]
        fn slot_timing_closes(n_pow in 4u32..13, cp in 0usize..500, slots in 1usize..30) {
            let mut scn = SystemScenario::new(1, 1);
            scn.subcarriers = 1 << n_pow;
            scn.cp_len = cp;
            scn.packets_per_slot = slots;
            scn.training_packets = 1;
            let total = scn.packets_per_slot as f64 * scn.packet_samples() as f64 * scn.symbol_time();
            prop_assert!((total - SLOT_DURATION).abs() <= 1e-12 * SLOT_DURATION);
        }
    }
}
