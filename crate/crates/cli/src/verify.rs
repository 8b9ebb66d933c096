//! Desk-scale property suite behind `coexist verify`.

use coexist_core::airlink::{build_pilot_book, draw_data_symbols, synth_training_packet, ReceivedFrame};
use coexist_core::channel::draw_channels;
use coexist_core::clutter::{
    calibrate_cnr, clutter_covariance, clutter_matrix, clutter_matrix_sign_flipped, contributing_scatterers,
    draw_scene, r_tilde, steering_vector, time_domain_oracle, RadarWaveform, SceneParams, Scatterer, ScattererScene,
};
use coexist_core::detection::{receiver_weights, ReceiverKind};
use coexist_core::dft::IsometricDft;
use coexist_core::estimation::estimate_all;
use coexist_core::linalg::{complex_gaussian, CMatrix, CVector};
use coexist_core::metrics::{analytic_sinr, empirical_sinr, sinr_db};
use coexist_core::montecarlo::{csv_string, run_sweep, run_sweep_with, SweepOptions, SweepPlan};
use coexist_core::scenario::{noise_power, CodeFamily, DelayLayout, SystemScenario, SLOT_DURATION};
use coexist_core::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const PROPERTIES: [&str; 9] = [
    "clutter-oracle",
    "covariance-sample",
    "covariance-closed-form",
    "zf-null-residual",
    "fzf-null-residual",
    "lmmse-dominance",
    "estimator-exactness",
    "sinr-cross-check",
    "sweep-determinism",
];

pub struct PropertyResult {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn result(name: &'static str, pass: bool, detail: String) -> PropertyResult {
    PropertyResult { name, pass, detail }
}

fn frob(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn small_scenario() -> SystemScenario {
    let mut s = SystemScenario::new(4, 1);
    s.subcarriers = 256;
    s.coherence_width = 8;
    s.cp_len = 18;
    s.radar.code_length = 8;
    s.radar.n_scatterers = 3;
    s.radar.echo_count = 8;
    s.radar.echo_decay = 2.0;
    s
}

fn clutter_oracle(break_sign: bool) -> PropertyResult {
    let base = small_scenario();
    let mut worst = 0.0f64;
    for seed in 0..6u64 {
        let mut scn = base.clone();
        scn.radar.code_family = if seed % 2 == 0 { CodeFamily::P4 } else { CodeFamily::Random };
        scn.radar.code_seed = seed;
        scn.radar.delay_layout = if seed % 3 == 0 { DelayLayout::Uniform } else { DelayLayout::Stratified };
        let scene = draw_scene(&mut ChaCha8Rng::seed_from_u64(500 + seed), &SceneParams::from_scenario(&scn));
        let Ok(wf) = RadarWaveform::from_scenario(&scn) else {
            return result("clutter-oracle", false, "invalid radar code".into());
        };
        let Some(ell) = (0..scn.packets_per_slot).find(|&l| !contributing_scatterers(&scene, l, &scn, wf.code.len()).is_empty())
        else {
            continue;
        };
        let fast = if break_sign {
            clutter_matrix_sign_flipped(&scene, &wf, ell, &scn)
        } else {
            clutter_matrix(&scene, &wf, ell, &scn)
        };
        match time_domain_oracle(&scene, &wf, ell, &scn) {
            Ok(slow) => worst = worst.max(frob(&(&fast - &slow)) / frob(&slow)),
            Err(e) => return result("clutter-oracle", false, e.to_string()),
        }
    }
    result("clutter-oracle", worst <= 1e-9, format!("max rel err {worst:.3e} (tol 1e-9)"))
}

fn covariance_sample() -> PropertyResult {
    let scn = small_scenario();
    let mut scene = draw_scene(&mut ChaCha8Rng::seed_from_u64(600), &SceneParams::from_scenario(&scn));
    let wf = RadarWaveform::from_scenario(&scn).expect("default code is valid");
    let ell = (0..scn.packets_per_slot)
        .max_by_key(|&l| contributing_scatterers(&scene, l, &scn, wf.code.len()).len())
        .unwrap_or(0);
    let n = 100;
    let redraws = 8000;
    let mut acc = CMatrix::zeros(scn.antennas, scn.antennas);
    let mut rng = ChaCha8Rng::seed_from_u64(601);
    for _ in 0..redraws {
        scene.redraw_coefficients(&mut rng);
        let col = clutter_matrix(&scene, &wf, ell, &scn).column(n).into_owned();
        acc += &col * col.adjoint();
    }
    let sample = acc / Complex64::from(redraws as f64);
    let model = clutter_covariance(&scene, &wf, ell, n, &scn).to_matrix(scn.antennas);
    let err = frob(&(&sample - &model)) / frob(&model);
    result("covariance-sample", err <= 0.05, format!("rel err {err:.4} over {redraws} redraws (tol 0.05)"))
}

/// One scatterer, two echoes, one-chip code: the second echo trails by a
/// fraction `f` of a sample, so the model has a closed form.
fn covariance_closed_form() -> PropertyResult {
    let mut scn = small_scenario();
    scn.radar.code_length = 1;
    let ell = 5;
    let ts = scn.symbol_time();
    let mut k = ell * scn.packet_samples() + scn.cp_len + 61;
    let tau = loop {
        let t = k as f64 * ts;
        if t / ts == k as f64 {
            break t;
        }
        k += 1;
    };
    let (v0, v1, theta) = (0.8, 0.3, 0.25);
    let scene = ScattererScene {
        scatterers: vec![Scatterer {
            delay: tau,
            angle: theta,
            echo_variance: vec![v0, v1],
            coefficients: vec![Complex64::new(1.0, 0.0); 2],
        }],
    };
    let wf = RadarWaveform { code: vec![Complex64::new(1.0, 0.0)], power: 3.0 };
    let f = ((scn.packets_per_slot * scn.packet_samples()) as f64 / (SLOT_DURATION * scn.bandwidth())).fract();
    let b = steering_vector(theta, scn.antennas, scn.element_spacing);
    let bbh = &b * b.adjoint();
    let nn = scn.subcarriers as f64;
    let mut worst = 0.0f64;
    for n in [0usize, 1, 77, 128, 255] {
        let phase = 2.0 * std::f64::consts::PI * n as f64 / nn;
        let r1 = ((1.0 - f).powi(2) + f * f + 2.0 * f * (1.0 - f) * phase.cos()) / nn;
        let want = &bbh * Complex64::from(wf.power * (v0 / nn + v1 * r1));
        let got = clutter_covariance(&scene, &wf, ell, n, &scn).to_matrix(scn.antennas);
        worst = worst.max(frob(&(&got - &want)) / frob(&want));
    }
    result("covariance-closed-form", worst <= 1e-12, format!("max rel err {worst:.3e} (tol 1e-12)"))
}

fn detector_sweep() -> Vec<PropertyResult> {
    let mut plan = SweepPlan::new(SystemScenario::desk(16, 3));
    plan.trials = 4;
    plan.master_seed = 11;
    let names = ["zf-null-residual", "fzf-null-residual", "lmmse-dominance"];
    match run_sweep_with(&plan, SweepOptions { workers: 0, diagnostics: true, progress: None }) {
        Ok(out) => {
            let d = out.diagnostics;
            vec![
                result(names[0], d.zf_null_residual <= 1e-12, format!("{:.3e} (tol 1e-12)", d.zf_null_residual)),
                result(names[1], d.fzf_null_residual <= 1e-10, format!("{:.3e} (tol 1e-10)", d.fzf_null_residual)),
                result(
                    names[2],
                    d.lmmse_margin >= -1e-9 && d.checked > 0,
                    format!("min relative margin {:.3e} over {} symbols (tol -1e-9)", d.lmmse_margin, d.checked),
                ),
            ]
        }
        Err(e) => names.iter().map(|&n| result(n, false, e.to_string())).collect(),
    }
}

fn estimator_exactness() -> PropertyResult {
    let mut worst = 0.0f64;
    for users in [1usize, 3, 8] {
        let scn = SystemScenario::desk(8, users);
        let d: Vec<f64> = (0..users).map(|k| 30.0 + 400.0 * k as f64 / users as f64).collect();
        let outcome = draw_channels(&mut ChaCha8Rng::seed_from_u64(700 + users as u64), &scn, &d, 8.0)
            .and_then(|ch| {
                let book = build_pilot_book(&scn)?;
                let powers = vec![scn.user_power; users];
                let frames: Vec<ReceivedFrame> = (0..scn.training_packets)
                    .map(|t| synth_training_packet(&ch, &book, t, None, None, &powers, &scn))
                    .collect();
                Ok((estimate_all(&frames, &book, &scn)?, ch))
            });
        match outcome {
            Ok((est, ch)) => {
                for (e, h) in est.h_hat.iter().flatten().zip(ch.h.iter().flatten()) {
                    worst = worst.max((e - h).norm() / h.norm());
                }
            }
            Err(e) => return result("estimator-exactness", false, e.to_string()),
        }
    }
    result("estimator-exactness", worst <= 1e-10, format!("max rel err {worst:.3e} (tol 1e-10)"))
}

fn sinr_cross_check() -> PropertyResult {
    let name = "sinr-cross-check";
    let scn = SystemScenario::desk(8, 2);
    let noise = noise_power(&scn);
    let Ok(ch) = draw_channels(&mut ChaCha8Rng::seed_from_u64(800), &scn, &[80.0, 250.0], 8.0) else {
        return result(name, false, "channel draw failed".into());
    };
    let scene = draw_scene(&mut ChaCha8Rng::seed_from_u64(801), &SceneParams::from_scenario(&scn));
    let unit = RadarWaveform::from_scenario(&scn).expect("default code is valid");
    let Ok(wf) = calibrate_cnr(&scene, &unit, &scn, 20.0, &noise) else {
        return result(name, false, "no clutter in scene".into());
    };
    let dft = IsometricDft::new(scn.subcarriers);
    let ell = scn.data_packets().start + 1;
    let n = 123;
    let truth = ch.block(scn.block_of(n));
    let powers = vec![scn.user_power; scn.users];
    let cov = clutter_covariance(&scene, &wf, ell, n, &scn);
    let terms: Vec<(CVector, Vec<(f64, Complex64)>)> = contributing_scatterers(&scene, ell, &scn, wf.code.len())
        .into_iter()
        .map(|qi| {
            let s = &scene.scatterers[qi];
            let b = steering_vector(s.angle, scn.antennas, scn.element_spacing);
            let per_echo = (0..s.echo_variance.len())
                .map(|m| (s.echo_variance[m], r_tilde(&scene, &wf, qi, ell, m, &scn)[n] * wf.power.sqrt()))
                .collect();
            (b, per_echo)
        })
        .collect();
    let mut worst = 0.0f64;
    let symbols = 20_000;
    for kind in ReceiverKind::ALL {
        let w = match receiver_weights(kind, &truth, &cov, &powers, noise.sigma_w2, 0) {
            Ok(w) => w,
            Err(e) => return result(name, false, format!("{kind}: {e}")),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(802);
        let mut soft = Vec::with_capacity(symbols);
        let mut sent = Vec::with_capacity(symbols);
        for _ in 0..symbols {
            let x = draw_data_symbols(&mut rng, &scn, &dft);
            let mut y = CVector::from_fn(scn.antennas, |_, _| complex_gaussian(&mut rng, noise.sigma_w2));
            for (b, per_echo) in &terms {
                let s: Complex64 = per_echo.iter().map(|&(v, r)| complex_gaussian(&mut rng, v) * r).sum();
                y += b * s;
            }
            for (k, h) in truth.iter().enumerate() {
                y += *h * (x.freq[k][n] * powers[k].sqrt());
            }
            soft.push(w.soft(&y));
            sent.push(x.freq[0][n]);
        }
        let ana = analytic_sinr(&w.w, &truth, &powers, noise.sigma_w2, &cov, 0).map(sinr_db);
        let emp = empirical_sinr(&soft, &sent).map(sinr_db);
        match (ana, emp) {
            (Ok(a), Ok(e)) => worst = worst.max((a - e).abs()),
            (Err(e), _) | (_, Err(e)) => return result(name, false, format!("{kind}: {e}")),
        }
    }
    result(name, worst <= 0.3, format!("max |analytic - empirical| {worst:.3} dB over {symbols} symbols (tol 0.3)"))
}

fn sweep_determinism() -> PropertyResult {
    let mut plan = SweepPlan::new(SystemScenario::desk(8, 2));
    plan.trials = 4;
    plan.master_seed = 12;
    match (run_sweep(&plan, 1), run_sweep(&plan, 3)) {
        (Ok(a), Ok(b)) => {
            let same = csv_string(&a) == csv_string(&b);
            result("sweep-determinism", same, format!("1 vs 3 workers byte-identical: {same}"))
        }
        (Err(e), _) | (_, Err(e)) => result("sweep-determinism", false, e.to_string()),
    }
}

pub fn run_all(break_clutter_sign: bool) -> Vec<PropertyResult> {
    let mut out = vec![clutter_oracle(break_clutter_sign), covariance_sample(), covariance_closed_form()];
    out.extend(detector_sweep());
    out.push(estimator_exactness());
    out.push(sinr_cross_check());
    out.push(sweep_determinism());
    out
}
