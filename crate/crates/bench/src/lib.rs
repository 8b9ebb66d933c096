//! Shared fixtures for the pipeline benchmarks.

use coexist_core::channel::draw_channels;
use coexist_core::clutter::{draw_scene, ClutterArtifacts, RadarWaveform, SceneParams};
use coexist_core::{ScattererScene, SystemScenario, UplinkChannelSet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One fixed drop at desk scale.
pub struct Fixture {
    pub scn: SystemScenario,
    pub scene: ScattererScene,
    pub waveform: RadarWaveform,
    pub channels: UplinkChannelSet,
    pub artifacts: ClutterArtifacts,
}

impl Fixture {
    pub fn desk(antennas: usize, users: usize, seed: u64) -> Self {
        let scn = SystemScenario::desk(antennas, users);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scene = draw_scene(&mut rng, &SceneParams::from_scenario(&scn));
        let waveform = RadarWaveform::from_scenario(&scn).expect("default radar code is valid");
        let distances: Vec<f64> = (0..users).map(|k| 40.0 + 400.0 * k as f64 / users.max(1) as f64).collect();
        let channels = draw_channels(&mut rng, &scn, &distances, 8.0).expect("distances inside the cell");
        let artifacts = ClutterArtifacts::build(&scene, &waveform, &scn);
        Fixture { scn, scene, waveform, channels, artifacts }
    }

    /// A data packet that has at least one contributing scatterer.
    pub fn busy_packet(&self) -> usize {
        let steering = self.scene.steering(self.scn.antennas, self.scn.element_spacing);
        self.scn
            .data_packets()
            .find(|&ell| !self.artifacts.covariance(ell, 0, &steering).is_zero())
            .unwrap_or(self.scn.data_packets().start)
    }
}
