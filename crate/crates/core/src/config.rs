//! Experiment configuration, stored as TOML.
//!
//! ```toml
//! problem = 1                  # 1..4
//! seed = 7
//! output_dir = "run"
//!
//! [scene]
//! omega_radius = 1.0
//! g1_radius = 1.5
//! g_radius = 2.5
//! epsilon = 0.2
//! k_min = 0.0                  # measured band (a, b)
//! k_max = 200.0
//!
//! [[phantom.unknown]]          # bumps inside Omega
//! center = { x = 0.2, y = -0.1, z = 0.05 }
//! radius = 0.7
//! amplitude = 0.4
//!
//! [solver]                     # time-domain Neumann series
//! n_terms = 1
//! dt = 0.004
//! tol_series = 0.25
//! n_tau = 12
//! n_phi = 10
//! n_scan = 64
//! vol_n = 16
//!
//! [spectral]
//! dk = 0.2
//! fit_window = [80.0, 180.0]
//! window_stride = 4
//! anchor = [0.3, 0.6]
//!
//! [tomography]
//! n_slices = 13
//! z_range = [-0.9, 0.9]
//! n_theta = 60
//! n_s = 36
//! slice_n = 48
//! volume_n = 33
//! ```
//!
//! The `[uniqueness]` and `[ip34]` tables configure the distinguishability probe and
//! the distributed-source study; every table has defaults.

use crate::error::{Error, Result};
use crate::forward_time::{NeumannOptions, SurfaceQuad, VolumeSourceOptions};
use crate::geometry::{build_scene, Bump, Phantom, SceneConfig, Vec3};
use crate::phase_retrieval::{symmetric_grid, PhaseOptions};
use crate::radon::{Plane, SliceGrid};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSection {
    pub omega_radius: f64,
    pub g1_radius: f64,
    pub g_radius: f64,
    pub epsilon: f64,
    pub k_min: f64,
    pub k_max: f64,
}

impl Default for SceneSection {
    fn default() -> Self {
        SceneSection {
            omega_radius: 1.0,
            g1_radius: 1.5,
            g_radius: 2.5,
            epsilon: 0.2,
            k_min: 0.0,
            k_max: 200.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSection {
    #[serde(default)]
    pub unknown: Vec<Bump>,
    #[serde(default)]
    pub background: Vec<Bump>,
}

impl Default for PhantomSection {
    fn default() -> Self {
        PhantomSection {
            unknown: vec![Bump::new(Vec3::new(0.2, -0.1, 0.05), 0.7, 0.4)],
            background: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub n_terms: usize,
    pub dt: f64,
    pub t_max: Option<f64>,
    pub tol_series: f64,
    pub n_tau: usize,
    pub n_phi: usize,
    pub n_scan: usize,
    pub vol_n: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            n_terms: 1,
            dt: 0.004,
            t_max: None,
            tol_series: 0.25,
            n_tau: 12,
            n_phi: 10,
            n_scan: 64,
            vol_n: 16,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralSection {
    pub dk: f64,
    pub fit_window: (f64, f64),
    /// Every `window_stride`-th grid node of the fit window is phase-retrieved and fitted.
    pub window_stride: usize,
    pub anchor: (f64, f64),
    /// Complex ground-truth traces are sealed for every `sealed_stride`-th chord.
    pub sealed_stride: usize,
    /// Height of the rectangle on which sealed traces are checked for upper-half-plane zeros.
    pub zero_check_height: f64,
}

impl Default for SpectralSection {
    fn default() -> Self {
        SpectralSection {
            dk: 0.2,
            fit_window: (80.0, 180.0),
            window_stride: 4,
            anchor: (0.3, 0.6),
            sealed_stride: 8,
            zero_check_height: 20.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TomographySection {
    pub n_slices: usize,
    pub z_range: (f64, f64),
    pub n_theta: usize,
    pub n_s: usize,
    pub slice_n: usize,
    pub volume_n: usize,
}

impl Default for TomographySection {
    fn default() -> Self {
        TomographySection {
            n_slices: 13,
            z_range: (-0.9, 0.9),
            n_theta: 60,
            n_s: 36,
            slice_n: 48,
            volume_n: 33,
        }
    }
}

/// Short chords for the distinguishability probe.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UniquenessSection {
    pub n_sources: usize,
    pub n_receivers: usize,
    pub k_max: f64,
    pub dk: f64,
    /// Added to the configured unknown part to form the second phantom.
    pub perturbation: Bump,
}

impl Default for UniquenessSection {
    fn default() -> Self {
        UniquenessSection {
            n_sources: 4,
            n_receivers: 2,
            k_max: 20.0,
            dk: 0.5,
            perturbation: Bump::new(Vec3::new(-0.3, 0.3, -0.2), 0.4, 0.1),
        }
    }
}

/// Distributed-source study: source centre direction on S, width, receivers on S.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ip34Section {
    pub source_direction: Vec3,
    pub sigma: f64,
    pub grid_n: usize,
    pub n_receivers: usize,
    /// Receivers lie within this angle (radians) of the source direction.
    pub cap_angle: f64,
    pub t_max: f64,
    pub dt: f64,
    pub k_max: f64,
    pub dk: f64,
    pub onset: f64,
}

impl Default for Ip34Section {
    fn default() -> Self {
        Ip34Section {
            source_direction: Vec3::new(0.0, 0.0, 1.0),
            sigma: 0.05,
            grid_n: 61,
            n_receivers: 3,
            cap_angle: 0.2,
            t_max: 5.5,
            dt: 0.005,
            k_max: 60.0,
            dk: 0.25,
            onset: 30.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: u8,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: String,
    #[serde(default)]
    pub scene: SceneSection,
    #[serde(default)]
    pub phantom: PhantomSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub spectral: SpectralSection,
    #[serde(default)]
    pub tomography: TomographySection,
    #[serde(default)]
    pub uniqueness: UniquenessSection,
    #[serde(default)]
    pub ip34: Ip34Section,
}

fn default_output() -> String {
    "run".into()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            problem: 1,
            seed: 0,
            output_dir: default_output(),
            scene: SceneSection::default(),
            phantom: PhantomSection::default(),
            solver: SolverSection::default(),
            spectral: SpectralSection::default(),
            tomography: TomographySection::default(),
            uniqueness: UniquenessSection::default(),
            ip34: Ip34Section::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_toml(s: &str) -> Result<ExperimentConfig> {
        let c: ExperimentConfig = toml::from_str(s).map_err(|e| Error::Format(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        ExperimentConfig::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    pub fn scene(&self) -> Result<SceneConfig> {
        let s = &self.scene;
        build_scene(
            s.omega_radius,
            s.g1_radius,
            s.g_radius,
            s.epsilon,
            (s.k_min, s.k_max),
        )
    }

    pub fn phantom(&self) -> Phantom {
        Phantom::new(
            self.phantom.unknown.clone(),
            self.phantom.background.clone(),
        )
    }

    /// The configured phantom with `uniqueness.perturbation` added to its unknown part.
    pub fn perturbed_phantom(&self) -> Phantom {
        let mut q = self.phantom();
        q.unknown.push(self.uniqueness.perturbation);
        q
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.problem) {
            return Err(Error::InvalidArgument(format!(
                "problem must be 1..4, got {}",
                self.problem
            )));
        }
        if self.seed > i64::MAX as u64 {
            return Err(Error::InvalidArgument(format!(
                "seed must fit in a TOML integer (at most {}), got {}",
                i64::MAX,
                self.seed
            )));
        }
        let scene = self.scene()?;
        if self.scene.k_min < 0.0 {
            return Err(Error::InvalidArgument("k_min must be nonnegative".into()));
        }
        self.phantom().validate(&scene)?;
        let sp = &self.spectral;
        if !(sp.dk > 0.0) || sp.window_stride == 0 || sp.sealed_stride == 0 {
            return Err(Error::InvalidArgument(
                "dk and the strides must be positive".into(),
            ));
        }
        if !(sp.fit_window.0 > 0.0
            && sp.fit_window.0 < sp.fit_window.1
            && sp.fit_window.1 <= self.scene.k_max)
        {
            return Err(Error::InvalidArgument(format!(
                "fit window {:?} must lie in (0, k_max]",
                sp.fit_window
            )));
        }
        let t = &self.tomography;
        if t.n_slices == 0 || t.n_theta == 0 || t.n_s == 0 || t.slice_n < 2 || t.volume_n < 2 {
            return Err(Error::InvalidArgument(
                "tomography grid sizes must be positive".into(),
            ));
        }
        if t.z_range.0 > t.z_range.1
            || t.z_range.0.abs().max(t.z_range.1.abs()) >= self.scene.g1_radius
        {
            return Err(Error::InvalidArgument(format!(
                "slice range {:?} must lie inside S",
                t.z_range
            )));
        }
        let last_arrival = 2.0 * (self.scene.g1_radius + self.scene.omega_radius);
        if self.problem >= 3 && !(self.ip34.t_max > last_arrival) {
            return Err(Error::InvalidArgument(format!(
                "ip34.t_max = {} must exceed the last single-scattering arrival {}",
                self.ip34.t_max, last_arrival
            )));
        }
        if self.solver.n_terms == 0 || !(self.solver.dt > 0.0) {
            return Err(Error::InvalidArgument(
                "solver needs n_terms >= 1 and dt > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn neumann_options(&self) -> NeumannOptions {
        let s = &self.solver;
        NeumannOptions {
            n_terms: s.n_terms,
            t_max: s.t_max,
            dt: s.dt,
            tol_series: s.tol_series,
            surface: SurfaceQuad {
                n_tau: s.n_tau,
                n_phi: s.n_phi,
                n_scan: s.n_scan,
            },
            vol_n: s.vol_n,
        }
    }

    pub fn volume_source_options(&self) -> VolumeSourceOptions {
        VolumeSourceOptions {
            n_terms: self.solver.n_terms,
            t_max: self.ip34.t_max,
            dt: self.ip34.dt,
            tol_series: self.solver.tol_series,
            ..VolumeSourceOptions::default()
        }
    }

    pub fn phase_options(&self) -> PhaseOptions {
        PhaseOptions {
            anchor: self.spectral.anchor,
            real_at_zero: true,
            ..PhaseOptions::default()
        }
    }

    /// Measured frequencies: the band `[k_min, k_max]` in steps of `dk`.
    pub fn band_grid(&self) -> Vec<f64> {
        let dk = self.spectral.dk;
        let n = ((self.scene.k_max - self.scene.k_min) / dk + 1e-9).floor() as usize;
        (0..=n).map(|i| self.scene.k_min + i as f64 * dk).collect()
    }

    /// Symmetric full-line grid the phase is retrieved on.
    pub fn full_grid(&self) -> Vec<f64> {
        let n_half = (self.scene.k_max / self.spectral.dk).round() as usize;
        symmetric_grid(n_half as f64 * self.spectral.dk, n_half)
    }

    pub fn planes(&self) -> Vec<Plane> {
        let t = &self.tomography;
        if t.n_slices == 1 {
            return vec![Plane::horizontal(0.5 * (t.z_range.0 + t.z_range.1))];
        }
        (0..t.n_slices)
            .map(|i| {
                Plane::horizontal(
                    t.z_range.0 + (t.z_range.1 - t.z_range.0) * i as f64 / (t.n_slices - 1) as f64,
                )
            })
            .collect()
    }

    pub fn slice_grid(&self) -> SliceGrid {
        SliceGrid {
            n: self.tomography.slice_n,
            half_width: self.scene.omega_radius,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = ExperimentConfig::default();
        let s = c.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&s).unwrap(), c);
    }

    #[test]
    fn minimal_file_uses_defaults() {
        let c = ExperimentConfig::from_toml("problem = 2\n").unwrap();
        assert_eq!(c.problem, 2);
        assert_eq!(c.tomography, TomographySection::default());
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::from_toml("problem = 5\n").is_err());
        assert!(ExperimentConfig::from_toml("problem = 1\nbogus = 3\n").is_err());
        let mut c = ExperimentConfig::default();
        c.phantom.unknown[0].amplitude = -1.0;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.phantom.unknown[0].center = Vec3::new(0.9, 0.0, 0.0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn grids() {
        let c = ExperimentConfig::default();
        let band = c.band_grid();
        assert_eq!(band.len(), 1001);
        assert!((band[1000] - 200.0).abs() < 1e-9);
        let full = c.full_grid();
        assert_eq!(full.len(), 2001);
        assert_eq!(c.planes().len(), 13);
    }
}
