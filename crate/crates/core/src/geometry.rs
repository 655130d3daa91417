//! Scenes, potentials, chords and the mollified source.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3 { x, y, z }
    }
    pub const fn zero() -> Vec3 {
        Vec3 {
            x: 0.0,
            y: 0.0,
            z: 0.0,
        }
    }
    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }
    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }
    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }
    pub fn normalized(self) -> Vec3 {
        self * (1.0 / self.norm())
    }
    pub fn dist(self, o: Vec3) -> f64 {
        (self - o).norm()
    }
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
    /// Two unit vectors completing `self` (assumed unit) to a right-handed frame.
    pub fn orthonormal_pair(self) -> (Vec3, Vec3) {
        let helper = if self.x.abs() < 0.9 {
            Vec3::new(1.0, 0.0, 0.0)
        } else {
            Vec3::new(0.0, 1.0, 0.0)
        };
        let e1 = (helper - self * helper.dot(self)).normalized();
        let e2 = self.cross(e1);
        (e1, e2)
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}
impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}
impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}
impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}
impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec3,
    pub radius: f64,
}

impl Ball {
    pub fn contains(&self, x: Vec3) -> bool {
        x.dist(self.center) < self.radius
    }
}

/// Nested concentric balls: Omega inside G1 inside G, with S the boundary of G1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub omega_radius: f64,
    pub g1_radius: f64,
    pub g_radius: f64,
    pub epsilon: f64,
    pub k_band: (f64, f64),
}

pub fn build_scene(
    omega_radius: f64,
    g1_radius: f64,
    g_radius: f64,
    epsilon: f64,
    k_band: (f64, f64),
) -> Result<SceneConfig> {
    for (name, v) in [
        ("omega_radius", omega_radius),
        ("g1_radius", g1_radius),
        ("g_radius", g_radius),
        ("epsilon", epsilon),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "{name} must be positive, got {v}"
            )));
        }
    }
    if epsilon >= 1.0 {
        return Err(Error::InvalidArgument(format!(
            "epsilon must lie in (0,1), got {epsilon}"
        )));
    }
    if !(k_band.0 < k_band.1) {
        return Err(Error::InvalidArgument(format!(
            "empty band ({}, {})",
            k_band.0, k_band.1
        )));
    }
    if !(omega_radius + 2.0 * epsilon < g1_radius) {
        return Err(Error::SeparationViolated(format!(
            "omega_radius + 2 epsilon = {} is not below g1_radius = {}",
            omega_radius + 2.0 * epsilon,
            g1_radius
        )));
    }
    if !(g1_radius + 2.0 * epsilon < g_radius) {
        return Err(Error::SeparationViolated(format!(
            "g1_radius + 2 epsilon = {} is not below g_radius = {}",
            g1_radius + 2.0 * epsilon,
            g_radius
        )));
    }
    Ok(SceneConfig {
        omega_radius,
        g1_radius,
        g_radius,
        epsilon,
        k_band,
    })
}

impl SceneConfig {
    pub fn in_omega(&self, x: Vec3) -> bool {
        x.norm() < self.omega_radius
    }
    pub fn in_g(&self, x: Vec3) -> bool {
        x.norm() < self.g_radius
    }
    /// Radial projection onto S.
    pub fn project_to_s(&self, x: Vec3) -> Vec3 {
        x.normalized() * self.g1_radius
    }
}

/// A nonnegative potential, exposed as a sum of components each supported in a ball.
pub trait Potential: Sync {
    fn value(&self, x: Vec3) -> f64;

    fn n_components(&self) -> usize {
        1
    }

    fn component_value(&self, _i: usize, x: Vec3) -> f64 {
        self.value(x)
    }

    /// Ball containing the support of component `i`; `None` if it vanishes.
    fn component_ball(&self, i: usize) -> Option<Ball>;

    fn sup_norm(&self) -> f64;
}

/// Smooth compactly supported bump `amplitude * exp(-1/(1-(r/R)^2))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: Vec3,
    pub radius: f64,
    pub amplitude: f64,
}

impl Bump {
    pub fn new(center: Vec3, radius: f64, amplitude: f64) -> Bump {
        Bump {
            center,
            radius,
            amplitude,
        }
    }

    #[inline]
    pub fn value(&self, x: Vec3) -> f64 {
        let d = x - self.center;
        let s = d.dot(d) / (self.radius * self.radius);
        if s >= 1.0 {
            0.0
        } else {
            self.amplitude * (-1.0 / (1.0 - s)).exp()
        }
    }

    pub fn peak(&self) -> f64 {
        self.amplitude * (-1.0f64).exp()
    }
}

/// Sum of bumps, split into the unknown part (inside Omega) and the known background.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Phantom {
    pub unknown: Vec<Bump>,
    pub background: Vec<Bump>,
}

impl Phantom {
    pub fn new(unknown: Vec<Bump>, background: Vec<Bump>) -> Phantom {
        Phantom {
            unknown,
            background,
        }
    }

    pub fn empty() -> Phantom {
        Phantom::default()
    }

    pub fn known_part(&self) -> Phantom {
        Phantom {
            unknown: Vec::new(),
            background: self.background.clone(),
        }
    }

    fn bump(&self, i: usize) -> &Bump {
        if i < self.unknown.len() {
            &self.unknown[i]
        } else {
            &self.background[i - self.unknown.len()]
        }
    }

    pub fn validate(&self, scene: &SceneConfig) -> Result<()> {
        for b in self.unknown.iter().chain(&self.background) {
            if b.amplitude < 0.0 || b.radius <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "bump {b:?} has negative amplitude or radius"
                )));
            }
        }
        for b in &self.unknown {
            if b.center.norm() + b.radius > scene.omega_radius + 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "unknown bump {b:?} leaves Omega"
                )));
            }
        }
        for b in &self.background {
            if b.center.norm() + b.radius > scene.g_radius + 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "background bump {b:?} leaves G"
                )));
            }
        }
        Ok(())
    }
}

impl Potential for Phantom {
    fn value(&self, x: Vec3) -> f64 {
        self.unknown
            .iter()
            .chain(&self.background)
            .map(|b| b.value(x))
            .sum()
    }
    fn n_components(&self) -> usize {
        self.unknown.len() + self.background.len()
    }
    fn component_value(&self, i: usize, x: Vec3) -> f64 {
        self.bump(i).value(x)
    }
    fn component_ball(&self, i: usize) -> Option<Ball> {
        let b = self.bump(i);
        (b.amplitude > 0.0).then_some(Ball {
            center: b.center,
            radius: b.radius,
        })
    }
    fn sup_norm(&self) -> f64 {
        // Upper bound: overlapping bumps add at most their peaks.
        self.unknown
            .iter()
            .chain(&self.background)
            .map(|b| b.peak())
            .sum()
    }
}

/// Node-centred cubic grid: node (i,j,k) sits at `origin + h*(i,j,k)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub h: f64,
    pub origin: Vec3,
}

impl GridSpec {
    /// Grid covering the cube [-g, g]^3.
    pub fn covering(g_radius: f64, n: usize) -> GridSpec {
        let h = 2.0 * g_radius / (n as f64 - 1.0);
        GridSpec {
            n,
            h,
            origin: Vec3::new(-g_radius, -g_radius, -g_radius),
        }
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.n + j) * self.n + i
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin + Vec3::new(i as f64, j as f64, k as f64) * self.h
    }

    pub fn node_of(&self, idx: usize) -> Vec3 {
        let i = idx % self.n;
        let j = (idx / self.n) % self.n;
        let k = idx / (self.n * self.n);
        self.node(i, j, k)
    }

    /// Trilinear interpolation of node values; zero outside the grid.
    pub fn interpolate(&self, values: &[f64], x: Vec3) -> f64 {
        const SLACK: f64 = 1e-9;
        let p = (x - self.origin) * (1.0 / self.h);
        let top = (self.n - 1) as f64;
        let inside = |c: f64| (-SLACK..=top + SLACK).contains(&c);
        if !(inside(p.x) && inside(p.y) && inside(p.z)) {
            return 0.0;
        }
        let p = Vec3::new(
            p.x.clamp(0.0, top),
            p.y.clamp(0.0, top),
            p.z.clamp(0.0, top),
        );
        let i = (p.x.floor() as usize).min(self.n - 2);
        let j = (p.y.floor() as usize).min(self.n - 2);
        let k = (p.z.floor() as usize).min(self.n - 2);
        let (fx, fy, fz) = (p.x - i as f64, p.y - j as f64, p.z - k as f64);
        let v = |a: usize, b: usize, c: usize| values[self.index(i + a, j + b, k + c)];
        let c00 = v(0, 0, 0) * (1.0 - fx) + v(1, 0, 0) * fx;
        let c10 = v(0, 1, 0) * (1.0 - fx) + v(1, 1, 0) * fx;
        let c01 = v(0, 0, 1) * (1.0 - fx) + v(1, 0, 1) * fx;
        let c11 = v(0, 1, 1) * (1.0 - fx) + v(1, 1, 1) * fx;
        let c0 = c00 * (1.0 - fy) + c10 * fy;
        let c1 = c01 * (1.0 - fy) + c11 * fy;
        c0 * (1.0 - fz) + c1 * fz
    }

    /// Ball enclosing every cell touched by a nonzero node.
    pub fn support_ball(&self, values: &[f64]) -> Option<Ball> {
        let mut lo = Vec3::new(f64::MAX, f64::MAX, f64::MAX);
        let mut hi = Vec3::new(f64::MIN, f64::MIN, f64::MIN);
        let mut any = false;
        for (idx, v) in values.iter().enumerate() {
            if *v != 0.0 {
                let p = self.node_of(idx);
                lo = Vec3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z));
                hi = Vec3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z));
                any = true;
            }
        }
        any.then(|| {
            let c = (lo + hi) * 0.5;
            Ball {
                center: c,
                radius: (hi - lo).norm() * 0.5 + self.h * 3f64.sqrt(),
            }
        })
    }
}

/// Sampled potential q on a grid covering G.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialGrid {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub smoothness_order: u32,
    support: Option<Ball>,
}

impl PotentialGrid {
    pub fn new(grid: GridSpec, values: Vec<f64>, smoothness_order: u32) -> Result<PotentialGrid> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if smoothness_order != 2 && smoothness_order != 4 {
            return Err(Error::InvalidArgument(format!(
                "smoothness order must be 2 or 4, got {smoothness_order}"
            )));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "potential must be nonnegative, found {v}"
            )));
        }
        let support = grid.support_ball(&values);
        Ok(PotentialGrid {
            grid,
            values,
            smoothness_order,
            support,
        })
    }

    /// Samples `q` at the nodes of a grid covering G, forcing zero outside G.
    pub fn sample(
        q: &dyn Potential,
        scene: &SceneConfig,
        n: usize,
        smoothness_order: u32,
    ) -> Result<PotentialGrid> {
        let grid = GridSpec::covering(scene.g_radius, n);
        let values = (0..grid.len())
            .map(|idx| {
                let x = grid.node_of(idx);
                if scene.in_g(x) {
                    q.value(x).max(0.0)
                } else {
                    0.0
                }
            })
            .collect();
        PotentialGrid::new(grid, values, smoothness_order)
    }

    pub fn zeros(grid: GridSpec) -> PotentialGrid {
        PotentialGrid {
            grid,
            values: vec![0.0; grid.len()],
            smoothness_order: 2,
            support: None,
        }
    }
}

impl Potential for PotentialGrid {
    fn value(&self, x: Vec3) -> f64 {
        self.grid.interpolate(&self.values, x)
    }
    fn component_ball(&self, _i: usize) -> Option<Ball> {
        self.support
    }
    fn sup_norm(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }
}

/// Straight segment between a source on S and a receiver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chord {
    pub source: Vec3,
    pub receiver: Vec3,
}

impl Chord {
    pub fn new(source: Vec3, receiver: Vec3) -> Result<Chord> {
        if !source.is_finite() || !receiver.is_finite() {
            return Err(Error::InvalidArgument(
                "chord endpoints must be finite".into(),
            ));
        }
        if source.dist(receiver) == 0.0 {
            return Err(Error::InvalidArgument(
                "receiver coincides with source".into(),
            ));
        }
        Ok(Chord { source, receiver })
    }

    pub fn length(&self) -> f64 {
        self.source.dist(self.receiver)
    }

    /// Point at arclength fraction `u` in [0,1] from the source.
    pub fn point(&self, u: f64) -> Vec3 {
        self.source + (self.receiver - self.source) * u
    }

    /// Distance from the segment to a point.
    pub fn distance_to(&self, p: Vec3) -> f64 {
        let d = self.receiver - self.source;
        let u = ((p - self.source).dot(d) / d.dot(d)).clamp(0.0, 1.0);
        self.point(u).dist(p)
    }
}

fn uniform_direction(rng: &mut ChaCha8Rng) -> Vec3 {
    let z: f64 = rng.gen_range(-1.0..1.0);
    let phi: f64 = rng.gen_range(0.0..2.0 * PI);
    let s = (1.0 - z * z).sqrt();
    Vec3::new(s * phi.cos(), s * phi.sin(), z)
}

/// Sources uniform on S; receivers uniform in the shell eps/4 <= |x - x0| < eps.
pub fn measurement_pairs(
    scene: &SceneConfig,
    n_sources: usize,
    n_receivers_per_source: usize,
    seed: u64,
) -> Result<Vec<Chord>> {
    if n_sources == 0 || n_receivers_per_source == 0 {
        return Err(Error::InvalidArgument("counts must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = scene.epsilon;
    let r_in3 = (0.25 * eps).powi(3);
    let r_out3 = eps.powi(3);
    let mut chords = Vec::with_capacity(n_sources * n_receivers_per_source);
    for _ in 0..n_sources {
        let x0 = uniform_direction(&mut rng) * scene.g1_radius;
        for _ in 0..n_receivers_per_source {
            let u: f64 = rng.gen_range(0.0..1.0);
            let r = (r_in3 + u * (r_out3 - r_in3)).cbrt();
            let x = x0 + uniform_direction(&mut rng) * r;
            chords.push(Chord::new(x0, x)?);
        }
    }
    Ok(chords)
}

pub fn ellipsoid_contains(x: Vec3, x0: Vec3, t: f64, xi: Vec3) -> bool {
    x.dist(xi) + x0.dist(xi) < t
}

fn smooth_zero(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else {
        (-1.0 / u).exp()
    }
}

/// C-infinity radial cutoff: 1 on G1, 0 outside G.
pub fn cutoff(scene: &SceneConfig, x: Vec3) -> f64 {
    let s = (x.norm() - scene.g1_radius) / (scene.g_radius - scene.g1_radius);
    if s <= 0.0 {
        1.0
    } else if s >= 1.0 {
        0.0
    } else {
        let a = smooth_zero(1.0 - s);
        a / (a + smooth_zero(s))
    }
}

/// Analytic mollified point source `C * chi * (2 sqrt(pi sigma))^-3 exp(-|x-x0|^2/(4 sigma))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MollifiedSource {
    pub scene: SceneConfig,
    pub center: Vec3,
    pub sigma: f64,
    pub normalization: f64,
}

impl MollifiedSource {
    pub fn unnormalized(&self, x: Vec3) -> f64 {
        let chi = cutoff(&self.scene, x);
        if chi == 0.0 {
            return 0.0;
        }
        let r2 = (x - self.center).dot(x - self.center);
        chi * (2.0 * (PI * self.sigma).sqrt()).powi(-3) * (-r2 / (4.0 * self.sigma)).exp()
    }
}

impl Potential for MollifiedSource {
    fn value(&self, x: Vec3) -> f64 {
        self.normalization * self.unnormalized(x)
    }
    fn component_ball(&self, _i: usize) -> Option<Ball> {
        Some(Ball {
            center: Vec3::zero(),
            radius: self.scene.g_radius,
        })
    }
    fn sup_norm(&self) -> f64 {
        self.normalization * (2.0 * (PI * self.sigma).sqrt()).powi(-3)
    }
}

/// Source function g sampled on the potential grid, with its analytic form.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceGrid {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub exact: MollifiedSource,
}

impl SourceGrid {
    pub fn center(&self) -> Vec3 {
        self.exact.center
    }
    pub fn sigma(&self) -> f64 {
        self.exact.sigma
    }
    pub fn normalization(&self) -> f64 {
        self.exact.normalization
    }
    /// Node-sum quadrature of g over the grid.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.h.powi(3)
    }
}

impl Potential for SourceGrid {
    fn value(&self, x: Vec3) -> f64 {
        self.grid.interpolate(&self.values, x)
    }
    fn component_ball(&self, _i: usize) -> Option<Ball> {
        Some(Ball {
            center: Vec3::zero(),
            radius: self.exact.scene.g_radius + self.grid.h * 2.0,
        })
    }
    fn sup_norm(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }
}

pub fn mollified_source(
    scene: &SceneConfig,
    x0: Vec3,
    sigma: f64,
    grid_n: usize,
) -> Result<SourceGrid> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    if (x0.norm() - scene.g1_radius).abs() > 1e-9 * scene.g1_radius {
        return Err(Error::InvalidArgument("source centre must lie on S".into()));
    }
    let grid = GridSpec::covering(scene.g_radius, grid_n);
    let mut exact = MollifiedSource {
        scene: *scene,
        center: x0,
        sigma,
        normalization: 1.0,
    };
    let raw: Vec<f64> = (0..grid.len())
        .map(|idx| exact.unnormalized(grid.node_of(idx)))
        .collect();
    let total = raw.iter().sum::<f64>() * grid.h.powi(3);
    if !(total > 1e-300) || !total.is_finite() {
        return Err(Error::QuadratureFailure(format!(
            "normalization integral {total:e}"
        )));
    }
    exact.normalization = 1.0 / total;
    let values = raw.into_iter().map(|v| v / total).collect();
    Ok(SourceGrid {
        grid,
        values,
        exact,
    })
}

/// Composite trapezoid quadrature of q along the chord with `n_quad` nodes.
pub fn chord_integral(q: &dyn Potential, chord: &Chord, n_quad: usize) -> Result<f64> {
    if n_quad < 2 {
        return Err(Error::InvalidArgument("n_quad must be at least 2".into()));
    }
    let m = n_quad - 1;
    let mut acc = 0.5 * (q.value(chord.source) + q.value(chord.receiver));
    for i in 1..m {
        acc += q.value(chord.point(i as f64 / m as f64));
    }
    Ok(acc * chord.length() / m as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene() -> SceneConfig {
        build_scene(1.0, 1.5, 2.5, 0.2, (1.0, 5.0)).unwrap()
    }

    #[test]
    fn scene_examples() {
        assert!(build_scene(1.0, 1.5, 2.5, 0.2, (1.0, 5.0)).is_ok());
        assert!(matches!(
            build_scene(1.0, 1.3, 2.5, 0.2, (1.0, 5.0)),
            Err(Error::SeparationViolated(_))
        ));
        assert!(matches!(
            build_scene(1.0, 1.5, 1.8, 0.2, (1.0, 5.0)),
            Err(Error::SeparationViolated(_))
        ));
    }

    #[test]
    fn measurement_pairs_examples() {
        let s = scene();
        let chords = measurement_pairs(&s, 4, 2, 7).unwrap();
        assert_eq!(chords.len(), 8);
        for c in &chords {
            assert!(c.length() < 0.2 && c.length() >= 0.05 - 1e-12);
            assert!((c.source.norm() - 1.5).abs() < 1e-12);
            assert!(c.distance_to(Vec3::zero()) - s.omega_radius > s.epsilon);
        }
        assert_eq!(measurement_pairs(&s, 1, 1, 0).unwrap().len(), 1);
        assert_eq!(measurement_pairs(&s, 4, 2, 7).unwrap(), chords);
    }

    #[test]
    fn ellipsoid_examples() {
        let x = Vec3::zero();
        let x0 = Vec3::new(1.0, 0.0, 0.0);
        let xi = Vec3::new(0.5, 0.0, 0.0);
        assert!(ellipsoid_contains(x, x0, 1.5, xi));
        assert!(!ellipsoid_contains(x, x0, 0.9, xi));
        assert!(!ellipsoid_contains(x, x0, 1.5, Vec3::new(50.0, 0.0, 0.0)));
    }

    #[test]
    fn mollified_source_normalization_and_cutoff() {
        let s = scene();
        let x0 = Vec3::new(1.5, 0.0, 0.0);
        let a = mollified_source(&s, x0, 0.05, 41).unwrap();
        assert!((a.integral() - 1.0).abs() < 1e-6);
        for (idx, v) in a.values.iter().enumerate() {
            if !s.in_g(a.grid.node_of(idx)) {
                assert_eq!(*v, 0.0);
            }
        }
        // Peak scaling: value at x0 grows like sigma^(-3/2) while the cutoff is inactive.
        let a = mollified_source(&s, x0, 0.02, 101).unwrap();
        let b = mollified_source(&s, x0, 0.005, 101).unwrap();
        let ratio = b.exact.value(x0) / a.exact.value(x0);
        assert!((ratio / 8.0 - 1.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn chord_integral_examples() {
        let c = Chord::new(Vec3::new(-2.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0)).unwrap();
        assert_eq!(chord_integral(&Phantom::empty(), &c, 10).unwrap(), 0.0);
        let s = scene();
        let n = 81;
        let grid = GridSpec::covering(s.g_radius, n);
        let vals = (0..grid.len())
            .map(|i| {
                if grid.node_of(i).norm() < 1.0 {
                    2.0
                } else {
                    0.0
                }
            })
            .collect();
        let q = PotentialGrid::new(grid, vals, 2).unwrap();
        let through = chord_integral(&q, &c, 2001).unwrap();
        assert!((through - 4.0).abs() < 2.0 * 2.0 * grid.h, "{through}");
        let off = Chord::new(Vec3::new(-2.0, 0.6, 0.0), Vec3::new(2.0, 0.6, 0.0)).unwrap();
        let v = chord_integral(&q, &off, 2001).unwrap();
        assert!((v - 4.0 * 0.8).abs() < 4.0 * grid.h, "{v}");
    }

    #[test]
    fn chord_integral_second_order() {
        let c = Chord::new(Vec3::new(-1.5, 0.0, 0.0), Vec3::new(1.5, 0.3, 0.0)).unwrap();
        struct G;
        impl Potential for G {
            fn value(&self, x: Vec3) -> f64 {
                (-x.dot(x)).exp()
            }
            fn component_ball(&self, _i: usize) -> Option<Ball> {
                None
            }
            fn sup_norm(&self) -> f64 {
                1.0
            }
        }
        let i1 = chord_integral(&G, &c, 9).unwrap();
        let i2 = chord_integral(&G, &c, 17).unwrap();
        let i3 = chord_integral(&G, &c, 33).unwrap();
        let rate = ((i1 - i2) / (i2 - i3)).abs();
        assert!((rate - 4.0).abs() < 0.5, "rate {rate}");
    }

    #[test]
    fn potential_grid_rejects_negative() {
        let grid = GridSpec::covering(1.0, 3);
        let mut v = vec![0.0; 27];
        v[4] = -1.0;
        assert!(PotentialGrid::new(grid, v, 2).is_err());
    }
}
