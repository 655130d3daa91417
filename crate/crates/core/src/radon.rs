//! X-ray transform over chords of the measurement sphere, slice-wise filtered
//! back-projection and volume assembly.

use crate::error::{Error, Result};
use crate::geometry::{
    chord_integral, Chord, GridSpec, Potential, PotentialGrid, SceneConfig, Vec3,
};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

/// Plane `{x : x . normal = offset}` with an in-plane orthonormal frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub normal: Vec3,
    pub offset: f64,
    pub e1: Vec3,
    pub e2: Vec3,
}

impl Plane {
    pub fn new(normal: Vec3, offset: f64) -> Result<Plane> {
        if !(normal.norm() > 0.0) {
            return Err(Error::InvalidArgument(
                "plane normal must be nonzero".into(),
            ));
        }
        let n = normal.normalized();
        let (e1, e2) = if (n - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-14 {
            (Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0))
        } else {
            n.orthonormal_pair()
        };
        Ok(Plane {
            normal: n,
            offset,
            e1,
            e2,
        })
    }

    /// `z = offset` plane with the standard in-plane axes.
    pub fn horizontal(z: f64) -> Plane {
        Plane::new(Vec3::new(0.0, 0.0, 1.0), z).unwrap()
    }

    pub fn to_world(&self, x: f64, y: f64) -> Vec3 {
        self.normal * self.offset + self.e1 * x + self.e2 * y
    }

    pub fn to_plane(&self, p: Vec3) -> (f64, f64) {
        (p.dot(self.e1), p.dot(self.e2))
    }

    /// Radius of the disk cut from a sphere of radius `r` centred at the origin.
    pub fn disk_radius(&self, r: f64) -> f64 {
        (r * r - self.offset * self.offset).max(0.0).sqrt()
    }
}

/// `(theta, s)` of the line through two in-plane points, folded to `theta` in `[0, pi)`.
/// The line is `s (cos, sin) + u (-sin, cos)`.
pub fn line_parameters(a: (f64, f64), b: (f64, f64)) -> Result<(f64, f64)> {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len = dx.hypot(dy);
    if !(len > 0.0) {
        return Err(Error::InvalidArgument("degenerate chord".into()));
    }
    let mut theta = (-dx / len).atan2(dy / len);
    let mut s = a.0 * theta.cos() + a.1 * theta.sin();
    if theta < 0.0 {
        theta += PI;
        s = -s;
    }
    if theta >= PI {
        theta -= PI;
        s = -s;
    }
    Ok((theta, s))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sinogram {
    pub plane: Plane,
    /// Radius of the in-plane disk bounded by S.
    pub rho: f64,
    pub thetas: Vec<f64>,
    pub offsets: Vec<f64>,
    /// Row-major `values[i * n_s + j]` for `(thetas[i], offsets[j])`.
    pub values: Vec<f64>,
}

pub fn angle_grid(n_theta: usize) -> Vec<f64> {
    (0..n_theta)
        .map(|i| i as f64 * PI / n_theta as f64)
        .collect()
}

/// Cell-centred offsets strictly inside `(-rho, rho)`.
pub fn offset_grid(rho: f64, n_s: usize) -> Vec<f64> {
    let ds = 2.0 * rho / n_s as f64;
    (0..n_s).map(|j| -rho + (j as f64 + 0.5) * ds).collect()
}

impl Sinogram {
    pub fn n_theta(&self) -> usize {
        self.thetas.len()
    }

    pub fn n_s(&self) -> usize {
        self.offsets.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_s()..(i + 1) * self.n_s()]
    }

    pub fn zeros(plane: Plane, rho: f64, n_theta: usize, n_s: usize) -> Sinogram {
        Sinogram {
            plane,
            rho,
            thetas: angle_grid(n_theta),
            offsets: offset_grid(rho, n_s),
            values: vec![0.0; n_theta * n_s],
        }
    }

    /// `int p(theta_i, s) ds` for every angle.
    pub fn row_masses(&self) -> Vec<f64> {
        let ds = 2.0 * self.rho / self.n_s() as f64;
        (0..self.n_theta())
            .map(|i| self.row(i).iter().sum::<f64>() * ds)
            .collect()
    }

    /// Value at an arbitrary `(theta, s)`, using `p(theta + pi, -s) = p(theta, s)`,
    /// nearest angle and linear interpolation in `s`.
    pub fn at(&self, theta: f64, s: f64) -> f64 {
        let mut t = theta.rem_euclid(2.0 * PI);
        let mut s = s;
        if t >= PI {
            t -= PI;
            s = -s;
        }
        let dth = PI / self.n_theta() as f64;
        let mut i = (t / dth).round() as usize;
        if i == self.n_theta() {
            i = 0;
            s = -s;
        }
        interp_row(self.row(i), self.rho, s)
    }

    /// CSV matrix with a three-line header: plane, angle grid, offset grid.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        let n = self.plane.normal;
        let _ = writeln!(
            out,
            "# plane {:?} {:?} {:?} {:?} rho {:?}",
            n.x, n.y, n.z, self.plane.offset, self.rho
        );
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:?}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        let _ = writeln!(out, "# theta {}", join(&self.thetas));
        let _ = writeln!(out, "# s {}", join(&self.offsets));
        for i in 0..self.n_theta() {
            let _ = writeln!(out, "{}", join(self.row(i)));
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Sinogram> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        let bad = || Error::Format(format!("{} is not a sinogram CSV", path.display()));
        let nums = |s: &str, sep: char| -> Result<Vec<f64>> {
            s.split(sep)
                .filter(|t| !t.is_empty())
                .map(|t| t.trim().parse::<f64>().map_err(|_| bad()))
                .collect()
        };
        let head = lines
            .next()
            .and_then(|l| l.strip_prefix("# plane "))
            .ok_or_else(bad)?;
        let parts: Vec<&str> = head.split_whitespace().collect();
        if parts.len() != 6 || parts[4] != "rho" {
            return Err(bad());
        }
        let p: Vec<f64> = parts
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != 4)
            .map(|(_, t)| t.parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let plane = Plane::new(Vec3::new(p[0], p[1], p[2]), p[3])?;
        let thetas = nums(
            lines
                .next()
                .and_then(|l| l.strip_prefix("# theta "))
                .ok_or_else(bad)?,
            ',',
        )?;
        let offsets = nums(
            lines
                .next()
                .and_then(|l| l.strip_prefix("# s "))
                .ok_or_else(bad)?,
            ',',
        )?;
        let mut values = Vec::with_capacity(thetas.len() * offsets.len());
        for l in lines.filter(|l| !l.trim().is_empty()) {
            let row = nums(l, ',')?;
            if row.len() != offsets.len() {
                return Err(bad());
            }
            values.extend(row);
        }
        if values.len() != thetas.len() * offsets.len() {
            return Err(bad());
        }
        Ok(Sinogram {
            plane,
            rho: p[4],
            thetas,
            offsets,
            values,
        })
    }
}

fn interp_row(row: &[f64], rho: f64, s: f64) -> f64 {
    let n = row.len();
    let ds = 2.0 * rho / n as f64;
    let u = (s + rho) / ds - 0.5;
    if u <= -1.0 || u >= n as f64 {
        return 0.0;
    }
    let at = |j: isize| {
        if j < 0 || j >= n as isize {
            0.0
        } else {
            row[j as usize]
        }
    };
    let j = u.floor();
    let f = u - j;
    let j = j as isize;
    // Outside the first/last centres the row falls linearly to zero at +-rho.
    if j < 0 {
        return at(0) * (2.0 * (u + 0.5)).max(0.0).min(1.0);
    }
    if j >= n as isize - 1 {
        return at(n as isize - 1) * (2.0 * (n as f64 - 0.5 - u)).max(0.0).min(1.0);
    }
    at(j) * (1.0 - f) + at(j + 1) * f
}

/// Chords of S lying in `plane` at the sinogram nodes `(theta_i, s_j)`; returns `(chord, i, j)`.
pub fn plane_chords(
    scene: &SceneConfig,
    plane: &Plane,
    n_theta: usize,
    n_s: usize,
) -> Result<Vec<(Chord, usize, usize)>> {
    let rho = plane.disk_radius(scene.g1_radius);
    if !(rho > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "plane offset {} misses S",
            plane.offset
        )));
    }
    let mut out = Vec::with_capacity(n_theta * n_s);
    for (i, th) in angle_grid(n_theta).iter().enumerate() {
        let (c, s_) = (th.cos(), th.sin());
        for (j, s) in offset_grid(rho, n_s).iter().enumerate() {
            let half = (rho * rho - s * s).sqrt();
            let a = plane.to_world(s * c + half * s_, s * s_ - half * c);
            let b = plane.to_world(s * c - half * s_, s * s_ + half * c);
            out.push((Chord::new(a, b)?, i, j));
        }
    }
    Ok(out)
}

/// Bins in-plane chords of S into a `(theta, s)` grid; rows are filled by linear interpolation in `s`.
pub fn chords_to_sinogram(
    scene: &SceneConfig,
    line_integrals: &[(Chord, f64)],
    plane: &Plane,
    n_theta: usize,
    n_s: usize,
) -> Result<Sinogram> {
    let rho = plane.disk_radius(scene.g1_radius);
    if !(rho > 0.0) || n_theta == 0 || n_s == 0 {
        return Err(Error::InvalidArgument("empty sinogram grid".into()));
    }
    let tol = 1e-6 * scene.g1_radius;
    let dth = PI / n_theta as f64;
    let mut rows: Vec<Vec<(f64, f64)>> = vec![Vec::new(); n_theta];
    for (chord, v) in line_integrals {
        let ha = chord.source.dot(plane.normal) - plane.offset;
        let hb = chord.receiver.dot(plane.normal) - plane.offset;
        if ha.abs() > tol || hb.abs() > tol {
            continue;
        }
        let (theta, mut s) =
            line_parameters(plane.to_plane(chord.source), plane.to_plane(chord.receiver))?;
        let mut i = (theta / dth).round() as usize;
        if i == n_theta {
            i = 0;
            s = -s;
        }
        rows[i].push((s, *v));
    }
    let offsets = offset_grid(rho, n_s);
    let mut values = Vec::with_capacity(n_theta * n_s);
    for (i, row) in rows.iter_mut().enumerate() {
        if row.is_empty() {
            return Err(Error::InsufficientCoverage(i));
        }
        row.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut pts = Vec::with_capacity(row.len() + 2);
        pts.push((-rho, 0.0));
        pts.extend(row.iter().cloned());
        pts.push((rho, 0.0));
        for s in &offsets {
            let k = pts.partition_point(|p| p.0 <= *s).clamp(1, pts.len() - 1);
            let (s0, v0) = pts[k - 1];
            let (s1, v1) = pts[k];
            let f = if s1 > s0 { (s - s0) / (s1 - s0) } else { 0.0 };
            values.push(v0 + (v1 - v0) * f);
        }
    }
    Ok(Sinogram {
        plane: *plane,
        rho,
        thetas: angle_grid(n_theta),
        offsets,
        values,
    })
}

/// Forward sinogram of `q` over the plane's chords at the grid nodes.
pub fn sinogram_of(
    q: &dyn Potential,
    scene: &SceneConfig,
    plane: &Plane,
    n_theta: usize,
    n_s: usize,
    n_quad: usize,
) -> Result<Sinogram> {
    let chords = plane_chords(scene, plane, n_theta, n_s)?;
    let rho = plane.disk_radius(scene.g1_radius);
    let mut sino = Sinogram::zeros(*plane, rho, n_theta, n_s);
    for (c, i, j) in chords {
        sino.values[i * n_s + j] = chord_integral(q, &c, n_quad)?;
    }
    Ok(sino)
}

/// Square in-plane grid of `n x n` cell centres over `[-half_width, half_width]^2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceGrid {
    pub n: usize,
    pub half_width: f64,
}

impl SliceGrid {
    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * 2.0 * self.half_width / self.n as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    pub plane: Plane,
    pub grid: SliceGrid,
    /// `values[j * n + i]` at `(coord(i), coord(j))`.
    pub values: Vec<f64>,
}

impl Slice {
    /// Bilinear interpolation in plane coordinates, clamped to the grid.
    pub fn interpolate(&self, x: f64, y: f64) -> f64 {
        let n = self.grid.n;
        let h = 2.0 * self.grid.half_width / n as f64;
        let u = ((x + self.grid.half_width) / h - 0.5).clamp(0.0, (n - 1) as f64);
        let v = ((y + self.grid.half_width) / h - 0.5).clamp(0.0, (n - 1) as f64);
        let i = (u.floor() as usize).min(n.saturating_sub(2));
        let j = (v.floor() as usize).min(n.saturating_sub(2));
        let (fu, fv) = (u - i as f64, v - j as f64);
        let at = |a: usize, b: usize| self.values[(b.min(n - 1)) * n + a.min(n - 1)];
        (at(i, j) * (1.0 - fu) + at(i + 1, j) * fu) * (1.0 - fv)
            + (at(i, j + 1) * (1.0 - fu) + at(i + 1, j + 1) * fu) * fv
    }

    /// Slice of a known potential on the same grid.
    pub fn sample(q: &dyn Potential, plane: Plane, grid: SliceGrid) -> Slice {
        let mut values = Vec::with_capacity(grid.n * grid.n);
        for j in 0..grid.n {
            for i in 0..grid.n {
                values.push(q.value(plane.to_world(grid.coord(i), grid.coord(j))));
            }
        }
        Slice {
            plane,
            grid,
            values,
        }
    }
}

/// Ram-Lak kernel apodized by a raised cosine reaching zero at 0.9 Nyquist, as a
/// frequency response of length `p`.
fn ramp_response(n_s: usize, ds: f64, p: usize) -> Vec<Complex<f64>> {
    let mut h = vec![Complex::new(0.0, 0.0); p];
    for (idx, hv) in h.iter_mut().enumerate() {
        let n = if idx <= p / 2 {
            idx as isize
        } else {
            idx as isize - p as isize
        };
        if n.unsigned_abs() > n_s {
            continue;
        }
        let v = if n == 0 {
            1.0 / (4.0 * ds * ds)
        } else if n % 2 != 0 {
            -1.0 / ((n * n) as f64 * PI * PI * ds * ds)
        } else {
            0.0
        };
        *hv = Complex::new(v * ds, 0.0);
    }
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(p).process(&mut h);
    let cutoff = 0.9;
    for (idx, hv) in h.iter_mut().enumerate() {
        let f = if idx <= p / 2 {
            idx as f64
        } else {
            (p - idx) as f64
        } / (p as f64 / 2.0);
        let w = if f < cutoff {
            0.5 * (1.0 + (PI * f / cutoff).cos())
        } else {
            0.0
        };
        *hv *= w;
    }
    h
}

/// Filtered back-projection onto `grid`, zero outside the disk of radius `sinogram.rho`.
pub fn fbp_invert(sinogram: &Sinogram, grid: SliceGrid) -> Result<Slice> {
    let (n_theta, n_s) = (sinogram.n_theta(), sinogram.n_s());
    if (n_theta as f64) < PI / 2.0 * n_s as f64 {
        return Err(Error::PreconditionViolated(format!(
            "{n_theta} angles are too few for {n_s} offsets (need at least pi/2 * n_s)"
        )));
    }
    let ds = 2.0 * sinogram.rho / n_s as f64;
    let p = (2 * n_s).next_power_of_two() * 2;
    let response = ramp_response(n_s, ds, p);
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(p);
    let inv = planner.plan_fft_inverse(p);
    let mut filtered = vec![0.0; n_theta * n_s];
    for i in 0..n_theta {
        let mut buf: Vec<Complex<f64>> = (0..p)
            .map(|j| Complex::new(if j < n_s { sinogram.row(i)[j] } else { 0.0 }, 0.0))
            .collect();
        fwd.process(&mut buf);
        for (b, r) in buf.iter_mut().zip(&response) {
            *b *= r;
        }
        inv.process(&mut buf);
        for j in 0..n_s {
            filtered[i * n_s + j] = buf[j].re / p as f64;
        }
    }
    let trig: Vec<(f64, f64)> = sinogram.thetas.iter().map(|t| (t.cos(), t.sin())).collect();
    let mut values = vec![0.0; grid.n * grid.n];
    for jy in 0..grid.n {
        let y = grid.coord(jy);
        for ix in 0..grid.n {
            let x = grid.coord(ix);
            if x * x + y * y >= sinogram.rho * sinogram.rho {
                continue;
            }
            let mut acc = 0.0;
            for (i, (c, s)) in trig.iter().enumerate() {
                acc += interp_row(
                    &filtered[i * n_s..(i + 1) * n_s],
                    sinogram.rho,
                    x * c + y * s,
                );
            }
            values[jy * grid.n + ix] = acc * PI / n_theta as f64;
        }
    }
    Ok(Slice {
        plane: sinogram.plane,
        grid,
        values,
    })
}

/// Stacks parallel slices into a volume on `grid`: linear between slices (constant beyond
/// the end slices), known `q` outside Omega, negative values clamped to zero.
pub fn assemble_volume(
    slices: &[Slice],
    known: &dyn Potential,
    scene: &SceneConfig,
    grid: GridSpec,
) -> Result<PotentialGrid> {
    if slices.is_empty() {
        return Err(Error::InvalidArgument("no slices to assemble".into()));
    }
    let normal = slices[0].plane.normal;
    if slices
        .iter()
        .any(|s| (s.plane.normal - normal).norm() > 1e-12)
    {
        return Err(Error::InvalidArgument(
            "slices must share one normal".into(),
        ));
    }
    let mut order: Vec<&Slice> = slices.iter().collect();
    order.sort_by(|a, b| a.plane.offset.total_cmp(&b.plane.offset));
    let heights: Vec<f64> = order.iter().map(|s| s.plane.offset).collect();
    let values = (0..grid.len())
        .map(|idx| {
            let p = grid.node_of(idx);
            if !scene.in_omega(p) {
                return known.value(p);
            }
            let h = p.dot(normal);
            let k = heights.partition_point(|z| *z <= h);
            let eval = |s: &Slice| {
                let (x, y) = s.plane.to_plane(p);
                s.interpolate(x, y)
            };
            let v = if k == 0 {
                eval(order[0])
            } else if k == heights.len() {
                eval(order[k - 1])
            } else {
                let (z0, z1) = (heights[k - 1], heights[k]);
                let f = (h - z0) / (z1 - z0);
                eval(order[k - 1]) * (1.0 - f) + eval(order[k]) * f
            };
            v.max(0.0)
        })
        .collect();
    PotentialGrid::new(grid, values, 2)
}

/// Relative L2 error `|a - b| / |b|` over paired samples.
pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_scene, Ball, Bump, Phantom};

    fn scene() -> SceneConfig {
        build_scene(1.0, 1.5, 2.5, 0.2, (1.0, 5.0)).unwrap()
    }

    #[test]
    fn chord_through_center_has_zero_offset() {
        let (th, s) = line_parameters((-1.0, 0.0), (1.0, 0.0)).unwrap();
        assert!(s.abs() < 1e-15);
        assert!((th - PI / 2.0).abs() < 1e-15);
        let (_, s2) = line_parameters((-1.0, 0.3), (1.0, 0.3)).unwrap();
        assert!((s2.abs() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn binning_round_trips_node_chords() {
        let sc = scene();
        let plane = Plane::horizontal(0.2);
        let q = Phantom::new(vec![Bump::new(Vec3::new(0.1, 0.0, 0.2), 0.6, 1.0)], vec![]);
        let direct = sinogram_of(&q, &sc, &plane, 20, 12, 400).unwrap();
        let chords = plane_chords(&sc, &plane, 20, 12).unwrap();
        let data: Vec<(Chord, f64)> = chords
            .iter()
            .map(|(c, i, j)| (*c, direct.values[i * 12 + j]))
            .collect();
        let binned = chords_to_sinogram(&sc, &data, &plane, 20, 12).unwrap();
        for (a, b) in binned.values.iter().zip(&direct.values) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(matches!(
            chords_to_sinogram(&sc, &data[..12], &plane, 20, 12),
            Err(Error::InsufficientCoverage(1))
        ));
    }

    #[test]
    fn zero_and_linearity() {
        let plane = Plane::horizontal(0.0);
        let z = Sinogram::zeros(plane, 1.5, 60, 32);
        let g = SliceGrid {
            n: 16,
            half_width: 1.5,
        };
        assert!(fbp_invert(&z, g).unwrap().values.iter().all(|v| *v == 0.0));
        let mut a = z.clone();
        let mut b = z.clone();
        for (i, v) in a.values.iter_mut().enumerate() {
            *v = (i as f64 * 0.37).sin();
        }
        for (i, v) in b.values.iter_mut().enumerate() {
            *v = (i as f64 * 0.11).cos();
        }
        let mut ab = z.clone();
        for i in 0..ab.values.len() {
            ab.values[i] = a.values[i] + b.values[i];
        }
        let (fa, fb, fab) = (
            fbp_invert(&a, g).unwrap(),
            fbp_invert(&b, g).unwrap(),
            fbp_invert(&ab, g).unwrap(),
        );
        for i in 0..fab.values.len() {
            assert!((fab.values[i] - fa.values[i] - fb.values[i]).abs() < 1e-10);
        }
        assert!(matches!(
            fbp_invert(&Sinogram::zeros(plane, 1.5, 10, 32), g),
            Err(Error::PreconditionViolated(_))
        ));
    }

    #[test]
    fn smooth_bump_round_trip() {
        let sc = scene();
        let plane = Plane::horizontal(0.0);
        let q = Phantom::new(vec![Bump::new(Vec3::new(0.2, -0.1, 0.0), 0.7, 1.0)], vec![]);
        let sino = sinogram_of(&q, &sc, &plane, 90, 57, 600).unwrap();
        let grid = SliceGrid {
            n: 64,
            half_width: 1.5,
        };
        let rec = fbp_invert(&sino, grid).unwrap();
        let truth = Slice::sample(&q, plane, grid);
        let e = relative_l2(&rec.values, &truth.values);
        assert!(e < 0.1, "relative L2 {e}");
        let masses = sino.row_masses();
        let m0 = masses[0];
        assert!(masses.iter().all(|m| (m - m0).abs() < 0.01 * m0));
    }

    #[test]
    fn volume_keeps_known_part_exactly() {
        let sc = scene();
        let known = Phantom::new(vec![], vec![Bump::new(Vec3::new(0.0, 0.0, 1.8), 0.3, 0.5)]);
        let grid = GridSpec::covering(sc.g_radius, 21);
        let g = SliceGrid {
            n: 8,
            half_width: 1.5,
        };
        let slice = Slice {
            plane: Plane::horizontal(0.0),
            grid: g,
            values: vec![0.25; 64],
        };
        let vol = assemble_volume(&[slice], &known, &sc, grid).unwrap();
        for idx in 0..grid.len() {
            let p = grid.node_of(idx);
            if !sc.in_omega(p) {
                assert_eq!(vol.values[idx].to_bits(), known.value(p).to_bits());
            } else {
                assert_eq!(vol.values[idx], 0.25);
            }
        }
        let _ = Ball {
            center: Vec3::zero(),
            radius: 1.0,
        };
    }
}
