//! Time-domain Cauchy problems: the progressing-wave Neumann series for a point
//! source and the Kirchhoff series for a distributed source.

use crate::error::{Error, Result};
use crate::geometry::{chord_integral, Ball, Chord, Potential, Vec3};
use crate::quad::{gauss_legendre, gauss_legendre_on, SphereRule};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceKind {
    /// Regular part behind the front of a point-source field.
    PointSource,
    /// Distributed-source field `V`.
    Distributed,
    /// Distributed-source scattered field `V - V0`.
    DistributedScattered,
    Generic,
}

/// Samples `values[j]` at `t_j = j*dt`; `values[front_index]` holds the right limit at the front.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeTrace {
    pub kind: TraceKind,
    pub chord: Option<Chord>,
    pub receiver: Vec3,
    pub dt: f64,
    pub front_index: usize,
    pub front_time: f64,
    pub values: Vec<f64>,
    pub decay_rate: Option<f64>,
}

impl TimeTrace {
    pub fn generic(dt: f64, front_index: usize, values: Vec<f64>) -> TimeTrace {
        TimeTrace {
            kind: TraceKind::Generic,
            chord: None,
            receiver: Vec3::zero(),
            dt,
            front_index,
            front_time: front_index as f64 * dt,
            values,
            decay_rate: None,
        }
    }

    pub fn t(&self, j: usize) -> f64 {
        j as f64 * self.dt
    }

    pub fn t_max(&self) -> f64 {
        self.t(self.values.len() - 1)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceQuad {
    pub n_tau: usize,
    pub n_phi: usize,
    /// Samples used to locate the parameter intervals where a ring meets a support ball.
    pub n_scan: usize,
}

impl Default for SurfaceQuad {
    fn default() -> Self {
        SurfaceQuad {
            n_tau: 20,
            n_phi: 16,
            n_scan: 64,
        }
    }
}

/// Prolate spheroidal frame with foci `x` (at `+a` on the axis) and `x0`.
struct Spheroid {
    mid: Vec3,
    e: Vec3,
    e1: Vec3,
    e2: Vec3,
    a: f64,
}

impl Spheroid {
    fn new(x: Vec3, x0: Vec3) -> Spheroid {
        let d = x.dist(x0);
        let e = (x - x0) * (1.0 / d);
        let (e1, e2) = e.orthonormal_pair();
        Spheroid {
            mid: (x + x0) * 0.5,
            e,
            e1,
            e2,
            a: 0.5 * d,
        }
    }
}

/// Parameter intervals of `[-1, 1]` on which `inside` holds, located by scanning and bisection.
fn intervals<F: Fn(f64) -> bool>(inside: F, n_scan: usize) -> Vec<(f64, f64)> {
    let taus: Vec<f64> = (0..=n_scan)
        .map(|i| -1.0 + 2.0 * i as f64 / n_scan as f64)
        .collect();
    let flags: Vec<bool> = taus.iter().map(|t| inside(*t)).collect();
    let refine = |mut lo: f64, mut hi: f64, lo_inside: bool| {
        for _ in 0..40 {
            let m = 0.5 * (lo + hi);
            if inside(m) == lo_inside {
                lo = m;
            } else {
                hi = m;
            }
        }
        0.5 * (lo + hi)
    };
    let mut out = Vec::new();
    let mut start: Option<f64> = if flags[0] { Some(-1.0) } else { None };
    for i in 1..taus.len() {
        match (flags[i - 1], flags[i]) {
            (false, true) => start = Some(refine(taus[i - 1], taus[i], false)),
            (true, false) => {
                let end = refine(taus[i - 1], taus[i], true);
                out.push((start.take().unwrap_or(taus[i - 1]), end));
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, 1.0));
    }
    out
}

/// Sum over support components of the surface integral `int int q dtau dphi` on the
/// spheroid `|x - xi| + |x0 - xi| = t`.
fn spheroid_integral(q: &dyn Potential, frame: &Spheroid, t: f64, sq: &SurfaceQuad) -> f64 {
    let a = frame.a;
    let sigma = t / (2.0 * a);
    if sigma < 1.0 {
        return 0.0;
    }
    let b = a * (sigma * sigma - 1.0).max(0.0).sqrt();
    let (gt, wt) = gauss_legendre(sq.n_tau);
    let (gp, wp) = gauss_legendre(sq.n_phi);
    let mut total = 0.0;
    for comp in 0..q.n_components() {
        let Some(ball) = q.component_ball(comp) else {
            continue;
        };
        let rel = ball.center - frame.mid;
        let cz = rel.dot(frame.e);
        let perp = rel - frame.e * cz;
        let crho = perp.norm();
        let phic = perp.dot(frame.e2).atan2(perp.dot(frame.e1));
        let r2 = ball.radius * ball.radius;
        let ring = |tau: f64| {
            let z = a * sigma * tau;
            let rho = b * (1.0 - tau * tau).max(0.0).sqrt();
            (z, rho)
        };
        let hits = |tau: f64| {
            let (z, rho) = ring(tau);
            (z - cz).powi(2) + (rho - crho).powi(2) < r2
        };
        for (t_lo, t_hi) in intervals(hits, sq.n_scan) {
            let c = 0.5 * (t_lo + t_hi);
            let h = 0.5 * (t_hi - t_lo);
            for (x, w) in gt.iter().zip(&wt) {
                let tau = c + h * x;
                let (z, rho) = ring(tau);
                let axis = frame.mid + frame.e * z;
                let point = |phi: f64| axis + (frame.e1 * phi.cos() + frame.e2 * phi.sin()) * rho;
                let denom = 2.0 * rho * crho;
                let gamma = if denom > 1e-14 {
                    ((z - cz).powi(2) + rho * rho + crho * crho - r2) / denom
                } else {
                    -2.0
                };
                let arc = if denom <= 1e-14 {
                    if (z - cz).powi(2) + rho * rho + crho * crho < r2 {
                        let dphi = 2.0 * PI / sq.n_phi as f64;
                        (0..sq.n_phi)
                            .map(|j| q.component_value(comp, point(j as f64 * dphi)))
                            .sum::<f64>()
                            * dphi
                    } else {
                        0.0
                    }
                } else if gamma <= -1.0 {
                    let dphi = 2.0 * PI / sq.n_phi as f64;
                    (0..sq.n_phi)
                        .map(|j| q.component_value(comp, point(phic + j as f64 * dphi)))
                        .sum::<f64>()
                        * dphi
                } else if gamma >= 1.0 {
                    0.0
                } else {
                    let half = gamma.acos();
                    gp.iter()
                        .zip(&wp)
                        .map(|(u, wu)| wu * q.component_value(comp, point(phic + half * u)))
                        .sum::<f64>()
                        * half
                };
                total += w * h * arc;
            }
        }
    }
    total
}

/// Range of focal sums `|x - xi| + |x0 - xi|` over a ball (a lower bound and an upper bound).
fn focal_range(x: Vec3, x0: Vec3, ball: &Ball) -> (f64, f64) {
    let d = x.dist(x0);
    let s = x.dist(ball.center) + x0.dist(ball.center);
    let chord = Chord {
        source: x0,
        receiver: x,
    };
    let lo = if chord.distance_to(ball.center) <= ball.radius {
        d
    } else {
        (s - 2.0 * ball.radius).max(d)
    };
    (lo, s + 2.0 * ball.radius)
}

/// First scattering iterate `U1(x, t)` as a surface integral over the spheroid.
pub fn first_iterate(q: &dyn Potential, x: Vec3, x0: Vec3, t: f64, sq: &SurfaceQuad) -> f64 {
    let d = x.dist(x0);
    if t < d * (1.0 - 1e-14) {
        return 0.0;
    }
    let frame = Spheroid::new(x, x0);
    -spheroid_integral(q, &frame, t.max(d), sq) / (32.0 * PI * PI)
}

/// Value of the regular part at the front, `-(8 pi |x - x0|)^-1 int_L q ds`.
pub fn near_front_limit(q: &dyn Potential, chord: &Chord, n_quad: usize) -> Result<f64> {
    Ok(-chord_integral(q, chord, n_quad)? / (8.0 * PI * chord.length()))
}

/// Polynomial extrapolation of the trace to the front from the first `m` samples behind it.
pub fn front_extrapolation(trace: &TimeTrace, m: usize) -> f64 {
    let i0 = trace.front_index;
    let xs: Vec<f64> = (1..=m).map(|j| j as f64 * trace.dt).collect();
    let mut ys: Vec<f64> = (1..=m).map(|j| trace.values[i0 + j]).collect();
    // Neville evaluation at tau = 0.
    for level in 1..m {
        for i in 0..m - level {
            ys[i] = (xs[i + level] * ys[i] - xs[i] * ys[i + 1]) / (xs[i + level] - xs[i]);
        }
    }
    ys[0]
}

/// Midpoint quadrature restricted to the support of a potential.
#[derive(Clone, Debug, PartialEq)]
pub struct VolumeQuadrature {
    pub nodes: Vec<Vec3>,
    pub weights: Vec<f64>,
    pub q: Vec<f64>,
    /// Radius of the ball with the same volume as a cell.
    pub self_radius: f64,
}

impl VolumeQuadrature {
    /// Cell-centred grid with `n` cells per axis over the bounding cube of all support balls.
    pub fn on_support(q: &dyn Potential, n: usize) -> VolumeQuadrature {
        let mut lo = Vec3::new(f64::MAX, f64::MAX, f64::MAX);
        let mut hi = Vec3::new(f64::MIN, f64::MIN, f64::MIN);
        let mut any = false;
        for c in 0..q.n_components() {
            if let Some(b) = q.component_ball(c) {
                let r = Vec3::new(b.radius, b.radius, b.radius);
                let (l, h) = (b.center - r, b.center + r);
                lo = Vec3::new(lo.x.min(l.x), lo.y.min(l.y), lo.z.min(l.z));
                hi = Vec3::new(hi.x.max(h.x), hi.y.max(h.y), hi.z.max(h.z));
                any = true;
            }
        }
        if !any || n == 0 {
            return VolumeQuadrature {
                nodes: vec![],
                weights: vec![],
                q: vec![],
                self_radius: 0.0,
            };
        }
        let side = (hi.x - lo.x).max(hi.y - lo.y).max(hi.z - lo.z);
        let h = side / n as f64;
        let w = h * h * h;
        let mut nodes = Vec::new();
        let mut qs = Vec::new();
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let p = lo + Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * h;
                    let v = q.value(p);
                    if v > 0.0 {
                        nodes.push(p);
                        qs.push(v);
                    }
                }
            }
        }
        let m = nodes.len();
        VolumeQuadrature {
            nodes,
            weights: vec![w; m],
            q: qs,
            self_radius: (3.0 * w / (4.0 * PI)).cbrt(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Samples of `U_m(eta, s)` on `s = s0 + j*dt`, zero before `s0` and after the last sample.
#[derive(Clone, Debug)]
struct Table {
    s0: f64,
    dt: f64,
    values: Vec<f64>,
}

impl Table {
    #[inline]
    fn eval(&self, s: f64) -> f64 {
        let u = (s - self.s0) / self.dt;
        if u < -1e-9 || self.values.is_empty() {
            return 0.0;
        }
        let u = u.max(0.0);
        let i = u.floor() as usize;
        if i + 1 >= self.values.len() {
            return if i < self.values.len() && (u - i as f64) < 1e-9 {
                self.values[i]
            } else {
                0.0
            };
        }
        let f = u - i as f64;
        self.values[i] * (1.0 - f) + self.values[i + 1] * f
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeumannOptions {
    pub n_terms: usize,
    /// Final time; derived from the support when `None`.
    pub t_max: Option<f64>,
    /// Upper bound on the time step; the step is shrunk so the front is a grid node.
    pub dt: f64,
    pub tol_series: f64,
    pub surface: SurfaceQuad,
    /// Cells per axis of the volume quadrature used for terms beyond the first.
    pub vol_n: usize,
}

impl Default for NeumannOptions {
    fn default() -> Self {
        NeumannOptions {
            n_terms: 2,
            t_max: None,
            dt: 0.01,
            tol_series: 0.25,
            surface: SurfaceQuad::default(),
            vol_n: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeumannTrace {
    pub trace: TimeTrace,
    /// `max_t |U_n(x, t)|` for each computed term.
    pub term_norms: Vec<f64>,
}

fn support_time(q: &dyn Potential, x: Vec3, x0: Vec3, n_terms: usize) -> f64 {
    let mut t: f64 = x.dist(x0);
    let mut diam: f64 = 0.0;
    for c in 0..q.n_components() {
        if let Some(b) = q.component_ball(c) {
            t = t.max(focal_range(x, x0, &b).1);
            diam = diam.max(2.0 * b.radius);
        }
    }
    let mut span: f64 = 0.0;
    for c in 0..q.n_components() {
        for e in 0..q.n_components() {
            if let (Some(a), Some(b)) = (q.component_ball(c), q.component_ball(e)) {
                span = span.max(a.center.dist(b.center) + a.radius + b.radius);
            }
        }
    }
    t + (n_terms.saturating_sub(1)) as f64 * span.max(diam)
}

/// Time grid with the front on a node: returns `(dt, front_index, n_samples)`.
pub fn front_aligned_grid(front: f64, t_max: f64, dt_max: f64) -> (f64, usize, usize) {
    if front <= 0.0 {
        let n = (t_max / dt_max).ceil() as usize + 1;
        return (dt_max, 0, n);
    }
    let i_f = (front / dt_max).ceil().max(1.0) as usize;
    let dt = front / i_f as f64;
    let n = ((t_max / dt).ceil() as usize).max(i_f + 2) + 1;
    (dt, i_f, n)
}

/// Self-cell correction `int_0^a r U(s - r) dr` with four Gauss points.
fn self_cell(table: &Table, s: f64, a: f64) -> f64 {
    let (r, w) = gauss_legendre_on(4, 0.0, a);
    r.iter()
        .zip(&w)
        .map(|(r, w)| w * r * table.eval(s - r))
        .sum()
}

/// Regular part `U~ = sum_{n>=1} U_n` at the receiver of `chord`.
pub fn neumann_point_source(
    q: &dyn Potential,
    chord: &Chord,
    opts: &NeumannOptions,
) -> Result<NeumannTrace> {
    if opts.n_terms == 0 {
        return Err(Error::InvalidArgument("n_terms must be at least 1".into()));
    }
    let x = chord.receiver;
    let x0 = chord.source;
    let d = chord.length();
    let t_max = opts
        .t_max
        .unwrap_or_else(|| support_time(q, x, x0, opts.n_terms) + 2.0 * opts.dt);
    if !(t_max > d) {
        return Err(Error::InvalidArgument(format!(
            "T = {t_max} must exceed the front time {d}"
        )));
    }
    let (dt, i_f, n) = front_aligned_grid(d, t_max, opts.dt);
    let mut total = vec![0.0; n];
    let mut term_norms = Vec::with_capacity(opts.n_terms);

    let balls: Vec<Ball> = (0..q.n_components())
        .filter_map(|c| q.component_ball(c))
        .collect();
    let frame = Spheroid::new(x, x0);
    let u1: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|j| {
            if j < i_f {
                return 0.0;
            }
            let t = if j == i_f { d } else { j as f64 * dt };
            if !balls.iter().any(|b| {
                let (lo, hi) = focal_range(x, x0, b);
                t >= lo - 1e-12 && t <= hi
            }) {
                return 0.0;
            }
            -spheroid_integral(q, &frame, t, &opts.surface) / (32.0 * PI * PI)
        })
        .collect();
    term_norms.push(u1.iter().fold(0.0f64, |m, v: &f64| m.max(v.abs())));
    for (t, u) in total.iter_mut().zip(&u1) {
        *t += u;
    }

    if opts.n_terms >= 2 {
        let vq = VolumeQuadrature::on_support(q, opts.vol_n);
        let a = vq.self_radius;
        // First-iterate tables at every quadrature node.
        let mut tables: Vec<Table> = vq
            .nodes
            .par_iter()
            .map(|eta| {
                let s0 = eta.dist(x0);
                let s_end = t_max - eta.dist(x);
                if s_end <= s0 {
                    return Table {
                        s0,
                        dt,
                        values: vec![],
                    };
                }
                let m = ((s_end - s0) / dt).ceil() as usize + 2;
                let f = Spheroid::new(*eta, x0);
                let values = (0..m)
                    .map(|j| {
                        -spheroid_integral(q, &f, s0 + j as f64 * dt, &opts.surface)
                            / (32.0 * PI * PI)
                    })
                    .collect();
                Table { s0, dt, values }
            })
            .collect();
        for term in 2..=opts.n_terms {
            let un: Vec<f64> = (0..n)
                .into_par_iter()
                .map(|j| {
                    if j < i_f {
                        return 0.0;
                    }
                    let t = j as f64 * dt;
                    let mut acc = 0.0;
                    for ((eta, tab), (w, qv)) in vq
                        .nodes
                        .iter()
                        .zip(&tables)
                        .zip(vq.weights.iter().zip(&vq.q))
                    {
                        let r = x.dist(*eta);
                        acc += w * qv * tab.eval(t - r) / (4.0 * PI * r);
                    }
                    -acc
                })
                .collect();
            term_norms.push(un.iter().fold(0.0f64, |m, v: &f64| m.max(v.abs())));
            for (t, u) in total.iter_mut().zip(&un) {
                *t += u;
            }
            if term < opts.n_terms {
                let next: Vec<Table> = (0..vq.len())
                    .into_par_iter()
                    .map(|i| {
                        let eta = vq.nodes[i];
                        let base = &tables[i];
                        let values = (0..base.values.len())
                            .map(|j| {
                                let s = base.s0 + j as f64 * dt;
                                let mut acc = 0.0;
                                for (k, (zeta, tab)) in vq.nodes.iter().zip(&tables).enumerate() {
                                    if k == i {
                                        continue;
                                    }
                                    let r = eta.dist(*zeta);
                                    acc +=
                                        vq.weights[k] * vq.q[k] * tab.eval(s - r) / (4.0 * PI * r);
                                }
                                -acc - vq.q[i] * self_cell(base, s, a)
                            })
                            .collect();
                        Table {
                            s0: base.s0,
                            dt,
                            values,
                        }
                    })
                    .collect();
                tables = next;
            }
        }
        let sup_sum = total.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let last = *term_norms.last().unwrap();
        if sup_sum > 0.0 && last > opts.tol_series * sup_sum {
            return Err(Error::SeriesNotConverged { last, sum: sup_sum });
        }
    }

    Ok(NeumannTrace {
        trace: TimeTrace {
            kind: TraceKind::PointSource,
            chord: Some(*chord),
            receiver: x,
            dt,
            front_index: i_f,
            front_time: d,
            values: total,
            decay_rate: None,
        },
        term_norms,
    })
}

/// Least-squares decay rate `-d ln|U| / dt` over samples in `window`.
pub fn estimate_decay_rate(trace: &TimeTrace, window: (f64, f64)) -> Result<f64> {
    if window.0 < trace.front_time || window.1 > trace.t_max() + 1e-12 || window.0 >= window.1 {
        return Err(Error::InvalidArgument(format!(
            "window {window:?} outside (front, T]"
        )));
    }
    let floor = 1e-300;
    let (x, y): (Vec<f64>, Vec<f64>) = trace
        .values
        .iter()
        .enumerate()
        .map(|(j, v)| (trace.t(j), *v))
        .filter(|(t, v)| *t >= window.0 && *t <= window.1 && v.abs() > floor)
        .map(|(t, v)| (t, v.abs().ln()))
        .unzip();
    if x.len() < 2 {
        return Err(Error::DegenerateWindow);
    }
    Ok(-crate::quad::ls_slope(&x, &y))
}

/// `V0(x, t) = (4 pi t)^-1 int_{|x - xi| = t} g dS`.
pub fn kirchhoff_v0(g: &dyn Potential, x: Vec3, t: f64, rule: &SphereRule) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    t * rule.mean(x, t, |p| g.value(p))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeSourceOptions {
    pub n_terms: usize,
    pub t_max: f64,
    pub dt: f64,
    pub tol_series: f64,
    /// Product rule orders for the Kirchhoff sphere means.
    pub inner: (usize, usize),
    /// Product rule orders for the outer shells of the first iterate.
    pub outer: (usize, usize),
    pub n_r: usize,
    pub vol_n: usize,
}

impl Default for VolumeSourceOptions {
    fn default() -> Self {
        VolumeSourceOptions {
            n_terms: 1,
            t_max: 6.0,
            dt: 0.01,
            tol_series: 0.25,
            inner: (12, 24),
            outer: (8, 16),
            n_r: 16,
            vol_n: 8,
        }
    }
}

/// Evaluator for the distributed-source series `V = V0 + V1 + ...`.
pub struct VolumeSourceSolver<'a> {
    pub q: &'a dyn Potential,
    pub g: &'a dyn Potential,
    pub opts: VolumeSourceOptions,
    inner: SphereRule,
    outer: SphereRule,
    balls: Vec<Ball>,
}

impl<'a> VolumeSourceSolver<'a> {
    pub fn new(q: &'a dyn Potential, g: &'a dyn Potential, opts: VolumeSourceOptions) -> Self {
        let balls = (0..q.n_components())
            .filter_map(|c| q.component_ball(c))
            .collect();
        VolumeSourceSolver {
            q,
            g,
            opts,
            inner: SphereRule::product(opts.inner.0, opts.inner.1),
            outer: SphereRule::product(opts.outer.0, opts.outer.1),
            balls,
        }
    }

    pub fn v0(&self, x: Vec3, t: f64) -> f64 {
        kirchhoff_v0(self.g, x, t, &self.inner)
    }

    /// Radii of spheres about `x` that can meet the support of q.
    fn shell_range(&self, x: Vec3) -> Option<(f64, f64)> {
        let mut lo = f64::MAX;
        let mut hi: f64 = 0.0;
        for b in &self.balls {
            let c = x.dist(b.center);
            lo = lo.min((c - b.radius).max(0.0));
            hi = hi.max(c + b.radius);
        }
        (hi > 0.0).then_some((lo, hi))
    }

    /// `V1(x,t) = -int_0^t r <q V0(., t - r)>_{S(x,r)} dr`.
    pub fn v1(&self, x: Vec3, t: f64) -> f64 {
        let Some((lo, hi)) = self.shell_range(x) else {
            return 0.0;
        };
        let top = hi.min(t);
        if top <= lo || t <= 0.0 {
            return 0.0;
        }
        let (rs, ws) = gauss_legendre_on(self.opts.n_r, lo, top);
        let mut acc = 0.0;
        for (r, w) in rs.iter().zip(&ws) {
            let s = t - r;
            let mean = self.outer.mean(x, *r, |p| {
                let qv = self.q.value(p);
                if qv == 0.0 {
                    0.0
                } else {
                    qv * self.v0(p, s)
                }
            });
            acc += w * r * mean;
        }
        -acc
    }

    /// Pointwise `V0 + V1`.
    pub fn first_order(&self, x: Vec3, t: f64) -> f64 {
        self.v0(x, t) + self.v1(x, t)
    }
}

/// Distributed-source field on a set of points.
#[derive(Clone, Debug, PartialEq)]
pub struct CauchyField {
    pub points: Vec<Vec3>,
    pub dt: f64,
    pub values: Vec<Vec<f64>>,
    /// `V0` at the same samples, kept so the scattered part can be formed.
    pub incident: Option<Vec<Vec<f64>>>,
    pub term_norms: Vec<f64>,
}

impl CauchyField {
    pub fn n_t(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn trace(&self, i: usize) -> TimeTrace {
        TimeTrace {
            kind: if self.incident.is_some() {
                TraceKind::Distributed
            } else {
                TraceKind::DistributedScattered
            },
            chord: None,
            receiver: self.points[i],
            dt: self.dt,
            front_index: 0,
            front_time: 0.0,
            values: self.values[i].clone(),
            decay_rate: None,
        }
    }
}

/// `V = sum_{n < n_terms+1} V_n` on `points`, with `V_n` for `n >= 2` from midpoint
/// tables of `V_{n-1}` at support nodes.
pub fn neumann_volume_source(
    q: &dyn Potential,
    g: &dyn Potential,
    points: &[Vec3],
    opts: &VolumeSourceOptions,
) -> Result<CauchyField> {
    if opts.n_terms == 0 {
        return Err(Error::InvalidArgument("n_terms must be at least 1".into()));
    }
    let solver = VolumeSourceSolver::new(q, g, *opts);
    let n = (opts.t_max / opts.dt).ceil() as usize + 1;
    let dt = opts.dt;
    let v0: Vec<Vec<f64>> = points
        .par_iter()
        .map(|x| (0..n).map(|j| solver.v0(*x, j as f64 * dt)).collect())
        .collect();
    let v1: Vec<Vec<f64>> = points
        .par_iter()
        .map(|x| (0..n).map(|j| solver.v1(*x, j as f64 * dt)).collect())
        .collect();
    let mut values: Vec<Vec<f64>> = v0
        .iter()
        .zip(&v1)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
        .collect();
    let sup = |f: &Vec<Vec<f64>>| f.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut term_norms = vec![sup(&v0), sup(&v1)];

    if opts.n_terms >= 2 {
        let vq = VolumeQuadrature::on_support(q, opts.vol_n);
        let a = vq.self_radius;
        let mut tables: Vec<Table> = vq
            .nodes
            .par_iter()
            .map(|eta| Table {
                s0: 0.0,
                dt,
                values: (0..n).map(|j| solver.v1(*eta, j as f64 * dt)).collect(),
            })
            .collect();
        for term in 2..=opts.n_terms {
            let vn: Vec<Vec<f64>> = points
                .par_iter()
                .map(|x| {
                    (0..n)
                        .map(|j| {
                            let t = j as f64 * dt;
                            let mut acc = 0.0;
                            for (k, (eta, tab)) in vq.nodes.iter().zip(&tables).enumerate() {
                                let r = x.dist(*eta);
                                if r < 1e-12 {
                                    acc += vq.q[k] * self_cell(tab, t, a);
                                } else {
                                    acc +=
                                        vq.weights[k] * vq.q[k] * tab.eval(t - r) / (4.0 * PI * r);
                                }
                            }
                            -acc
                        })
                        .collect()
                })
                .collect();
            term_norms.push(sup(&vn));
            for (v, add) in values.iter_mut().zip(&vn) {
                for (a, b) in v.iter_mut().zip(add) {
                    *a += b;
                }
            }
            if term < opts.n_terms {
                tables = (0..vq.len())
                    .into_par_iter()
                    .map(|i| {
                        let eta = vq.nodes[i];
                        let vals = (0..n)
                            .map(|j| {
                                let s = j as f64 * dt;
                                let mut acc = 0.0;
                                for (k, (zeta, tab)) in vq.nodes.iter().zip(&tables).enumerate() {
                                    if k != i {
                                        let r = eta.dist(*zeta);
                                        acc += vq.weights[k] * vq.q[k] * tab.eval(s - r)
                                            / (4.0 * PI * r);
                                    }
                                }
                                -acc - vq.q[i] * self_cell(&tables[i], s, a)
                            })
                            .collect();
                        Table {
                            s0: 0.0,
                            dt,
                            values: vals,
                        }
                    })
                    .collect();
            }
        }
    }
    if opts.n_terms >= 1 && term_norms.len() >= 3 {
        let last = *term_norms.last().unwrap();
        let total = sup(&values);
        if total > 0.0 && last > opts.tol_series * total {
            return Err(Error::SeriesNotConverged { last, sum: total });
        }
    }
    Ok(CauchyField {
        points: points.to_vec(),
        dt,
        values,
        incident: Some(v0),
        term_norms,
    })
}

/// `V_s = V - V0`.
pub fn scattered_time_field(field: &CauchyField) -> Result<CauchyField> {
    let v0 = field
        .incident
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("field has no incident part to subtract".into()))?;
    let values = field
        .values
        .iter()
        .zip(v0)
        .map(|(v, w)| v.iter().zip(w).map(|(a, b)| a - b).collect())
        .collect();
    Ok(CauchyField {
        points: field.points.clone(),
        dt: field.dt,
        values,
        incident: None,
        term_norms: field.term_norms.iter().skip(1).cloned().collect(),
    })
}

/// Derivatives of order 0..=3 at `t = 0` of a trace that is odd in `t`, using the
/// odd extension `f(-t) = -f(t)` and five-point central stencils.
pub fn odd_derivatives_at_zero(samples: &[f64], dt: f64) -> [f64; 4] {
    let f = |j: isize| {
        if j >= 0 {
            samples[j as usize]
        } else {
            -samples[(-j) as usize]
        }
    };
    [
        f(0),
        (f(-2) - 8.0 * f(-1) + 8.0 * f(1) - f(2)) / (12.0 * dt),
        (f(1) - 2.0 * f(0) + f(-1)) / (dt * dt),
        (f(2) - 2.0 * f(1) + 2.0 * f(-1) - f(-2)) / (2.0 * dt.powi(3)),
    ]
}

/// Residual of the integral equation `V = V0 - int q V(., t - |x - xi|)/(4 pi |x - xi|)`
/// at `(x, t)`, with `V` on the right taken pointwise as `V0 + V1`.
pub fn volume_source_residual(
    solver: &VolumeSourceSolver,
    field: &CauchyField,
    i: usize,
    j: usize,
) -> f64 {
    let x = field.points[i];
    let t = j as f64 * field.dt;
    let Some((lo, hi)) = solver.shell_range(x) else {
        return field.values[i][j] - solver.v0(x, t);
    };
    let top = hi.min(t);
    let mut integral = 0.0;
    if top > lo {
        let (rs, ws) = gauss_legendre_on(solver.opts.n_r, lo, top);
        for (r, w) in rs.iter().zip(&ws) {
            let mean = solver.outer.mean(x, *r, |p| {
                let qv = solver.q.value(p);
                if qv == 0.0 {
                    0.0
                } else {
                    qv * solver.first_order(p, t - r)
                }
            });
            integral += w * r * mean;
        }
    }
    field.values[i][j] - (solver.v0(x, t) - integral)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Bump, Phantom};

    fn bump_phantom() -> Phantom {
        Phantom::new(
            vec![Bump::new(Vec3::new(0.1, 0.05, -0.1), 0.5, 0.3)],
            vec![],
        )
    }

    #[test]
    fn zero_potential_gives_zero_trace() {
        let c = Chord::new(Vec3::new(-1.5, 0.0, 0.0), Vec3::new(1.5, 0.0, 0.0)).unwrap();
        let opts = NeumannOptions {
            t_max: Some(5.0),
            ..Default::default()
        };
        let r = neumann_point_source(&Phantom::empty(), &c, &opts).unwrap();
        assert!(r.trace.values.iter().all(|v| *v == 0.0));
        assert!(matches!(
            estimate_decay_rate(&r.trace, (3.1, 4.9)),
            Err(Error::DegenerateWindow)
        ));
    }

    #[test]
    fn front_value_is_line_integral_over_eight_pi_d() {
        let q = bump_phantom();
        let c = Chord::new(Vec3::new(-1.5, 0.0, 0.0), Vec3::new(1.4, 0.2, 0.1)).unwrap();
        let u = first_iterate(
            &q,
            c.receiver,
            c.source,
            c.length(),
            &SurfaceQuad::default(),
        );
        let expect = near_front_limit(&q, &c, 4001).unwrap();
        assert!((u / expect - 1.0).abs() < 1e-6, "{u} vs {expect}");
    }

    #[test]
    fn trace_is_causal_and_extrapolates_to_front() {
        let q = bump_phantom();
        let c = Chord::new(Vec3::new(-1.5, 0.0, 0.0), Vec3::new(1.4, 0.2, 0.1)).unwrap();
        let opts = NeumannOptions {
            n_terms: 1,
            dt: 0.005,
            ..Default::default()
        };
        let r = neumann_point_source(&q, &c, &opts).unwrap();
        let tr = &r.trace;
        assert!(tr.values[..tr.front_index].iter().all(|v| *v == 0.0));
        assert!((tr.front_index as f64 * tr.dt - c.length()).abs() < 1e-12);
        let ex = front_extrapolation(tr, 4);
        let expect = near_front_limit(&q, &c, 4001).unwrap();
        assert!((ex / expect - 1.0).abs() < 0.02, "{ex} vs {expect}");
    }

    #[test]
    fn synthetic_decay_rate() {
        let dt = 0.01;
        let v: Vec<f64> = (0..500).map(|j| (-2.0 * j as f64 * dt).exp()).collect();
        let tr = TimeTrace::generic(dt, 0, v);
        assert!((estimate_decay_rate(&tr, (0.5, 4.5)).unwrap() - 2.0).abs() < 0.05);
    }

    #[test]
    fn kirchhoff_examples() {
        struct One;
        impl Potential for One {
            fn value(&self, _x: Vec3) -> f64 {
                1.0
            }
            fn component_ball(&self, _i: usize) -> Option<Ball> {
                None
            }
            fn sup_norm(&self) -> f64 {
                1.0
            }
        }
        let rule = SphereRule::product(8, 16);
        assert!((kirchhoff_v0(&One, Vec3::zero(), 0.7, &rule) - 0.7).abs() < 1e-14);
        let far = bump_phantom();
        assert_eq!(
            kirchhoff_v0(&far, Vec3::new(5.0, 0.0, 0.0), 0.5, &rule),
            0.0
        );
    }

    #[test]
    fn odd_stencils_recover_cubic() {
        let dt = 0.01;
        let c = 0.37;
        let s: Vec<f64> = (0..10)
            .map(|j| -c * (j as f64 * dt).powi(3) / 6.0)
            .collect();
        let d = odd_derivatives_at_zero(&s, dt);
        assert_eq!(d[0], 0.0);
        assert!(d[1].abs() < 1e-10 && d[2].abs() < 1e-12);
        assert!((d[3] + c).abs() < 1e-9);
    }
}
