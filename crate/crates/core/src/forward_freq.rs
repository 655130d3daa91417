//! Frequency-domain fields: incident waves, the Fourier bridge from time traces,
//! a Born-series volume oracle, high-k asymptotics and line-integral extraction.

use crate::error::{Error, Result};
use crate::forward_time::{odd_derivatives_at_zero, TimeTrace, TraceKind, VolumeQuadrature};
use crate::geometry::{Chord, Potential, Vec3};
use crate::io;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Leading behaviour `d(k) ~ C e^{ikL} / k^n` as `k -> +inf`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticSignature {
    pub c: Complex64,
    pub n: u32,
    pub l: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralTrace {
    pub k: Vec<f64>,
    pub values: Vec<Complex64>,
    pub signature: AsymptoticSignature,
}

impl SpectralTrace {
    /// `max_k |d(-k) - conj d(k)|` relative to the sup norm, over mirrored grid pairs.
    pub fn conjugate_symmetry_error(&self) -> f64 {
        let n = self.k.len();
        let sup = self
            .values
            .iter()
            .fold(0.0f64, |m, v| m.max(v.norm()))
            .max(f64::MIN_POSITIVE);
        let mut err: f64 = 0.0;
        for i in 0..n / 2 {
            let j = n - 1 - i;
            if (self.k[i] + self.k[j]).abs() > 1e-9 * self.k[j].abs().max(1.0) {
                return f64::INFINITY;
            }
            err = err.max((self.values[i] - self.values[j].conj()).norm());
        }
        err / sup
    }

    /// Rows `k, Re, Im`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let rows: Vec<Vec<f64>> = self
            .k
            .iter()
            .zip(&self.values)
            .map(|(k, v)| vec![*k, v.re, v.im])
            .collect();
        io::write_csv(path, "k,re,im", &rows)
    }

    pub fn read_csv(path: &Path, signature: AsymptoticSignature) -> Result<SpectralTrace> {
        let rows = io::read_csv(path)?;
        let mut k = Vec::with_capacity(rows.len());
        let mut values = Vec::with_capacity(rows.len());
        for r in rows {
            if r.len() < 3 {
                return Err(Error::Format("spectral CSV rows need k, re, im".into()));
            }
            k.push(r[0]);
            values.push(Complex64::new(r[1], r[2]));
        }
        Ok(SpectralTrace {
            k,
            values,
            signature,
        })
    }
}

/// `e^{ik|x-x0|} / (4 pi |x-x0|)`.
pub fn incident_field(chord: &Chord, k: f64) -> Complex64 {
    incident_field_c(chord.length(), Complex64::new(k, 0.0))
}

pub fn incident_field_c(r: f64, k: Complex64) -> Complex64 {
    (I * k * r).exp() / (4.0 * PI * r)
}

/// Outgoing Green function `e^{ikr} / (4 pi r)`.
#[inline]
pub fn green(r: f64, k: f64) -> Complex64 {
    Complex64::from_polar(1.0 / (4.0 * PI * r), k * r)
}

/// Filon weights `A0 = int_0^h e^{iks} ds`, `A1 = int_0^h (s/h) e^{iks} ds`.
fn filon_weights(h: f64, k: Complex64) -> (Complex64, Complex64) {
    let theta = k * h;
    if theta.norm() < 0.1 {
        let mut a0 = Complex64::new(0.0, 0.0);
        let mut a1 = Complex64::new(0.0, 0.0);
        let mut term = Complex64::new(1.0, 0.0);
        for n in 0..14 {
            a0 += term / (n as f64 + 1.0);
            a1 += term / (n as f64 + 2.0);
            term = term * I * theta / (n as f64 + 1.0);
        }
        (a0 * h, a1 * h)
    } else {
        let e = (I * theta).exp();
        let a0 = (e - 1.0) / (I * theta) * h;
        let a1 = (e / (I * theta) + (e - 1.0) / (theta * theta)) * h;
        (a0, a1)
    }
}

/// Relative level below which the last sample counts as having decayed.
pub const TAIL_FLOOR: f64 = 1e-10;
/// Absolute residual floor of the line-integral fit, in units of the line integral.
pub const LINE_FIT_FLOOR: f64 = 1e-5;

/// `int_{t_s}^inf f(t) e^{ikt} dt` for piecewise-linear `f` on `t_j = j*dt`, `j >= start`,
/// plus the exponential tail beyond the last sample.
fn filon_transform(
    values: &[f64],
    dt: f64,
    start: usize,
    decay: Option<f64>,
    k: Complex64,
) -> Result<Complex64> {
    let n = values.len();
    if n < start + 2 {
        return Err(Error::InvalidArgument(
            "trace has fewer than two samples behind the front".into(),
        ));
    }
    let (a0, a1) = filon_weights(dt, k);
    let step = (I * k * dt).exp();
    let mut e = (I * k * (start as f64 * dt)).exp();
    let mut s_lo = Complex64::new(0.0, 0.0);
    let mut s_hi = Complex64::new(0.0, 0.0);
    for j in start..n {
        if (j - start) % 64 == 0 {
            e = (I * k * (j as f64 * dt)).exp();
        }
        let term = e * values[j];
        if j < n - 1 {
            s_lo += term;
        }
        if j > start {
            s_hi += term;
        }
        e *= step;
    }
    let mut total = (a0 - a1) * s_lo + a1 * (-I * k * dt).exp() * s_hi;
    let last = values[n - 1];
    let sup = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if last.abs() > TAIL_FLOOR * sup {
        match decay {
            Some(c) if c > 0.0 => {
                let t_end = (n - 1) as f64 * dt;
                total += last * (I * k * t_end).exp() / (c - I * k);
            }
            _ => return Err(Error::TailNotResolved(last)),
        }
    }
    Ok(total)
}

/// Signature of the transform of a trace, read off the trace's front data.
pub fn trace_signature(trace: &TimeTrace, include_incident: bool) -> AsymptoticSignature {
    let f = &trace.values[trace.front_index..];
    match trace.kind {
        TraceKind::PointSource if include_incident => AsymptoticSignature {
            c: Complex64::new(1.0 / (4.0 * PI * trace.front_time), 0.0),
            n: 0,
            l: trace.front_time,
        },
        TraceKind::Distributed if f.len() >= 3 => {
            let d = odd_derivatives_at_zero(f, trace.dt);
            AsymptoticSignature {
                c: Complex64::new(-d[1], 0.0),
                n: 2,
                l: 0.0,
            }
        }
        TraceKind::DistributedScattered if f.len() >= 3 => {
            let d = odd_derivatives_at_zero(f, trace.dt);
            AsymptoticSignature {
                c: Complex64::new(d[3], 0.0),
                n: 4,
                l: 0.0,
            }
        }
        _ => AsymptoticSignature {
            c: I * f[0],
            n: 1,
            l: trace.front_time,
        },
    }
}

/// `d(k) = int_0^inf trace(t) e^{ikt} dt`; for point-source traces the front term
/// contributes the incident field.
pub fn fourier_bridge(trace: &TimeTrace, k_grid: &[f64]) -> Result<SpectralTrace> {
    let incident = trace.kind == TraceKind::PointSource;
    bridge(trace, k_grid, incident)
}

/// Transform of the regular part alone (the scattered field for point sources).
pub fn fourier_bridge_scattered(trace: &TimeTrace, k_grid: &[f64]) -> Result<SpectralTrace> {
    bridge(trace, k_grid, false)
}

fn bridge(trace: &TimeTrace, k_grid: &[f64], incident: bool) -> Result<SpectralTrace> {
    let values = k_grid
        .par_iter()
        .map(|k| laplace_fourier_inner(trace, Complex64::new(*k, 0.0), incident))
        .collect::<Result<Vec<_>>>()?;
    Ok(SpectralTrace {
        k: k_grid.to_vec(),
        values,
        signature: trace_signature(trace, incident),
    })
}

fn laplace_fourier_inner(trace: &TimeTrace, k: Complex64, incident: bool) -> Result<Complex64> {
    let mut v = filon_transform(
        &trace.values,
        trace.dt,
        trace.front_index,
        trace.decay_rate,
        k,
    )?;
    if incident {
        v += incident_field_c(trace.front_time, k);
    }
    Ok(v)
}

/// The bridge at complex `k` (`Im k >= 0`), including the incident field for point-source traces.
pub fn laplace_fourier(trace: &TimeTrace, k: Complex64) -> Result<Complex64> {
    laplace_fourier_inner(trace, k, trace.kind == TraceKind::PointSource)
}

/// `int_0^a r e^{ikr} dr`, the Green function integrated over a ball of radius `a` about its pole.
pub fn self_cell_integral(a: f64, k: f64) -> Complex64 {
    let ka = k * a;
    if ka.abs() < 0.1 {
        let mut s = Complex64::new(0.0, 0.0);
        let mut term = Complex64::new(1.0, 0.0);
        for n in 0..14 {
            s += term / (n as f64 + 2.0);
            term = term * I * ka / (n as f64 + 1.0);
        }
        s * a * a
    } else {
        let e = Complex64::from_polar(1.0, ka);
        e * (a / (I * k) + 1.0 / (k * k)) - 1.0 / (k * k)
    }
}

fn is_uniform(ks: &[f64]) -> Option<f64> {
    if ks.len() < 2 {
        return Some(0.0);
    }
    let dk = ks[1] - ks[0];
    ks.windows(2)
        .all(|w| ((w[1] - w[0]) - dk).abs() <= 1e-12 * dk.abs().max(1.0))
        .then_some(dk)
}

/// Iterates `u <- u_inc - int G_k q u` on the quadrature nodes and evaluates at `x`.
/// `inc_nodes[i][m]` is the incident field at node `i`, frequency `ks[m]`.
fn born_iterate(
    vq: &VolumeQuadrature,
    inc_nodes: &[Vec<Complex64>],
    inc_x: &[Complex64],
    x: Vec3,
    ks: &[f64],
    n_terms: usize,
) -> Result<Vec<Complex64>> {
    let nk = ks.len();
    let dk = is_uniform(ks);
    let k0 = ks.first().copied().unwrap_or(0.0);
    let a = vq.self_radius;
    let self_terms: Vec<Complex64> = ks.iter().map(|k| self_cell_integral(a, *k)).collect();

    // Sum_j G_k(|y - eta_j|) w_j q_j u_j(k) for all k at once.
    let apply = |y: Vec3, skip: Option<usize>, u: &[Vec<Complex64>], out: &mut [Complex64]| {
        out.iter_mut().for_each(|o| *o = Complex64::new(0.0, 0.0));
        for (j, eta) in vq.nodes.iter().enumerate() {
            if Some(j) == skip {
                continue;
            }
            let r = y.dist(*eta);
            let wq = vq.weights[j] * vq.q[j];
            match dk {
                Some(dk) => {
                    let mut g = green(r, k0) * wq;
                    let step = Complex64::from_polar(1.0, dk * r);
                    for (o, uj) in out.iter_mut().zip(&u[j]) {
                        *o += g * uj;
                        g *= step;
                    }
                }
                None => {
                    for ((o, uj), k) in out.iter_mut().zip(&u[j]).zip(ks) {
                        *o += green(r, *k) * wq * uj;
                    }
                }
            }
        }
    };

    let mut u: Vec<Vec<Complex64>> = inc_nodes.to_vec();
    let mut prev_diff = f64::INFINITY;
    for m in 1..n_terms {
        let next: Vec<Vec<Complex64>> = (0..vq.len())
            .into_par_iter()
            .map(|i| {
                let mut acc = vec![Complex64::new(0.0, 0.0); nk];
                apply(vq.nodes[i], Some(i), &u, &mut acc);
                (0..nk)
                    .map(|m| inc_nodes[i][m] - acc[m] - u[i][m] * self_terms[m] * vq.q[i])
                    .collect()
            })
            .collect();
        let diff = next
            .iter()
            .zip(&u)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).norm()))
            .fold(0.0, f64::max);
        if m >= 2 && diff > prev_diff {
            return Err(Error::IterationDiverged(m));
        }
        prev_diff = diff;
        u = next;
    }
    let mut acc = vec![Complex64::new(0.0, 0.0); nk];
    apply(x, None, &u, &mut acc);
    Ok((0..nk).map(|m| inc_x[m] - acc[m]).collect())
}

/// Total point-source field at `chord.receiver` for each `k`, after `n_terms` scattering orders.
pub fn born_series_freq_multi(
    vq: &VolumeQuadrature,
    chord: &Chord,
    ks: &[f64],
    n_terms: usize,
) -> Result<Vec<Complex64>> {
    let x0 = chord.source;
    let inc_nodes: Vec<Vec<Complex64>> = vq
        .nodes
        .iter()
        .map(|eta| ks.iter().map(|k| green(eta.dist(x0), *k)).collect())
        .collect();
    let inc_x: Vec<Complex64> = ks.iter().map(|k| incident_field(chord, *k)).collect();
    if n_terms == 0 {
        return Ok(inc_x);
    }
    born_iterate(vq, &inc_nodes, &inc_x, chord.receiver, ks, n_terms)
}

/// Single-frequency convenience wrapper over a fresh `vol_n^3` support quadrature.
pub fn born_series_freq(
    q: &dyn Potential,
    chord: &Chord,
    k: f64,
    n_terms: usize,
    vol_n: usize,
) -> Result<Complex64> {
    let vq = VolumeQuadrature::on_support(q, vol_n);
    Ok(born_series_freq_multi(&vq, chord, &[k], n_terms)?[0])
}

/// `int G_k(|x - xi|) g(xi) dxi` by node quadrature, with the self cell replaced
/// by its analytic ball mean when `x` is a node.
pub fn v0_volume_potential(gq: &VolumeQuadrature, x: Vec3, k: f64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for ((eta, w), g) in gq.nodes.iter().zip(&gq.weights).zip(&gq.q) {
        let r = x.dist(*eta);
        if r < 1e-9 * gq.self_radius.max(1e-300) {
            acc += self_cell_integral(gq.self_radius, k) * g;
        } else {
            acc += green(r, k) * (w * g);
        }
    }
    acc
}

/// Distributed-source field `v` at `x` after `n_terms` scattering orders.
pub fn born_series_volume_source(
    qq: &VolumeQuadrature,
    gq: &VolumeQuadrature,
    x: Vec3,
    ks: &[f64],
    n_terms: usize,
) -> Result<Vec<Complex64>> {
    let inc_x: Vec<Complex64> = ks.iter().map(|k| v0_volume_potential(gq, x, *k)).collect();
    if n_terms == 0 {
        return Ok(inc_x);
    }
    let inc_nodes: Vec<Vec<Complex64>> = qq
        .nodes
        .par_iter()
        .map(|eta| {
            ks.iter()
                .map(|k| v0_volume_potential(gq, *eta, *k))
                .collect()
        })
        .collect();
    born_iterate(qq, &inc_nodes, &inc_x, x, ks, n_terms)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineIntegralFit {
    /// Estimate of `int_L q ds`.
    pub value: f64,
    /// `c0, c2` of the real part `c0 + c2/k^2`.
    pub real_coeffs: [f64; 2],
    /// `c1, c3` of the imaginary part `c1/k + c3/k^3`.
    pub imag_coeffs: [f64; 2],
    pub residual: f64,
    pub threshold: f64,
    pub n_points: usize,
}

fn weighted_ls(k: &[f64], y: &[f64], powers: &[i32]) -> Result<(Vec<f64>, f64)> {
    let m = k.len();
    let a = DMatrix::from_fn(m, powers.len(), |i, j| k[i].powi(-powers[j]) / k[i]);
    let b = DVector::from_fn(m, |i, _| y[i] / k[i]);
    let x = a
        .clone()
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let r = &a * &x - b;
    Ok((x.iter().cloned().collect(), r.norm_squared()))
}

/// Weighted complex least squares of `y(k)` on `1, 1/k, ..., 1/k^(n_basis-1)` with weights `1/k`.
/// Returns the coefficients, the weighted rms residual and the weighted rms of `y`.
pub fn fit_inverse_powers(
    k: &[f64],
    y: &[Complex64],
    n_basis: usize,
) -> Result<(Vec<Complex64>, f64, f64)> {
    let m = k.len();
    if m < n_basis + 1 {
        return Err(Error::InvalidArgument(format!(
            "{m} samples cannot fit {n_basis} coefficients"
        )));
    }
    let powers: Vec<i32> = (0..n_basis as i32).collect();
    let re: Vec<f64> = y.iter().map(|v| v.re).collect();
    let im: Vec<f64> = y.iter().map(|v| v.im).collect();
    let (cr, rr) = weighted_ls(k, &re, &powers)?;
    let (ci, ri) = weighted_ls(k, &im, &powers)?;
    let y2: f64 = y.iter().zip(k).map(|(v, k)| (v / k).norm_sqr()).sum();
    let coeffs = cr
        .iter()
        .zip(&ci)
        .map(|(a, b)| Complex64::new(*a, *b))
        .collect();
    Ok((
        coeffs,
        ((rr + ri) / m as f64).sqrt(),
        (y2 / m as f64).sqrt(),
    ))
}

/// Fits `y = 2ik(u/u0 - 1)` over the window, with `Re y = c0 + c2/k^2` and
/// `Im y = c1/k + c3/k^3`, and returns `c0`.
pub fn extract_line_integral(
    total: &SpectralTrace,
    chord: &Chord,
    window: (f64, f64),
) -> Result<LineIntegralFit> {
    let (ks, ys): (Vec<f64>, Vec<Complex64>) = total
        .k
        .iter()
        .zip(&total.values)
        .filter(|(k, _)| **k >= window.0 && **k <= window.1 && **k > 0.0)
        .map(|(k, u)| (*k, 2.0 * I * k * (u / incident_field(chord, *k) - 1.0)))
        .unzip();
    let m = ks.len();
    if m < 5 {
        return Err(Error::InvalidArgument(format!(
            "window {window:?} holds {m} samples, need at least 5"
        )));
    }
    let re: Vec<f64> = ys.iter().map(|v| v.re).collect();
    let im: Vec<f64> = ys.iter().map(|v| v.im).collect();
    let (cr, rr) = weighted_ls(&ks, &re, &[0, 2])?;
    let (ci, ri) = weighted_ls(&ks, &im, &[1, 3])?;
    let y2: f64 = ys.iter().zip(&ks).map(|(v, k)| (v / k).norm_sqr()).sum();
    let residual = ((rr + ri) / m as f64).sqrt();
    let threshold = (0.05 * (y2 / m as f64).sqrt()).max(LINE_FIT_FLOOR);
    if !(residual <= threshold) {
        return Err(Error::FitUnstable {
            residual,
            threshold,
        });
    }
    Ok(LineIntegralFit {
        value: cr[0],
        real_coeffs: [cr[0], cr[1]],
        imag_coeffs: [ci[0], ci[1]],
        residual,
        threshold,
        n_points: m,
    })
}

/// Which closed form a measured spectrum is compared against.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum AsymptoteKind {
    /// Total point-source field.
    Total { length: f64 },
    /// Scattered point-source field; expects `C = -i int_L q ds / (8 pi d)`.
    Scattered { length: f64, line_integral: f64 },
    /// Distributed-source `v`; expects `C = -g(x)`.
    Distributed { g: f64 },
    /// Distributed-source `v_s`; expects `C = -(q g)(x)`.
    DistributedScattered { qg: f64 },
}

impl AsymptoteKind {
    pub fn expected(&self) -> AsymptoticSignature {
        let c = |v: f64| Complex64::new(v, 0.0);
        match *self {
            AsymptoteKind::Total { length } => AsymptoticSignature {
                c: c(1.0 / (4.0 * PI * length)),
                n: 0,
                l: length,
            },
            AsymptoteKind::Scattered {
                length,
                line_integral,
            } => AsymptoticSignature {
                c: -I * line_integral / (8.0 * PI * length),
                n: 1,
                l: length,
            },
            AsymptoteKind::Distributed { g } => AsymptoticSignature {
                c: c(-g),
                n: 2,
                l: 0.0,
            },
            AsymptoteKind::DistributedScattered { qg } => AsymptoticSignature {
                c: c(-qg),
                n: 4,
                l: 0.0,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoteReport {
    pub expected: AsymptoticSignature,
    /// Fitted limit of `d(k) k^n e^{-ikL}` over `k >= onset`.
    pub measured_c: Complex64,
    /// `|measured - expected| / |expected|`.
    pub relative_error: f64,
    /// Log-log slope of `|d|` over the window.
    pub measured_power: f64,
    pub power_consistent: bool,
    pub onset: f64,
    pub n_points: usize,
}

/// Compares the high-k behaviour of `trace` above `onset` with the closed form for `kind`.
/// The limit is fitted on `1, 1/k` for point sources and on `1, 1/k^2` for distributed sources.
pub fn check_asymptote(
    trace: &SpectralTrace,
    kind: AsymptoteKind,
    onset: f64,
) -> Result<AsymptoteReport> {
    let sig = kind.expected();
    let (ks, ys): (Vec<f64>, Vec<Complex64>) = trace
        .k
        .iter()
        .zip(&trace.values)
        .filter(|(k, _)| **k >= onset && **k > 0.0)
        .map(|(k, d)| {
            (
                *k,
                d * k.powi(sig.n as i32) * Complex64::from_polar(1.0, -k * sig.l),
            )
        })
        .unzip();
    let powers: &[i32] = match kind {
        AsymptoteKind::Distributed { .. } | AsymptoteKind::DistributedScattered { .. } => &[0, 2],
        _ => &[0, 1],
    };
    if ks.len() < powers.len() + 1 {
        return Err(Error::InvalidArgument(format!(
            "{} samples above the onset",
            ks.len()
        )));
    }
    let re: Vec<f64> = ys.iter().map(|v| v.re).collect();
    let im: Vec<f64> = ys.iter().map(|v| v.im).collect();
    let measured_c = Complex64::new(
        weighted_ls(&ks, &re, powers)?.0[0],
        weighted_ls(&ks, &im, powers)?.0[0],
    );
    let lx: Vec<f64> = ks.iter().map(|k| k.ln()).collect();
    let ly: Vec<f64> = ks
        .iter()
        .zip(&ys)
        .map(|(k, y)| {
            (y.norm() / k.powi(sig.n as i32))
                .max(f64::MIN_POSITIVE)
                .ln()
        })
        .collect();
    let measured_power = -crate::quad::ls_slope(&lx, &ly);
    let denom = sig.c.norm();
    let relative_error = if denom > 0.0 {
        (measured_c - sig.c).norm() / denom
    } else {
        measured_c.norm()
    };
    Ok(AsymptoteReport {
        expected: sig,
        measured_c,
        relative_error,
        measured_power,
        power_consistent: (measured_power - sig.n as f64).abs() <= 0.35,
        onset,
        n_points: ks.len(),
    })
}
