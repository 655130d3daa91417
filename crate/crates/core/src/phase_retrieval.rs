//! Phase from modulus: modulus extension, the log-Hilbert phase formula,
//! Blaschke factors, partial-fraction inverse transforms and zero counting.

use crate::error::{Error, Result};
use crate::forward_freq::{AsymptoticSignature, SpectralTrace};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulusTrace {
    pub k: Vec<f64>,
    pub values: Vec<f64>,
    pub band: Option<(f64, f64)>,
}

impl ModulusTrace {
    pub fn new(k: Vec<f64>, values: Vec<f64>) -> Result<ModulusTrace> {
        if k.len() != values.len() {
            return Err(Error::InvalidArgument(
                "k and modulus lengths differ".into(),
            ));
        }
        if values.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidArgument("modulus must be nonnegative".into()));
        }
        Ok(ModulusTrace {
            k,
            values,
            band: None,
        })
    }

    pub fn from_trace(t: &SpectralTrace) -> ModulusTrace {
        ModulusTrace {
            k: t.k.clone(),
            values: t.values.iter().map(|v| v.norm()).collect(),
            band: None,
        }
    }
}

/// Symmetric uniform grid `-k_max..=k_max` with `2*n_half + 1` nodes.
pub fn symmetric_grid(k_max: f64, n_half: usize) -> Vec<f64> {
    let h = k_max / n_half as f64;
    (0..=2 * n_half)
        .map(|j| (j as f64 - n_half as f64) * h)
        .collect()
}

pub(crate) fn uniform_step(k: &[f64]) -> Result<f64> {
    if k.len() < 3 {
        return Err(Error::InvalidArgument(
            "grid needs at least three nodes".into(),
        ));
    }
    let h = (k[k.len() - 1] - k[0]) / (k.len() - 1) as f64;
    for w in k.windows(2) {
        if ((w[1] - w[0]) - h).abs() > 1e-9 * h.abs().max(1.0) {
            return Err(Error::InvalidArgument("grid is not uniform".into()));
        }
    }
    if !(h > 0.0) {
        return Err(Error::InvalidArgument("grid must increase".into()));
    }
    Ok(h)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Extension {
    pub trace: ModulusTrace,
    /// `None` when the band already covered the target grid and no fit was needed.
    pub leave_out_residual: Option<f64>,
}

pub const CONTINUATION_TOLERANCE: f64 = 1e-6;

fn fit_even_rational(
    k: &[f64],
    y: &[f64],
    order: usize,
    kref: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n_unknowns = 2 * order + 1;
    let mut a = DMatrix::<f64>::zeros(k.len(), n_unknowns);
    let mut b = DVector::<f64>::zeros(k.len());
    for (r, (kk, yy)) in k.iter().zip(y).enumerate() {
        let s = (kk / kref).powi(2);
        let mut sp = 1.0;
        for j in 0..=order {
            a[(r, j)] = sp;
            sp *= s;
        }
        let mut sq = s;
        for j in 1..=order {
            a[(r, order + j)] = -yy * sq;
            sq *= s;
        }
        b[r] = *yy;
    }
    let svd = a.svd(true, true);
    let eps = 1e-13 * svd.singular_values.max();
    let x = svd
        .solve(&b, eps)
        .map_err(|e| Error::QuadratureFailure(e.to_string()))?;
    let p = x.as_slice()[..=order].to_vec();
    let mut q = vec![1.0];
    q.extend_from_slice(&x.as_slice()[order + 1..]);
    Ok((p, q))
}

fn eval_even_rational(p: &[f64], q: &[f64], k: f64, kref: f64) -> f64 {
    let s = (k / kref).powi(2);
    let horner = |c: &[f64]| c.iter().rev().fold(0.0, |acc, v| acc * s + v);
    horner(p) / horner(q)
}

/// Extends a band-limited modulus to `target_k` through an even rational model of
/// `|d|^2` in `k^2`. When the band (mirrored to negative k) already spans the
/// target, the samples are resampled without fitting.
pub fn extend_modulus(
    band: &ModulusTrace,
    target_k: &[f64],
    model_order: usize,
) -> Result<Extension> {
    if band.k.is_empty() {
        return Err(Error::InvalidArgument("empty band".into()));
    }
    let kmax_band = band.k.iter().fold(0.0f64, |m, k| m.max(k.abs()));
    let kmin_band = band.k.iter().fold(f64::MAX, |m, k| m.min(k.abs()));
    let kmax_target = target_k.iter().fold(0.0f64, |m, k| m.max(k.abs()));
    let covers = uniform_step(&band.k).ok().map_or(false, |h| {
        kmin_band <= h * (1.0 + 1e-9) && kmax_band >= kmax_target - 1e-9 * kmax_target.max(1.0)
    });
    if covers {
        let mut pts: Vec<(f64, f64)> = band
            .k
            .iter()
            .map(|k| k.abs())
            .zip(band.values.iter().cloned())
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-12);
        if pts[0].0 > 0.0 {
            pts.insert(0, (0.0, pts[0].1));
        }
        let values = target_k
            .iter()
            .map(|k| {
                let x = k.abs();
                let i = pts.partition_point(|p| p.0 <= x).clamp(1, pts.len() - 1);
                let (x0, y0) = pts[i - 1];
                let (x1, y1) = pts[i];
                if (x - x0).abs() < 1e-12 {
                    y0
                } else if (x - x1).abs() < 1e-12 {
                    y1
                } else {
                    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
                }
            })
            .collect();
        return Ok(Extension {
            trace: ModulusTrace {
                k: target_k.to_vec(),
                values,
                band: band.band,
            },
            leave_out_residual: None,
        });
    }
    if model_order == 0 || band.k.len() < 4 * model_order {
        return Err(Error::InvalidArgument(format!(
            "band holds {} samples, need at least {}",
            band.k.len(),
            4 * model_order.max(1)
        )));
    }
    let y: Vec<f64> = band.values.iter().map(|v| v * v).collect();
    let kref = kmax_band;
    let (even_k, even_y): (Vec<f64>, Vec<f64>) = band
        .k
        .iter()
        .zip(&y)
        .step_by(2)
        .map(|(a, b)| (*a, *b))
        .unzip();
    let (p, q) = fit_even_rational(&even_k, &even_y, model_order, kref)?;
    let ymax = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let residual = band
        .k
        .iter()
        .zip(&y)
        .skip(1)
        .step_by(2)
        .map(|(k, yy)| (eval_even_rational(&p, &q, *k, kref) - yy).abs())
        .fold(0.0, f64::max)
        / ymax.max(f64::MIN_POSITIVE);
    if !(residual <= CONTINUATION_TOLERANCE) {
        return Err(Error::ContinuationUnreliable(residual));
    }
    let (p, q) = fit_even_rational(&band.k, &y, model_order, kref)?;
    let values = target_k
        .iter()
        .map(|k| eval_even_rational(&p, &q, *k, kref).max(0.0).sqrt())
        .collect();
    Ok(Extension {
        trace: ModulusTrace {
            k: target_k.to_vec(),
            values,
            band: band.band,
        },
        leave_out_residual: Some(residual),
    })
}

/// Which closed form the fitted global constant lies nearest to, modulo 2 pi.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchConvention {
    /// Constant `arg C - n pi/2`.
    Direct,
    /// Constant `-arg C + n pi/2`.
    Negated,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseOptions {
    /// Relative modulus floor below which the grid is said to hit a zero.
    pub floor: f64,
    /// Anchor window as fractions of the largest grid frequency.
    pub anchor: (f64, f64),
    /// Fraction of the positive grid used to measure the tail power.
    pub tail_fraction: f64,
    pub tail_tolerance: f64,
    /// The trace is the transform of a real signal, so `d(0)` is real and the phase
    /// at `k = 0` is pinned to a multiple of pi.
    pub real_at_zero: bool,
}

impl Default for PhaseOptions {
    fn default() -> Self {
        PhaseOptions {
            floor: 1e-12,
            anchor: (0.3, 0.6),
            tail_fraction: 0.1,
            tail_tolerance: 0.35,
            real_at_zero: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseRetrieval {
    pub trace: SpectralTrace,
    /// Global additive phase constant after anchoring.
    pub constant: f64,
    pub convention: BranchConvention,
    /// Distance (mod 2 pi) from `constant` to the nearer closed form.
    pub convention_gap: f64,
    pub tail_power: f64,
}

fn wrap(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y <= -PI {
        y + 2.0 * PI
    } else {
        y
    }
}

/// Prepared log-modulus residual `g = ln|d| - ln|C| + (n/2) ln(1+k^2)`.
struct LogResidual {
    k: Vec<f64>,
    h: f64,
    g: Vec<f64>,
    dg: Vec<f64>,
    n: u32,
    /// `g ~ t1/|k| + t2/k^2` beyond the right and left ends of the grid.
    right_tail: (f64, f64),
    left_tail: (f64, f64),
}

/// Least-squares `g ~ t1/|k| + t2/k^2` over the outer fifth of one side of the grid.
fn fit_tail(k: &[f64], g: &[f64], edge: f64) -> (f64, f64) {
    let (x, y): (Vec<f64>, Vec<f64>) = k
        .iter()
        .zip(g)
        .filter(|(k, _)| k.abs() >= 0.8 * edge.abs() && k.signum() == edge.signum())
        .map(|(k, g)| (k.abs(), *g))
        .unzip();
    let edge = edge.abs();
    if x.len() < 4 || edge <= 0.0 {
        return (0.0, 0.0);
    }
    let a = DMatrix::from_fn(x.len(), 2, |i, j| (edge / x[i]).powi(j as i32 + 1));
    let b = DVector::from_column_slice(&y);
    match a.svd(true, true).solve(&b, 1e-14) {
        Ok(c) => (c[0] * edge, c[1] * edge * edge),
        Err(_) => (0.0, 0.0),
    }
}

/// `int_R^inf xi^-1 / (k - xi) dxi` and `int_R^inf xi^-2 / (k - xi) dxi`, with `R - k` clamped to `floor`.
fn tail_kernels(k: f64, r: f64, floor: f64) -> (f64, f64) {
    let x = k / r;
    if x.abs() < 0.05 {
        let (mut f1, mut f2, mut p) = (0.0, 0.0, 1.0);
        for n in 0..12 {
            f1 += p / (n as f64 + 1.0);
            f2 += p / (n as f64 + 2.0);
            p *= x;
        }
        return (-f1 / r, -f2 / (r * r));
    }
    let l = ((r - k).max(floor) / r).ln();
    (l / k, 1.0 / (k * r) + l / (k * k))
}

impl LogResidual {
    fn new(
        m: &ModulusTrace,
        sig: &AsymptoticSignature,
        opts: &PhaseOptions,
    ) -> Result<LogResidual> {
        let h = uniform_step(&m.k)?;
        let vmax = m.values.iter().fold(0.0f64, |a, v| a.max(*v));
        for (k, v) in m.k.iter().zip(&m.values) {
            if !(*v > opts.floor * vmax) {
                return Err(Error::ZeroOnGrid(*k));
            }
        }
        let lnc = sig.c.norm().ln();
        let n = sig.n;
        let g: Vec<f64> =
            m.k.iter()
                .zip(&m.values)
                .map(|(k, v)| v.ln() - lnc + 0.5 * n as f64 * (1.0 + k * k).ln())
                .collect();
        let len = g.len();
        let mut dg = vec![0.0; len];
        for i in 1..len - 1 {
            dg[i] = (g[i + 1] - g[i - 1]) / (2.0 * h);
        }
        dg[0] = (g[1] - g[0]) / h;
        dg[len - 1] = (g[len - 1] - g[len - 2]) / h;
        let right_tail = fit_tail(&m.k, &g, m.k[len - 1]);
        let left_tail = fit_tail(&m.k, &g, m.k[0]);
        Ok(LogResidual {
            k: m.k.clone(),
            h,
            g,
            dg,
            n,
            right_tail,
            left_tail,
        })
    }

    /// `(1/pi) PV int g(xi)/(k_i - xi) dxi` over the grid plus the model's closed form `n atan(k)`.
    fn conjugate(&self, i: usize) -> f64 {
        let len = self.k.len();
        let h = self.h;
        let gi = self.g[i];
        let mut acc = 0.0;
        for j in 0..len {
            if j == i {
                continue;
            }
            let w = if j == 0 || j == len - 1 { 0.5 } else { 1.0 };
            acc += w * (self.g[j] - gi) / ((i as f64 - j as f64) * h);
        }
        let wi = if i == 0 || i == len - 1 { 0.5 } else { 1.0 };
        acc *= h;
        acc -= wi * h * self.dg[i];
        let left = (self.k[i] - self.k[0]).max(0.5 * h);
        let right = (self.k[len - 1] - self.k[i]).max(0.5 * h);
        acc += gi * (left / right).ln();
        let k = self.k[i];
        let (r1, r2) = tail_kernels(k, self.k[len - 1], 0.5 * h);
        let (l1, l2) = tail_kernels(-k, -self.k[0], 0.5 * h);
        acc += self.right_tail.0 * r1 + self.right_tail.1 * r2
            - self.left_tail.0 * l1
            - self.left_tail.1 * l2;
        acc / PI + self.n as f64 * self.k[i].atan()
    }
}

fn check_tail(m: &ModulusTrace, sig: &AsymptoticSignature, opts: &PhaseOptions) -> Result<f64> {
    let kmax = m.k[m.k.len() - 1];
    let lo = kmax * (1.0 - opts.tail_fraction);
    let (x, y): (Vec<f64>, Vec<f64>) =
        m.k.iter()
            .zip(&m.values)
            .filter(|(k, _)| **k >= lo && **k > 0.0)
            .map(|(k, v)| (k.ln(), v.ln()))
            .unzip();
    if x.len() < 3 {
        return Ok(-(sig.n as f64));
    }
    let slope = crate::quad::ls_slope(&x, &y);
    if (slope + sig.n as f64).abs() > opts.tail_tolerance {
        return Err(Error::TailMismatch {
            measured: -slope,
            expected: sig.n,
        });
    }
    Ok(-slope)
}

/// Fits `a + b/k + c/k^2` and returns `a`.
fn anchor_constant(k: &[f64], r: &[f64]) -> Result<f64> {
    if k.len() < 4 {
        return Err(Error::InvalidArgument(
            "anchor window holds fewer than four nodes".into(),
        ));
    }
    let mut a = DMatrix::<f64>::zeros(k.len(), 3);
    let b = DVector::from_column_slice(r);
    for (row, kk) in k.iter().enumerate() {
        a[(row, 0)] = 1.0;
        a[(row, 1)] = 1.0 / kk;
        a[(row, 2)] = 1.0 / (kk * kk);
    }
    let x = a
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| Error::QuadratureFailure(e.to_string()))?;
    Ok(x[0])
}

struct Anchored {
    residual: LogResidual,
    constant: f64,
    convention: BranchConvention,
    gap: f64,
    tail_power: f64,
}

fn anchor(m: &ModulusTrace, sig: &AsymptoticSignature, opts: &PhaseOptions) -> Result<Anchored> {
    if sig.l < 0.0 {
        return Err(Error::InvalidArgument(
            "signature rate must be nonnegative".into(),
        ));
    }
    let residual = LogResidual::new(m, sig, opts)?;
    let tail_power = check_tail(m, sig, opts)?;
    let kmax = m.k[m.k.len() - 1];
    let (lo, hi) = (opts.anchor.0 * kmax, opts.anchor.1 * kmax);
    let all: Vec<usize> = (0..m.k.len())
        .filter(|&i| m.k[i] >= lo && m.k[i] <= hi && m.k[i] > 0.0)
        .collect();
    let stride = (all.len() / 64).max(1);
    let idx: Vec<usize> = all.into_iter().step_by(stride).collect();
    let ks: Vec<f64> = idx.iter().map(|&i| m.k[i]).collect();
    let rs: Vec<f64> = idx.iter().map(|&i| residual.conjugate(i)).collect();
    let a = anchor_constant(&ks, &rs)?;
    let arg_c = sig.c.arg();
    let half = sig.n as f64 * PI / 2.0;
    let estimate = wrap(arg_c - a);
    let d_direct = wrap(estimate - (arg_c - half)).abs();
    let d_negated = wrap(estimate - (-arg_c + half)).abs();
    let constant = if opts.real_at_zero {
        let h = uniform_step(&m.k)?;
        let i0 =
            m.k.iter()
                .position(|k| k.abs() <= 1e-9 * h)
                .ok_or_else(|| {
                    Error::InvalidArgument("pinning the phase at zero needs a k = 0 node".into())
                })?;
        let h0 = residual.conjugate(i0);
        wrap(PI * ((estimate + h0) / PI).round() - h0)
    } else {
        estimate
    };
    let (convention, gap) = if d_direct <= d_negated {
        (BranchConvention::Direct, d_direct)
    } else {
        (BranchConvention::Negated, d_negated)
    };
    Ok(Anchored {
        residual,
        constant,
        convention,
        gap,
        tail_power,
    })
}

/// Reconstructs `d` on a uniform full-line grid from `|d|` and its asymptotic signature.
pub fn retrieve_phase(m: &ModulusTrace, sig: &AsymptoticSignature) -> Result<PhaseRetrieval> {
    retrieve_phase_with(m, sig, &PhaseOptions::default())
}

pub fn retrieve_phase_with(
    m: &ModulusTrace,
    sig: &AsymptoticSignature,
    opts: &PhaseOptions,
) -> Result<PhaseRetrieval> {
    let all: Vec<usize> = (0..m.k.len()).collect();
    let (phase, a) = retrieve_phase_at(m, sig, opts, &all)?;
    let values = m
        .values
        .iter()
        .zip(&phase)
        .map(|(v, p)| Complex64::from_polar(*v, *p))
        .collect();
    Ok(PhaseRetrieval {
        trace: SpectralTrace {
            k: m.k.clone(),
            values,
            signature: *sig,
        },
        constant: a.constant,
        convention: a.convention,
        convention_gap: a.gap,
        tail_power: a.tail_power,
    })
}

/// Phase at selected grid indices only; returns the phases and the anchoring summary.
pub fn retrieve_phase_at(
    m: &ModulusTrace,
    sig: &AsymptoticSignature,
    opts: &PhaseOptions,
    indices: &[usize],
) -> Result<(Vec<f64>, PhaseSummary)> {
    let a = anchor(m, sig, opts)?;
    let phase = indices
        .iter()
        .map(|&i| a.residual.conjugate(i) + sig.l * m.k[i] + a.constant)
        .collect();
    Ok((
        phase,
        PhaseSummary {
            constant: a.constant,
            convention: a.convention,
            gap: a.gap,
            tail_power: a.tail_power,
        },
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub constant: f64,
    pub convention: BranchConvention,
    pub gap: f64,
    pub tail_power: f64,
}

/// Upper-half-plane zeros `a_j` and real zeros `c_s`, each with multiplicity.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ZeroSet {
    #[serde(default)]
    pub upper: Vec<UpperZero>,
    #[serde(default)]
    pub real: Vec<RealZero>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpperZero {
    pub re: f64,
    pub im: f64,
    pub multiplicity: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealZero {
    pub location: f64,
    pub multiplicity: u32,
}

impl UpperZero {
    pub fn location(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

impl ZeroSet {
    pub fn upper(zeros: &[(Complex64, u32)]) -> Result<ZeroSet> {
        let mut upper = Vec::with_capacity(zeros.len());
        for (z, m) in zeros {
            if !(z.im > 0.0) || *m == 0 {
                return Err(Error::InvalidArgument(format!(
                    "zero {z} must lie strictly above the axis with multiplicity >= 1"
                )));
            }
            upper.push(UpperZero {
                re: z.re,
                im: z.im,
                multiplicity: *m,
            });
        }
        Ok(ZeroSet {
            upper,
            real: Vec::new(),
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_toml(s: &str) -> Result<ZeroSet> {
        toml::from_str(s).map_err(|e| Error::Format(e.to_string()))
    }
}

/// `prod_j ((k - conj a_j)/(k - a_j))^{m_j}`.
pub fn blaschke_factor(k: Complex64, zeros: &ZeroSet) -> Complex64 {
    let mut b = Complex64::new(1.0, 0.0);
    for z in &zeros.upper {
        let a = z.location();
        let f = (k - a.conj()) / (k - a);
        for _ in 0..z.multiplicity {
            b *= f;
        }
    }
    b
}

/// One term `coeff / (k - pole)^power` of a partial-fraction expansion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolarTerm {
    pub pole: Complex64,
    pub power: u32,
    pub coeff: Complex64,
}

/// Polar part of `gain * prod (k - z)^mz / prod (k - p)^mp` via Taylor series at each pole.
pub fn polar_part(
    gain: Complex64,
    zeros: &[(Complex64, u32)],
    poles: &[(Complex64, u32)],
) -> Vec<PolarTerm> {
    let mut terms = Vec::new();
    for (pi, (p, m)) in poles.iter().enumerate() {
        let m = *m as usize;
        let mut series = vec![Complex64::new(0.0, 0.0); m];
        series[0] = gain;
        for (z, mz) in zeros {
            let a = *p - *z;
            for _ in 0..*mz {
                for j in (0..m).rev() {
                    let prev = if j > 0 {
                        series[j - 1]
                    } else {
                        Complex64::new(0.0, 0.0)
                    };
                    series[j] = series[j] * a + prev;
                }
            }
        }
        for (qj, (q, mq)) in poles.iter().enumerate() {
            if qj == pi {
                continue;
            }
            let b = *p - *q;
            for _ in 0..*mq {
                for j in 0..m {
                    let prev = if j > 0 {
                        series[j - 1]
                    } else {
                        Complex64::new(0.0, 0.0)
                    };
                    series[j] = (series[j] - prev) / b;
                }
            }
        }
        for s in 1..=m {
            terms.push(PolarTerm {
                pole: *p,
                power: s as u32,
                coeff: series[m - s],
            });
        }
    }
    terms
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

/// Causal inverse transform (kernel `e^{-ikt}/(2 pi)`) of a polar part whose poles lie
/// strictly below the real axis, evaluated as the right limit for `t >= 0`.
pub fn polar_inverse_ft(terms: &[PolarTerm], t_grid: &[f64]) -> Vec<Complex64> {
    let i = Complex64::new(0.0, 1.0);
    t_grid
        .iter()
        .map(|&t| {
            if t < 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            terms
                .iter()
                .map(|term| {
                    let s = term.power;
                    term.coeff / (factorial(s - 1) * i.powu(s))
                        * t.powi(s as i32 - 1)
                        * (-i * term.pole * t).exp()
                })
                .sum()
        })
        .collect()
}

/// `lambda(t)`: inverse transform of `w(k) = prod ((k - a_j)/(k - conj a_j))^{m_j} - 1`.
pub fn w_function_inverse_ft(zeros: &ZeroSet, t_grid: &[f64]) -> Result<Vec<Complex64>> {
    for (i, a) in zeros.upper.iter().enumerate() {
        if !(a.im > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "zero {} is not in the upper half-plane",
                a.location()
            )));
        }
        for (j, b) in zeros.upper.iter().enumerate().skip(i + 1) {
            if (a.location() - b.location()).norm() <= 1e-9 * (1.0 + a.location().norm()) {
                return Err(Error::ResidueDegenerate(i, j));
            }
        }
    }
    let z: Vec<(Complex64, u32)> = zeros
        .upper
        .iter()
        .map(|a| (a.location(), a.multiplicity))
        .collect();
    let p: Vec<(Complex64, u32)> = z.iter().map(|(a, m)| (a.conj(), *m)).collect();
    let terms = polar_part(Complex64::new(1.0, 0.0), &z, &p);
    Ok(polar_inverse_ft(&terms, t_grid))
}

/// `w(k)` evaluated directly.
pub fn w_function(zeros: &ZeroSet, k: Complex64) -> Complex64 {
    let b = blaschke_factor(k, zeros);
    Complex64::new(1.0, 0.0) / b - 1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealZeroOptions {
    /// Local minima below this fraction of the maximum are zero candidates.
    pub candidate_floor: f64,
    /// Samples below this fraction are treated as exact zeros and left out of the slope fit.
    pub exact_floor: f64,
    pub fit_points: usize,
}

impl Default for RealZeroOptions {
    fn default() -> Self {
        RealZeroOptions {
            candidate_floor: 1e-6,
            exact_floor: 1e-12,
            fit_points: 5,
        }
    }
}

/// Real zeros of a sampled modulus with multiplicities from a log-log slope fit.
pub fn find_real_zeros(m: &ModulusTrace, opts: &RealZeroOptions) -> Vec<RealZero> {
    let n = m.values.len();
    let vmax = m.values.iter().fold(0.0f64, |a, v| a.max(*v));
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let v = m.values[i];
        let left = if i > 0 {
            m.values[i - 1]
        } else {
            f64::INFINITY
        };
        let right = if i + 1 < n {
            m.values[i + 1]
        } else {
            f64::INFINITY
        };
        if v <= left && v < right && v <= opts.candidate_floor * vmax {
            let c = m.k[i];
            let mut x = Vec::new();
            let mut y = Vec::new();
            for j in 1..=opts.fit_points {
                for idx in [i.checked_sub(j), Some(i + j)].into_iter().flatten() {
                    if idx < n && m.values[idx] > opts.exact_floor * vmax {
                        x.push((m.k[idx] - c).abs().ln());
                        y.push(m.values[idx].ln());
                    }
                }
            }
            let multiplicity = if x.len() >= 2 {
                crate::quad::ls_slope(&x, &y).round().max(1.0) as u32
            } else {
                1
            };
            out.push(RealZero {
                location: c,
                multiplicity,
            });
        }
        i += 1;
    }
    out
}

/// Locates the real zeros of two moduli and checks that they coincide.
pub fn match_real_zeros(
    a: &ModulusTrace,
    b: &ModulusTrace,
    opts: &RealZeroOptions,
) -> Result<ZeroSet> {
    let za = find_real_zeros(a, opts);
    let zb = find_real_zeros(b, opts);
    let h = uniform_step(&a.k).unwrap_or(0.0);
    if za.len() != zb.len() {
        return Err(Error::ZeroMismatch(format!(
            "{} zeros against {}",
            za.len(),
            zb.len()
        )));
    }
    for (x, y) in za.iter().zip(&zb) {
        if (x.location - y.location).abs() > 2.0 * h + 1e-12 || x.multiplicity != y.multiplicity {
            return Err(Error::ZeroMismatch(format!("{x:?} against {y:?}")));
        }
    }
    Ok(ZeroSet {
        upper: Vec::new(),
        real: za,
    })
}

/// Closed counterclockwise rectangle `[x0,x1] x [y0,y1]` with `n_side` points per side.
pub fn rectangle_contour(x0: f64, x1: f64, y0: f64, y1: f64, n_side: usize) -> Vec<Complex64> {
    let mut pts = Vec::with_capacity(4 * n_side);
    let n = n_side as f64;
    for j in 0..n_side {
        pts.push(Complex64::new(x0 + (x1 - x0) * j as f64 / n, y0));
    }
    for j in 0..n_side {
        pts.push(Complex64::new(x1, y0 + (y1 - y0) * j as f64 / n));
    }
    for j in 0..n_side {
        pts.push(Complex64::new(x1 - (x1 - x0) * j as f64 / n, y1));
    }
    for j in 0..n_side {
        pts.push(Complex64::new(x0, y1 - (y1 - y0) * j as f64 / n));
    }
    pts
}

pub const CONTOUR_FLOOR: f64 = 1e-12;

/// Winding number of the closed sample loop `values` (last point connects to the first).
pub fn count_zeros_upper(values: &[Complex64]) -> Result<i64> {
    if values.len() < 3 {
        return Err(Error::InvalidArgument(
            "contour needs at least three samples".into(),
        ));
    }
    let vmax = values.iter().fold(0.0f64, |a, v| a.max(v.norm()));
    let vmin = values.iter().fold(f64::MAX, |a, v| a.min(v.norm()));
    if !(vmin > CONTOUR_FLOOR * vmax) {
        return Err(Error::ContourThroughZero(vmin));
    }
    let mut total = 0.0;
    for j in 0..values.len() {
        let a = values[j];
        let b = values[(j + 1) % values.len()];
        total += (b / a).arg();
    }
    Ok((total / (2.0 * PI)).round() as i64)
}
