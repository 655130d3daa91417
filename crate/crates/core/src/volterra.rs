//! Convolution-type Volterra equations of the second kind and the homogeneous
//! uniqueness check built on them.

use crate::error::{Error, Result};
use num_complex::Complex64;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use std::ops::{Add, Div, Mul, Sub};

/// Field the solvers march over: real or complex samples.
pub trait Sample:
    Copy
    + Zero
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn magnitude(self) -> f64;
}

impl Sample for f64 {
    fn magnitude(self) -> f64 {
        self.abs()
    }
}

impl Sample for Complex64 {
    fn magnitude(self) -> f64 {
        self.norm()
    }
}

/// Samples of a kernel behind its front, `samples[j] = p(front + j*dt)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionKernel {
    pub dt: f64,
    pub front_time: f64,
    pub samples: Vec<f64>,
    /// Weight of the delta part (or the leading derivative value for distributed sources).
    pub leading_weight: f64,
    pub deriv_order: u32,
}

/// Trapezoid-product solve of `lambda(t) + int_0^t K(t-s) lambda(s) ds = f(t)` on `t_j = j*h`.
pub fn solve_second_kind<T: Sample>(kernel: &[f64], rhs: &[T], h: f64) -> Result<Vec<T>> {
    let n = rhs.len();
    if kernel.len() < n {
        return Err(Error::InvalidArgument(format!(
            "kernel has {} samples, rhs {}",
            kernel.len(),
            n
        )));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidArgument("step must be positive".into()));
    }
    let kmax = kernel[..n].iter().fold(0.0f64, |m, k| m.max(k.abs()));
    if h * kmax >= 1.0 {
        return Err(Error::StepTooLarge(h * kmax));
    }
    let mut lam: Vec<T> = Vec::with_capacity(n);
    if n == 0 {
        return Ok(lam);
    }
    lam.push(rhs[0]);
    let diag = 1.0 + 0.5 * h * kernel[0];
    for i in 1..n {
        let mut acc = lam[0] * (0.5 * kernel[i]);
        for j in 1..i {
            acc = acc + lam[j] * kernel[i - j];
        }
        lam.push((rhs[i] - acc * h) / diag);
    }
    Ok(lam)
}

fn first_derivative(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    assert!(n >= 5, "need at least five samples to differentiate");
    let mut d = vec![0.0; n];
    for i in 2..n - 2 {
        d[i] = (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]) / (12.0 * h);
    }
    d[0] = (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) / (12.0 * h);
    d[1] = (-3.0 * f[0] - 10.0 * f[1] + 18.0 * f[2] - 6.0 * f[3] + f[4]) / (12.0 * h);
    d[n - 2] = (3.0 * f[n - 1] + 10.0 * f[n - 2] - 18.0 * f[n - 3] + 6.0 * f[n - 4] - f[n - 5])
        / (12.0 * h);
    d[n - 1] = (25.0 * f[n - 1] - 48.0 * f[n - 2] + 36.0 * f[n - 3] - 16.0 * f[n - 4]
        + 3.0 * f[n - 5])
        / (12.0 * h);
    d
}

/// `order`-th derivative by repeated fourth-order stencils, one-sided at both ends.
pub fn differentiate(f: &[f64], h: f64, order: u32) -> Vec<f64> {
    let mut d = f.to_vec();
    for _ in 0..order {
        d = first_derivative(&d, h);
    }
    d
}

/// Result of differentiating a first-kind convolution equation into second-kind form.
#[derive(Clone, Debug, PartialEq)]
pub struct Reduction {
    /// `scale * d^m Phi / dt^m`, the kernel of the second-kind equation.
    pub kernel: Vec<f64>,
    /// Factor multiplying the differentiated right-hand side: `1 / leading_value`.
    pub scale: f64,
}

pub const LEADING_FLOOR: f64 = 1e-12;

/// Turns `int_0^t Phi(t-s) lambda(s) ds = F(t)`, where `Phi` has vanishing derivatives
/// below order `deriv_order - 1` at the front and `Phi^(deriv_order-1)(0) = leading_value`,
/// into `lambda + int_0^t scale*Phi^(deriv_order)(t-s) lambda(s) ds = scale*F^(deriv_order)`.
pub fn reduce_first_to_second(
    kernel: &ConvolutionKernel,
    deriv_order: u32,
    leading_value: f64,
) -> Result<Reduction> {
    if deriv_order == 0 {
        return Err(Error::InvalidArgument(
            "derivative order must be at least 1".into(),
        ));
    }
    let scale_ref = kernel.samples.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if !(leading_value.abs() > LEADING_FLOOR * scale_ref) {
        return Err(Error::LeadingValueZero(leading_value));
    }
    let scale = 1.0 / leading_value;
    let d = differentiate(&kernel.samples, kernel.dt, deriv_order);
    Ok(Reduction {
        kernel: d.into_iter().map(|v| v * scale).collect(),
        scale,
    })
}

/// Trapezoid convolution `(a*b)(t_n) = int_0^{t_n} a(t_n - s) b(s) ds`.
pub fn convolve<T: Sample>(a: &[T], b: &[T], h: f64) -> Vec<T>
where
    T: Mul<T, Output = T>,
{
    let n = a.len().min(b.len());
    let mut out = vec![T::zero(); n];
    for (i, o) in out.iter_mut().enumerate().skip(1) {
        let mut acc = (a[i] * b[0] + a[0] * b[i]) * 0.5;
        for j in 1..i {
            acc = acc + a[i - j] * b[j];
        }
        *o = acc * h;
    }
    out
}

/// `h1 + h1*lambda2 - h2 - h2*lambda1` on a common grid.
pub fn convolution_residual(
    h1: &[Complex64],
    h2: &[Complex64],
    lambda1: &[Complex64],
    lambda2: &[Complex64],
    dt: f64,
) -> Vec<Complex64> {
    let c12 = convolve(h1, lambda2, dt);
    let c21 = convolve(h2, lambda1, dt);
    (0..c12.len())
        .map(|i| h1[i] + c12[i] - h2[i] - c21[i])
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub lambda_sup: f64,
    pub tolerance: f64,
    pub unique: bool,
    pub n_steps: usize,
}

/// Window length behind the front on which the early-time data agree.
pub fn uniqueness_window(epsilon: f64, chord_length: f64) -> Result<f64> {
    if epsilon <= chord_length {
        return Err(Error::WindowEmpty {
            epsilon,
            length: chord_length,
        });
    }
    Ok(epsilon - chord_length)
}

/// Solves `lambda + K*lambda = forcing` on the window and checks `lambda == 0` to
/// `1e-8 * (1 + |K|_inf * T)`. A `None` forcing means the homogeneous system.
pub fn uniqueness_mechanism(
    kernel: &[f64],
    forcing: Option<&[f64]>,
    dt: f64,
    window: f64,
) -> Result<Verdict> {
    let n = ((window / dt).floor() as usize + 1).min(kernel.len());
    if n < 2 {
        return Err(Error::InvalidArgument(
            "window holds fewer than two samples".into(),
        ));
    }
    let zeros = vec![0.0; n];
    let f = match forcing {
        Some(f) => &f[..n.min(f.len())],
        None => &zeros[..],
    };
    let lam = solve_second_kind(&kernel[..f.len()], f, dt)?;
    let kmax = kernel[..f.len()].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tolerance = 1e-8 * (1.0 + kmax * window);
    let lambda_sup = lam.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(Verdict {
        lambda_sup,
        tolerance,
        unique: lambda_sup <= tolerance,
        n_steps: f.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_kernel_gives_exponential() {
        let h = 1e-3;
        let n = 2001;
        let k = vec![1.0; n];
        let f = vec![1.0; n];
        let lam = solve_second_kind(&k, &f, h).unwrap();
        let err = lam
            .iter()
            .enumerate()
            .map(|(i, l)| (l - (-(i as f64) * h).exp()).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-6, "err {err}");
    }

    #[test]
    fn second_order_convergence() {
        let err = |h: f64| {
            let n = (1.0 / h) as usize + 1;
            let lam = solve_second_kind(&vec![1.0; n], &vec![1.0; n], h).unwrap();
            (lam[n - 1] - (-1.0f64).exp()).abs()
        };
        let r = err(0.02) / err(0.01);
        assert!((r - 4.0).abs() < 0.2, "ratio {r}");
    }

    #[test]
    fn trivial_cases() {
        let lam = solve_second_kind(&[0.5; 10], &[0.0; 10], 0.1).unwrap();
        assert!(lam.iter().all(|v| *v == 0.0));
        let f: Vec<f64> = (0..10).map(|i| (i as f64).sin()).collect();
        assert_eq!(solve_second_kind(&[0.0; 10], &f, 0.1).unwrap(), f);
        assert!(matches!(
            solve_second_kind(&[20.0; 10], &f, 0.1),
            Err(Error::StepTooLarge(_))
        ));
    }

    #[test]
    fn polynomial_kernels_differentiate_exactly() {
        let h = 0.01;
        let t: Vec<f64> = (0..50).map(|i| i as f64 * h).collect();
        for m in 1..=4u32 {
            let f: Vec<f64> = t.iter().map(|t| t.powi(4)).collect();
            let d = differentiate(&f, h, m);
            for (ti, di) in t.iter().zip(&d) {
                let exact = match m {
                    1 => 4.0 * ti.powi(3),
                    2 => 12.0 * ti * ti,
                    3 => 24.0 * ti,
                    _ => 24.0,
                };
                assert!(
                    (di - exact).abs() < 1e-6 * (1.0 + exact.abs()),
                    "m={m} t={ti} {di} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn reduction_scales() {
        let h = 0.01;
        let g = 0.7;
        let v: Vec<f64> = (0..40)
            .map(|i| g * i as f64 * h + 0.2 * (i as f64 * h).powi(3))
            .collect();
        let k = ConvolutionKernel {
            dt: h,
            front_time: 0.0,
            samples: v,
            leading_weight: g,
            deriv_order: 2,
        };
        let r = reduce_first_to_second(&k, 2, g).unwrap();
        assert!((r.scale - 1.0 / g).abs() < 1e-15);
        let qg = 0.3;
        let r4 = reduce_first_to_second(&k, 4, -qg).unwrap();
        assert!((r4.scale + 1.0 / qg).abs() < 1e-15);
        assert!(matches!(
            reduce_first_to_second(&k, 1, 0.0),
            Err(Error::LeadingValueZero(_))
        ));
    }

    #[test]
    fn uniqueness_window_and_verdicts() {
        assert!(matches!(
            uniqueness_window(0.2, 0.2),
            Err(Error::WindowEmpty { .. })
        ));
        let w = uniqueness_window(0.2, 0.05).unwrap();
        let k: Vec<f64> = (0..200).map(|i| (i as f64 * 0.01).cos()).collect();
        let v = uniqueness_mechanism(&k, None, 0.001, w).unwrap();
        assert!(v.unique && v.lambda_sup == 0.0);
        let forcing = vec![1e-3; 200];
        let v = uniqueness_mechanism(&k, Some(&forcing), 0.001, w).unwrap();
        assert!(!v.unique);
    }
}
