//! Convolution kernel of the discrete transparent boundary condition.
//!
//! The boundary operator at `x_J` is the discrete convolution
//! `S^m Φ = (1 / 2h) Σ_{q=0..m} R^q Φ^{m-q}` with a real kernel `R` that
//! depends only on the tail constants, the steps `h`, `tau` and the weights
//! `sigma`, `theta`. Three independent constructions are provided:
//!
//! * [`kernel_by_recurrence`]: three-term recurrence, the production path;
//! * [`kernel_by_legendre`]: explicit formula through modified Legendre
//!   polynomials `p_{m,α,β}`;
//! * [`kernel_gf_oracle`]: Taylor coefficients of the generating function
//!   `d(z) (ν₁ - ν₂)(z)` by a trapezoidal contour integral, built from the
//!   characteristic roots of the exterior difference equation.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::problem::TailConstants;

/// Scalars derived from the tail constants, the mesh steps and the weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub sigma: f64,
    pub theta: f64,
    pub h: f64,
    pub tau: f64,
    pub tail: TailConstants,
    /// `h² rho_∞ / (2 tau b_∞)`.
    pub a1: f64,
    /// `h² c_∞ / (2 b_∞)`.
    pub a0: f64,
    /// `a0 / a1 = (c_∞ / rho_∞) tau`.
    pub d0: f64,
    /// `2 / a1 = 4 (b_∞ / rho_∞) tau / h²`.
    pub d1: f64,
    pub alpha0: f64,
    pub alpha1: f64,
    /// `alpha0 * alpha1`.
    pub alpha: f64,
    /// `(alpha0 + alpha1) / 2`.
    pub beta: f64,
    pub delta: f64,
    /// Weight at which `d(0)` vanishes; `None` when `2 a0 theta = 1`.
    pub sigma0: Option<f64>,
}

impl KernelParams {
    pub fn derive(tail: TailConstants, h: f64, tau: f64, sigma: f64, theta: f64) -> Result<Self> {
        if !(tail.rho > 0.0) || !(tail.b > 0.0) || !(tail.c >= 0.0) {
            return Err(Error::InvalidParameter(format!("invalid tail constants {tail:?}")));
        }
        if !(h > 0.0) || !(tau > 0.0) {
            return Err(Error::InvalidParameter(format!("need h, tau > 0, got {h}, {tau}")));
        }
        if !(sigma > 0.0) {
            return Err(Error::InvalidParameter(format!("need sigma > 0, got {sigma}")));
        }
        if !(theta <= 0.25) {
            return Err(Error::InvalidParameter(format!("theta = {theta} exceeds 1/4")));
        }
        let a1 = h * h * tail.rho / (2.0 * tau * tail.b);
        let a0 = h * h * tail.c / (2.0 * tail.b);
        let d0 = tail.c / tail.rho * tau;
        let d1 = 4.0 * tail.b / tail.rho * tau / (h * h);
        let s0 = 1.0 + sigma * d0;
        let s1 = s0 * (1.0 - 4.0 * theta) + sigma * d1;
        let delta = s0 * s1;
        if !(delta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "delta = {delta} is not positive for sigma = {sigma}, theta = {theta}"
            )));
        }
        let alpha0 = 1.0 - d0 / s0;
        let alpha1 = 1.0 - (d0 * (1.0 - 4.0 * theta) + d1) / s1;
        let denom = 1.0 - 2.0 * a0 * theta;
        let sigma0 = (denom != 0.0).then(|| 2.0 * a1 * theta / denom);
        Ok(KernelParams {
            sigma,
            theta,
            h,
            tau,
            tail,
            a1,
            a0,
            d0,
            d1,
            alpha0,
            alpha1,
            alpha: alpha0 * alpha1,
            beta: 0.5 * (alpha0 + alpha1),
            delta,
            sigma0,
        })
    }

    /// `sigma >= 1/2` and `theta <= 1/4`: the regime where the boundary
    /// operator is dissipative.
    pub fn in_stability_regime(&self) -> bool {
        self.sigma >= 0.5 && self.theta <= 0.25
    }

    /// Common factor `2 a1 sqrt(delta)`.
    pub fn scale(&self) -> f64 {
        2.0 * self.a1 * self.delta.sqrt()
    }
}

/// Kernel values `R^0..=R^M`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub params: KernelParams,
    coeffs: Vec<f64>,
}

impl Kernel {
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Largest index `M` available.
    pub fn len_m(&self) -> usize {
        self.coeffs.len() - 1
    }
}

/// `R^0 = -2 a1 sqrt(δ)`, `R^1 = 2 a1 sqrt(δ) β`,
/// `R^m = ((2m-3)/m) β R^{m-1} - ((m-3)/m) α R^{m-2}`.
pub fn kernel_by_recurrence(params: &KernelParams, m_max: usize) -> Kernel {
    let scale = params.scale();
    let (alpha, beta) = (params.alpha, params.beta);
    let mut r = Vec::with_capacity(m_max + 1);
    r.push(-scale);
    if m_max >= 1 {
        r.push(scale * beta);
    }
    for m in 2..=m_max {
        let mf = m as f64;
        let next = (2.0 * mf - 3.0) / mf * beta * r[m - 1] - (mf - 3.0) / mf * alpha * r[m - 2];
        r.push(next);
    }
    Kernel { params: *params, coeffs: r }
}

/// Modified Legendre values `p_{m,α,β}` for `m = 0..=m_max`.
pub fn modified_legendre(alpha: f64, beta: f64, m_max: usize) -> Vec<f64> {
    let mut p = Vec::with_capacity(m_max + 1);
    p.push(1.0);
    for m in 1..=m_max {
        let mf = m as f64;
        let prev2 = if m >= 2 { p[m - 2] } else { 0.0 };
        p.push((2.0 * mf - 1.0) / mf * beta * p[m - 1] - (mf - 1.0) / mf * alpha * prev2);
    }
    p
}

/// `R^m = 2 a1 sqrt(δ) (p_m - α p_{m-2}) / (2m - 1)`.
pub fn kernel_by_legendre(params: &KernelParams, m_max: usize) -> Kernel {
    let p = modified_legendre(params.alpha, params.beta, m_max);
    let scale = params.scale();
    let coeffs = (0..=m_max)
        .map(|m| {
            let lower = if m >= 2 { p[m - 2] } else { 0.0 };
            scale * (p[m] - params.alpha * lower) / (2.0 * m as f64 - 1.0)
        })
        .collect();
    Kernel { params: *params, coeffs }
}

/// Default contour radius for [`kernel_gf_oracle`].
pub const ORACLE_RADIUS: f64 = 0.9;
/// Default number of trapezoid nodes for [`kernel_gf_oracle`].
pub const ORACLE_POINTS: usize = 4096;

/// Generating function `d(z) (ν₁ - ν₂)(z)` where `ν₁` is the root of
/// `ν² - 2γ(z) ν + 1 = 0` inside the unit disc.
fn generating_function(params: &KernelParams, z: Complex64) -> Option<Complex64> {
    let (a0, a1, sigma, theta) = (params.a0, params.a1, params.sigma, params.theta);
    let one = Complex64::new(1.0, 0.0);
    let z_sigma = sigma + (1.0 - sigma) * z;
    let d = 2.0 * a1 * theta * (z - one) + (1.0 - 2.0 * a0 * theta) * z_sigma;
    if d.norm() == 0.0 {
        return None;
    }
    let gamma = one + (a1 * (one - z) + a0 * z_sigma) / d;
    let root = (gamma * gamma - one).sqrt();
    let (r1, r2) = (gamma - root, gamma + root);
    let nu1 = if r1.norm() < r2.norm() { r1 } else { r2 };
    if (nu1.norm() - 1.0).abs() < 1e-12 {
        return None;
    }
    let nu2 = one / nu1;
    Some(d * (nu1 - nu2))
}

/// Taylor coefficients `R^0..=R^{m_max}` of the generating function by the
/// trapezoidal rule on `|z| = radius`. The radius is halved while the
/// sampled integrand shows a branch switch; fails after repeated halving.
pub fn kernel_gf_oracle(
    params: &KernelParams,
    m_max: usize,
    radius: f64,
    quad_points: usize,
) -> Result<Vec<f64>> {
    if !(radius > 0.0) || quad_points < 2 * m_max + 2 {
        return Err(Error::InvalidParameter(format!(
            "oracle needs radius > 0 and at least {} points",
            2 * m_max + 2
        )));
    }
    let mut r = radius;
    for _ in 0..16 {
        if let Some(samples) = sample_contour(params, r, quad_points) {
            let n = quad_points as f64;
            let coeffs = (0..=m_max)
                .map(|m| {
                    let sum: f64 = samples
                        .iter()
                        .enumerate()
                        .map(|(k, p)| {
                            let phi = -(m as f64) * std::f64::consts::TAU * k as f64 / n;
                            (p * Complex64::from_polar(1.0, phi)).re
                        })
                        .sum();
                    sum / n / r.powi(m as i32)
                })
                .collect();
            return Ok(coeffs);
        }
        r *= 0.5;
    }
    Err(Error::BranchCut { radius: r })
}

fn sample_contour(params: &KernelParams, r: f64, n: usize) -> Option<Vec<Complex64>> {
    let samples = (0..n)
        .map(|k| {
            let z = Complex64::from_polar(r, std::f64::consts::TAU * k as f64 / n as f64);
            generating_function(params, z)
        })
        .collect::<Option<Vec<_>>>()?;
    let jumps: Vec<f64> = (0..n).map(|k| (samples[k] - samples[(k + n - 1) % n]).norm()).collect();
    let mean = jumps.iter().sum::<f64>() / n as f64;
    let peak = samples.iter().map(|p| p.norm()).fold(0.0, f64::max);
    let discontinuous = jumps.iter().any(|&j| j > 50.0 * mean + 1e-12 * peak);
    (!discontinuous).then_some(samples)
}

/// `(1 / 2h) Σ_{q=0..m} R^q Φ^{m-q}`.
pub fn convolve(kernel: &Kernel, history: &[f64], m: usize) -> Result<f64> {
    if kernel.coeffs.len() < m + 1 {
        return Err(Error::KernelLength { need: m + 1, have: kernel.coeffs.len() });
    }
    if history.len() < m + 1 {
        return Err(Error::Length { expected: m + 1, got: history.len() });
    }
    let sum: f64 = kernel.coeffs[..=m]
        .iter()
        .zip(history[..=m].iter().rev())
        .map(|(r, phi)| r * phi)
        .sum();
    Ok(sum / (2.0 * kernel.params.h))
}
