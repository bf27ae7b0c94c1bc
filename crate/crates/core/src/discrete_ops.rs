//! Difference quotients, averaging operators, mesh inner products and the
//! bilinear forms of the energy analysis.
//!
//! Nodal functions are slices of length `J + 1`. Cell coefficient arrays
//! (`rho_h`, `b_h`, `c_h`) also have length `J + 1` and are indexed by cell
//! number `1..=J`.

use std::ops::Deref;

use crate::error::{Error, Result};
use crate::problem::{Mesh, SampledCoefficients};

/// A function on the mesh nodes `x_0..=x_J`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(values: Vec<f64>) -> Self {
        GridFunction { values }
    }

    pub fn zeros(mesh: &Mesh) -> Self {
        GridFunction { values: vec![0.0; mesh.last() + 1] }
    }

    pub fn from_fn(mesh: &Mesh, f: impl Fn(f64) -> f64) -> Self {
        GridFunction { values: mesh.nodes().iter().map(|&x| f(x)).collect() }
    }

    /// Membership in `H_0`: the value at `x_0` is zero.
    pub fn in_h0(&self) -> bool {
        self.values.first().map_or(false, |&v| v == 0.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.values
    }
}

impl Deref for GridFunction {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.values
    }
}

/// Constants of the norm-equivalence and stability bounds for given weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormSet {
    pub sigma: f64,
    pub theta: f64,
    /// `1 - 4 max(theta, 0)`.
    pub c_theta: f64,
    /// `2 (sigma + |1 - sigma|)`.
    pub k_sigma: f64,
}

impl NormSet {
    pub fn new(sigma: f64, theta: f64) -> Self {
        NormSet {
            sigma,
            theta,
            c_theta: 1.0 - 4.0 * theta.max(0.0),
            k_sigma: 2.0 * (sigma + (1.0 - sigma).abs()),
        }
    }

    /// Upper constant `1 + 4 max(-theta, 0)` of the norm equivalence.
    pub fn upper_theta(&self) -> f64 {
        1.0 + 4.0 * (-self.theta).max(0.0)
    }
}

fn check_len(mesh: &Mesh, w: &[f64]) -> Result<()> {
    if w.len() != mesh.last() + 1 {
        return Err(Error::Length { expected: mesh.last() + 1, got: w.len() });
    }
    Ok(())
}

fn check_range(index: usize, lo: usize, hi: usize) -> Result<()> {
    if index < lo || index > hi {
        return Err(Error::Stencil { index, lo, hi });
    }
    Ok(())
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta <= 0.25) {
        return Err(Error::InvalidParameter(format!("theta = {theta} exceeds 1/4")));
    }
    Ok(())
}

fn check_h0(w: &[f64]) -> Result<()> {
    if w[0] != 0.0 {
        return Err(Error::NotInH0(w[0]));
    }
    Ok(())
}

/// `(W_j - W_{j-1}) / h_j`, `1 <= j <= J`.
pub fn backward_dx(mesh: &Mesh, w: &[f64], j: usize) -> Result<f64> {
    check_len(mesh, w)?;
    check_range(j, 1, mesh.last())?;
    Ok((w[j] - w[j - 1]) / mesh.h(j))
}

/// `(W_{j+1} - W_j) / h_{j+1/2}`, `1 <= j <= J-1`.
pub fn modified_forward_dx(mesh: &Mesh, w: &[f64], j: usize) -> Result<f64> {
    check_len(mesh, w)?;
    check_range(j, 1, mesh.last() - 1)?;
    Ok((w[j + 1] - w[j]) / mesh.h_half(j))
}

/// `(W_{j+1} - W_{j-1}) / (2 h_{j+1/2})`, `1 <= j <= J-1`.
pub fn central_dx(mesh: &Mesh, w: &[f64], j: usize) -> Result<f64> {
    check_len(mesh, w)?;
    check_range(j, 1, mesh.last() - 1)?;
    Ok((w[j + 1] - w[j - 1]) / (2.0 * mesh.h_half(j)))
}

/// Modified forward quotient of the backward quotient, `1 <= j <= J-1`.
pub fn second_dx(mesh: &Mesh, w: &[f64], j: usize) -> Result<f64> {
    check_len(mesh, w)?;
    check_range(j, 1, mesh.last() - 1)?;
    let right = (w[j + 1] - w[j]) / mesh.h(j + 1);
    let left = (w[j] - w[j - 1]) / mesh.h(j);
    Ok((right - left) / mesh.h_half(j))
}

/// Three-point average `s_theta W_j`, `1 <= j <= J-1`.
pub fn avg_s_theta(mesh: &Mesh, w: &[f64], theta: f64, j: usize) -> Result<f64> {
    check_len(mesh, w)?;
    check_range(j, 1, mesh.last() - 1)?;
    let hh = mesh.h_half(j);
    Ok(theta * mesh.h(j) / hh * w[j - 1]
        + (1.0 - 2.0 * theta) * w[j]
        + theta * mesh.h(j + 1) / hh * w[j + 1])
}

/// Two-point average `ŝ_x W_j` of `W_j` and `W_{j+1}`, `1 <= j <= J-1`.
pub fn avg_s_hat(mesh: &Mesh, w: &[f64], j: usize) -> Result<f64> {
    check_len(mesh, w)?;
    check_range(j, 1, mesh.last() - 1)?;
    let hh = mesh.h_half(j);
    Ok(mesh.h(j) / (2.0 * hh) * w[j] + mesh.h(j + 1) / (2.0 * hh) * w[j + 1])
}

/// Weighted averaging `C_theta[kappa] W_j` with cell coefficients `kappa`.
pub fn c_theta_apply(mesh: &Mesh, kappa: &[f64], w: &[f64], theta: f64, j: usize) -> Result<f64> {
    check_len(mesh, kappa)?;
    check_len(mesh, w)?;
    check_range(j, 1, mesh.last() - 1)?;
    let hh = mesh.h_half(j);
    Ok(theta * mesh.h(j) / hh * kappa[j] * w[j - 1]
        + (1.0 - 2.0 * theta) * avg_s_hat(mesh, kappa, j)? * w[j]
        + theta * mesh.h(j + 1) / hh * kappa[j + 1] * w[j + 1])
}

/// Splits `s_theta W_J` into the halves `s⁻` (using `W_{J-1}, W_J`) and
/// `s⁺` (using `W_J, W_{J+1}`); `s⁺` needs the value beyond the mesh.
pub fn split_s_theta_boundary(w: &[f64], theta: f64, beyond: Option<f64>) -> (f64, Option<f64>) {
    let jn = w.len() - 1;
    let minus = theta * w[jn - 1] + (0.5 - theta) * w[jn];
    let plus = beyond.map(|next| (0.5 - theta) * w[jn] + theta * next);
    (minus, plus)
}

fn s_minus(w: &[f64], theta: f64) -> f64 {
    split_s_theta_boundary(w, theta, None).0
}

/// `(V, W)` over the interior nodes with weights `h_{j+1/2}`.
pub fn inner_omega(mesh: &Mesh, v: &[f64], w: &[f64]) -> Result<f64> {
    check_len(mesh, v)?;
    check_len(mesh, w)?;
    Ok((1..mesh.last()).map(|j| v[j] * w[j] * mesh.h_half(j)).sum())
}

/// `(V, W)` over nodes `1..=J` with weights `h_j`.
pub fn inner_tilde(mesh: &Mesh, v: &[f64], w: &[f64]) -> Result<f64> {
    check_len(mesh, v)?;
    check_len(mesh, w)?;
    Ok((1..=mesh.last()).map(|j| v[j] * w[j] * mesh.h(j)).sum())
}

/// Interior inner product plus the half-cell boundary term `V_J W_J h / 2`.
pub fn inner_bar(mesh: &Mesh, v: &[f64], w: &[f64]) -> Result<f64> {
    let jn = mesh.last();
    Ok(inner_omega(mesh, v, w)? + v[jn] * w[jn] * 0.5 * mesh.tail_step())
}

pub fn norm_omega(mesh: &Mesh, w: &[f64]) -> Result<f64> {
    Ok(inner_omega(mesh, w, w)?.sqrt())
}

pub fn norm_tilde(mesh: &Mesh, w: &[f64]) -> Result<f64> {
    Ok(inner_tilde(mesh, w, w)?.sqrt())
}

pub fn norm_bar(mesh: &Mesh, w: &[f64]) -> Result<f64> {
    Ok(inner_bar(mesh, w, w)?.sqrt())
}

/// Backward quotients `∂̄_x W_j` for `j = 1..=J` (entry 0 is zero).
pub fn backward_dx_all(mesh: &Mesh, w: &[f64]) -> Result<Vec<f64>> {
    check_len(mesh, w)?;
    let mut out = vec![0.0; w.len()];
    for j in 1..w.len() {
        out[j] = (w[j] - w[j - 1]) / mesh.h(j);
    }
    Ok(out)
}

/// Bilinear form `(C_theta[kappa] U, W)_omega + kappa_J (s⁻U)_J W_J h_J` on `H_0`.
pub fn form_c_theta(mesh: &Mesh, u: &[f64], w: &[f64], kappa: &[f64], theta: f64) -> Result<f64> {
    check_theta(theta)?;
    check_len(mesh, u)?;
    check_len(mesh, w)?;
    check_len(mesh, kappa)?;
    check_h0(u)?;
    check_h0(w)?;
    let jn = mesh.last();
    let mut sum = 0.0;
    for j in 1..jn {
        sum += c_theta_apply(mesh, kappa, u, theta, j)? * w[j] * mesh.h_half(j);
    }
    Ok(sum + kappa[jn] * s_minus(u, theta) * w[jn] * mesh.h(jn))
}

/// `(b ∂̄_x U, ∂̄_x W)` over cells `1..=J`.
pub fn form_stiffness(mesh: &Mesh, u: &[f64], w: &[f64], b: &[f64]) -> Result<f64> {
    check_len(mesh, b)?;
    let du = backward_dx_all(mesh, u)?;
    let dw = backward_dx_all(mesh, w)?;
    Ok((1..=mesh.last()).map(|j| b[j] * du[j] * dw[j] * mesh.h(j)).sum())
}

/// Energy form: stiffness plus the reaction form `C_theta[c_h]` with its
/// boundary term.
pub fn form_l(
    mesh: &Mesh,
    u: &[f64],
    w: &[f64],
    coeffs: &SampledCoefficients,
    theta: f64,
) -> Result<f64> {
    Ok(form_stiffness(mesh, u, w, &coeffs.b)? + form_c_theta(mesh, u, w, &coeffs.c, theta)?)
}
