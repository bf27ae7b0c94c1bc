//! Time stepping of the weighted, spatially averaged scheme.
//!
//! Each level solves a three-point system: a Dirichlet row at `x_0`, the
//! interior rows `1..J-1`, and a last row at `x_J` obtained from the
//! boundary equation
//!
//! ```text
//! b_∞ ∂̄_x U_J^(σ) + h_J s⁻_θ(ρ_∞ ∂̄_t U + c_∞ U^(σ))_J = b_∞ S^m(U_J^0..U_J^m)
//! ```
//!
//! with `S` the transparent-boundary convolution (`Dtbc`) or zero
//! (`Neumann`). The `Reference` mode runs the same scheme with a Neumann
//! closure on a domain enlarged by `extension_factor` and restricts the
//! result to the original nodes.

use crate::error::{Error, Result};
use crate::kernel::{kernel_by_recurrence, Kernel, KernelParams};
use crate::problem::{sample, Mesh, ProblemSpec, SampledCoefficients};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryMode {
    Dtbc,
    Neumann,
    Reference { extension_factor: f64 },
}

/// Default tolerance of the doubling self-check in reference runs.
pub const DEFAULT_DOUBLING_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub sigma: f64,
    pub theta: f64,
    pub boundary: BoundaryMode,
    /// Allowed max-abs difference between reference runs with the
    /// extension factor and twice the factor.
    pub doubling_tol: f64,
}

impl SchemeConfig {
    pub fn new(sigma: f64, theta: f64, boundary: BoundaryMode) -> Result<Self> {
        if !(sigma >= 0.5) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma = {sigma} is below 1/2")));
        }
        if !(theta <= 0.25) {
            return Err(Error::InvalidParameter(format!("theta = {theta} exceeds 1/4")));
        }
        if let BoundaryMode::Reference { extension_factor } = boundary {
            if !(extension_factor >= 2.0) {
                return Err(Error::InvalidParameter(format!(
                    "extension factor {extension_factor} is below 2"
                )));
            }
        }
        Ok(SchemeConfig { sigma, theta, boundary, doubling_tol: DEFAULT_DOUBLING_TOL })
    }

    pub fn with_doubling_tol(mut self, tol: f64) -> Self {
        self.doubling_tol = tol;
        self
    }
}

/// Three-point system for the unknowns `U_0..=U_J` of one level.
///
/// Row `j` reads `sub[j] U_{j-1} + diag[j] U_j + sup[j] U_{j+1} = rhs[j]`;
/// `sub[0]` and `sup[J]` are unused.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalSystem {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl TridiagonalSystem {
    pub fn zeros(n: usize) -> Self {
        TridiagonalSystem {
            sub: vec![0.0; n],
            diag: vec![0.0; n],
            sup: vec![0.0; n],
            rhs: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Matrix-vector product of the left-hand side.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|j| {
                let mut v = self.diag[j] * u[j];
                if j > 0 {
                    v += self.sub[j] * u[j - 1];
                }
                if j + 1 < n {
                    v += self.sup[j] * u[j + 1];
                }
                v
            })
            .collect()
    }

    pub fn factor(&self) -> Result<TridiagonalFactors> {
        let n = self.len();
        let mut pivots = vec![0.0; n];
        let mut mult = vec![0.0; n];
        for j in 0..n {
            let mut p = self.diag[j];
            if j > 0 {
                mult[j] = self.sub[j] / pivots[j - 1];
                p -= mult[j] * self.sup[j - 1];
            }
            let scale = self.diag[j].abs()
                + if j > 0 { self.sub[j].abs() } else { 0.0 }
                + if j + 1 < n { self.sup[j].abs() } else { 0.0 };
            if !(p.abs() > 1e-14 * scale) {
                return Err(Error::ZeroPivot { row: j, pivot: p });
            }
            pivots[j] = p;
        }
        Ok(TridiagonalFactors { sup: self.sup.clone(), pivots, mult })
    }

    /// Thomas elimination.
    pub fn solve(&self) -> Result<Vec<f64>> {
        Ok(self.factor()?.solve(&self.rhs))
    }
}

/// LU factors of a tridiagonal matrix, reusable across right-hand sides.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalFactors {
    sup: Vec<f64>,
    pivots: Vec<f64>,
    mult: Vec<f64>,
}

impl TridiagonalFactors {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.pivots.len();
        let mut y = rhs.to_vec();
        for j in 1..n {
            y[j] -= self.mult[j] * y[j - 1];
        }
        let mut x = vec![0.0; n];
        x[n - 1] = y[n - 1] / self.pivots[n - 1];
        for j in (0..n - 1).rev() {
            x[j] = (y[j] - self.sup[j] * x[j + 1]) / self.pivots[j];
        }
        x
    }

    pub fn min_abs_pivot(&self) -> f64 {
        self.pivots.iter().fold(f64::INFINITY, |a, p| a.min(p.abs()))
    }
}

/// Solution at the latest level together with the boundary history
/// `Φ^l = U_J^l`, `l = 0..=m`.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeState {
    pub u: Vec<f64>,
    pub history: Vec<f64>,
    pub level: usize,
}

impl SchemeState {
    pub fn initial(u0: Vec<f64>) -> Self {
        let phi0 = *u0.last().expect("empty initial vector");
        SchemeState { u: u0, history: vec![phi0], level: 0 }
    }
}

/// Lower coefficient `α_{s,j}` for weight `s` (the new level uses `s = σ`,
/// the old level `s = σ - 1`).
fn alpha_coef(mesh: &Mesh, co: &SampledCoefficients, theta: f64, s: f64, j: usize) -> f64 {
    let h = mesh.h(j);
    theta * (h * co.rho[j] / mesh.tau() + s * h * co.c[j]) - s * co.b[j] / h
}

/// Diagonal half-coefficient `β_{s,j}`.
fn beta_coef(mesh: &Mesh, co: &SampledCoefficients, theta: f64, s: f64, j: usize) -> f64 {
    let h = mesh.h(j);
    (0.5 - theta) * (h * co.rho[j] / mesh.tau() + s * h * co.c[j]) + s * co.b[j] / h
}

/// Fills the Dirichlet row and the interior rows `1..=J-1` for level `m`,
/// from the previous level held in `state`.
pub fn assemble_interior(
    mesh: &Mesh,
    coeffs: &SampledCoefficients,
    config: &SchemeConfig,
    state: &SchemeState,
    m: usize,
    system: &mut TridiagonalSystem,
) {
    let jn = mesh.last();
    let (sigma, theta) = (config.sigma, config.theta);
    let old = &state.u;
    system.sub[0] = 0.0;
    system.diag[0] = 1.0;
    system.sup[0] = 0.0;
    system.rhs[0] = coeffs.boundary[m];
    for j in 1..jn {
        let (a_new_l, a_new_r) = (
            alpha_coef(mesh, coeffs, theta, sigma, j),
            alpha_coef(mesh, coeffs, theta, sigma, j + 1),
        );
        let b_new = beta_coef(mesh, coeffs, theta, sigma, j)
            + beta_coef(mesh, coeffs, theta, sigma, j + 1);
        let s_old = sigma - 1.0;
        let (a_old_l, a_old_r) = (
            alpha_coef(mesh, coeffs, theta, s_old, j),
            alpha_coef(mesh, coeffs, theta, s_old, j + 1),
        );
        let b_old = beta_coef(mesh, coeffs, theta, s_old, j)
            + beta_coef(mesh, coeffs, theta, s_old, j + 1);
        system.sub[j] = a_new_l;
        system.diag[j] = b_new;
        system.sup[j] = a_new_r;
        system.rhs[j] = a_old_l * old[j - 1]
            + b_old * old[j]
            + a_old_r * old[j + 1]
            + mesh.h_half(j) * coeffs.forcing[m][j];
    }
}

/// Fills row `J` for level `m`. With a kernel the current-level convolution
/// term `R^0 Φ^m` moves to the diagonal and `Σ_{q>=1} R^q Φ^{m-q}` goes to
/// the right-hand side; without one the row is the discrete Neumann
/// condition.
pub fn assemble_boundary_row(
    mesh: &Mesh,
    coeffs: &SampledCoefficients,
    kernel: Option<&Kernel>,
    config: &SchemeConfig,
    state: &SchemeState,
    m: usize,
    system: &mut TridiagonalSystem,
) -> Result<()> {
    let jn = mesh.last();
    let (sigma, theta) = (config.sigma, config.theta);
    let old = &state.u;
    let s_old = sigma - 1.0;
    system.sub[jn] = alpha_coef(mesh, coeffs, theta, sigma, jn);
    system.diag[jn] = beta_coef(mesh, coeffs, theta, sigma, jn);
    system.sup[jn] = 0.0;
    system.rhs[jn] = alpha_coef(mesh, coeffs, theta, s_old, jn) * old[jn - 1]
        + beta_coef(mesh, coeffs, theta, s_old, jn) * old[jn];
    if let Some(kernel) = kernel {
        let r = kernel.coeffs();
        if r.len() < m + 1 {
            return Err(Error::KernelLength { need: m + 1, have: r.len() });
        }
        if state.history.len() < m {
            return Err(Error::Length { expected: m, got: state.history.len() });
        }
        let weight = coeffs.tail.b / (2.0 * mesh.tail_step());
        system.diag[jn] -= weight * r[0];
        let past: f64 = (1..=m).map(|q| r[q] * state.history[m - q]).sum();
        system.rhs[jn] += weight * past;
    }
    Ok(())
}

/// Solves the assembled system and advances the state by one level.
pub fn step(state: &SchemeState, system: &TridiagonalSystem) -> Result<SchemeState> {
    let u = system.solve()?;
    Ok(advance(state, u))
}

fn advance(state: &SchemeState, u: Vec<f64>) -> SchemeState {
    let mut history = state.history.clone();
    history.push(*u.last().unwrap());
    SchemeState { u, history, level: state.level + 1 }
}

/// All levels `U^0..=U^M` of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub mesh: Mesh,
    pub levels: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn boundary_history(&self) -> Vec<f64> {
        self.levels.iter().map(|u| *u.last().unwrap()).collect()
    }

    /// Max-abs difference over all nodes and levels with a trajectory on the
    /// same nodes.
    pub fn max_abs_diff(&self, other: &Trajectory) -> f64 {
        self.levels
            .iter()
            .zip(&other.levels)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    /// Restriction to the first `j_count + 1` nodes.
    fn restrict(&self, mesh: &Mesh) -> Trajectory {
        let n = mesh.last() + 1;
        Trajectory {
            mesh: mesh.clone(),
            levels: self.levels.iter().map(|u| u[..n].to_vec()).collect(),
        }
    }
}

/// Builds the boundary kernel for a DTBC run on `mesh`.
pub fn boundary_kernel(
    mesh: &Mesh,
    coeffs: &SampledCoefficients,
    config: &SchemeConfig,
) -> Result<Kernel> {
    let params =
        KernelParams::derive(coeffs.tail, mesh.tail_step(), mesh.tau(), config.sigma, config.theta)?;
    Ok(kernel_by_recurrence(&params, mesh.steps()))
}

/// Marches pre-sampled data with a DTBC or Neumann closure.
pub fn march_sampled(
    mesh: &Mesh,
    coeffs: &SampledCoefficients,
    config: &SchemeConfig,
) -> Result<Trajectory> {
    let kernel = match config.boundary {
        BoundaryMode::Dtbc => Some(boundary_kernel(mesh, coeffs, config)?),
        BoundaryMode::Neumann => None,
        BoundaryMode::Reference { .. } => {
            return Err(Error::InvalidParameter(
                "reference mode needs the continuous problem; use march".into(),
            ))
        }
    };
    let n = mesh.last() + 1;
    let mut state = SchemeState::initial(coeffs.initial.clone());
    let mut levels = Vec::with_capacity(mesh.steps() + 1);
    levels.push(state.u.clone());
    let mut system = TridiagonalSystem::zeros(n);
    let mut factors: Option<TridiagonalFactors> = None;
    for m in 1..=mesh.steps() {
        assemble_interior(mesh, coeffs, config, &state, m, &mut system);
        assemble_boundary_row(mesh, coeffs, kernel.as_ref(), config, &state, m, &mut system)?;
        // The matrix does not depend on m for a uniform time step.
        let lu = match &factors {
            Some(lu) => lu,
            None => factors.insert(system.factor()?),
        };
        let u = lu.solve(&system.rhs);
        state = advance(&state, u);
        levels.push(state.u.clone());
    }
    Ok(Trajectory { mesh: mesh.clone(), levels })
}

/// Samples the problem and marches to `T` under the configured closure.
pub fn march(problem: &ProblemSpec, mesh: &Mesh, config: &SchemeConfig) -> Result<Trajectory> {
    match config.boundary {
        BoundaryMode::Reference { extension_factor } => {
            march_reference(problem, mesh, config, extension_factor)
        }
        _ => {
            let coeffs = sample(problem, mesh)?;
            march_sampled(mesh, &coeffs, config)
        }
    }
}

fn extended_run(
    problem: &ProblemSpec,
    mesh: &Mesh,
    config: &SchemeConfig,
    factor: f64,
) -> Result<Trajectory> {
    let x_end = mesh.x_end();
    let extra = ((factor - 1.0) * x_end / mesh.tail_step() - 1e-9).ceil() as usize;
    let big = mesh.extended(extra);
    let wide = problem.clone().with_truncation(big.x_end());
    let coeffs = sample(&wide, &big)?;
    let neumann = SchemeConfig { boundary: BoundaryMode::Neumann, ..*config };
    Ok(march_sampled(&big, &coeffs, &neumann)?.restrict(mesh))
}

/// Runs the scheme with a Neumann closure on `[0, factor * X]` and returns
/// the restriction to the original nodes. The run is repeated with twice the
/// factor; a difference above `config.doubling_tol` is reported as
/// far-boundary contamination.
pub fn march_reference(
    problem: &ProblemSpec,
    mesh: &Mesh,
    config: &SchemeConfig,
    extension_factor: f64,
) -> Result<Trajectory> {
    if !(extension_factor >= 2.0) {
        return Err(Error::InvalidParameter(format!(
            "extension factor {extension_factor} is below 2"
        )));
    }
    let base = extended_run(problem, mesh, config, extension_factor)?;
    let check = extended_run(problem, mesh, config, 2.0 * extension_factor)?;
    let diff = base.max_abs_diff(&check);
    if diff > config.doubling_tol {
        return Err(Error::Contamination { diff, tol: config.doubling_tol });
    }
    Ok(base)
}
