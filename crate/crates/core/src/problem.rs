//! The continuous initial-boundary value problem on the half-axis and its
//! finite meshes.
//!
//! A [`ProblemSpec`] holds the coefficient functions `rho`, `b`, `c`, the
//! forcing `f`, the Dirichlet datum `g` at `x = 0` and the initial datum `u0`.
//! Beyond the tail onset `x0` the coefficients must equal the tail constants
//! and `f`, `u0` must vanish; [`sample`] checks this on the mesh.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

pub type Fn1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type Fn2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Default absolute tolerance for "vanishing" data in the tail.
pub const DEFAULT_TAIL_TOL: f64 = 1e-5;

/// Relative tolerance for comparisons of abscissas and tail constants.
const GEOM_TOL: f64 = 1e-12;

/// Constant coefficient values beyond the tail onset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailConstants {
    pub rho: f64,
    pub b: f64,
    pub c: f64,
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub label: String,
    pub rho: Fn1,
    pub b: Fn1,
    pub c: Fn1,
    pub f: Fn2,
    pub g: Fn1,
    pub u0: Fn1,
    pub tail: TailConstants,
    /// Tail onset `X0`.
    pub x0: f64,
    /// Truncation abscissa `X`.
    pub x_end: f64,
    pub rho_lower: f64,
    pub b_lower: f64,
    pub tail_tol: f64,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("label", &self.label)
            .field("tail", &self.tail)
            .field("x0", &self.x0)
            .field("x_end", &self.x_end)
            .field("rho_lower", &self.rho_lower)
            .field("b_lower", &self.b_lower)
            .field("tail_tol", &self.tail_tol)
            .finish_non_exhaustive()
    }
}

impl ProblemSpec {
    /// Homogeneous heat equation `u_t = u_xx` with zero data on `(0, x_end)`.
    pub fn heat(x_end: f64, x0: f64) -> Self {
        ProblemSpec {
            label: "heat".into(),
            rho: Arc::new(|_| 1.0),
            b: Arc::new(|_| 1.0),
            c: Arc::new(|_| 0.0),
            f: Arc::new(|_, _| 0.0),
            g: Arc::new(|_| 0.0),
            u0: Arc::new(|_| 0.0),
            tail: TailConstants { rho: 1.0, b: 1.0, c: 0.0 },
            x0,
            x_end,
            rho_lower: 1.0,
            b_lower: 1.0,
            tail_tol: DEFAULT_TAIL_TOL,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_coefficients(
        mut self,
        rho: Fn1,
        b: Fn1,
        c: Fn1,
        tail: TailConstants,
        rho_lower: f64,
        b_lower: f64,
    ) -> Self {
        self.rho = rho;
        self.b = b;
        self.c = c;
        self.tail = tail;
        self.rho_lower = rho_lower;
        self.b_lower = b_lower;
        self
    }

    pub fn with_forcing(mut self, f: Fn2) -> Self {
        self.f = f;
        self
    }

    pub fn with_boundary(mut self, g: Fn1) -> Self {
        self.g = g;
        self
    }

    pub fn with_initial(mut self, u0: Fn1) -> Self {
        self.u0 = u0;
        self
    }

    pub fn with_tail_tol(mut self, tol: f64) -> Self {
        self.tail_tol = tol;
        self
    }

    /// Same problem truncated at a different abscissa (the tail onset is kept).
    pub fn with_truncation(mut self, x_end: f64) -> Self {
        self.x_end = x_end;
        self
    }
}

/// Spatial node placement for [`build_mesh`].
#[derive(Debug, Clone, PartialEq)]
pub enum Grading {
    Uniform,
    Nodes(Vec<f64>),
}

/// Spatial nodes `0 = x_0 < ... < x_J = X` and a uniform time grid
/// `t_m = m * tau`, `m = 0..=M`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    nodes: Vec<f64>,
    /// `steps[j - 1] = h_j`.
    steps: Vec<f64>,
    tau: f64,
    levels: usize,
}

/// Builds a mesh on `[0, x_end]` with `j_count` cells and `m_count` time steps.
pub fn build_mesh(
    x_end: f64,
    j_count: usize,
    grading: Grading,
    tau: f64,
    m_count: usize,
) -> Result<Mesh> {
    if j_count < 2 {
        return Err(Error::InvalidMesh(format!("need J >= 2, got {j_count}")));
    }
    if !(x_end > 0.0) || !x_end.is_finite() {
        return Err(Error::InvalidMesh(format!("need X > 0, got {x_end}")));
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidMesh(format!("need tau > 0, got {tau}")));
    }
    match grading {
        Grading::Uniform => {
            let h = x_end / j_count as f64;
            let nodes = (0..=j_count)
                .map(|j| x_end * j as f64 / j_count as f64)
                .collect();
            Ok(Mesh { nodes, steps: vec![h; j_count], tau, levels: m_count })
        }
        Grading::Nodes(nodes) => {
            if nodes.len() != j_count + 1 {
                return Err(Error::InvalidMesh(format!(
                    "expected {} nodes, got {}",
                    j_count + 1,
                    nodes.len()
                )));
            }
            if nodes[0] != 0.0 {
                return Err(Error::InvalidMesh(format!("first node must be 0, got {}", nodes[0])));
            }
            if (nodes[j_count] - x_end).abs() > GEOM_TOL * x_end {
                return Err(Error::InvalidMesh(format!(
                    "last node {} differs from X = {x_end}",
                    nodes[j_count]
                )));
            }
            let mut steps = Vec::with_capacity(j_count);
            for (j, w) in nodes.windows(2).enumerate() {
                let h = w[1] - w[0];
                if !(h > 0.0) {
                    return Err(Error::InvalidMesh(format!(
                        "nodes not strictly increasing at j = {}: {} -> {}",
                        j + 1,
                        w[0],
                        w[1]
                    )));
                }
                steps.push(h);
            }
            Ok(Mesh { nodes, steps, tau, levels: m_count })
        }
    }
}

impl Mesh {
    pub fn uniform(x_end: f64, j_count: usize, tau: f64, m_count: usize) -> Result<Mesh> {
        build_mesh(x_end, j_count, Grading::Uniform, tau, m_count)
    }

    pub fn from_nodes(nodes: Vec<f64>, tau: f64, m_count: usize) -> Result<Mesh> {
        let j_count = nodes.len().saturating_sub(1);
        let x_end = nodes.last().copied().unwrap_or(0.0);
        build_mesh(x_end, j_count, Grading::Nodes(nodes), tau, m_count)
    }

    /// Index `J` of the last node.
    pub fn last(&self) -> usize {
        self.steps.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn x(&self, j: usize) -> f64 {
        self.nodes[j]
    }

    pub fn x_end(&self) -> f64 {
        self.nodes[self.last()]
    }

    /// `h_j = x_j - x_{j-1}` for `1 <= j <= J`; beyond `J` the tail step.
    pub fn h(&self, j: usize) -> f64 {
        assert!(j >= 1, "h_0 is undefined");
        if j <= self.last() {
            self.steps[j - 1]
        } else {
            self.tail_step()
        }
    }

    /// `h_{j+1/2} = (h_j + h_{j+1}) / 2`, using the uniform tail for `j = J`.
    pub fn h_half(&self, j: usize) -> f64 {
        0.5 * (self.h(j) + self.h(j + 1))
    }

    /// Midpoint `x_{j-1/2}` of cell `j`.
    pub fn midpoint(&self, j: usize) -> f64 {
        0.5 * (self.nodes[j - 1] + self.nodes[j])
    }

    /// Tail step `h = h_J`.
    pub fn tail_step(&self) -> f64 {
        self.steps[self.steps.len() - 1]
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Number of time steps `M`.
    pub fn steps(&self) -> usize {
        self.levels
    }

    pub fn t(&self, m: usize) -> f64 {
        m as f64 * self.tau
    }

    pub fn t_final(&self) -> f64 {
        self.t(self.levels)
    }

    pub fn is_uniform(&self) -> bool {
        let h = self.steps[0];
        self.steps.iter().all(|&s| (s - h).abs() <= GEOM_TOL * h)
    }

    /// Appends `extra` cells of the tail step beyond `X`.
    pub fn extended(&self, extra: usize) -> Mesh {
        let h = self.tail_step();
        let x_end = self.x_end();
        let mut nodes = self.nodes.clone();
        let mut steps = self.steps.clone();
        for k in 1..=extra {
            nodes.push(x_end + k as f64 * h);
            steps.push(h);
        }
        Mesh { nodes, steps, tau: self.tau, levels: self.levels }
    }

    /// Same spatial nodes with a different time grid.
    pub fn with_time(&self, tau: f64, m_count: usize) -> Result<Mesh> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidMesh(format!("need tau > 0, got {tau}")));
        }
        Ok(Mesh { nodes: self.nodes.clone(), steps: self.steps.clone(), tau, levels: m_count })
    }
}

/// Coefficients sampled at cell midpoints, plus nodal data.
///
/// Cell arrays (`rho`, `b`, `c`) have length `J + 1` and are indexed by the
/// cell number `1..=J`; entry 0 is unused and set to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledCoefficients {
    pub rho: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    /// `forcing[m][j] = f(x_j, t_m)`.
    pub forcing: Vec<Vec<f64>>,
    /// `boundary[m] = g(t_m)`.
    pub boundary: Vec<f64>,
    /// `U^0_j = u0(x_j)`.
    pub initial: Vec<f64>,
    pub tail: TailConstants,
    pub forcing_is_zero: bool,
}

impl SampledCoefficients {
    pub fn rho_min(&self) -> f64 {
        self.rho[1..].iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn rho_max(&self) -> f64 {
        self.rho[1..].iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn b_min(&self) -> f64 {
        self.b[1..].iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= GEOM_TOL * a.abs().max(b.abs()).max(1.0)
}

/// Samples the problem onto the mesh, validating positivity and the tail
/// conditions.
pub fn sample(problem: &ProblemSpec, mesh: &Mesh) -> Result<SampledCoefficients> {
    let jn = mesh.last();
    let x_end = mesh.x_end();
    if !close(x_end, problem.x_end) {
        return Err(Error::InvalidMesh(format!(
            "mesh ends at {x_end}, problem truncated at {}",
            problem.x_end
        )));
    }
    if !(problem.x0 < x_end) {
        return Err(Error::InvalidParameter(format!(
            "tail onset X0 = {} must be below X = {x_end}",
            problem.x0
        )));
    }
    if mesh.tail_step() > (x_end - problem.x0) + GEOM_TOL * x_end {
        return Err(Error::InvalidMesh(format!(
            "last step h_J = {} exceeds X - X0 = {}",
            mesh.tail_step(),
            x_end - problem.x0
        )));
    }
    if !(problem.rho_lower > 0.0) || !(problem.b_lower > 0.0) {
        return Err(Error::InvalidParameter("lower bounds for rho and b must be positive".into()));
    }
    let tail = problem.tail;
    if !(tail.rho > 0.0) || !(tail.b > 0.0) || !(tail.c >= 0.0) {
        return Err(Error::InvalidParameter(format!("invalid tail constants {tail:?}")));
    }
    let in_tail = |x: f64| x >= problem.x0 - GEOM_TOL * x_end;

    let mut rho = vec![0.0; jn + 1];
    let mut b = vec![0.0; jn + 1];
    let mut c = vec![0.0; jn + 1];
    for j in 1..=jn {
        let xm = mesh.midpoint(j);
        let (r, bb, cc) = ((problem.rho)(xm), (problem.b)(xm), (problem.c)(xm));
        if !(r >= problem.rho_lower) {
            return Err(Error::Positivity { name: "rho", x: xm, value: r });
        }
        if !(bb >= problem.b_lower) {
            return Err(Error::Positivity { name: "b", x: xm, value: bb });
        }
        if !(cc >= 0.0) {
            return Err(Error::Positivity { name: "c", x: xm, value: cc });
        }
        if in_tail(xm) && !(close(r, tail.rho) && close(bb, tail.b) && close(cc, tail.c)) {
            return Err(Error::Tail(format!(
                "coefficients at x = {xm} are ({r}, {bb}, {cc}), tail constants {tail:?}"
            )));
        }
        rho[j] = r;
        b[j] = bb;
        c[j] = cc;
    }

    let initial: Vec<f64> = mesh.nodes().iter().map(|&x| (problem.u0)(x)).collect();
    let mut forcing = Vec::with_capacity(mesh.steps() + 1);
    let mut forcing_is_zero = true;
    for m in 0..=mesh.steps() {
        let t = mesh.t(m);
        let level: Vec<f64> = mesh.nodes().iter().map(|&x| (problem.f)(x, t)).collect();
        forcing_is_zero &= level.iter().all(|&v| v == 0.0);
        forcing.push(level);
    }
    for (j, &x) in mesh.nodes().iter().enumerate() {
        if !in_tail(x) {
            continue;
        }
        if initial[j].abs() > problem.tail_tol {
            return Err(Error::Tail(format!(
                "u0({x}) = {:e} exceeds tail tolerance {:e}",
                initial[j], problem.tail_tol
            )));
        }
        for (m, level) in forcing.iter().enumerate() {
            if level[j].abs() > problem.tail_tol {
                return Err(Error::Tail(format!(
                    "f({x}, {}) = {:e} exceeds tail tolerance {:e}",
                    mesh.t(m),
                    level[j],
                    problem.tail_tol
                )));
            }
        }
    }
    let boundary: Vec<f64> = (0..=mesh.steps()).map(|m| (problem.g)(mesh.t(m))).collect();
    if (initial[0] - boundary[0]).abs() > problem.tail_tol {
        log::warn!(
            "initial value u0(0) = {} does not match g(0) = {}",
            initial[0],
            boundary[0]
        );
    }

    Ok(SampledCoefficients { rho, b, c, forcing, boundary, initial, tail, forcing_is_zero })
}
