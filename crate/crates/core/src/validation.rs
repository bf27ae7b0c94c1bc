//! Exact solutions, error metrics and the energy and dissipativity
//! diagnostics.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::discrete_ops::{form_c_theta, form_l, norm_omega, NormSet};
use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::problem::{Fn2, Mesh, ProblemSpec, SampledCoefficients};
use crate::stepper::{SchemeConfig, Trajectory};

pub const EXAMPLE1_X_STAR: f64 = 1.25;
pub const EXAMPLE1_T0: f64 = 0.03125;

/// Spreading Gaussian `sqrt(t0/(t+t0)) exp(-(x-x*)^2 / (4(t+t0)))`.
pub fn u1(x: f64, t: f64, x_star: f64, t0: f64) -> f64 {
    let s = t + t0;
    (t0 / s).sqrt() * (-(x - x_star).powi(2) / (4.0 * s)).exp()
}

/// Iterated complementary error integrals `I_0..I_4`.
pub fn iterated_erfc(n: usize, xi: f64) -> Result<f64> {
    if n > 4 {
        return Err(Error::InvalidParameter(format!("iterated erfc order {n} exceeds 4")));
    }
    let i0 = libm::erfc(xi);
    if n == 0 {
        return Ok(i0);
    }
    let mut prev = i0;
    let mut cur = (-xi * xi).exp() / PI.sqrt() - xi * i0;
    for k in 2..=n {
        let next = prev / (2.0 * k as f64) - xi / k as f64 * cur;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// `32 t^2 I_4(x / (2 sqrt t))`, zero at `t = 0`.
pub fn u2(x: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let xi = x / (2.0 * t.sqrt());
    32.0 * t * t * iterated_erfc(4, xi).unwrap()
}

#[derive(Clone)]
pub struct ExactSolution {
    pub label: String,
    pub evaluator: Fn2,
}

impl std::fmt::Debug for ExactSolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExactSolution").field("label", &self.label).finish_non_exhaustive()
    }
}

impl ExactSolution {
    pub fn example1() -> Self {
        ExactSolution {
            label: "example1".into(),
            evaluator: Arc::new(|x, t| u1(x, t, EXAMPLE1_X_STAR, EXAMPLE1_T0)),
        }
    }

    pub fn example2() -> Self {
        ExactSolution { label: "example2".into(), evaluator: Arc::new(u2) }
    }

    pub fn zero() -> Self {
        ExactSolution { label: "zero".into(), evaluator: Arc::new(|_, _| 0.0) }
    }

    pub fn eval(&self, x: f64, t: f64) -> f64 {
        (self.evaluator)(x, t)
    }
}

/// Heat problem with `u1` data on `[0, 2.5]`. The tail starts one cell
/// before the end, where `|u0| < 1e-5`.
pub fn example1_problem(h: f64) -> ProblemSpec {
    let x_end = 2.5;
    ProblemSpec::heat(x_end, x_end - h)
        .with_label("example1")
        .with_boundary(Arc::new(|t| u1(0.0, t, EXAMPLE1_X_STAR, EXAMPLE1_T0)))
        .with_initial(Arc::new(|x| u1(x, 0.0, EXAMPLE1_X_STAR, EXAMPLE1_T0)))
}

/// Heat problem with `g(t) = t^2` and zero initial data on `[0, 1]`.
pub fn example2_problem(h: f64) -> ProblemSpec {
    ProblemSpec::heat(1.0, 1.0 - h)
        .with_label("example2")
        .with_boundary(Arc::new(|t| t * t))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub max_abs_error: f64,
    /// `(j, m)` of the maximum.
    pub argmax: (usize, usize),
    /// Max error over nodes at each level `0..=M`.
    pub per_level: Vec<f64>,
}

/// Max-abs error over nodes `0..=J` and levels `1..=M`.
pub fn error_report(trajectory: &Trajectory, exact: &ExactSolution) -> ErrorReport {
    let mesh = &trajectory.mesh;
    let mut report =
        ErrorReport { max_abs_error: 0.0, argmax: (0, 1), per_level: Vec::new() };
    for (m, u) in trajectory.levels.iter().enumerate() {
        let t = mesh.t(m);
        let mut level_max = 0.0f64;
        for (j, &v) in u.iter().enumerate() {
            let e = (v - exact.eval(mesh.x(j), t)).abs();
            level_max = level_max.max(e);
            if m >= 1 && e > report.max_abs_error {
                report.max_abs_error = e;
                report.argmax = (j, m);
            }
        }
        report.per_level.push(level_max);
    }
    report
}

/// Residuals of the two energy equalities and slacks of the two energy
/// bounds. Slacks are `None` when the bound does not apply (`theta = 1/4`
/// with nonzero forcing).
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub first_equality: f64,
    pub second_equality: f64,
    pub bound_sb_slack: Option<f64>,
    pub bound_sba_slack: Option<f64>,
}

fn relative(lhs: f64, rhs: f64) -> f64 {
    let scale = lhs.abs().max(rhs.abs());
    if scale == 0.0 {
        0.0
    } else {
        (lhs - rhs).abs() / scale
    }
}

/// Evaluates both energy equalities and both energy bounds along a run
/// with zero boundary data.
///
/// `kernel` must be the one used by the run (`None` for a Neumann closure).
pub fn diagnose_energy(
    trajectory: &Trajectory,
    coeffs: &SampledCoefficients,
    config: &SchemeConfig,
    kernel: Option<&Kernel>,
) -> Result<EnergyReport> {
    let mesh = &trajectory.mesh;
    let levels = &trajectory.levels;
    let (sigma, theta) = (config.sigma, config.theta);
    let tau = mesh.tau();
    let jn = mesh.last();
    if levels.iter().any(|u| u[0] != 0.0) {
        return Err(Error::InvalidParameter(
            "energy diagnostics need zero boundary data at x = 0".into(),
        ));
    }
    let rho_norm2 = |w: &[f64]| form_c_theta(mesh, w, w, &coeffs.rho, theta);
    let l_norm2 = |w: &[f64]| form_l(mesh, w, w, coeffs, theta);
    let history = trajectory.boundary_history();
    let s_term = |m: usize| -> f64 {
        kernel.map_or(0.0, |k| {
            let r = k.coeffs();
            (0..=m).map(|q| r[q] * history[m - q]).sum::<f64>() / (2.0 * mesh.tail_step())
        })
    };
    let b_inf = coeffs.tail.b;

    let (mut dt_rho, mut stiff, mut react, mut s_first, mut f_first) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut dt_l, mut s_second, mut f_second) = (0.0, 0.0, 0.0);
    let (mut f_sum, mut f_sq) = (0.0, 0.0);
    let mut max_rho = rho_norm2(&levels[0])?.max(0.0).sqrt();
    let mut max_l = l_norm2(&levels[0])?.max(0.0).sqrt();
    for m in 1..levels.len() {
        let (old, new) = (&levels[m - 1], &levels[m]);
        let dt: Vec<f64> = new.iter().zip(old).map(|(a, b)| (a - b) / tau).collect();
        let us: Vec<f64> = new.iter().zip(old).map(|(a, b)| sigma * a + (1.0 - sigma) * b).collect();
        let dt_rho_m = rho_norm2(&dt)?;
        dt_rho += dt_rho_m * tau;
        stiff += crate::discrete_ops::form_stiffness(mesh, &us, &us, &coeffs.b)? * tau;
        react += form_c_theta(mesh, &us, &us, &coeffs.c, theta)? * tau;
        dt_l += l_norm2(&dt)? * tau * tau;
        let s = s_term(m);
        s_first += b_inf * s * us[jn] * tau;
        s_second += b_inf * s * dt[jn] * tau;
        let f = &coeffs.forcing[m];
        let f_ip = |w: &[f64]| -> f64 { (1..jn).map(|j| f[j] * w[j] * mesh.h_half(j)).sum() };
        f_first += f_ip(&us) * tau;
        f_second += f_ip(&dt) * tau;
        let fn_m = norm_omega(mesh, f)?;
        f_sum += fn_m * tau;
        f_sq += fn_m * fn_m * tau;
        max_rho = max_rho.max(rho_norm2(new)?.max(0.0).sqrt());
        max_l = max_l.max(l_norm2(new)?.max(0.0).sqrt());
    }
    let (rho0, rho_m) = (rho_norm2(&levels[0])?, rho_norm2(levels.last().unwrap())?);
    let (l0, l_m) = (l_norm2(&levels[0])?, l_norm2(levels.last().unwrap())?);

    let first_lhs = 0.5 * rho_m + (sigma - 0.5) * dt_rho * tau + stiff + react - s_first;
    let first_rhs = 0.5 * rho0 + f_first;
    let second_lhs = dt_rho + 0.5 * l_m + (sigma - 0.5) * dt_l - s_second;
    let second_rhs = 0.5 * l0 + f_second;

    let norms = NormSet::new(sigma, theta);
    let rho_min = coeffs.rho_min();
    let forced = !coeffs.forcing_is_zero;
    let usable = norms.c_theta > 0.0 || !forced;
    let force_term = |c: f64| if forced { c } else { 0.0 };

    let norm1 = ((sigma - 0.5) * dt_rho * tau + stiff + react).max(0.0).sqrt();
    let sb = usable.then(|| {
        let bound = rho0.max(0.0).sqrt()
            + force_term(norms.k_sigma / (norms.c_theta * rho_min).sqrt() * f_sum);
        bound - max_rho.max(2f64.sqrt() * norm1)
    });
    let norm2 = ((sigma - 0.5) * dt_l + dt_rho).max(0.0).sqrt();
    let sba = usable.then(|| {
        let bound = l0.max(0.0).sqrt()
            + force_term((2.0 / (norms.c_theta * rho_min)).sqrt() * f_sq.sqrt());
        bound - max_l.max(2f64.sqrt() * norm2)
    });

    Ok(EnergyReport {
        first_equality: relative(first_lhs, first_rhs),
        second_equality: relative(second_lhs, second_rhs),
        bound_sb_slack: sb,
        bound_sba_slack: sba,
    })
}

/// Outcome of [`certify_dissipativity`]. Sums are normalised by
/// `Σ (Φ^m)^2 τ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DissipativityReport {
    pub passed: bool,
    pub worst_cs: f64,
    pub worst_csa: f64,
    pub sequences: usize,
}

/// Relative tolerance for the dissipativity sums.
pub const DISSIPATIVITY_TOL: f64 = 1e-10;

/// Normalised sums `Σ S^m Φ^(σ)m τ` and `Σ S^m ∂̄_t Φ^m τ` for one
/// sequence with `Φ^0 = 0`.
pub fn dissipativity_sums(kernel: &Kernel, phi: &[f64]) -> (f64, f64) {
    let p = &kernel.params;
    let r = kernel.coeffs();
    let (sigma, tau) = (p.sigma, p.tau);
    let norm2: f64 = phi.iter().map(|v| v * v * tau).sum();
    if norm2 == 0.0 {
        return (0.0, 0.0);
    }
    let (mut cs, mut csa) = (0.0, 0.0);
    for m in 1..phi.len() {
        let s: f64 = (0..=m).map(|q| r[q] * phi[m - q]).sum::<f64>() / (2.0 * p.h);
        cs += s * (sigma * phi[m] + (1.0 - sigma) * phi[m - 1]) * tau;
        csa += s * (phi[m] - phi[m - 1]);
    }
    (cs / norm2, csa / norm2)
}

/// Checks both dissipativity inequalities on `trials` uniform random
/// sequences plus a spike, an alternating and a ramp sequence, each of
/// length `m_count` after `Φ^0 = 0`.
pub fn certify_dissipativity(
    kernel: &Kernel,
    trials: usize,
    m_count: usize,
    seed: u64,
) -> Result<DissipativityReport> {
    if kernel.len_m() < m_count {
        return Err(Error::KernelLength { need: m_count + 1, have: kernel.coeffs().len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sequences: Vec<Vec<f64>> = Vec::with_capacity(trials + 3);
    for _ in 0..trials {
        let mut phi = vec![0.0; m_count + 1];
        phi[1..].iter_mut().for_each(|v| *v = rng.gen_range(-1.0..=1.0));
        sequences.push(phi);
    }
    let mut spike = vec![0.0; m_count + 1];
    spike[1] = 1.0;
    sequences.push(spike);
    sequences.push((0..=m_count).map(|m| if m == 0 { 0.0 } else if m % 2 == 1 { 1.0 } else { -1.0 }).collect());
    sequences.push((0..=m_count).map(|m| m as f64 / m_count as f64).collect());

    let (mut worst_cs, mut worst_csa) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for phi in &sequences {
        let (cs, csa) = dissipativity_sums(kernel, phi);
        worst_cs = worst_cs.max(cs);
        worst_csa = worst_csa.max(csa);
    }
    Ok(DissipativityReport {
        passed: worst_cs <= DISSIPATIVITY_TOL && worst_csa <= DISSIPATIVITY_TOL,
        worst_cs,
        worst_csa,
        sequences: sequences.len(),
    })
}

/// Samples the exact solution on the run's nodes at level `m`.
pub fn exact_level(mesh: &Mesh, exact: &ExactSolution, m: usize) -> Vec<f64> {
    let t = mesh.t(m);
    mesh.nodes().iter().map(|&x| exact.eval(x, t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{kernel_by_recurrence, KernelParams};
    use crate::problem::{sample, TailConstants};
    use crate::stepper::{march_sampled, BoundaryMode};
    use proptest::prelude::*;
    use rand::Rng;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs()
    }

    #[test]
    fn erfc_reference_values() {
        let cases = [
            (0.0, 1.0),
            (0.5, 0.479500122186953462317253346108),
            (1.0, 0.157299207050285130658779364917),
            (2.0, 0.00467773498104726583793074363275),
            (3.0, 0.0000220904969985854413727761295823),
        ];
        for (x, v) in cases {
            assert!(close(libm::erfc(x), v, 1e-14), "erfc({x})");
        }
    }

    #[test]
    fn iterated_erfc_reference_values() {
        let table = [
            (0.3, [0.6713732405408725723611, 0.3142184826472197534407, 0.1207105377381351800742,
                0.04029869333405644089937, 0.01206641521721266444182]),
            (1.2, [0.08968602177036461976159, 0.02604894737733202913772, 0.006792137016191937457766,
                0.001624636423078563206513, 0.0003616262001004232202668]),
            (2.5, [0.0004069520174449589395642, 0.0000717620715639575112828,
                0.00001203541490629284578755, 0.000001930832838748880390838,
                2.976563390685554791703e-7]),
        ];
        for (xi, vals) in table {
            for (n, v) in vals.iter().enumerate() {
                // The downward recurrence loses a few digits for large xi.
                assert!(close(iterated_erfc(n, xi).unwrap(), *v, 1e-11), "I{n}({xi})");
            }
        }
    }

    #[test]
    fn iterated_erfc_at_zero() {
        let vals = [1.0, 1.0 / PI.sqrt(), 0.25, 1.0 / (6.0 * PI.sqrt()), 1.0 / 32.0];
        for (n, v) in vals.iter().enumerate() {
            assert!(close(iterated_erfc(n, 0.0).unwrap(), *v, 1e-15));
        }
        assert!(iterated_erfc(5, 0.0).is_err());
    }

    #[test]
    fn iterated_erfc_decays() {
        for n in 0..=4 {
            let v: Vec<f64> = [1.0, 2.0, 4.0, 8.0].iter().map(|&x| iterated_erfc(n, x).unwrap()).collect();
            assert!(v.windows(2).all(|w| w[1] < w[0] && w[1] >= 0.0), "I{n}: {v:?}");
        }
    }

    #[test]
    fn exact_solution_values() {
        assert_eq!(u1(EXAMPLE1_X_STAR, 0.0, EXAMPLE1_X_STAR, EXAMPLE1_T0), 1.0);
        let tail = u1(2.5, 0.0, EXAMPLE1_X_STAR, EXAMPLE1_T0);
        assert!((tail - (-12.5f64).exp()).abs() < 1e-20 && tail < 3.8e-6);
        assert_eq!(u2(0.3, 0.0), 0.0);
        for t in [0.01, 0.5, 1.0, 3.0] {
            assert!((u2(0.0, t) - t * t).abs() <= 1e-13);
        }
    }

    fn heat_residual(u: impl Fn(f64, f64) -> f64, x: f64, t: f64, d: f64) -> f64 {
        let ut = (u(x, t + d) - u(x, t - d)) / (2.0 * d);
        let uxx = (u(x + d, t) - 2.0 * u(x, t) + u(x - d, t)) / (d * d);
        (ut - uxx).abs()
    }

    #[test]
    fn heat_residuals_are_second_order() {
        let g1 = |x, t| u1(x, t, EXAMPLE1_X_STAR, EXAMPLE1_T0);
        for (x, t) in [(0.7, 0.2), (1.9, 0.6)] {
            let (a, b) = (heat_residual(g1, x, t, 0.02), heat_residual(g1, x, t, 0.01));
            assert!((a / b).log2() > 1.9, "u1 order at ({x},{t})");
            let (a, b) = (heat_residual(u2, x, t, 0.02), heat_residual(u2, x, t, 0.01));
            assert!((a / b).log2() > 1.9, "u2 order at ({x},{t})");
        }
    }

    proptest! {
        #[test]
        fn error_report_moves_at_most_by_perturbation(j in 0usize..11, m in 1usize..6, eps in -1e-3f64..1e-3) {
            let mesh = Mesh::uniform(1.0, 10, 0.01, 5).unwrap();
            let p = example2_problem(0.1);
            let co = sample(&p, &mesh).unwrap();
            let config = SchemeConfig::new(0.5, 1.0 / 12.0, BoundaryMode::Dtbc).unwrap();
            let tr = march_sampled(&mesh, &co, &config).unwrap();
            let exact = ExactSolution::example2();
            let base = error_report(&tr, &exact).max_abs_error;
            let mut pert = tr.clone();
            pert.levels[m][j] += eps;
            let moved = error_report(&pert, &exact).max_abs_error;
            prop_assert!((moved - base).abs() <= eps.abs() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn exact_trajectory_has_zero_error() {
        let mesh = Mesh::uniform(1.0, 10, 0.01, 5).unwrap();
        let exact = ExactSolution::example2();
        let tr = Trajectory {
            mesh: mesh.clone(),
            levels: (0..=5).map(|m| exact_level(&mesh, &exact, m)).collect(),
        };
        let r = error_report(&tr, &exact);
        assert_eq!(r.max_abs_error, 0.0);
        assert_eq!(r.per_level.len(), 6);
    }

    fn unit_kernel(sigma: f64, theta: f64) -> Kernel {
        let tail = TailConstants { rho: 1.0, b: 1.0, c: 0.0 };
        let p = KernelParams::derive(tail, 0.05, 1.0 / 1500.0, sigma, theta).unwrap();
        kernel_by_recurrence(&p, 200)
    }

    #[test]
    fn dissipativity_zero_sequence() {
        let k = unit_kernel(0.5, 1.0 / 12.0);
        assert_eq!(dissipativity_sums(&k, &[0.0; 201]), (0.0, 0.0));
    }

    #[test]
    fn dissipativity_holds_on_example1_kernels() {
        for (sigma, theta) in [(0.5, 1.0 / 12.0), (0.5, 0.25), (1.0, 0.0)] {
            let r = certify_dissipativity(&unit_kernel(sigma, theta), 50, 200, 7).unwrap();
            assert!(r.passed, "{sigma} {theta}: {r:?}");
            assert_eq!(r.sequences, 53);
        }
    }

    fn random_u0(seed: u64, mesh: &Mesh) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let jn = mesh.last();
        (0..=jn).map(|j| if j == 0 || j == jn { 0.0 } else { rng.gen_range(-1.0..1.0) }).collect()
    }

    #[test]
    fn energy_identities_on_random_data() {
        let mesh = Mesh::uniform(1.0, 20, 0.005, 40).unwrap();
        let p = ProblemSpec::heat(1.0, 0.95);
        for (sigma, theta) in [(0.5, 0.0), (0.5, 1.0 / 12.0), (1.0, 0.25), (0.75, -0.1)] {
            let mut co = sample(&p, &mesh).unwrap();
            co.initial = random_u0(3, &mesh);
            for mode in [BoundaryMode::Dtbc, BoundaryMode::Neumann] {
                let config = SchemeConfig::new(sigma, theta, mode).unwrap();
                let tr = march_sampled(&mesh, &co, &config).unwrap();
                let kernel = match mode {
                    BoundaryMode::Dtbc => Some(crate::stepper::boundary_kernel(&mesh, &co, &config).unwrap()),
                    _ => None,
                };
                let r = diagnose_energy(&tr, &co, &config, kernel.as_ref()).unwrap();
                assert!(r.first_equality <= 1e-10, "{sigma} {theta} {mode:?} {r:?}");
                assert!(r.second_equality <= 1e-10, "{sigma} {theta} {mode:?} {r:?}");
                assert!(r.bound_sb_slack.unwrap() >= 0.0);
                assert!(r.bound_sba_slack.unwrap() >= 0.0);
            }
        }
    }

    #[test]
    fn zero_run_has_zero_diagnostics() {
        let mesh = Mesh::uniform(1.0, 10, 0.01, 10).unwrap();
        let co = sample(&ProblemSpec::heat(1.0, 0.9), &mesh).unwrap();
        let config = SchemeConfig::new(0.5, 0.0, BoundaryMode::Dtbc).unwrap();
        let tr = march_sampled(&mesh, &co, &config).unwrap();
        let k = crate::stepper::boundary_kernel(&mesh, &co, &config).unwrap();
        let r = diagnose_energy(&tr, &co, &config, Some(&k)).unwrap();
        assert_eq!(r, EnergyReport {
            first_equality: 0.0,
            second_equality: 0.0,
            bound_sb_slack: Some(0.0),
            bound_sba_slack: Some(0.0),
        });
    }
}
