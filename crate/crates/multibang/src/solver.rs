//! Primal active-set method for the regularized multibang problem, the
//! equivalent semismooth Newton step, and optimality diagnostics.
//!
//! Discretization convention: u and λ are P1 nodal fields; the gradient
//! relation −p + γu + αλ = 0 and the partition relation (u pinned on regular
//! nodes, λ pinned on singular nodes) are imposed nodewise. Unknowns are
//! interleaved (u_j, y_j, p_j, λ_j) per interior node, which keeps the KKT
//! matrix banded with lower/upper bandwidths (4, 5).
//!
//! Controls are not Dirichlet unknowns: their boundary values are fixed to
//! H_γ(0) (the adjoint vanishes on the boundary) and enter the state rows
//! through the mass-matrix coupling.

use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use crate::banded::{BandedMatrix, BandedSystem};
use crate::fem::{l2_error_sq, mass_apply_interior, solve_dirichlet, Mesh1D, NodalField};
use crate::penalty::{MultibangConfig, RegionLabel};
use crate::piecewise::PiecewisePolynomial;
use crate::scalar::{real, Real};
use crate::{Error, Result};

/// Per-interior-node region labels from the current adjoint.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActiveSetPartition {
    labels: Vec<RegionLabel>,
}

impl ActiveSetPartition {
    pub fn labels(&self) -> &[RegionLabel] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn digest(&self) -> u64 {
        let mut hasher = std::collections::hash_map::DefaultHasher::new();
        self.labels.hash(&mut hasher);
        hasher.finish()
    }
}

/// Nodewise classification of the interior adjoint values.
pub fn classify_field<F: Real>(
    cfg: &MultibangConfig<F>,
    p: &NodalField<F>,
) -> Result<ActiveSetPartition> {
    let labels = p
        .interior()
        .iter()
        .map(|&q| cfg.classify_reg(q))
        .collect::<Result<Vec<_>>>()?;
    Ok(ActiveSetPartition { labels })
}

/// A regularized problem: mesh, multibang configuration, and tracking target.
///
/// The load vector of the target is precomputed once and shared by all
/// γ-variants of the instance.
#[derive(Debug, Clone)]
pub struct ProblemInstance<F: Real> {
    mesh: Mesh1D,
    cfg: MultibangConfig<F>,
    target: PiecewisePolynomial<F>,
    z_load: Vec<F>,
}

impl<F: Real> ProblemInstance<F> {
    pub fn new(mesh: Mesh1D, cfg: MultibangConfig<F>, target: PiecewisePolynomial<F>) -> Self {
        let z_load = crate::fem::load_vector(mesh, &target);
        Self {
            mesh,
            cfg,
            target,
            z_load,
        }
    }

    pub fn mesh(&self) -> Mesh1D {
        self.mesh
    }

    pub fn cfg(&self) -> &MultibangConfig<F> {
        &self.cfg
    }

    pub fn target(&self) -> &PiecewisePolynomial<F> {
        &self.target
    }

    pub fn z_load(&self) -> &[F] {
        &self.z_load
    }

    /// Same mesh and target with a different γ; reuses the load vector.
    pub fn with_gamma(&self, gamma: F) -> Result<Self> {
        Ok(Self {
            mesh: self.mesh,
            cfg: self.cfg.with_gamma(gamma)?,
            target: self.target.clone(),
            z_load: self.z_load.clone(),
        })
    }
}

/// One iterate: all four fields, the partition consistent with p, and the
/// iteration counter.
#[derive(Debug, Clone)]
pub struct SolverState<F> {
    pub u: NodalField<F>,
    pub y: NodalField<F>,
    pub p: NodalField<F>,
    pub lambda: NodalField<F>,
    pub partition: ActiveSetPartition,
    pub iteration: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Partition unchanged between consecutive iterations (optimal).
    PartitionFixed,
    /// A non-adjacent earlier partition repeated.
    CycleDetected,
    /// Iteration budget exhausted.
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct SolverResult<F> {
    pub state: SolverState<F>,
    pub converged: bool,
    pub iterations: usize,
    pub optimality_residual: F,
    pub partition_history_length: usize,
    pub termination: Termination,
}

/// Scale-aware optimality tolerance: 1e-10 · (u_d − u_1).
pub fn optimality_tolerance<F: Real>(cfg: &MultibangConfig<F>) -> F {
    real::<F>(1e-10) * (cfg.last_level() - cfg.first_level())
}

/// Assemble the coupled KKT system for a fixed partition.
///
/// Rows per interior node j: the state equation A y − M u = 0, the adjoint
/// equation A p + M y = (z, φ_j), the gradient relation −p + γu + αλ = 0, and
/// the partition relation (u = u_i on regular nodes, λ = ½(u_i + u_{i+1}) on
/// singular nodes).
pub fn assemble_kkt<F: Real>(
    problem: &ProblemInstance<F>,
    partition: &ActiveSetPartition,
) -> Result<BandedSystem<F>> {
    let mesh = problem.mesh;
    let cfg = &problem.cfg;
    let m = mesh.n_interior();
    if partition.len() != m {
        return Err(Error::InvalidArgument(format!(
            "partition length {} != interior nodes {}",
            partition.len(),
            m
        )));
    }
    let gamma = cfg.gamma();
    if !(gamma > F::zero()) {
        return Err(Error::InvalidArgument("KKT assembly needs gamma > 0".into()));
    }
    let dim = 4 * m;
    let mut mat = BandedMatrix::zeros(dim, 4, 5);
    let mut rhs = vec![F::zero(); dim];
    let h = mesh.h::<F>();
    let inv_h = F::one() / h;
    let h6 = h / real::<F>(6.0);
    let two = real::<F>(2.0);
    let four = real::<F>(4.0);
    let u_bnd = cfg.h_gamma(F::zero())?;

    for j in 0..m {
        // state equation: A y − M u = 0
        let r = 4 * j;
        mat.set(r, 4 * j + 1, two * inv_h);
        mat.set(r, 4 * j, -four * h6);
        if j > 0 {
            mat.set(r, 4 * (j - 1) + 1, -inv_h);
            mat.set(r, 4 * (j - 1), -h6);
        }
        if j + 1 < m {
            mat.set(r, 4 * (j + 1) + 1, -inv_h);
            mat.set(r, 4 * (j + 1), -h6);
        }
        if j == 0 {
            rhs[r] = rhs[r] + h6 * u_bnd;
        }
        if j == m - 1 {
            rhs[r] = rhs[r] + h6 * u_bnd;
        }

        // adjoint equation: A p + M y = z load
        let r = 4 * j + 1;
        mat.set(r, 4 * j + 2, two * inv_h);
        mat.set(r, 4 * j + 1, four * h6);
        if j > 0 {
            mat.set(r, 4 * (j - 1) + 2, -inv_h);
            mat.set(r, 4 * (j - 1) + 1, h6);
        }
        if j + 1 < m {
            mat.set(r, 4 * (j + 1) + 2, -inv_h);
            mat.set(r, 4 * (j + 1) + 1, h6);
        }
        rhs[r] = problem.z_load[j];

        // gradient relation: −p + γu + αλ = 0
        let r = 4 * j + 2;
        mat.set(r, 4 * j + 2, -F::one());
        mat.set(r, 4 * j, gamma);
        mat.set(r, 4 * j + 3, cfg.alpha());

        // partition relation
        let r = 4 * j + 3;
        match partition.labels[j] {
            RegionLabel::Regular(i) => {
                mat.set(r, 4 * j, F::one());
                rhs[r] = cfg.levels()[i - 1];
            }
            RegionLabel::Singular(i, _) => {
                mat.set(r, 4 * j + 3, F::one());
                rhs[r] = cfg.midpoint(i - 1);
            }
        }
    }
    Ok(BandedSystem { matrix: mat, rhs })
}

// Extract fields from the interleaved solution and re-impose the nodewise
// relations exactly from the solved adjoint: this is the same solution up to
// LU roundoff and keeps the fixed-point optimality residual at machine zero.
fn state_from_kkt_solution<F: Real>(
    problem: &ProblemInstance<F>,
    partition: &ActiveSetPartition,
    x: &[F],
    iteration: usize,
) -> Result<SolverState<F>> {
    let mesh = problem.mesh;
    let cfg = &problem.cfg;
    let m = mesh.n_interior();
    let gamma = cfg.gamma();
    let alpha = cfg.alpha();
    let u_bnd = cfg.h_gamma(F::zero())?;
    let lambda_bnd = -gamma * u_bnd / alpha;

    let mut u = vec![F::zero(); m];
    let mut y = vec![F::zero(); m];
    let mut p = vec![F::zero(); m];
    let mut lambda = vec![F::zero(); m];
    for j in 0..m {
        y[j] = x[4 * j + 1];
        p[j] = x[4 * j + 2];
        match partition.labels[j] {
            RegionLabel::Regular(i) => {
                u[j] = cfg.levels()[i - 1];
                lambda[j] = (p[j] - gamma * u[j]) / alpha;
            }
            RegionLabel::Singular(i, _) => {
                lambda[j] = cfg.midpoint(i - 1);
                u[j] = (p[j] - cfg.threshold(i - 1)) / gamma;
            }
        }
    }
    let u = NodalField::from_interior(mesh, &u, u_bnd)?;
    let y = NodalField::from_interior(mesh, &y, F::zero())?;
    let p = NodalField::from_interior(mesh, &p, F::zero())?;
    let lambda = NodalField::from_interior(mesh, &lambda, lambda_bnd)?;
    let partition_next = classify_field(cfg, &p)?;
    Ok(SolverState {
        u,
        y,
        p,
        lambda,
        partition: partition_next,
        iteration,
    })
}

/// One active-set solve for a fixed partition; the returned state carries the
/// classification of its own adjoint.
pub fn active_set_step<F: Real>(
    problem: &ProblemInstance<F>,
    partition: &ActiveSetPartition,
    iteration: usize,
) -> Result<SolverState<F>> {
    let system = assemble_kkt(problem, partition)?;
    let x = system.solve()?;
    state_from_kkt_solution(problem, partition, &x, iteration)
}

/// Default initial data: u⁰ ≡ the level nearest 0, y⁰ = K_h u⁰, p⁰ the
/// corresponding adjoint solve.
pub fn default_initial_adjoint<F: Real>(problem: &ProblemInstance<F>) -> Result<NodalField<F>> {
    let mesh = problem.mesh;
    let cfg = &problem.cfg;
    let u0 = cfg
        .levels()
        .iter()
        .copied()
        .min_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap())
        .unwrap();
    let u0_field = NodalField::constant(mesh, u0);
    let y0 = solve_dirichlet(mesh, &mass_apply_interior(&u0_field))?;
    let my = mass_apply_interior(&y0);
    let rhs: Vec<F> = problem
        .z_load
        .iter()
        .zip(&my)
        .map(|(&z, &w)| z - w)
        .collect();
    solve_dirichlet(mesh, &rhs)
}

/// The primal active-set iteration: classify, solve, compare partitions.
///
/// Terminates when the partition repeats its immediate predecessor (fixed
/// point, hence optimal), when an earlier non-adjacent partition repeats
/// (cycle; reported unconverged), or at the iteration budget.
pub fn active_set_solve<F: Real>(
    problem: &ProblemInstance<F>,
    init: Option<&SolverState<F>>,
    max_iter: usize,
) -> Result<SolverResult<F>> {
    if max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be >= 1".into()));
    }
    let cfg = &problem.cfg;
    let p0 = match init {
        Some(state) => state.p.clone(),
        None => default_initial_adjoint(problem)?,
    };
    let mut partition = classify_field(cfg, &p0)?;
    let mut seen: HashMap<u64, usize> = HashMap::new();
    seen.insert(partition.digest(), 0);
    let mut history_length = 1usize;

    let mut last_state: Option<SolverState<F>> = None;
    for iteration in 1..=max_iter {
        let state = active_set_step(problem, &partition, iteration)?;
        if state.partition == partition {
            let residual = optimality_residual(cfg, &state.u, &state.p)?;
            let converged = residual <= optimality_tolerance(cfg);
            return Ok(SolverResult {
                state,
                converged,
                iterations: iteration,
                optimality_residual: residual,
                partition_history_length: history_length,
                termination: Termination::PartitionFixed,
            });
        }
        let digest = state.partition.digest();
        if seen.contains_key(&digest) {
            let residual = optimality_residual(cfg, &state.u, &state.p)?;
            return Ok(SolverResult {
                state,
                converged: false,
                iterations: iteration,
                optimality_residual: residual,
                partition_history_length: history_length,
                termination: Termination::CycleDetected,
            });
        }
        seen.insert(digest, iteration);
        history_length += 1;
        partition = state.partition.clone();
        last_state = Some(state);
    }
    let state = last_state.expect("max_iter >= 1 always produces a state");
    let residual = optimality_residual(cfg, &state.u, &state.p)?;
    Ok(SolverResult {
        state,
        converged: false,
        iterations: max_iter,
        optimality_residual: residual,
        partition_history_length: history_length,
        termination: Termination::MaxIterations,
    })
}

/// One semismooth Newton step using the Newton derivative of H_γ at the
/// current adjoint; λ is reconstructed from the gradient relation.
pub fn newton_step<F: Real>(
    problem: &ProblemInstance<F>,
    state: &SolverState<F>,
) -> Result<SolverState<F>> {
    let mesh = problem.mesh;
    let cfg = &problem.cfg;
    let gamma = cfg.gamma();
    if !(gamma > F::zero()) {
        return Err(Error::InvalidArgument("newton step needs gamma > 0".into()));
    }
    let m = mesh.n_interior();
    let dim = 3 * m;
    let mut mat = BandedMatrix::zeros(dim, 3, 4);
    let mut rhs = vec![F::zero(); dim];
    let h = mesh.h::<F>();
    let inv_h = F::one() / h;
    let h6 = h / real::<F>(6.0);
    let two = real::<F>(2.0);
    let four = real::<F>(4.0);
    let u_bnd = cfg.h_gamma(F::zero())?;
    let pk = state.p.interior();

    for j in 0..m {
        // state equation: A y − M u = 0
        let r = 3 * j;
        mat.set(r, 3 * j + 1, two * inv_h);
        mat.set(r, 3 * j, -four * h6);
        if j > 0 {
            mat.set(r, 3 * (j - 1) + 1, -inv_h);
            mat.set(r, 3 * (j - 1), -h6);
        }
        if j + 1 < m {
            mat.set(r, 3 * (j + 1) + 1, -inv_h);
            mat.set(r, 3 * (j + 1), -h6);
        }
        if j == 0 {
            rhs[r] = rhs[r] + h6 * u_bnd;
        }
        if j == m - 1 {
            rhs[r] = rhs[r] + h6 * u_bnd;
        }

        // adjoint equation: A p + M y = z load
        let r = 3 * j + 1;
        mat.set(r, 3 * j + 2, two * inv_h);
        mat.set(r, 3 * j + 1, four * h6);
        if j > 0 {
            mat.set(r, 3 * (j - 1) + 2, -inv_h);
            mat.set(r, 3 * (j - 1) + 1, h6);
        }
        if j + 1 < m {
            mat.set(r, 3 * (j + 1) + 2, -inv_h);
            mat.set(r, 3 * (j + 1) + 1, h6);
        }
        rhs[r] = problem.z_load[j];

        // linearized resolvent: u − D_N H_γ(p^k) p = H_γ(p^k) − D_N H_γ(p^k) p^k
        let r = 3 * j + 2;
        let q = pk[j];
        let dn = cfg.h_gamma_newton_derivative(q)?;
        mat.set(r, 3 * j, F::one());
        mat.set(r, 3 * j + 2, -dn);
        rhs[r] = cfg.h_gamma(q)? - dn * q;
    }

    let x = BandedSystem { matrix: mat, rhs }.solve()?;
    // same nodewise re-imposition as the active-set step, driven by the
    // partition of p^k
    let alpha = cfg.alpha();
    let lambda_bnd = -gamma * u_bnd / alpha;
    let mut u = vec![F::zero(); m];
    let mut y = vec![F::zero(); m];
    let mut p = vec![F::zero(); m];
    let mut lambda = vec![F::zero(); m];
    for j in 0..m {
        y[j] = x[3 * j + 1];
        p[j] = x[3 * j + 2];
        match cfg.classify_reg(pk[j])? {
            RegionLabel::Regular(i) => {
                u[j] = cfg.levels()[i - 1];
                lambda[j] = (p[j] - gamma * u[j]) / alpha;
            }
            RegionLabel::Singular(i, _) => {
                lambda[j] = cfg.midpoint(i - 1);
                u[j] = (p[j] - cfg.threshold(i - 1)) / gamma;
            }
        }
    }
    let u = NodalField::from_interior(mesh, &u, u_bnd)?;
    let y = NodalField::from_interior(mesh, &y, F::zero())?;
    let p = NodalField::from_interior(mesh, &p, F::zero())?;
    let lambda = NodalField::from_interior(mesh, &lambda, lambda_bnd)?;
    let partition = classify_field(cfg, &p)?;
    Ok(SolverState {
        u,
        y,
        p,
        lambda,
        partition,
        iteration: state.iteration + 1,
    })
}

/// max over interior nodes of |u(x_j) − H_γ(p(x_j))|.
pub fn optimality_residual<F: Real>(
    cfg: &MultibangConfig<F>,
    u: &NodalField<F>,
    p: &NodalField<F>,
) -> Result<F> {
    let mut worst = F::zero();
    for (&uj, &pj) in u.interior().iter().zip(p.interior()) {
        worst = worst.max((uj - cfg.h_gamma(pj)?).abs());
    }
    Ok(worst)
}

/// Variational-inequality residual: min over test fields w of
/// (−p + γu, w − u) + α G'(u; w − u). Nonnegative (up to tolerance) at a
/// solution.
pub fn vi_residual<F: Real>(
    problem: &ProblemInstance<F>,
    u: &NodalField<F>,
    p: &NodalField<F>,
    test_fields: &[NodalField<F>],
) -> Result<F> {
    if test_fields.is_empty() {
        return Err(Error::InvalidArgument("no test fields provided".into()));
    }
    let cfg = &problem.cfg;
    let tol = real::<F>(1e-9);
    for w in test_fields {
        for &v in w.values() {
            if v < cfg.first_level() - tol || v > cfg.last_level() + tol {
                return Err(Error::InvalidArgument(
                    "test field outside the admissible box".into(),
                ));
            }
        }
    }
    let gamma = cfg.gamma();
    let mut grad = u.clone();
    for (g, (&pv, &uv)) in grad
        .values_mut()
        .iter_mut()
        .zip(p.values().iter().zip(u.values()))
    {
        *g = -pv + gamma * uv;
    }
    let mut best = F::infinity();
    for w in test_fields {
        let mut dir = w.clone();
        for (d, &uv) in dir.values_mut().iter_mut().zip(u.values()) {
            *d = *d - uv;
        }
        let value = grad.mass_inner(&dir) + cfg.alpha() * cfg.g_directional_derivative(u, &dir)?;
        best = best.min(value);
    }
    Ok(best)
}

/// Discrete objective ½‖K_h u − z‖² + α G(u) + (γ/2)‖u‖².
pub fn objective<F: Real>(problem: &ProblemInstance<F>, u: &NodalField<F>) -> Result<F> {
    let cfg = &problem.cfg;
    let y = solve_dirichlet(problem.mesh, &mass_apply_interior(u))?;
    let tracking = real::<F>(0.5) * l2_error_sq(&y, &problem.target);
    let penalty = cfg.alpha() * cfg.g_integral(u)?;
    let tikhonov = real::<F>(0.5) * cfg.gamma() * u.l2_norm_sq();
    Ok(tracking + penalty + tikhonov)
}

/// Warm-started solves over a strictly decreasing γ sequence; per-γ failures
/// are recorded without aborting the sequence.
pub fn gamma_continuation<F: Real>(
    problem: &ProblemInstance<F>,
    gamma_list: &[F],
    max_iter: usize,
) -> Result<Vec<SolverResult<F>>> {
    if gamma_list.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::InvalidArgument(
            "gamma list must be strictly decreasing".into(),
        ));
    }
    if gamma_list.iter().any(|&g| !(g > F::zero())) {
        return Err(Error::InvalidArgument("gamma values must be > 0".into()));
    }
    let mut results = Vec::with_capacity(gamma_list.len());
    let mut warm: Option<SolverState<F>> = None;
    for &gamma in gamma_list {
        let instance = problem.with_gamma(gamma)?;
        let result = active_set_solve(&instance, warm.as_ref(), max_iter)?;
        warm = Some(result.state.clone());
        results.push(result);
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Piecewise64;

    fn cfg(gamma: f64) -> MultibangConfig<f64> {
        MultibangConfig::new(vec![-2.0, -1.0, 0.0, 1.0, 2.0], 2.0, gamma).unwrap()
    }

    fn zero_problem(n: usize, gamma: f64) -> ProblemInstance<f64> {
        ProblemInstance::new(
            Mesh1D::new(n).unwrap(),
            cfg(gamma),
            Piecewise64::constant(0.0),
        )
    }

    #[test]
    fn classify_field_basics() {
        let mesh = Mesh1D::new(8).unwrap();
        let c = cfg(0.5);
        let zero = NodalField::zeros(mesh);
        let part = classify_field(&c, &zero).unwrap();
        assert!(part.labels().iter().all(|&l| l == RegionLabel::Regular(3)));

        let band = NodalField::constant(mesh, -3.75);
        let part = classify_field(&c, &band).unwrap();
        assert!(part
            .labels()
            .iter()
            .all(|&l| l == RegionLabel::Singular(1, 2)));
    }

    #[test]
    fn classify_field_symmetry() {
        // p = 10(x − ½): labels mirror with the level order flipped
        let mesh = Mesh1D::new(40).unwrap();
        let c = cfg(0.5);
        let p = NodalField::interpolate(mesh, |x: f64| 10.0 * (x - 0.5));
        let part = classify_field(&c, &p).unwrap();
        let labels = part.labels();
        let m = labels.len();
        let d = 5;
        for j in 0..m {
            let mirrored = labels[m - 1 - j];
            let expect = match labels[j] {
                RegionLabel::Regular(i) => RegionLabel::Regular(d + 1 - i),
                RegionLabel::Singular(i, k) => RegionLabel::Singular(d + 1 - k, d + 1 - i),
            };
            assert_eq!(mirrored, expect);
        }
    }

    #[test]
    fn kkt_dimension_and_zero_data() {
        let problem = zero_problem(12, 0.5);
        let part = classify_field(&problem.cfg, &NodalField::zeros(problem.mesh)).unwrap();
        let system = assemble_kkt(&problem, &part).unwrap();
        assert_eq!(system.matrix.dim(), 4 * 11);
        let x = system.solve().unwrap();
        assert!(x.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn kkt_all_singular_partition() {
        // all nodes forced into the (3,4) band: λ ≡ ½ and u = (p − 1)/γ
        let problem = zero_problem(10, 0.5);
        let m = problem.mesh.n_interior();
        let part = ActiveSetPartition {
            labels: vec![RegionLabel::Singular(3, 4); m],
        };
        let state = active_set_step(&problem, &part, 1).unwrap();
        for (&l, (&u, &p)) in state
            .lambda
            .interior()
            .iter()
            .zip(state.u.interior().iter().zip(state.p.interior()))
        {
            assert!((l - 0.5).abs() < 1e-12);
            assert!((u - (p - 1.0) / 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_data_converges_first_iteration() {
        let problem = zero_problem(20, 0.5);
        let result = active_set_solve(&problem, None, 50).unwrap();
        assert!(result.converged);
        assert_eq!(result.iterations, 1);
        assert!(result.state.u.values().iter().all(|&v| v.abs() < 1e-13));
        assert_eq!(result.termination, Termination::PartitionFixed);
    }

    #[test]
    fn max_iter_guard() {
        let problem = zero_problem(8, 0.5);
        assert!(active_set_solve(&problem, None, 0).is_err());
    }

    #[test]
    fn optimality_residual_examples() {
        let c = cfg(0.5);
        let mesh = Mesh1D::new(6).unwrap();
        let p = NodalField::constant(mesh, 100.0);
        let u = NodalField::interpolate(mesh, |x: f64| {
            // H∘p at interior nodes, boundary arbitrary
            let _ = x;
            2.0
        });
        assert!(optimality_residual(&c, &u, &p).unwrap() < 1e-15);
        let zero = NodalField::zeros(mesh);
        assert!((optimality_residual(&c, &zero, &p).unwrap() - 2.0).abs() < 1e-15);
        assert!(optimality_residual(&c, &zero, &zero).unwrap() == 0.0);
    }

    #[test]
    fn newton_fixed_point_at_solution() {
        let problem = zero_problem(16, 0.5);
        let solved = active_set_solve(&problem, None, 50).unwrap();
        let stepped = newton_step(&problem, &solved.state).unwrap();
        assert!(solved.state.u.max_abs_diff(&stepped.u) < 1e-12);
        assert!(solved.state.y.max_abs_diff(&stepped.y) < 1e-12);
        assert!(solved.state.p.max_abs_diff(&stepped.p) < 1e-12);
    }

    #[test]
    fn newton_equals_active_set_step() {
        // nontrivial target, arbitrary starting adjoint
        let mesh = Mesh1D::new(64).unwrap();
        let target = Piecewise64::new(
            vec![0.0, 0.4, 1.0],
            vec![vec![1.0, 3.0, -2.0], vec![-0.5, 0.7]],
        )
        .unwrap();
        let problem = ProblemInstance::new(mesh, cfg(0.05), target);
        let p0 = NodalField::interpolate(mesh, |x: f64| 6.0 * (3.1 * x).sin());
        let partition = classify_field(&problem.cfg, &p0).unwrap();
        let as_state = active_set_step(&problem, &partition, 1).unwrap();

        let newton_from = SolverState {
            u: NodalField::zeros(mesh),
            y: NodalField::zeros(mesh),
            p: p0,
            lambda: NodalField::zeros(mesh),
            partition,
            iteration: 0,
        };
        let nt_state = newton_step(&problem, &newton_from).unwrap();
        let scale = nt_state
            .p
            .values()
            .iter()
            .fold(1.0f64, |a, &b| a.max(b.abs()));
        assert!(as_state.u.max_abs_diff(&nt_state.u) <= 1e-10 * scale);
        assert!(as_state.y.max_abs_diff(&nt_state.y) <= 1e-10 * scale);
        assert!(as_state.p.max_abs_diff(&nt_state.p) <= 1e-10 * scale);
    }

    #[test]
    fn lambda_consistency_and_inclusion_at_convergence() {
        let mesh = Mesh1D::new(128).unwrap();
        let target = Piecewise64::new(vec![0.0, 1.0], vec![vec![0.0, 40.0, -40.0]]).unwrap();
        let problem = ProblemInstance::new(mesh, cfg(0.05), target);
        let result = active_set_solve(&problem, None, 100).unwrap();
        assert!(result.converged, "termination {:?}", result.termination);
        let (gamma, alpha) = (problem.cfg.gamma(), problem.cfg.alpha());
        let st = &result.state;
        for j in 0..mesh.n_interior() {
            let (u, p, l) = (st.u.interior()[j], st.p.interior()[j], st.lambda.interior()[j]);
            assert!((-p + gamma * u + alpha * l).abs() < 1e-10);
            let sg = problem.cfg.subgradient_interval(u).unwrap();
            assert!(sg.contains(l, 1e-9), "λ = {} outside ∂g({})", l, u);
        }
        // admissibility
        assert!(st
            .u
            .values()
            .iter()
            .all(|&v| (-2.0 - 1e-12..=2.0 + 1e-12).contains(&v)));
    }

    #[test]
    fn objective_decreases_from_initial_iterate() {
        let mesh = Mesh1D::new(100).unwrap();
        let target =
            Piecewise64::new(vec![0.0, 1.0], vec![vec![0.0, 30.0, -30.0]]).unwrap();
        let problem = ProblemInstance::new(mesh, cfg(0.1), target);
        let result = active_set_solve(&problem, None, 100).unwrap();
        assert!(result.converged);
        let u0 = NodalField::zeros(mesh);
        let j0 = objective(&problem, &u0).unwrap();
        let j_star = objective(&problem, &result.state.u).unwrap();
        assert!(j_star <= j0 + 1e-12);
    }

    #[test]
    fn vi_residual_zero_direction_and_nonoptimal_pair() {
        let problem = zero_problem(24, 0.5);
        let mesh = problem.mesh;
        let result = active_set_solve(&problem, None, 50).unwrap();
        let u = result.state.u.clone();
        let p = result.state.p.clone();
        // w = u → zero direction → 0
        let v = vi_residual(&problem, &u, &p, std::slice::from_ref(&u)).unwrap();
        assert!(v.abs() < 1e-14);
        // deliberately non-optimal: u ≡ u_1 with p pushing toward u_d
        let bad_u = NodalField::constant(mesh, -2.0);
        let big_p = NodalField::constant(mesh, 100.0);
        let w = NodalField::constant(mesh, 2.0);
        let v = vi_residual(&problem, &bad_u, &big_p, &[w]).unwrap();
        assert!(v < -1.0);
        // inadmissible test field rejected
        let too_big = NodalField::constant(mesh, 3.0);
        assert!(vi_residual(&problem, &u, &p, &[too_big]).is_err());
    }

    #[test]
    fn vi_residual_nonnegative_over_random_test_fields() {
        // converged solution satisfies the variational inequality against
        // arbitrary admissible competitors
        let mesh = Mesh1D::new(256).unwrap();
        let ex = crate::experiments::build_example(crate::experiments::ExampleId::One).unwrap();
        let target: Piecewise64 = ex.z.to_float();
        let problem = ProblemInstance::new(mesh, ex.cfg.with_gamma(0.015625).unwrap(), target);
        let result = active_set_solve(&problem, None, 100).unwrap();
        assert!(result.converged);
        let mut s = 0xABCDu64;
        let mut rnd = move || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        let fields: Vec<NodalField<f64>> = (0..100)
            .map(|_| {
                NodalField::from_values(
                    mesh,
                    (0..mesh.n_nodes()).map(|_| -2.0 + 4.0 * rnd()).collect(),
                )
                .unwrap()
            })
            .collect();
        let v = vi_residual(&problem, &result.state.u, &result.state.p, &fields).unwrap();
        assert!(v >= -1e-9, "vi residual {}", v);
    }

    #[test]
    fn continuation_warm_starts_keep_iteration_counts_low() {
        let mesh = Mesh1D::new(512).unwrap();
        let ex = crate::experiments::build_example(crate::experiments::ExampleId::One).unwrap();
        let target: Piecewise64 = ex.z.to_float();
        let problem = ProblemInstance::new(mesh, ex.cfg.with_gamma(1.0).unwrap(), target);
        let gammas: Vec<f64> = (4..=14).map(|e| 0.5f64.powi(e)).collect();
        let results = gamma_continuation(&problem, &gammas, 100).unwrap();
        assert!(results.iter().all(|r| r.converged));
        let first = results[0].iterations;
        // after the leading solves the warm start pins the partition almost
        // immediately
        assert!(results[2..].iter().all(|r| r.iterations <= first.max(3)));
    }

    #[test]
    fn continuation_matches_single_solve_and_handles_empty() {
        let mesh = Mesh1D::new(64).unwrap();
        let target = Piecewise64::new(vec![0.0, 1.0], vec![vec![0.0, 25.0, -25.0]]).unwrap();
        let problem = ProblemInstance::new(mesh, cfg(0.0), target);
        let single = gamma_continuation(&problem, &[0.25], 100).unwrap();
        assert_eq!(single.len(), 1);
        let direct = active_set_solve(&problem.with_gamma(0.25).unwrap(), None, 100).unwrap();
        assert!(single[0]
            .state
            .u
            .max_abs_diff(&direct.state.u)
            .abs()
            < 1e-14);
        assert!(gamma_continuation(&problem, &[], 100).unwrap().is_empty());
        assert!(gamma_continuation(&problem, &[0.1, 0.2], 100).is_err());
        assert!(gamma_continuation(&problem, &[0.1, 0.0], 100).is_err());
    }
}
