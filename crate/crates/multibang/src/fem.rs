//! Piecewise-linear finite elements on a uniform mesh of Ω = (0,1) with
//! homogeneous Dirichlet conditions: stiffness/mass assembly, exact load
//! vectors against piecewise polynomials, banded Dirichlet solves, and exact
//! error norms against piecewise-polynomial references.
//!
//! Boundary nodes are carried in [`NodalField`] storage but eliminated from
//! every linear system. Mesh nodes generally do not coincide with reference
//! breakpoints, so all quadrature splits elements at the breakpoints.

use crate::banded::BandedMatrix;
use crate::piecewise::{horner_f64, roots_in_interval, PiecewisePolynomial};
use crate::scalar::{real, Real};
use crate::{Error, Result};

/// Uniform mesh of (0,1) with n_elements intervals, nodes x_j = j/n.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mesh1D {
    n_elements: usize,
}

impl Mesh1D {
    pub fn new(n_elements: usize) -> Result<Self> {
        if n_elements < 2 {
            return Err(Error::InvalidArgument(
                "mesh needs at least 2 elements".into(),
            ));
        }
        Ok(Self { n_elements })
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    /// Number of nodes including both boundary nodes.
    pub fn n_nodes(&self) -> usize {
        self.n_elements + 1
    }

    /// Number of interior (Dirichlet-free) nodes.
    pub fn n_interior(&self) -> usize {
        self.n_elements - 1
    }

    pub fn h<F: Real>(&self) -> F {
        F::one() / F::from_usize(self.n_elements).unwrap()
    }

    pub fn node<F: Real>(&self, j: usize) -> F {
        F::from_usize(j).unwrap() / F::from_usize(self.n_elements).unwrap()
    }
}

/// Piecewise-linear function on a mesh, stored as values at all nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField<F> {
    mesh: Mesh1D,
    values: Vec<F>,
}

impl<F: Real> NodalField<F> {
    pub fn zeros(mesh: Mesh1D) -> Self {
        Self {
            mesh,
            values: vec![F::zero(); mesh.n_nodes()],
        }
    }

    pub fn constant(mesh: Mesh1D, c: F) -> Self {
        Self {
            mesh,
            values: vec![c; mesh.n_nodes()],
        }
    }

    pub fn from_values(mesh: Mesh1D, values: Vec<F>) -> Result<Self> {
        if values.len() != mesh.n_nodes() {
            return Err(Error::InvalidArgument(format!(
                "{} values for {} nodes",
                values.len(),
                mesh.n_nodes()
            )));
        }
        Ok(Self { mesh, values })
    }

    /// Nodal interpolant of a function.
    pub fn interpolate(mesh: Mesh1D, f: impl Fn(F) -> F) -> Self {
        let values = (0..mesh.n_nodes()).map(|j| f(mesh.node(j))).collect();
        Self { mesh, values }
    }

    /// Field with given interior values and prescribed boundary values.
    pub fn from_interior(mesh: Mesh1D, interior: &[F], boundary: F) -> Result<Self> {
        if interior.len() != mesh.n_interior() {
            return Err(Error::InvalidArgument(
                "interior length mismatch".into(),
            ));
        }
        let mut values = vec![boundary; mesh.n_nodes()];
        values[1..mesh.n_nodes() - 1].copy_from_slice(interior);
        Ok(Self { mesh, values })
    }

    pub fn mesh(&self) -> Mesh1D {
        self.mesh
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [F] {
        &mut self.values
    }

    pub fn interior(&self) -> &[F] {
        &self.values[1..self.values.len() - 1]
    }

    /// Evaluate the piecewise-linear interpolant at x in [0,1].
    pub fn eval(&self, x: F) -> F {
        let n = self.mesh.n_elements();
        let nf = F::from_usize(n).unwrap();
        let t = (x * nf).max(F::zero());
        let e = t.floor().to_usize().unwrap_or(0).min(n - 1);
        let local = t - F::from_usize(e).unwrap();
        self.values[e] + (self.values[e + 1] - self.values[e]) * local
    }

    /// Exact L² inner product of two fields on the same mesh.
    pub fn mass_inner(&self, other: &Self) -> F {
        assert_eq!(self.mesh, other.mesh);
        let h6 = self.mesh.h::<F>() / real::<F>(6.0);
        let two = real::<F>(2.0);
        let mut acc = F::zero();
        for e in 0..self.mesh.n_elements() {
            let (al, ar) = (self.values[e], self.values[e + 1]);
            let (bl, br) = (other.values[e], other.values[e + 1]);
            acc = acc + h6 * (two * al * bl + al * br + ar * bl + two * ar * br);
        }
        acc
    }

    pub fn l2_norm_sq(&self) -> F {
        self.mass_inner(self)
    }

    pub fn max_abs_diff(&self, other: &Self) -> F {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (*a - *b).abs())
            .fold(F::zero(), F::max)
    }
}

/// Dirichlet stiffness matrix on interior nodes: (1/h)·(-1, 2, -1).
pub fn assemble_stiffness<F: Real>(mesh: Mesh1D) -> BandedMatrix<F> {
    let m = mesh.n_interior();
    let inv_h = F::one() / mesh.h::<F>();
    let two = real::<F>(2.0);
    let mut a = BandedMatrix::zeros(m, 1, 1);
    for i in 0..m {
        a.set(i, i, two * inv_h);
        if i > 0 {
            a.set(i, i - 1, -inv_h);
        }
        if i + 1 < m {
            a.set(i, i + 1, -inv_h);
        }
    }
    a
}

/// Galerkin mass matrix on interior nodes: (h/6)·(1, 4, 1).
pub fn assemble_mass<F: Real>(mesh: Mesh1D) -> BandedMatrix<F> {
    let m = mesh.n_interior();
    let h6 = mesh.h::<F>() / real::<F>(6.0);
    let four = real::<F>(4.0);
    let mut a = BandedMatrix::zeros(m, 1, 1);
    for i in 0..m {
        a.set(i, i, four * h6);
        if i > 0 {
            a.set(i, i - 1, h6);
        }
        if i + 1 < m {
            a.set(i, i + 1, h6);
        }
    }
    a
}

/// Interior rows of the stiffness operator applied to a full nodal field.
pub fn stiffness_apply_interior<F: Real>(field: &NodalField<F>) -> Vec<F> {
    let mesh = field.mesh();
    let inv_h = F::one() / mesh.h::<F>();
    let two = real::<F>(2.0);
    let v = field.values();
    (1..mesh.n_nodes() - 1)
        .map(|j| inv_h * (two * v[j] - v[j - 1] - v[j + 1]))
        .collect()
}

/// Interior rows of the mass operator applied to a full nodal field.
pub fn mass_apply_interior<F: Real>(field: &NodalField<F>) -> Vec<F> {
    let mesh = field.mesh();
    let h6 = mesh.h::<F>() / real::<F>(6.0);
    let four = real::<F>(4.0);
    let v = field.values();
    (1..mesh.n_nodes() - 1)
        .map(|j| h6 * (v[j - 1] + four * v[j] + v[j + 1]))
        .collect()
}

// Gauss-Legendre rules on [-1,1]; 5 points integrate degree <= 9 exactly
// (quintic data times linear hats), 6 points degree <= 11 (squared errors).
const GAUSS5: [(f64, f64); 5] = [
    (-0.906_179_845_938_664, 0.2369268850561891),
    (-0.5384693101056831, 0.4786286704993665),
    (0.0, 0.5688888888888889),
    (0.5384693101056831, 0.4786286704993665),
    (0.906_179_845_938_664, 0.2369268850561891),
];

const GAUSS6: [(f64, f64); 6] = [
    (-0.932_469_514_203_152, 0.1713244923791704),
    (-0.6612093864662645, 0.3607615730481386),
    (-0.2386191860831969, 0.467_913_934_572_691),
    (0.2386191860831969, 0.467_913_934_572_691),
    (0.6612093864662645, 0.3607615730481386),
    (0.932_469_514_203_152, 0.1713244923791704),
];

/// Iterate over (element, sub-interval) pairs obtained by splitting every
/// element at the reference breakpoints that fall inside it.
fn for_each_subsegment<F: Real>(
    mesh: Mesh1D,
    reference: &PiecewisePolynomial<F>,
    mut visit: impl FnMut(usize, usize, F, F),
) {
    let n = mesh.n_elements();
    let bps = reference.breakpoints();
    let mut bp_idx = 1usize; // skip the leading 0
    for e in 0..n {
        let xl: F = mesh.node(e);
        let xr: F = mesh.node(e + 1);
        let mut lo = xl;
        while bp_idx < bps.len() - 1 && bps[bp_idx] <= xl {
            bp_idx += 1;
        }
        let mut k = bp_idx;
        while k < bps.len() - 1 && bps[k] < xr {
            let b = bps[k];
            if b > lo {
                visit(e, k - 1, lo, b);
                lo = b;
            }
            k += 1;
        }
        if xr > lo {
            // piece index: the piece to the right of the last breakpoint <= lo
            let piece = k - 1;
            visit(e, piece.min(reference.num_pieces() - 1), lo, xr);
        }
    }
}

/// Load vector ∫ f φ_j dx over interior nodes, exact for piecewise-polynomial
/// f of degree <= 8 (5-point Gauss per sub-segment).
pub fn load_vector<F: Real>(mesh: Mesh1D, f: &PiecewisePolynomial<F>) -> Vec<F> {
    let n = mesh.n_elements();
    let h = mesh.h::<F>();
    let half = real::<F>(0.5);
    let mut load = vec![F::zero(); mesh.n_interior()];
    for_each_subsegment(mesh, f, |e, piece, lo, hi| {
        let xl: F = mesh.node(e);
        let coeffs = &f.pieces()[piece];
        let mid = half * (lo + hi);
        let rad = half * (hi - lo);
        let mut left_acc = F::zero();
        let mut right_acc = F::zero();
        for &(t, w) in GAUSS5.iter() {
            let x = mid + rad * real::<F>(t);
            let fx = horner_generic(coeffs, x);
            let phi_right = (x - xl) / h;
            let wf = real::<F>(w) * rad * fx;
            right_acc = right_acc + wf * phi_right;
            left_acc = left_acc + wf * (F::one() - phi_right);
        }
        if e > 0 {
            load[e - 1] = load[e - 1] + left_acc;
        }
        if e + 1 < n {
            load[e] = load[e] + right_acc;
        }
    });
    load
}

fn horner_generic<F: Real>(coeffs: &[F], x: F) -> F {
    let mut acc = F::zero();
    for c in coeffs.iter().rev() {
        acc = acc * x + *c;
    }
    acc
}

/// Solve the Dirichlet problem A_h y = rhs; boundary values set to 0.
pub fn solve_dirichlet<F: Real>(mesh: Mesh1D, rhs: &[F]) -> Result<NodalField<F>> {
    if rhs.len() != mesh.n_interior() {
        return Err(Error::InvalidArgument(format!(
            "rhs length {} != interior count {}",
            rhs.len(),
            mesh.n_interior()
        )));
    }
    let lu = assemble_stiffness::<F>(mesh).factor()?;
    let interior = lu.solve(rhs.to_vec());
    NodalField::from_interior(mesh, &interior, F::zero())
}

/// Exact ∫ (u_h - ref)² dx (6-point Gauss per sub-segment).
pub fn l2_error_sq<F: Real>(u_h: &NodalField<F>, reference: &PiecewisePolynomial<F>) -> F {
    let mesh = u_h.mesh();
    let h = mesh.h::<F>();
    let half = real::<F>(0.5);
    let v = u_h.values();
    let mut acc = F::zero();
    for_each_subsegment(mesh, reference, |e, piece, lo, hi| {
        let xl: F = mesh.node(e);
        let coeffs = &reference.pieces()[piece];
        let slope = (v[e + 1] - v[e]) / h;
        let mid = half * (lo + hi);
        let rad = half * (hi - lo);
        let mut seg = F::zero();
        for &(t, w) in GAUSS6.iter() {
            let x = mid + rad * real::<F>(t);
            let diff = v[e] + slope * (x - xl) - horner_generic(coeffs, x);
            seg = seg + real::<F>(w) * diff * diff;
        }
        acc = acc + seg * rad;
    });
    acc
}

/// Exact ∫ |u_h - ref| dx: sub-segments are additionally split at sign
/// changes of the difference before exact integration.
pub fn l1_error(u_h: &NodalField<f64>, reference: &PiecewisePolynomial<f64>) -> f64 {
    let mesh = u_h.mesh();
    let h: f64 = mesh.h();
    let v = u_h.values();
    let mut acc = 0.0;
    for_each_subsegment(mesh, reference, |e, piece, lo, hi| {
        let xl: f64 = mesh.node(e);
        let coeffs = &reference.pieces()[piece];
        // difference polynomial in global coordinates
        let slope = (v[e + 1] - v[e]) / h;
        let mut diff = vec![0.0; coeffs.len().max(2)];
        diff[0] = v[e] - slope * xl;
        diff[1] = slope;
        for (k, c) in coeffs.iter().enumerate() {
            diff[k] -= c;
        }
        let mut cuts = vec![lo];
        cuts.extend(roots_in_interval(&diff, lo, hi, 32));
        cuts.push(hi);
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b <= a {
                continue;
            }
            let mid = 0.5 * (a + b);
            let rad = 0.5 * (b - a);
            let mut seg = 0.0;
            for &(t, wgt) in GAUSS6.iter() {
                seg += wgt * horner_f64(&diff, mid + rad * t);
            }
            acc += (seg * rad).abs();
        }
    });
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{rational, Piecewise64, RationalPiecewise};

    fn pw_const(c: f64) -> Piecewise64 {
        Piecewise64::constant(c)
    }

    fn pw_x() -> Piecewise64 {
        Piecewise64::new(vec![0.0, 1.0], vec![vec![0.0, 1.0]]).unwrap()
    }

    #[test]
    fn stiffness_entries() {
        let mesh = Mesh1D::new(2).unwrap();
        let a = assemble_stiffness::<f64>(mesh);
        assert_eq!(a.dim(), 1);
        assert!((a.get(0, 0) - 4.0).abs() < 1e-15);

        let mesh4 = Mesh1D::new(4).unwrap();
        let a4 = assemble_stiffness::<f64>(mesh4);
        assert!((a4.get(1, 1) - 8.0).abs() < 1e-15);
        assert!((a4.get(1, 0) + 4.0).abs() < 1e-15);
        // interior row with both neighbors interior sums to zero
        assert!((a4.get(1, 0) + a4.get(1, 1) + a4.get(1, 2)).abs() < 1e-15);
    }

    #[test]
    fn mass_entries_and_spd() {
        let mesh = Mesh1D::new(2).unwrap();
        let m = assemble_mass::<f64>(mesh);
        assert!((m.get(0, 0) - 1.0 / 3.0).abs() < 1e-15);

        let mesh8 = Mesh1D::new(8).unwrap();
        let m8 = assemble_mass::<f64>(mesh8);
        let h = 1.0 / 8.0;
        // full interior row sums to h
        assert!((m8.get(3, 2) + m8.get(3, 3) + m8.get(3, 4) - h).abs() < 1e-15);
        // positive definiteness on a few pseudo-random vectors
        let mut s = 1u64;
        for _ in 0..10 {
            let x: Vec<f64> = (0..m8.dim())
                .map(|_| {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
                })
                .collect();
            if x.iter().all(|&v| v == 0.0) {
                continue;
            }
            let mx = m8.mul_vec(&x);
            let quad: f64 = x.iter().zip(&mx).map(|(a, b)| a * b).sum();
            assert!(quad > 0.0);
        }
    }

    #[test]
    fn load_vector_constant_and_linear() {
        let mesh = Mesh1D::new(8).unwrap();
        let h = 1.0 / 8.0;
        let load1 = load_vector(mesh, &pw_const(1.0));
        for entry in &load1 {
            assert!((entry - h).abs() < 1e-15);
        }
        let loadx = load_vector(mesh, &pw_x());
        for (j, entry) in loadx.iter().enumerate() {
            let xj = (j + 1) as f64 * h;
            assert!((entry - h * xj).abs() < 1e-15);
        }
        let load0 = load_vector(mesh, &pw_const(0.0));
        assert!(load0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn load_vector_splits_at_breakpoints() {
        // f = 1 on [0, 1/3), 0 after; mesh nodes do not align with 1/3
        let f = RationalPiecewise::new(
            vec![rational(0, 1), rational(1, 3), rational(1, 1)],
            vec![vec![rational(1, 1)], vec![rational(0, 1)]],
        )
        .unwrap()
        .to_float::<f64>();
        let mesh = Mesh1D::new(5).unwrap();
        let load = load_vector(mesh, &f);
        // oracle: ∫ f φ_j by fine midpoint rule
        let n_mc = 2_000_000usize;
        for j in 1..5 {
            let xj = j as f64 / 5.0;
            let mut oracle = 0.0;
            for i in 0..n_mc {
                let x = (i as f64 + 0.5) / n_mc as f64;
                let phi = (1.0 - (x - xj).abs() * 5.0).max(0.0);
                let fv = if x < 1.0 / 3.0 { 1.0 } else { 0.0 };
                oracle += phi * fv;
            }
            oracle /= n_mc as f64;
            assert!(
                (load[j - 1] - oracle).abs() < 1e-6,
                "node {}: {} vs {}",
                j,
                load[j - 1],
                oracle
            );
        }
    }

    #[test]
    fn dirichlet_solve_nodally_exact() {
        // -y'' = 1 → y = x(1-x)/2 ; -y'' = x → y = x(1-x²)/6
        for &n in &[2usize, 10, 100] {
            let mesh = Mesh1D::new(n).unwrap();
            let y1 = solve_dirichlet(mesh, &load_vector(mesh, &pw_const(1.0))).unwrap();
            let yx = solve_dirichlet(mesh, &load_vector(mesh, &pw_x())).unwrap();
            for j in 0..=n {
                let x = j as f64 / n as f64;
                assert!((y1.values()[j] - 0.5 * x * (1.0 - x)).abs() < 1e-12);
                assert!((yx.values()[j] - x * (1.0 - x * x) / 6.0).abs() < 1e-12);
            }
        }
        let mesh = Mesh1D::new(2).unwrap();
        let y = solve_dirichlet(mesh, &load_vector(mesh, &pw_const(1.0))).unwrap();
        assert!((y.values()[1] - 0.125).abs() < 1e-14);
    }

    #[test]
    fn dirichlet_zero_rhs() {
        let mesh = Mesh1D::new(16).unwrap();
        let y = solve_dirichlet(mesh, &[0.0; 15]).unwrap();
        assert!(y.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn discrete_solve_is_self_adjoint() {
        let mesh = Mesh1D::new(33).unwrap();
        let m = mesh.n_interior();
        let mut s = 99u64;
        let mut rnd = move || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for _ in 0..5 {
            let a: Vec<f64> = (0..m).map(|_| rnd()).collect();
            let b: Vec<f64> = (0..m).map(|_| rnd()).collect();
            let ka = solve_dirichlet(mesh, &a).unwrap();
            let kb = solve_dirichlet(mesh, &b).unwrap();
            let lhs: f64 = ka.interior().iter().zip(&b).map(|(x, y)| x * y).sum();
            let rhs: f64 = kb.interior().iter().zip(&a).map(|(x, y)| x * y).sum();
            assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn l2_error_basics() {
        let mesh = Mesh1D::new(7).unwrap();
        let zero = NodalField::zeros(mesh);
        assert!((l2_error_sq(&zero, &pw_const(1.0)) - 1.0).abs() < 1e-14);
        // interpolant of a mesh-aligned piecewise linear reference → 0
        let lin = NodalField::interpolate(mesh, |x: f64| 3.0 * x - 1.0);
        let reference =
            Piecewise64::new(vec![0.0, 1.0], vec![vec![-1.0, 3.0]]).unwrap();
        assert!(l2_error_sq(&lin, &reference) < 1e-28);
    }

    #[test]
    fn l2_error_against_riemann_oracle() {
        let ex = crate::experiments::build_example(crate::experiments::ExampleId::One).unwrap();
        let u_bar = ex.u_bar.to_float::<f64>();
        let mesh = Mesh1D::new(50).unwrap();
        let zero = NodalField::zeros(mesh);
        let exact = l2_error_sq(&zero, &u_bar);
        let n = 10_000_000usize;
        let mut sum = 0.0;
        for i in 0..n {
            let x = (i as f64 + 0.5) / n as f64;
            let v = u_bar.eval(&x).unwrap();
            sum += v * v;
        }
        sum /= n as f64;
        // midpoint-rule error at the control jumps dominates: O(1/n) per jump
        // without the sign cancellation the plain ∫ū enjoys
        assert!((sum - exact).abs() < 1e-6, "{} vs {}", sum, exact);
        assert!((exact - 38.0 / 27.0).abs() < 1e-13);
    }

    #[test]
    fn l1_error_basics() {
        let mesh = Mesh1D::new(9).unwrap();
        let zero = NodalField::zeros(mesh);
        assert!((l1_error(&zero, &pw_const(-1.0)) - 1.0).abs() < 1e-14);
        let same = NodalField::interpolate(mesh, |x: f64| 2.0 * x);
        let reference = Piecewise64::new(vec![0.0, 1.0], vec![vec![0.0, 2.0]]).unwrap();
        assert!(l1_error(&same, &reference) < 1e-14);
        // interpolant of x vs constant 1/2: two triangles of area 1/8
        let lin = NodalField::interpolate(mesh, |x: f64| x);
        assert!((l1_error(&lin, &pw_const(0.5)) - 0.25).abs() < 1e-13);
    }

    #[test]
    fn refinement_reduces_error_at_second_order() {
        // fixed problem -y'' = x with exact solution x(1-x²)/6; compare the
        // P1 interpolation error of the solved field against the exact cubic
        let reference = RationalPiecewise::new(
            vec![rational(0, 1), rational(1, 1)],
            vec![vec![
                rational(0, 1),
                rational(1, 6),
                rational(0, 1),
                rational(-1, 6),
            ]],
        )
        .unwrap()
        .to_float::<f64>();
        let mut prev = f64::INFINITY;
        for &n in &[8usize, 16, 32, 64] {
            let mesh = Mesh1D::new(n).unwrap();
            let y = solve_dirichlet(mesh, &load_vector(mesh, &pw_x())).unwrap();
            let err = l2_error_sq(&y, &reference).sqrt();
            if prev.is_finite() {
                let order = (prev / err).log2();
                assert!(order > 1.9, "observed order {}", order);
            }
            assert!(err < prev);
            prev = err;
        }
    }

    #[test]
    fn mass_inner_matches_closed_form() {
        let mesh = Mesh1D::new(40).unwrap();
        let a = NodalField::interpolate(mesh, |x: f64| x);
        let b = NodalField::constant(mesh, 1.0);
        // ∫ x dx = 1/2 exactly (both P1)
        assert!((a.mass_inner(&b) - 0.5).abs() < 1e-14);
        // ∫ x² dx for the interpolant of x is exactly 1/3 (x is in the P1 space)
        assert!((a.mass_inner(&a) - 1.0 / 3.0).abs() < 1e-14);
    }
}
