//! The multibang penalty: pointwise integrand g, integral functional G with
//! exact element-splitting quadrature, directional derivatives, adjoint-value
//! classification into regular/singular regions, and the resolvent H_γ with
//! its Newton derivative.
//!
//! Region indices follow the 1-based numbering of the control levels:
//! `Regular(i)` means the adjoint value selects level u_i, `Singular(i, i+1)`
//! means it lies in the band where the control interpolates between u_i and
//! u_{i+1}.

use crate::fem::NodalField;
use crate::scalar::{real, Real};
use crate::{Error, Result};

/// Control levels u_1 < … < u_d with penalty weight α and regularization γ.
#[derive(Debug, Clone, PartialEq)]
pub struct MultibangConfig<F> {
    levels: Vec<F>,
    alpha: F,
    gamma: F,
}

/// Classification of an adjoint value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegionLabel {
    /// Adjoint value inside Q_i: the control is pinned to level u_i (1-based).
    Regular(usize),
    /// Adjoint value in the singular set/band between levels i and i+1.
    Singular(usize, usize),
}

/// Closed interval of extended reals; unbounded ends are ±∞.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubgradientInterval<F> {
    pub lower: F,
    pub upper: F,
}

impl<F: Real> SubgradientInterval<F> {
    pub fn contains(&self, x: F, tol: F) -> bool {
        x >= self.lower - tol && x <= self.upper + tol
    }

    pub fn is_singleton(&self) -> bool {
        self.lower == self.upper
    }
}

// Scale-aware tolerance for "value sits exactly at a level" tests; well above
// banded-LU roundoff, far below any level spacing of interest.
fn level_tol<F: Real>(v: F) -> F {
    real::<F>(1e-11) * (F::one() + v.abs())
}

impl<F: Real> MultibangConfig<F> {
    pub fn new(levels: Vec<F>, alpha: F, gamma: F) -> Result<Self> {
        if levels.len() < 2 {
            return Err(Error::InvalidArgument("need at least 2 levels".into()));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "levels must be strictly increasing".into(),
            ));
        }
        if !(alpha > F::zero()) {
            return Err(Error::InvalidArgument("alpha must be > 0".into()));
        }
        if !(gamma >= F::zero()) {
            return Err(Error::InvalidArgument("gamma must be >= 0".into()));
        }
        Ok(Self {
            levels,
            alpha,
            gamma,
        })
    }

    /// Same levels and α with a different γ.
    pub fn with_gamma(&self, gamma: F) -> Result<Self> {
        Self::new(self.levels.clone(), self.alpha, gamma)
    }

    pub fn d(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[F] {
        &self.levels
    }

    pub fn alpha(&self) -> F {
        self.alpha
    }

    pub fn gamma(&self) -> F {
        self.gamma
    }

    pub fn first_level(&self) -> F {
        self.levels[0]
    }

    pub fn last_level(&self) -> F {
        *self.levels.last().unwrap()
    }

    /// Midpoint slope ½(u_{i+1} + u_{i+2}) of the i-th segment (0-based).
    pub fn midpoint(&self, i: usize) -> F {
        real::<F>(0.5) * (self.levels[i] + self.levels[i + 1])
    }

    /// Singular threshold α/2 (u_{i+1} + u_{i+2}) for 0-based segment i.
    pub fn threshold(&self, i: usize) -> F {
        self.alpha * self.midpoint(i)
    }

    fn domain_check(&self, v: F) -> Result<()> {
        let tol = level_tol(v);
        if v < self.first_level() - tol || v > self.last_level() + tol {
            return Err(Error::Domain(format!(
                "value {} outside [u_1, u_d] = [{}, {}]",
                v,
                self.first_level(),
                self.last_level()
            )));
        }
        Ok(())
    }

    /// 0-based segment index i with u_{i+1} <= v <= u_{i+2} (lower segment at ties).
    fn segment_of(&self, v: F) -> usize {
        let idx = self.levels.partition_point(|&u| u <= v);
        idx.saturating_sub(1).min(self.d() - 2)
    }

    /// The multibang integrand g(v) = ½((u_i + u_{i+1}) v − u_i u_{i+1}).
    pub fn g_eval(&self, v: F) -> Result<F> {
        self.domain_check(v)?;
        let v = v.max(self.first_level()).min(self.last_level());
        let i = self.segment_of(v);
        let (lo, hi) = (self.levels[i], self.levels[i + 1]);
        Ok(real::<F>(0.5) * ((lo + hi) * v - lo * hi))
    }

    /// Convex subdifferential ∂g(v); one-sided at the boundary levels.
    pub fn subgradient_interval(&self, v: F) -> Result<SubgradientInterval<F>> {
        self.domain_check(v)?;
        let d = self.d();
        // at a level?
        for (li, &u) in self.levels.iter().enumerate() {
            if (v - u).abs() <= level_tol(u) {
                let lower = if li == 0 {
                    F::neg_infinity()
                } else {
                    self.midpoint(li - 1)
                };
                let upper = if li == d - 1 {
                    F::infinity()
                } else {
                    self.midpoint(li)
                };
                return Ok(SubgradientInterval { lower, upper });
            }
        }
        let m = self.midpoint(self.segment_of(v));
        Ok(SubgradientInterval { lower: m, upper: m })
    }

    /// Unregularized classification: singular only on exact threshold hits
    /// (tolerance 1e-12·(1+|q|)), otherwise the open region Q_i.
    pub fn classify_unreg(&self, q: F) -> RegionLabel {
        let tau = real::<F>(1e-12) * (F::one() + q.abs());
        let d = self.d();
        for i in 0..d - 1 {
            if (q - self.threshold(i)).abs() <= tau {
                return RegionLabel::Singular(i + 1, i + 2);
            }
        }
        let below = (0..d - 1).take_while(|&i| self.threshold(i) < q).count();
        RegionLabel::Regular(below + 1)
    }

    /// Regularized classification: closed singular bands
    /// [τ_i + γ u_i, τ_i + γ u_{i+1}], open regular regions between them.
    pub fn classify_reg(&self, q: F) -> Result<RegionLabel> {
        self.require_positive_gamma()?;
        let d = self.d();
        for i in 0..d - 1 {
            let t = self.threshold(i);
            let lo = t + self.gamma * self.levels[i];
            let hi = t + self.gamma * self.levels[i + 1];
            if q < lo {
                return Ok(RegionLabel::Regular(i + 1));
            }
            if q <= hi {
                return Ok(RegionLabel::Singular(i + 1, i + 2));
            }
        }
        Ok(RegionLabel::Regular(d))
    }

    /// The resolvent H_γ(q): continuous, nondecreasing, range [u_1, u_d].
    pub fn h_gamma(&self, q: F) -> Result<F> {
        match self.classify_reg(q)? {
            RegionLabel::Regular(i) => Ok(self.levels[i - 1]),
            RegionLabel::Singular(i, _) => Ok((q - self.threshold(i - 1)) / self.gamma),
        }
    }

    /// Newton derivative of H_γ: 1/γ on the singular bands, 0 elsewhere.
    pub fn h_gamma_newton_derivative(&self, q: F) -> Result<F> {
        match self.classify_reg(q)? {
            RegionLabel::Regular(_) => Ok(F::zero()),
            RegionLabel::Singular(_, _) => Ok(F::one() / self.gamma),
        }
    }

    fn require_positive_gamma(&self) -> Result<()> {
        if !(self.gamma > F::zero()) {
            return Err(Error::InvalidArgument(
                "operation requires gamma > 0".into(),
            ));
        }
        Ok(())
    }

    /// G(u) = ∫ g(u(x)) dx, exact for P1 fields: each element is split where
    /// the affine interpolant crosses a level, and the affine integrand is
    /// integrated sub-segment by sub-segment.
    pub fn g_integral(&self, u: &NodalField<F>) -> Result<F> {
        for &v in u.values() {
            self.domain_check(v)?;
        }
        let h = u.mesh().h::<F>();
        let half = real::<F>(0.5);
        let values = u.values();
        let mut acc = F::zero();
        let mut cuts: Vec<F> = Vec::with_capacity(self.d() + 2);
        for e in 0..u.mesh().n_elements() {
            let (va, vb) = (values[e], values[e + 1]);
            self.collect_level_cuts(va, vb, &mut cuts);
            let mut s_prev = F::zero();
            let mut g_prev = self.g_eval(va)?;
            for k in 0..=cuts.len() {
                let s = if k < cuts.len() { cuts[k] } else { F::one() };
                let g_here = self.g_eval(va + (vb - va) * s)?;
                acc = acc + half * (g_prev + g_here) * (s - s_prev) * h;
                s_prev = s;
                g_prev = g_here;
            }
        }
        Ok(acc)
    }

    // local coordinates in (0,1) where the affine segment va→vb crosses a level
    fn collect_level_cuts(&self, va: F, vb: F, cuts: &mut Vec<F>) {
        cuts.clear();
        if va == vb {
            return;
        }
        for &u in &self.levels {
            let s = (u - va) / (vb - va);
            if s > F::zero() && s < F::one() {
                cuts.push(s);
            }
        }
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    }

    /// Directional derivative G'(u; v) for v in the tangential cone at u.
    ///
    /// On sets where u sits strictly between levels the slope is the segment
    /// midpoint; where u sits at a level the one-sided slope follows the sign
    /// of v. Elements are split at level crossings of u and sign changes of v.
    pub fn g_directional_derivative(
        &self,
        u: &NodalField<F>,
        v: &NodalField<F>,
    ) -> Result<F> {
        if u.mesh() != v.mesh() {
            return Err(Error::InvalidArgument("mesh mismatch".into()));
        }
        let (u1, ud) = (self.first_level(), self.last_level());
        for (&uv, &vv) in u.values().iter().zip(v.values()) {
            self.domain_check(uv)?;
            let vtol = real::<F>(1e-12) * (F::one() + vv.abs());
            if (uv - u1).abs() <= level_tol(u1) && vv < -vtol {
                return Err(Error::InvalidArgument(
                    "direction leaves the admissible set at u_1".into(),
                ));
            }
            if (uv - ud).abs() <= level_tol(ud) && vv > vtol {
                return Err(Error::InvalidArgument(
                    "direction leaves the admissible set at u_d".into(),
                ));
            }
        }

        let h = u.mesh().h::<F>();
        let half = real::<F>(0.5);
        let uv = u.values();
        let vv = v.values();
        let mut acc = F::zero();
        let mut cuts: Vec<F> = Vec::with_capacity(self.d() + 3);
        for e in 0..u.mesh().n_elements() {
            let (ua, ub) = (uv[e], uv[e + 1]);
            let (va, vb) = (vv[e], vv[e + 1]);
            self.collect_level_cuts(ua, ub, &mut cuts);
            if va != vb {
                let s0 = -va / (vb - va);
                if s0 > F::zero() && s0 < F::one() {
                    cuts.push(s0);
                    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
                }
            }
            let mut s_prev = F::zero();
            for k in 0..=cuts.len() {
                let s = if k < cuts.len() { cuts[k] } else { F::one() };
                if s <= s_prev {
                    continue;
                }
                let s_mid = half * (s_prev + s);
                let u_mid = ua + (ub - ua) * s_mid;
                let v_mid = va + (vb - va) * s_mid;
                let slope = self.one_sided_slope(u_mid, v_mid);
                let v_l = va + (vb - va) * s_prev;
                let v_r = va + (vb - va) * s;
                acc = acc + slope * half * (v_l + v_r) * (s - s_prev) * h;
                s_prev = s;
            }
        }
        Ok(acc)
    }

    // slope of g along direction sign(v) at the point u
    fn one_sided_slope(&self, u: F, v: F) -> F {
        let d = self.d();
        for (li, &lvl) in self.levels.iter().enumerate() {
            if (u - lvl).abs() <= level_tol(lvl) {
                return if v >= F::zero() {
                    if li + 1 < d {
                        self.midpoint(li)
                    } else {
                        // v must vanish here by the cone condition
                        self.midpoint(li - 1)
                    }
                } else if li > 0 {
                    self.midpoint(li - 1)
                } else {
                    self.midpoint(li)
                };
            }
        }
        self.midpoint(self.segment_of(u))
    }
}
