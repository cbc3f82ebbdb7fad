//! Vector fields with derivative providers, composed field actions, Lie
//! brackets and 4-points control constants.
//!
//! A family `f` maps a state `a` in `R^d` to a `d x l` matrix whose columns
//! `f_i(a)` drive the channels of an `l`-dimensional driver. Composed
//! actions follow the operator convention: the action of the word `(i, j)`
//! on the identity is the derivative of `f_j` contracted against `f_i`,
//! which pairs with the word coordinate `x^(i,j)` of the driver so that the
//! depth-2 scheme reproduces the second-order expansion of the driven ODE.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec;
use crate::sampling::SampleBox;

type EvalFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
type JacobianFn = Arc<dyn Fn(&DVector<f64>, usize) -> DMatrix<f64> + Send + Sync>;
type HessianFn = Arc<dyn Fn(&DVector<f64>, usize) -> Vec<DMatrix<f64>> + Send + Sync>;

/// Known or estimated norm data of a field family.
#[derive(Debug, Clone, Serialize)]
pub struct FieldNorms {
    /// Sup of the largest matrix entry of `f`.
    pub sup: Option<f64>,
    /// Sup of the channel-wise Jacobian operator norm.
    pub grad_sup: Option<f64>,
    /// Hoelder constant of the Jacobians at exponent `holder_exponent`.
    pub grad_holder: Option<f64>,
    pub holder_exponent: f64,
    /// True when the values are sampled lower bounds rather than supplied.
    pub estimated: bool,
}

impl FieldNorms {
    pub fn unknown() -> Self {
        Self {
            sup: None,
            grad_sup: None,
            grad_holder: None,
            holder_exponent: 1.0,
            estimated: false,
        }
    }
}

/// A family of driving vector fields `f: R^d -> L(R^l, R^d)` with optional
/// Jacobian and Hessian providers. Finite differences stand in for missing
/// providers and are flagged in reports.
#[derive(Clone)]
pub struct VectorFieldFamily {
    state_dim: usize,
    driver_dim: usize,
    eval: EvalFn,
    jacobian: Option<JacobianFn>,
    hessian: Option<HessianFn>,
    norms: FieldNorms,
    name: String,
}

impl VectorFieldFamily {
    pub fn new(
        state_dim: usize,
        driver_dim: usize,
        name: impl Into<String>,
        eval: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            state_dim,
            driver_dim,
            eval: Arc::new(eval),
            jacobian: None,
            hessian: None,
            norms: FieldNorms::unknown(),
            name: name.into(),
        }
    }

    pub fn with_jacobian(
        mut self,
        jac: impl Fn(&DVector<f64>, usize) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.jacobian = Some(Arc::new(jac));
        self
    }

    pub fn with_hessian(
        mut self,
        hess: impl Fn(&DVector<f64>, usize) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
    ) -> Self {
        self.hessian = Some(Arc::new(hess));
        self
    }

    pub fn with_norms(mut self, norms: FieldNorms) -> Self {
        self.norms = norms;
        self
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn driver_dim(&self) -> usize {
        self.driver_dim
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn norms(&self) -> &FieldNorms {
        &self.norms
    }

    pub fn uses_fd_jacobian(&self) -> bool {
        self.jacobian.is_none()
    }

    pub fn uses_fd_hessian(&self) -> bool {
        self.hessian.is_none()
    }

    /// Full `d x l` matrix at `a`.
    pub fn eval(&self, a: &DVector<f64>) -> DMatrix<f64> {
        (self.eval)(a)
    }

    /// Column `f_i(a)`.
    pub fn column(&self, a: &DVector<f64>, channel: usize) -> DVector<f64> {
        self.eval(a).column(channel).into_owned()
    }

    fn fd_step(a: &DVector<f64>) -> f64 {
        1e-5 * (1.0 + a.norm())
    }

    /// Jacobian of channel `i`: the `d x d` derivative of `a -> f_i(a)`.
    /// Central finite differences when no provider is installed.
    pub fn jacobian(&self, a: &DVector<f64>, channel: usize) -> DMatrix<f64> {
        if let Some(jac) = &self.jacobian {
            return jac(a, channel);
        }
        let d = self.state_dim;
        let h = Self::fd_step(a);
        let mut out = DMatrix::zeros(d, d);
        for k in 0..d {
            let mut ap = a.clone();
            let mut am = a.clone();
            ap[k] += h;
            am[k] -= h;
            let diff = (self.column(&ap, channel) - self.column(&am, channel)) / (2.0 * h);
            out.set_column(k, &diff);
        }
        out
    }

    /// Hessian of channel `i`: one symmetric `d x d` matrix per output
    /// component. Finite differences of the Jacobian when not installed.
    pub fn hessian(&self, a: &DVector<f64>, channel: usize) -> Vec<DMatrix<f64>> {
        if let Some(hess) = &self.hessian {
            return hess(a, channel);
        }
        let d = self.state_dim;
        let h = Self::fd_step(a);
        let mut per_component = vec![DMatrix::zeros(d, d); d];
        for k in 0..d {
            let mut ap = a.clone();
            let mut am = a.clone();
            ap[k] += h;
            am[k] -= h;
            let dj = (self.jacobian(&ap, channel) - self.jacobian(&am, channel)) / (2.0 * h);
            // dj[(m, b)] approximates the k-derivative of (grad f_i)_{m b}.
            for m in 0..d {
                for b in 0..d {
                    per_component[m][(b, k)] = dj[(m, b)];
                }
            }
        }
        // Symmetrize to remove finite-difference noise.
        for m in &mut per_component {
            let s = (m.clone() + m.transpose()) * 0.5;
            *m = s;
        }
        per_component
    }

    /// Sampled lower bounds for the norm data over a box.
    pub fn estimate_norms(&self, boxed: &SampleBox, samples: usize, seed: u64) -> FieldNorms {
        let pts = boxed.sample(samples, seed);
        let mut sup: f64 = 0.0;
        let mut grad: f64 = 0.0;
        for a in &pts {
            let m = self.eval(a);
            sup = sup.max(m.amax());
            for i in 0..self.driver_dim {
                grad = grad.max(operator_norm(&self.jacobian(a, i)));
            }
        }
        let gamma = self.norms.holder_exponent;
        let mut holder: f64 = 0.0;
        for pair in pts.chunks(2) {
            if pair.len() < 2 {
                break;
            }
            let gap = (&pair[0] - &pair[1]).norm();
            if gap < 1e-12 {
                continue;
            }
            for i in 0..self.driver_dim {
                let dj = self.jacobian(&pair[0], i) - self.jacobian(&pair[1], i);
                holder = holder.max(operator_norm(&dj) / gap.powf(gamma));
            }
        }
        FieldNorms {
            sup: Some(sup),
            grad_sup: Some(grad),
            grad_holder: Some(holder),
            holder_exponent: gamma,
            estimated: true,
        }
    }
}

/// Largest singular value.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().singular_values().max()
}

/// Iterated action of the word `word` on the identity.
///
/// A single letter gives the column `f_i(a)`; the word `(i, j)` gives the
/// Jacobian of `f_j` applied to `f_i(a)`; a three-letter word adds the one
/// Hessian term of the product rule.
pub fn f_i_identity(v: &VectorFieldFamily, word: &[usize], a: &DVector<f64>) -> Result<DVector<f64>> {
    if word.is_empty() || word.len() > 3 {
        return Err(Error::Invalid(format!(
            "word length must be 1..=3, got {}",
            word.len()
        )));
    }
    if word.iter().any(|&i| i >= v.driver_dim()) {
        return Err(Error::Invalid("channel index out of range".into()));
    }
    Ok(match *word {
        [i] => v.column(a, i),
        [i, j] => v.jacobian(a, j) * v.column(a, i),
        [i, j, k] => {
            let fi = v.column(a, i);
            let fj = v.column(a, j);
            let hess_k = v.hessian(a, k);
            let mut out = v.jacobian(a, k) * (v.jacobian(a, j) * &fi);
            for (m, hk) in hess_k.iter().enumerate() {
                out[m] += (hk * &fi).dot(&fj);
            }
            out
        }
        _ => unreachable!(),
    })
}

/// Lie bracket action `[f_i, f_j]` on the identity, assembled from the
/// two-letter composed actions.
pub fn lie_bracket(
    v: &VectorFieldFamily,
    i: usize,
    j: usize,
    a: &DVector<f64>,
) -> Result<DVector<f64>> {
    Ok(f_i_identity(v, &[i, j], a)? - f_i_identity(v, &[j, i], a)?)
}

/// A 4-points control: a nondecreasing gauge `hat` and a constant `check`
/// bounding mixed second differences of a map.
#[derive(Clone)]
pub struct FourPointConstants {
    hat: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    check: f64,
    label: String,
}

impl FourPointConstants {
    pub fn new(
        label: impl Into<String>,
        hat: impl Fn(f64) -> f64 + Send + Sync + 'static,
        check: f64,
    ) -> Self {
        Self {
            hat: Arc::new(hat),
            check,
            label: label.into(),
        }
    }

    /// Power gauge `hat(x) = coeff x^exponent`.
    pub fn power(label: impl Into<String>, coeff: f64, exponent: f64, check: f64) -> Self {
        Self::new(label, move |x: f64| coeff * x.powf(exponent), check)
    }

    pub fn hat(&self, x: f64) -> f64 {
        (self.hat)(x)
    }

    pub fn check(&self) -> f64 {
        self.check
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Constants for `lambda f + mu g`.
    pub fn sum(lambda: f64, f: &Self, mu: f64, g: &Self) -> Self {
        let (fa, ga) = (f.hat.clone(), g.hat.clone());
        let (la, ma) = (lambda.abs(), mu.abs());
        Self::new(
            format!("{}*{} + {}*{}", lambda, f.label, mu, g.label),
            move |x| la * fa(x) + ma * ga(x),
            la * f.check + ma * g.check,
        )
    }

    /// Constants for the composition `f . g` given a Lipschitz bound of `g`.
    pub fn compose(f: &Self, g: &Self, lip_g: f64) -> Self {
        let (fa, ga) = (f.hat.clone(), g.hat.clone());
        let fc = f.check;
        Self::new(
            format!("{} . {}", f.label, g.label),
            move |x| fa(lip_g * x) * lip_g + fc * ga(x),
            f.check * g.check,
        )
    }

    /// Constants for the inverse of `id + g` when `g` is a small-Lipschitz
    /// map. Derived bounds; confirm empirically before relying on them.
    pub fn inverse(g: &Self, lip_g: f64) -> Result<Self> {
        if !(lip_g < 1.0) {
            return Err(Error::Contraction(format!(
                "inverse constants need lip(g) < 1, got {lip_g}"
            )));
        }
        if !(g.check < 1.0) {
            return Err(Error::Contraction(format!(
                "inverse constants need check(g) < 1, got {}",
                g.check
            )));
        }
        let lip_k = 1.0 / (1.0 - lip_g);
        let ga = g.hat.clone();
        Ok(Self::new(
            format!("inv(id + {})", g.label),
            move |x| ga(lip_k * x) * lip_k,
            1.0 / (1.0 - g.check),
        ))
    }
}

/// Constants making a differentiable field with a Hoelder gradient satisfy
/// the 4-points control: gauge `2 |grad f|_holder x^gamma` and constant
/// `|grad f|_sup`.
pub fn analytic_four_point(v: &VectorFieldFamily) -> Result<FourPointConstants> {
    let norms = v.norms();
    let holder = norms
        .grad_holder
        .ok_or_else(|| Error::MissingDerivative("Hoelder constant of the gradient".into()))?;
    let grad_sup = norms
        .grad_sup
        .ok_or_else(|| Error::MissingDerivative("sup of the gradient".into()))?;
    Ok(FourPointConstants::power(
        v.name(),
        2.0 * holder,
        norms.holder_exponent,
        grad_sup,
    ))
}

/// Largest violation of the 4-points bound for `g` over seeded quadruples
/// in the centered box of the given radius; nonpositive means no violation
/// was found.
pub fn empirical_four_point_defect(
    g: &(dyn Fn(&DVector<f64>) -> DVector<f64> + Sync),
    c: &FourPointConstants,
    dim: usize,
    samples: usize,
    radius: f64,
    seed: u64,
) -> f64 {
    let boxed = SampleBox::centered(dim, radius);
    let pts = boxed.sample(4 * samples, seed);
    let vals = exec::map_indices(samples, |idx| {
        let a = &pts[4 * idx];
        let b = &pts[4 * idx + 1];
        let cc = &pts[4 * idx + 2];
        let d = &pts[4 * idx + 3];
        let lhs = (g(a) - g(b) - g(cc) + g(d)).norm();
        let first = (a - b).norm().max((cc - d).norm());
        let second = (a - cc).norm().max((b - d).norm());
        let mixed = (a - b - cc + d).norm();
        lhs - (c.hat(first) * second + c.check() * mixed)
    });
    vals.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// `f_i(y) = B_i y` for given matrices; Jacobians are the matrices
/// themselves and all Hessians vanish.
pub fn linear_field(matrices: Vec<DMatrix<f64>>) -> Result<VectorFieldFamily> {
    if matrices.is_empty() {
        return Err(Error::Invalid("need at least one matrix".into()));
    }
    let d = matrices[0].nrows();
    if matrices.iter().any(|m| m.nrows() != d || m.ncols() != d) {
        return Err(Error::Structure("matrices must be square of equal size".into()));
    }
    let l = matrices.len();
    let grad_sup = matrices.iter().map(operator_norm).fold(0.0, f64::max);
    let mats = Arc::new(matrices);
    let mats_eval = mats.clone();
    let mats_jac = mats.clone();
    Ok(VectorFieldFamily::new(d, l, "linear", move |a| {
        let mut m = DMatrix::zeros(d, l);
        for (i, b) in mats_eval.iter().enumerate() {
            m.set_column(i, &(b * a));
        }
        m
    })
    .with_jacobian(move |_a, i| mats_jac[i].clone())
    .with_hessian(move |_a, _i| vec![DMatrix::zeros(d, d); d])
    .with_norms(FieldNorms {
        sup: None,
        grad_sup: Some(grad_sup),
        grad_holder: Some(0.0),
        holder_exponent: 1.0,
        estimated: false,
    }))
}

/// Componentwise sine field on a square geometry: `f_i(y) = sin(y_i) e_i`.
pub fn sine_field(dim: usize) -> VectorFieldFamily {
    VectorFieldFamily::new(dim, dim, "sine", move |a| {
        DMatrix::from_fn(dim, dim, |r, c| if r == c { a[r].sin() } else { 0.0 })
    })
    .with_jacobian(move |a, i| {
        DMatrix::from_fn(
            dim,
            dim,
            |r, c| if r == i && c == i { a[i].cos() } else { 0.0 },
        )
    })
    .with_hessian(move |a, i| {
        let mut per_component = vec![DMatrix::zeros(dim, dim); dim];
        per_component[i][(i, i)] = -a[i].sin();
        per_component
    })
    .with_norms(FieldNorms {
        sup: Some(1.0),
        grad_sup: Some(1.0),
        grad_holder: Some(1.0),
        holder_exponent: 1.0,
        estimated: false,
    })
}

/// Scalar state driven by two channels: `f(y) = (sin y, cos y)`.
/// Bounded, smooth, and the two channels do not commute.
pub fn scalar_trig_field() -> VectorFieldFamily {
    VectorFieldFamily::new(1, 2, "scalar_trig", |a| {
        DMatrix::from_row_slice(1, 2, &[a[0].sin(), a[0].cos()])
    })
    .with_jacobian(|a, i| {
        let v = if i == 0 { a[0].cos() } else { -a[0].sin() };
        DMatrix::from_element(1, 1, v)
    })
    .with_hessian(|a, i| {
        let v = if i == 0 { -a[0].sin() } else { -a[0].cos() };
        vec![DMatrix::from_element(1, 1, v)]
    })
    .with_norms(FieldNorms {
        sup: Some(1.0),
        grad_sup: Some(1.0),
        grad_holder: Some(1.0),
        holder_exponent: 1.0,
        estimated: false,
    })
}

/// Planar rotation-type nonlinear field: two channels that mix the state
/// components through bounded trigonometric couplings.
pub fn rotation_field() -> VectorFieldFamily {
    VectorFieldFamily::new(2, 2, "rotation", |a| {
        DMatrix::from_row_slice(2, 2, &[a[1].sin(), a[1].cos(), a[0].cos(), a[0].sin()])
    })
    .with_jacobian(|a, i| {
        if i == 0 {
            DMatrix::from_row_slice(2, 2, &[0.0, a[1].cos(), -a[0].sin(), 0.0])
        } else {
            DMatrix::from_row_slice(2, 2, &[0.0, -a[1].sin(), a[0].cos(), 0.0])
        }
    })
    .with_hessian(|a, i| {
        let mut per_component = vec![DMatrix::zeros(2, 2); 2];
        if i == 0 {
            per_component[0][(1, 1)] = -a[1].sin();
            per_component[1][(0, 0)] = -a[0].cos();
        } else {
            per_component[0][(1, 1)] = -a[1].cos();
            per_component[1][(0, 0)] = -a[0].sin();
        }
        per_component
    })
    .with_norms(FieldNorms {
        sup: Some(1.0),
        grad_sup: Some(1.0),
        grad_holder: Some(1.0),
        holder_exponent: 1.0,
        estimated: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_fixture() -> (VectorFieldFamily, DMatrix<f64>, DMatrix<f64>) {
        let b1 = DMatrix::from_row_slice(2, 2, &[0.1, 0.3, -0.2, 0.05]);
        let b2 = DMatrix::from_row_slice(2, 2, &[0.0, -0.4, 0.25, 0.1]);
        let v = linear_field(vec![b1.clone(), b2.clone()]).unwrap();
        (v, b1, b2)
    }

    #[test]
    fn single_letter_action_is_the_column() {
        let (v, b1, _) = linear_fixture();
        let a = DVector::from_vec(vec![1.0, -2.0]);
        let got = f_i_identity(&v, &[0], &a).unwrap();
        assert_eq!(got, &b1 * &a);
    }

    #[test]
    fn two_letter_action_orders_the_matrices() {
        let (v, b1, b2) = linear_fixture();
        let a = DVector::from_vec(vec![0.7, 0.4]);
        // word (0, 1): derivative of channel 1 contracted against channel 0.
        let got = f_i_identity(&v, &[0, 1], &a).unwrap();
        let expect = &b2 * (&b1 * &a);
        assert!((got - expect).norm() < 1e-14);
    }

    #[test]
    fn constant_field_has_vanishing_two_letter_action() {
        let v = VectorFieldFamily::new(2, 1, "constant", |_a| {
            DMatrix::from_row_slice(2, 1, &[1.0, 2.0])
        })
        .with_jacobian(|_a, _i| DMatrix::zeros(2, 2));
        let a = DVector::from_vec(vec![0.3, 0.4]);
        let got = f_i_identity(&v, &[0, 0], &a).unwrap();
        assert_eq!(got.norm(), 0.0);
    }

    #[test]
    fn three_letter_action_on_linear_fields() {
        let (v, b1, b2) = linear_fixture();
        let a = DVector::from_vec(vec![-0.3, 0.9]);
        // Hessians vanish: word (0, 0, 1) is B2 B1 B1 a.
        let got = f_i_identity(&v, &[0, 0, 1], &a).unwrap();
        let expect = &b2 * (&b1 * (&b1 * &a));
        assert!((got - expect).norm() < 1e-13);
    }

    #[test]
    fn word_length_validation() {
        let (v, _, _) = linear_fixture();
        let a = DVector::from_vec(vec![0.0, 0.0]);
        assert!(f_i_identity(&v, &[], &a).is_err());
        assert!(f_i_identity(&v, &[0, 1, 0, 1], &a).is_err());
        assert!(f_i_identity(&v, &[7], &a).is_err());
    }

    #[test]
    fn bracket_is_antisymmetric_and_matches_commutator() {
        let (v, b1, b2) = linear_fixture();
        let a = DVector::from_vec(vec![0.6, -1.1]);
        let same = lie_bracket(&v, 1, 1, &a).unwrap();
        assert_eq!(same.norm(), 0.0);
        let br = lie_bracket(&v, 0, 1, &a).unwrap();
        let rb = lie_bracket(&v, 1, 0, &a).unwrap();
        assert!((&br + &rb).norm() < 1e-14);
        // Convention: bracket(0,1) acts as (B2 B1 - B1 B2) a.
        let expect = (&b2 * &b1 - &b1 * &b2) * &a;
        assert!((br - expect).norm() < 1e-14);
    }

    #[test]
    fn finite_difference_jacobian_matches_analytic() {
        let analytic = scalar_trig_field();
        let fd = VectorFieldFamily::new(1, 2, "fd", |a| {
            DMatrix::from_row_slice(1, 2, &[a[0].sin(), a[0].cos()])
        });
        assert!(fd.uses_fd_jacobian());
        let a = DVector::from_vec(vec![0.37]);
        for i in 0..2 {
            let diff = analytic.jacobian(&a, i) - fd.jacobian(&a, i);
            assert!(diff.amax() < 1e-9, "channel {i}: {}", diff.amax());
            let dh = &analytic.hessian(&a, i)[0] - &fd.hessian(&a, i)[0];
            assert!(dh.amax() < 1e-5, "channel {i} hessian: {}", dh.amax());
        }
    }

    #[test]
    fn analytic_constants_for_linear_fields() {
        let (v, b1, b2) = linear_fixture();
        let c = analytic_four_point(&v).unwrap();
        assert_eq!(c.hat(2.0), 0.0);
        let expect = operator_norm(&b1).max(operator_norm(&b2));
        assert!((c.check() - expect).abs() < 1e-14);
    }

    #[test]
    fn analytic_constants_for_zero_field() {
        let v = linear_field(vec![DMatrix::zeros(2, 2)]).unwrap();
        let c = analytic_four_point(&v).unwrap();
        assert_eq!(c.hat(1.0), 0.0);
        assert_eq!(c.check(), 0.0);
    }

    #[test]
    fn analytic_constants_for_scalar_sine() {
        let v = sine_field(1);
        let c = analytic_four_point(&v).unwrap();
        assert_eq!(c.check(), 1.0);
        assert!((c.hat(3.0) - 6.0).abs() < 1e-14);
    }

    #[test]
    fn missing_norm_data_is_an_error() {
        let v = VectorFieldFamily::new(1, 1, "anon", |a| DMatrix::from_element(1, 1, a[0]));
        assert!(analytic_four_point(&v).is_err());
    }

    #[test]
    fn linear_map_never_violates_its_constants() {
        let (v, b1, _) = linear_fixture();
        let c = analytic_four_point(&v).unwrap();
        let g = move |a: &DVector<f64>| &b1 * a;
        let defect = empirical_four_point_defect(&g, &c, 2, 2000, 3.0, 11);
        assert!(defect <= 1e-12, "defect {defect}");
    }

    #[test]
    fn huge_constants_are_vacuous() {
        let c = FourPointConstants::power("huge", 1e9, 1.0, 1e9);
        let g = |a: &DVector<f64>| a.map(|x| x.tanh() * 3.0);
        let defect = empirical_four_point_defect(&g, &c, 2, 500, 2.0, 5);
        assert!(defect <= 0.0);
    }

    #[test]
    fn inverse_constants_require_contraction() {
        let g = FourPointConstants::power("g", 0.1, 1.0, 0.3);
        assert!(FourPointConstants::inverse(&g, 0.5).is_ok());
        assert!(FourPointConstants::inverse(&g, 1.0).is_err());
    }
}
