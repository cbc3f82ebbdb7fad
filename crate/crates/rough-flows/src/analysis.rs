//! Solution paths and their certification, two-scheme comparison,
//! perturbations of one-step families, and flow inversion.

use std::io::Write;
use std::sync::Arc;

use nalgebra::DVector;
use serde::Serialize;

use crate::driver::{Control, Remainder};
use crate::error::{Error, Result};
use crate::exec;
use crate::flows::{iterated_product, FlowFamily, Orientation, Partition};
use crate::sampling;
use crate::sewing::sew;

/// A trajectory started at `(start_time, start)`, sampled on a time grid.
#[derive(Debug, Clone, Serialize)]
pub struct SolutionPath {
    pub start_time: f64,
    #[serde(skip)]
    pub start: DVector<f64>,
    #[serde(skip)]
    pub samples: Vec<(f64, DVector<f64>)>,
    pub scheme: String,
}

impl SolutionPath {
    /// CSV rows `t,y0,...,y{d-1}`.
    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        let d = self.start.len();
        let header: Vec<String> = (0..d).map(|k| format!("y{k}")).collect();
        writeln!(out, "t,{}", header.join(","))?;
        for (t, y) in &self.samples {
            let row: Vec<String> = y.iter().map(|x| format!("{x:.17e}")).collect();
            writeln!(out, "{t:.17e},{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn final_value(&self) -> &DVector<f64> {
        &self.samples.last().expect("nonempty").1
    }
}

/// Build a trajectory by stepping the family along a fine dyadic partition,
/// recording at least `min_samples` evenly spread sample times.
pub fn solve_path(
    phi: &FlowFamily,
    start_time: f64,
    a: &DVector<f64>,
    level: usize,
    min_samples: usize,
) -> Result<SolutionPath> {
    let horizon = phi.horizon();
    if !(0.0..horizon).contains(&start_time) {
        return Err(Error::Invalid(format!(
            "start_time {start_time} outside [0, {horizon})"
        )));
    }
    let pi = Partition::dyadic(horizon, level);
    let fine = pi.times();
    let stride = ((fine.len() - 1) / min_samples.max(1)).max(1);
    let mut samples = vec![(start_time, a.clone())];
    let mut y = a.clone();
    let mut prev_t = start_time;
    for (idx, &t) in fine.iter().enumerate() {
        if t <= start_time {
            continue;
        }
        y = phi.eval(prev_t, t, &y);
        if y.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("trajectory of '{}' at t = {t}", phi.name())));
        }
        prev_t = t;
        if idx % stride == 0 || idx == fine.len() - 1 {
            samples.push((t, y.clone()));
        }
    }
    Ok(SolutionPath {
        start_time,
        start: a.clone(),
        samples,
        scheme: phi.name().to_string(),
    })
}

/// Certification constant of a trajectory against a one-step family: the
/// supremum over sampled `s <= t` of `|y_t - phi_{t,s}(y_s)| / m(w(s, t))`.
#[derive(Debug, Clone, Serialize)]
pub struct SolutionCheck {
    pub constant: f64,
    pub worst_pair: (f64, f64),
    pub samples: usize,
}

pub fn davie_solution_check(
    y: &SolutionPath,
    phi: &FlowFamily,
    rem: &Remainder,
    ctrl: &Control,
) -> Result<SolutionCheck> {
    if y.samples.len() < 32 {
        return Err(Error::Invalid(format!(
            "need at least 32 trajectory samples, got {}",
            y.samples.len()
        )));
    }
    let mut pairs = Vec::new();
    for i in 0..y.samples.len() {
        for j in (i + 1)..y.samples.len() {
            pairs.push((i, j));
        }
    }
    let vals = exec::map_indices(pairs.len(), |idx| {
        let (i, j) = pairs[idx];
        let (s, ys) = &y.samples[i];
        let (t, yt) = &y.samples[j];
        let w = rem.eval(ctrl.eval(*s, *t));
        if w <= 0.0 {
            return 0.0;
        }
        (yt - phi.eval(*s, *t, ys)).norm() / w
    });
    let worst = exec::argmax(&vals).ok_or_else(|| Error::Invalid("no sample pairs".into()))?;
    if !vals[worst].is_finite() {
        return Err(Error::NonFinite("certification constant".into()));
    }
    let (i, j) = pairs[worst];
    Ok(SolutionCheck {
        constant: vals[worst],
        worst_pair: (y.samples[i].0, y.samples[j].0),
        samples: pairs.len(),
    })
}

/// Distance data between the limits of two one-step families started at
/// `a` and `b`, with the correction-size estimates of the comparison bound.
#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    /// Sup distance of the two sewn trajectories over probe times.
    pub distance: f64,
    /// Composition-defect gap of the two families, remainder-scaled.
    pub eps1: f64,
    /// Sampled Lipschitz constant of the family difference.
    pub eps2: f64,
    /// Sup of the family difference along the second trajectory.
    pub eps3: f64,
    pub start_gap: f64,
    /// `distance / (eps1 + eps2 + eps3 + start_gap)`, the implied constant.
    pub fitted_c: f64,
    /// Distances at each refinement level used.
    pub per_level: Vec<(usize, f64)>,
}

/// Compare the sewn limits of a reference family and a second family.
#[allow(clippy::too_many_arguments)]
pub fn solution_compare(
    phi: &FlowFamily,
    zeta: &FlowFamily,
    a: &DVector<f64>,
    b: &DVector<f64>,
    levels: std::ops::RangeInclusive<usize>,
    rem: &Remainder,
    ctrl: &Control,
    grid: &[f64],
) -> Result<CompareReport> {
    let horizon = phi.horizon();
    let level_list: Vec<usize> = levels.collect();
    if level_list.is_empty() {
        return Err(Error::Invalid("empty level range".into()));
    }
    let probe_times: Vec<f64> = sampling::uniform_grid(horizon, 16);
    let mut per_level = Vec::new();
    let mut distance = 0.0;
    for &level in &level_list {
        let pi = Partition::dyadic(horizon, level);
        let mut sup: f64 = 0.0;
        let mut y = a.clone();
        let mut z = b.clone();
        let mut prev = 0.0;
        for &t in &probe_times[1..] {
            y = iterated_product(phi, &pi, prev, t, &y);
            z = iterated_product(zeta, &pi, prev, t, &z);
            prev = t;
            sup = sup.max((&y - &z).norm());
        }
        if !sup.is_finite() {
            return Err(Error::NonFinite("trajectory comparison".into()));
        }
        per_level.push((level, sup));
        distance = sup;
    }
    // Correction sizes of the family difference along the z-trajectory.
    let finest = *level_list.last().unwrap();
    let z_path = solve_path(zeta, 0.0, b, finest.min(12), 32)?;
    let alpha = |s: f64, t: f64, p: &DVector<f64>| zeta.eval(s, t, p) - phi.eval(s, t, p);
    let mut eps1: f64 = 0.0;
    let mut eps3: f64 = 0.0;
    for (i, (s, zs)) in z_path.samples.iter().enumerate() {
        for (t, _) in z_path.samples.iter().skip(i + 1) {
            let w = rem.eval(ctrl.eval(*s, *t));
            eps3 = eps3.max(alpha(*s, *t, zs).norm());
            if w > 0.0 {
                // Composition-defect difference over (s, m, t) triples with
                // the midpoint of the sample grid.
                let m = 0.5 * (s + t);
                let zm = zeta.eval(*s, m, zs);
                let two = alpha(m, *t, &zm);
                let one = alpha(*s, *t, zs);
                eps1 = eps1.max((two - one).norm() / w);
            }
        }
    }
    let mut eps2: f64 = 0.0;
    for (s, t) in sampling::grid_pairs(grid) {
        for pair in z_path.samples.windows(2) {
            let (u, w1) = (&pair[0].1, &pair[1].1);
            let gap = (u - w1).norm();
            if gap > 1e-12 {
                eps2 = eps2.max((alpha(s, t, u) - alpha(s, t, w1)).norm() / gap);
            }
        }
    }
    let start_gap = (a - b).norm();
    let denom = eps1 + eps2 + eps3 + start_gap;
    let fitted_c = if denom > 0.0 { distance / denom } else { 0.0 };
    Ok(CompareReport {
        distance,
        eps1,
        eps2,
        eps3,
        start_gap,
        fitted_c,
        per_level,
    })
}

/// Declared regularity class of a correction family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PerturbationClass {
    Plain,
    Lipschitz,
}

/// A two-time correction family, vanishing on the diagonal.
#[derive(Clone)]
pub struct PerturbationFamily {
    eval: Arc<dyn Fn(f64, f64, &DVector<f64>) -> DVector<f64> + Send + Sync>,
    pub class: PerturbationClass,
    pub name: String,
}

impl PerturbationFamily {
    pub fn new(
        name: impl Into<String>,
        class: PerturbationClass,
        eval: impl Fn(f64, f64, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            eval: Arc::new(eval),
            class,
            name: name.into(),
        }
    }

    /// Wrap the difference family `chi - phi` as a correction term.
    pub fn from_difference(name: impl Into<String>, chi: &FlowFamily, phi: &FlowFamily) -> Self {
        let diff = chi.difference(phi);
        Self {
            eval: diff,
            class: PerturbationClass::Plain,
            name: name.into(),
        }
    }

    pub fn eval(&self, s: f64, t: f64, a: &DVector<f64>) -> DVector<f64> {
        (self.eval)(s, t, a)
    }
}

/// Ratio checks of a correction family: vanishing diagonal, remainder-
/// bounded size, and (for the Lipschitz class) remainder-bounded Lipschitz
/// constants.
#[derive(Debug, Clone, Serialize)]
pub struct PerturbationCheck {
    pub diagonal_max: f64,
    /// Sup of `|eps(s, t, a)| / m(w(s, t))`.
    pub size_constant: f64,
    /// Sup of `lip(eps(s, t, .)) / m(w(s, t))` when the class demands it.
    pub lip_constant: Option<f64>,
    pub pass: bool,
}

pub fn perturbation_check(
    eps: &PerturbationFamily,
    pairs: &[(f64, f64)],
    points: &[DVector<f64>],
    point_pairs: &[(DVector<f64>, DVector<f64>)],
    rem: &Remainder,
    ctrl: &Control,
) -> Result<PerturbationCheck> {
    let mut diagonal_max: f64 = 0.0;
    for a in points {
        for &(s, _) in pairs {
            diagonal_max = diagonal_max.max(eps.eval(s, s, a).norm());
        }
    }
    let n = pairs.len() * points.len();
    let sizes = exec::map_indices(n, |idx| {
        let (s, t) = pairs[idx / points.len()];
        if t <= s {
            return 0.0;
        }
        let a = &points[idx % points.len()];
        eps.eval(s, t, a).norm() / rem.eval(ctrl.eval(s, t))
    });
    let size_constant = sizes.into_iter().fold(0.0, f64::max);
    let lip_constant = if eps.class == PerturbationClass::Lipschitz {
        let m = pairs.len() * point_pairs.len();
        let vals = exec::map_indices(m, |idx| {
            let (s, t) = pairs[idx / point_pairs.len()];
            if t <= s {
                return 0.0;
            }
            let (a, b) = &point_pairs[idx % point_pairs.len()];
            let gap = (a - b).norm();
            if gap < 1e-14 {
                return 0.0;
            }
            (eps.eval(s, t, a) - eps.eval(s, t, b)).norm()
                / (gap * rem.eval(ctrl.eval(s, t)))
        });
        Some(vals.into_iter().fold(0.0, f64::max))
    } else {
        None
    };
    let finite = size_constant.is_finite() && lip_constant.map_or(true, |c| c.is_finite());
    Ok(PerturbationCheck {
        pass: diagonal_max == 0.0 && finite,
        diagonal_max,
        size_constant,
        lip_constant,
    })
}

/// Pointwise sum `phi + eps` as a new family.
pub fn apply_perturbation(phi: &FlowFamily, eps: &PerturbationFamily) -> FlowFamily {
    let term = eps.clone();
    let name = format!("{}+{}", phi.name(), eps.name);
    phi.plus(name, Arc::new(move |s, t, a| term.eval(s, t, a)))
}

/// Options for the fixed-point inversion of a single step.
#[derive(Debug, Clone, Copy)]
pub struct InvertOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Iterates must stay within this distance of the target; `None`
    /// disables the confinement check.
    pub ball_radius: Option<f64>,
}

impl Default for InvertOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 200,
            ball_radius: None,
        }
    }
}

/// Solve `phi_{t,s}(a) = b` by the fixed-point iteration
/// `a_{k+1} = b - (phi_{t,s} - id)(a_k)` started at `b`.
///
/// The near-identity part must contract: its sampled Lipschitz constant
/// around `b` is checked first and the iteration refuses to run at 1 or
/// above (the horizon is then too large for inversion).
pub fn invert_step(
    phi: &FlowFamily,
    s: f64,
    t: f64,
    b: &DVector<f64>,
    opts: &InvertOptions,
) -> Result<DVector<f64>> {
    if t <= s {
        return Ok(b.clone());
    }
    let chi = |a: &DVector<f64>| phi.eval(s, t, a) - a;
    // Sampled contraction estimate on a small cloud around the target.
    let scale = 0.1 * (1.0 + b.norm());
    let dim = b.len();
    let mut lip: f64 = 0.0;
    for k in 0..dim {
        let mut u = b.clone();
        let mut w = b.clone();
        u[k] += scale;
        w[k] -= scale;
        lip = lip.max((chi(&u) - chi(&w)).norm() / (2.0 * scale));
    }
    if lip >= 1.0 {
        return Err(Error::Contraction(format!(
            "near-identity part has sampled Lipschitz constant {lip:.3} >= 1 on ({s}, {t})"
        )));
    }
    let mut a = b.clone();
    for _ in 0..opts.max_iter {
        let next = b - chi(&a);
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("inversion iterate".into()));
        }
        if let Some(radius) = opts.ball_radius {
            if (&next - b).norm() > radius {
                return Err(Error::Contraction(format!(
                    "iterate left the ball of radius {radius} around the target"
                )));
            }
        }
        let step = (&next - &a).norm();
        a = next;
        if step < opts.tol {
            return Ok(a);
        }
    }
    Err(Error::NonCauchy(format!(
        "inversion did not reach tol {} in {} iterations",
        opts.tol, opts.max_iter
    )))
}

/// Reverse family approximating the inverse of the limit flow: partition
/// `[s, t]` dyadically at the given level and invert the steps from the top
/// end downwards. Failed inversions surface as NaN entries.
pub fn inverse_flow(phi: &FlowFamily, level: usize, opts: InvertOptions) -> FlowFamily {
    let base = phi.clone();
    let horizon = phi.horizon();
    let name = format!("{}^-1", phi.name());
    FlowFamily::new(name, horizon, move |s, t, b| {
        if t <= s {
            return b.clone();
        }
        let pi = Partition::dyadic(horizon, level);
        let mut knots: Vec<f64> = vec![s];
        knots.extend(pi.times().iter().copied().filter(|&x| x > s && x < t));
        knots.push(t);
        let mut y = b.clone();
        for w in knots.windows(2).rev() {
            match invert_step(&base, w[0], w[1], &y, &opts) {
                Ok(next) => y = next,
                Err(_) => return DVector::from_element(b.len(), f64::NAN),
            }
        }
        y
    })
    .with_orientation(Orientation::Reverse)
}

/// Largest trajectory-level Lipschitz quotient over the given start pairs:
/// `sup_t |y_t(a) - y_t(b)| / |a - b|` from sewn trajectories.
pub fn manifold_lipschitz_estimate(
    phi: &FlowFamily,
    start_pairs: &[(DVector<f64>, DVector<f64>)],
    level: usize,
) -> Result<f64> {
    let vals = exec::map_indices(start_pairs.len(), |idx| {
        let (a, b) = &start_pairs[idx];
        let gap = (a - b).norm();
        if gap < 1e-14 {
            return 0.0;
        }
        let ya = solve_path(phi, 0.0, a, level, 32);
        let yb = solve_path(phi, 0.0, b, level, 32);
        match (ya, yb) {
            (Ok(pa), Ok(pb)) => pa
                .samples
                .iter()
                .zip(pb.samples.iter())
                .map(|((_, u), (_, w))| (u - w).norm() / gap)
                .fold(0.0, f64::max),
            _ => f64::NAN,
        }
    });
    let worst = vals.into_iter().fold(0.0, f64::max);
    if !worst.is_finite() {
        return Err(Error::NonFinite("manifold Lipschitz estimate".into()));
    }
    Ok(worst)
}

/// Round-trip residual of an inverse family against a forward family:
/// `sup |zeta_{s,t}(psi_{t,s}(a)) - a|` over pairs and starts.
pub fn inversion_round_trip(
    zeta: &FlowFamily,
    psi: &FlowFamily,
    pairs: &[(f64, f64)],
    points: &[DVector<f64>],
) -> Result<f64> {
    let n = pairs.len() * points.len();
    let vals = exec::map_indices(n, |idx| {
        let (s, t) = pairs[idx / points.len()];
        let a = &points[idx % points.len()];
        (zeta.eval(s, t, &psi.eval(s, t, a)) - a).norm()
    });
    let worst = vals.into_iter().fold(0.0, f64::max);
    if !worst.is_finite() {
        return Err(Error::NonFinite("inversion round trip".into()));
    }
    Ok(worst)
}

/// Two-sided residual `sup |psi_{t,s}(zeta_{s,t}(a)) - a|`.
pub fn inversion_round_trip_reverse(
    zeta: &FlowFamily,
    psi: &FlowFamily,
    pairs: &[(f64, f64)],
    points: &[DVector<f64>],
) -> Result<f64> {
    let n = pairs.len() * points.len();
    let vals = exec::map_indices(n, |idx| {
        let (s, t) = pairs[idx / points.len()];
        let a = &points[idx % points.len()];
        (psi.eval(s, t, &zeta.eval(s, t, a)) - a).norm()
    });
    let worst = vals.into_iter().fold(0.0, f64::max);
    if !worst.is_finite() {
        return Err(Error::NonFinite("inversion round trip".into()));
    }
    Ok(worst)
}

/// Limit value with trace, re-exported here because trajectory utilities
/// and inversion verifications lean on it.
pub use crate::sewing::SewTrace;

/// Convenience: sewn endpoint value of a family.
pub fn sewn_value(
    phi: &FlowFamily,
    s: f64,
    t: f64,
    a: &DVector<f64>,
    level: usize,
) -> Result<DVector<f64>> {
    Ok(sew(phi, s, t, a, level, 0.0)?.value)
}
