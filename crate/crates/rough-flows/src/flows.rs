//! Two-time families of maps, iterated products over partitions, and the
//! sampled estimators for the structural bounds: composition defect,
//! sewing gap, uniform Lipschitz constants, flow property and the
//! remainder-scaled distance that decides whether two families sit at
//! finite distance from each other.
//!
//! All estimators report sampled lower bounds for suprema together with the
//! witness sample that attained them.

use std::sync::Arc;

use nalgebra::DVector;
use serde::Serialize;

use crate::driver::{Control, Remainder};
use crate::error::{Error, Result};
use crate::exec;
use crate::sampling;

/// Time orientation of a family: forward maps run `s -> t` with `s <= t`,
/// reverse families swap the roles of the two times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Orientation {
    Forward,
    Reverse,
}

type FlowEval = Arc<dyn Fn(f64, f64, &DVector<f64>) -> DVector<f64> + Send + Sync>;

/// A two-time family `(s, t, a) -> phi_{t,s}(a)` on `[0, horizon]`.
///
/// Evaluation must be pure; `eval(t, t, a)` must return `a` unchanged.
#[derive(Clone)]
pub struct FlowFamily {
    name: String,
    horizon: f64,
    orientation: Orientation,
    eval: FlowEval,
}

impl FlowFamily {
    pub fn new(
        name: impl Into<String>,
        horizon: f64,
        eval: impl Fn(f64, f64, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            horizon,
            orientation: Orientation::Forward,
            eval: Arc::new(eval),
        }
    }

    pub fn with_orientation(mut self, orientation: Orientation) -> Self {
        self.orientation = orientation;
        self
    }

    /// The identity family.
    pub fn identity(horizon: f64) -> Self {
        Self::new("identity", horizon, |_s, _t, a| a.clone())
    }

    /// Value of the map from time `s` to time `t` at `a`.
    pub fn eval(&self, s: f64, t: f64, a: &DVector<f64>) -> DVector<f64> {
        (self.eval)(s, t, a)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    /// Pointwise sum with a correction term, keeping the metadata.
    pub fn plus(&self, name: impl Into<String>, term: FlowEval) -> Self {
        let base = self.eval.clone();
        Self {
            name: name.into(),
            horizon: self.horizon,
            orientation: self.orientation,
            eval: Arc::new(move |s, t, a| base(s, t, a) + term(s, t, a)),
        }
    }

    /// Pointwise difference of two families as a raw evaluation closure.
    pub fn difference(&self, other: &Self) -> FlowEval {
        let lhs = self.eval.clone();
        let rhs = other.eval.clone();
        Arc::new(move |s, t, a| lhs(s, t, a) - rhs(s, t, a))
    }
}

/// Sorted times `t_0 = 0 < ... < t_n = horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    times: Vec<f64>,
}

impl Partition {
    /// Uniform dyadic partition with `2^level` intervals.
    pub fn dyadic(horizon: f64, level: usize) -> Self {
        let n = 1usize << level;
        let times = (0..=n).map(|k| horizon * k as f64 / n as f64).collect();
        Self { times }
    }

    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::Invalid("partition needs at least 2 times".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invalid("partition times must strictly increase".into()));
        }
        if times[0] != 0.0 {
            return Err(Error::Invalid("partition must start at 0".into()));
        }
        Ok(Self { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Largest gap between consecutive times.
    pub fn mesh(&self) -> f64 {
        self.times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    pub fn intervals(&self) -> usize {
        self.times.len() - 1
    }
}

/// Iterated product of `phi` along the partition points inside `[s, t]`:
/// step from `s` to the first point, across the points, then to `t`.
/// Without any partition point in `[s, t]` this is the single step.
pub fn iterated_product(
    phi: &FlowFamily,
    pi: &Partition,
    s: f64,
    t: f64,
    a: &DVector<f64>,
) -> DVector<f64> {
    if t <= s {
        return phi.eval(s, t, a);
    }
    let times = pi.times();
    let first = times.partition_point(|&x| x < s);
    let last = times.partition_point(|&x| x <= t);
    if first >= last {
        return phi.eval(s, t, a);
    }
    let inner = &times[first..last];
    let mut y = phi.eval(s, inner[0], a);
    for w in inner.windows(2) {
        y = phi.eval(w[0], w[1], &y);
    }
    phi.eval(*inner.last().unwrap(), t, &y)
}

/// Sampled supremum with the sample that attained it.
#[derive(Debug, Clone, Serialize)]
pub struct DefectReport {
    /// The estimated constant (a sampled lower bound for the supremum).
    pub value: f64,
    /// Times of the witness sample.
    pub witness_times: Vec<f64>,
    /// Probe point of the witness sample.
    pub witness_point: Vec<f64>,
    /// Short description of the sample family.
    pub samples: String,
    /// Seed used to draw probe points, when any randomness was involved.
    pub seed: Option<u64>,
    /// Structural bound to compare against, when one is available.
    pub bound: Option<f64>,
}

impl DefectReport {
    fn from_samples(
        values: Vec<f64>,
        witness: impl Fn(usize) -> (Vec<f64>, Vec<f64>),
        samples: String,
    ) -> Result<Self> {
        let idx = exec::argmax(&values)
            .ok_or_else(|| Error::Invalid("empty sample set".into()))?;
        if !values[idx].is_finite() {
            return Err(Error::NonFinite(format!("defect estimate in {samples}")));
        }
        let (witness_times, witness_point) = witness(idx);
        Ok(Self {
            value: values[idx],
            witness_times,
            witness_point,
            samples,
            seed: None,
            bound: None,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound = Some(bound);
        self
    }
}

/// Estimate of the composition-defect constant: the supremum over sampled
/// triples `r <= s <= t` and points `a` of
/// `|phi_{t,s}(phi_{s,r}(a)) - phi_{t,r}(a)| / m(w(r, t))`.
pub fn almost_flow_defect(
    phi: &FlowFamily,
    grid: &[f64],
    points: &[DVector<f64>],
    rem: &Remainder,
    ctrl: &Control,
) -> Result<DefectReport> {
    if grid.len() < 3 {
        return Err(Error::Invalid("grid needs at least 3 times".into()));
    }
    let triples: Vec<(f64, f64, f64)> = sampling::grid_triples(grid)
        .into_iter()
        .filter(|&(r, _, t)| t > r)
        .collect();
    let n = triples.len() * points.len();
    let vals = exec::map_indices(n, |idx| {
        let (r, s, t) = triples[idx / points.len()];
        let a = &points[idx % points.len()];
        let two_step = phi.eval(s, t, &phi.eval(r, s, a));
        let one_step = phi.eval(r, t, a);
        (two_step - one_step).norm() / rem.eval(ctrl.eval(r, t))
    });
    DefectReport::from_samples(
        vals,
        |idx| {
            let (r, s, t) = triples[idx / points.len()];
            (vec![r, s, t], points[idx % points.len()].iter().copied().collect())
        },
        format!("{} triples x {} points", triples.len(), points.len()),
    )
}

/// Structural bound for the sewing constant, `2M / (1 - (1 + d) k - d)`;
/// fails when the horizon is too large for the contraction to close.
pub fn sewing_l_bound(m: f64, kappa: f64, delta_t: f64) -> Result<f64> {
    let denom = 1.0 - (1.0 + delta_t) * kappa - delta_t;
    if denom <= 0.0 {
        return Err(Error::Horizon(format!(
            "1 - (1 + {delta_t}) {kappa} - {delta_t} = {denom} <= 0"
        )));
    }
    Ok(2.0 * m / denom)
}

/// Estimate of the gap between the iterated product and the one-step
/// family, scaled by the remainder: `|phi^pi_{t,s}(a) - phi_{t,s}(a)| / m(w)`.
pub fn sewing_gap(
    phi: &FlowFamily,
    pi: &Partition,
    pairs: &[(f64, f64)],
    points: &[DVector<f64>],
    rem: &Remainder,
    ctrl: &Control,
) -> Result<DefectReport> {
    let n = pairs.len() * points.len();
    let vals = exec::map_indices(n, |idx| {
        let (s, t) = pairs[idx / points.len()];
        if t <= s {
            return 0.0;
        }
        let a = &points[idx % points.len()];
        let gap = (iterated_product(phi, pi, s, t, a) - phi.eval(s, t, a)).norm();
        gap / rem.eval(ctrl.eval(s, t))
    });
    DefectReport::from_samples(
        vals,
        |idx| {
            let (s, t) = pairs[idx / points.len()];
            (vec![s, t], points[idx % points.len()].iter().copied().collect())
        },
        format!("{} pairs x {} points", pairs.len(), points.len()),
    )
}

/// Largest Lipschitz quotient of the iterated products over sampled time
/// pairs and point pairs; the uniform-Lipschitz condition asks this to stay
/// within `1 + delta_T` whatever the partition.
pub fn ul_lipschitz_estimate(
    phi: &FlowFamily,
    pi: &Partition,
    pairs: &[(f64, f64)],
    point_pairs: &[(DVector<f64>, DVector<f64>)],
) -> Result<DefectReport> {
    let n = pairs.len() * point_pairs.len();
    let vals = exec::map_indices(n, |idx| {
        let (s, t) = pairs[idx / point_pairs.len()];
        let (a, b) = &point_pairs[idx % point_pairs.len()];
        let gap = (a - b).norm();
        if gap < 1e-14 {
            return 0.0;
        }
        let ya = iterated_product(phi, pi, s, t, a);
        let yb = iterated_product(phi, pi, s, t, b);
        (ya - yb).norm() / gap
    });
    DefectReport::from_samples(
        vals,
        |idx| {
            let (s, t) = pairs[idx / point_pairs.len()];
            let (a, _) = &point_pairs[idx % point_pairs.len()];
            (vec![s, t], a.iter().copied().collect())
        },
        format!("{} pairs x {} point pairs", pairs.len(), point_pairs.len()),
    )
}

/// Unscaled composition defect `|psi_{t,s}(psi_{s,r}(a)) - psi_{t,r}(a)|`;
/// vanishes exactly for genuine flows.
pub fn flow_property_defect(
    psi: &FlowFamily,
    triples: &[(f64, f64, f64)],
    points: &[DVector<f64>],
) -> Result<DefectReport> {
    let n = triples.len() * points.len();
    let vals = exec::map_indices(n, |idx| {
        let (r, s, t) = triples[idx / points.len()];
        let a = &points[idx % points.len()];
        (psi.eval(s, t, &psi.eval(r, s, a)) - psi.eval(r, t, a)).norm()
    });
    DefectReport::from_samples(
        vals,
        |idx| {
            let (r, s, t) = triples[idx / points.len()];
            (vec![r, s, t], points[idx % points.len()].iter().copied().collect())
        },
        format!("{} triples x {} points", triples.len(), points.len()),
    )
}

/// Remainder-scaled distance between two families:
/// `sup |phi_{t,s}(a) - psi_{t,s}(a)| / m(w(s, t))`.
///
/// Finite and stable under grid refinement means the two families lie at
/// finite distance; blow-up under refinement separates them.
pub fn galaxy_distance(
    phi: &FlowFamily,
    psi: &FlowFamily,
    pairs: &[(f64, f64)],
    points: &[DVector<f64>],
    rem: &Remainder,
    ctrl: &Control,
) -> Result<DefectReport> {
    let n = pairs.len() * points.len();
    let vals = exec::map_indices(n, |idx| {
        let (s, t) = pairs[idx / points.len()];
        if t <= s {
            return 0.0;
        }
        let a = &points[idx % points.len()];
        (phi.eval(s, t, a) - psi.eval(s, t, a)).norm() / rem.eval(ctrl.eval(s, t))
    });
    DefectReport::from_samples(
        vals,
        |idx| {
            let (s, t) = pairs[idx / points.len()];
            (vec![s, t], points[idx % points.len()].iter().copied().collect())
        },
        format!("{} pairs x {} points", pairs.len(), points.len()),
    )
}

/// Lipschitz constant of the gap `phi^pi - phi`, scaled by the remainder.
pub fn lipschitz_gap_estimate(
    phi: &FlowFamily,
    pi: &Partition,
    pairs: &[(f64, f64)],
    point_pairs: &[(DVector<f64>, DVector<f64>)],
    rem: &Remainder,
    ctrl: &Control,
) -> Result<DefectReport> {
    let n = pairs.len() * point_pairs.len();
    let vals = exec::map_indices(n, |idx| {
        let (s, t) = pairs[idx / point_pairs.len()];
        if t <= s {
            return 0.0;
        }
        let (a, b) = &point_pairs[idx % point_pairs.len()];
        let gap = (a - b).norm();
        if gap < 1e-14 {
            return 0.0;
        }
        let da = iterated_product(phi, pi, s, t, a) - phi.eval(s, t, a);
        let db = iterated_product(phi, pi, s, t, b) - phi.eval(s, t, b);
        (da - db).norm() / (gap * rem.eval(ctrl.eval(s, t)))
    });
    DefectReport::from_samples(
        vals,
        |idx| {
            let (s, t) = pairs[idx / point_pairs.len()];
            let (a, _) = &point_pairs[idx % point_pairs.len()];
            (vec![s, t], a.iter().copied().collect())
        },
        format!("{} pairs x {} point pairs", pairs.len(), point_pairs.len()),
    )
}

/// Distance estimates across a range of refinement levels, with the relative
/// drift between successive levels. Small drift with finite values reads as
/// "same galaxy"; growth reads as separation.
#[derive(Debug, Clone, Serialize)]
pub struct GalaxyStability {
    pub estimates: Vec<f64>,
    pub max_drift: f64,
    pub same_galaxy: bool,
}

/// Run [`galaxy_distance`] on dyadic-gap pairs of refining grids and track
/// the drift of the estimate.
pub fn galaxy_stability(
    phi: &FlowFamily,
    psi: &FlowFamily,
    levels: std::ops::RangeInclusive<usize>,
    points: &[DVector<f64>],
    rem: &Remainder,
    ctrl: &Control,
    drift_tol: f64,
) -> Result<GalaxyStability> {
    let mut estimates = Vec::new();
    for level in levels {
        let grid = sampling::uniform_grid(phi.horizon(), 1 << level);
        let pairs = sampling::grid_pairs_dyadic(&grid);
        estimates.push(galaxy_distance(phi, psi, &pairs, points, rem, ctrl)?.value);
    }
    let mut max_drift: f64 = 0.0;
    for w in estimates.windows(2) {
        if w[0] > 0.0 {
            max_drift = max_drift.max((w[1] - w[0]).abs() / w[0]);
        } else if w[1] > 0.0 {
            max_drift = f64::INFINITY;
        }
    }
    let finite = estimates.iter().all(|e| e.is_finite());
    Ok(GalaxyStability {
        same_galaxy: finite && max_drift <= drift_tol,
        estimates,
        max_drift,
    })
}
