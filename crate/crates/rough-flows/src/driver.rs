//! Controls, remainders and rough drivers.
//!
//! A driver maps a time pair `(s, t)` to a depth-2 (optionally depth-3)
//! tensor series whose levels satisfy the multiplicative splitting identity
//! over intermediate times. Three constructions ship: lifts of smooth paths
//! through a dyadic signature cache, pure-area drivers, and piecewise linear
//! paths. The accompanying scale data is a superadditive control `w(s, t)`,
//! a power remainder `m(d) = d^theta` and the regularity pair `(p, gamma)`.

use std::sync::Arc;

use serde::Serialize;

use crate::algebra::{
    piecewise_linear_signature, segment_signature, tensor_product, weak_geometric_defect,
    TensorSeries,
};
use crate::error::{Error, Result};
use crate::exec;
use crate::sampling;

/// Superadditive interval mass, vanishing on the diagonal.
/// The shipped family is proportional to elapsed time.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Control {
    scale: f64,
}

/// Control `w(s, t) = c (t - s)` for a positive constant `c`.
pub fn make_holder_control(c: f64) -> Result<Control> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::Invalid(format!("control scale must be positive, got {c}")));
    }
    Ok(Control { scale: c })
}

impl Control {
    pub fn eval(&self, s: f64, t: f64) -> f64 {
        if t <= s {
            0.0
        } else {
            self.scale * (t - s)
        }
    }

    /// Largest positive violation of superadditivity over seeded triples;
    /// nonpositive means no violation was found.
    pub fn superadditivity_defect(&self, horizon: f64, samples: usize, seed: u64) -> f64 {
        sampling::random_triples(horizon, samples, seed)
            .into_iter()
            .map(|(r, s, t)| self.eval(r, s) + self.eval(s, t) - self.eval(r, t))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Power remainder `m(d) = d^theta`, `theta > 1`, with halving contraction
/// factor `kappa = 2^(1-theta)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Remainder {
    theta: f64,
}

impl Remainder {
    pub fn power(theta: f64) -> Result<Self> {
        if !(theta > 1.0) || !theta.is_finite() {
            return Err(Error::Invalid(format!("remainder exponent must exceed 1, got {theta}")));
        }
        Ok(Self { theta })
    }

    pub fn eval(&self, delta: f64) -> f64 {
        if delta <= 0.0 {
            0.0
        } else {
            delta.powf(self.theta)
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Halving contraction constant `2 m(d/2) / m(d)`.
    pub fn kappa(&self) -> f64 {
        2.0_f64.powf(1.0 - self.theta)
    }
}

/// Regularity and scale data shared by drivers and the sewing engine:
/// `p` in `[2, 3)`, excess `gamma` in `(0, 1]`, horizon `T`, and the
/// concrete small-horizon function `delta_T = c T^(gamma/p)`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SewingParameters {
    pub p: f64,
    pub gamma: f64,
    pub horizon: f64,
    /// Coefficient of the concrete `delta_T`; a declared tunable.
    pub delta_coeff: f64,
}

impl SewingParameters {
    pub fn new(p: f64, gamma: f64, horizon: f64) -> Result<Self> {
        if !(2.0..3.0).contains(&p) {
            return Err(Error::Invalid(format!("p must lie in [2, 3), got {p}")));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::Invalid(format!("gamma must lie in (0, 1], got {gamma}")));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::Invalid(format!("horizon must be positive, got {horizon}")));
        }
        let theta = (2.0 + gamma) / p;
        if theta <= 1.0 {
            return Err(Error::Invalid(format!(
                "(2 + gamma)/p = {theta} must exceed 1"
            )));
        }
        Ok(Self {
            p,
            gamma,
            horizon,
            delta_coeff: 0.25,
        })
    }

    pub fn with_delta_coeff(mut self, c: f64) -> Self {
        self.delta_coeff = c;
        self
    }

    /// Remainder exponent `(2 + gamma) / p`.
    pub fn theta(&self) -> f64 {
        (2.0 + self.gamma) / self.p
    }

    pub fn remainder(&self) -> Remainder {
        Remainder::power(self.theta()).expect("validated at construction")
    }

    /// Concrete small-horizon bound `c T^(gamma/p)`, decreasing to zero with `T`.
    pub fn delta_t(&self) -> f64 {
        self.delta_coeff * self.horizon.powf(self.gamma / self.p)
    }

    /// Modulus for the Hoelder term of the space regularity bound, chosen so
    /// that `eta(w) m(w)^gamma <= delta_T m(w)` holds with equality.
    pub fn eta(&self, w: f64) -> f64 {
        self.delta_t() * self.remainder().eval(w).powf(1.0 - self.gamma)
    }
}

type PathFn = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

/// Smooth path sampled on a dyadic grid; coarse signatures are assembled
/// from cached per-cell signatures so the splitting identity holds to
/// rounding over arbitrary time triples.
struct DyadicLift {
    horizon: f64,
    cells: usize,
    samples: Vec<Vec<f64>>,
    /// `tree[j][m]` is the signature over cells `[m 2^j, (m+1) 2^j)`.
    tree: Vec<Vec<TensorSeries>>,
}

impl DyadicLift {
    fn build(path: &PathFn, dim: usize, horizon: f64, cells: usize, depth: usize) -> Result<Self> {
        let samples: Vec<Vec<f64>> = (0..=cells)
            .map(|m| path(horizon * m as f64 / cells as f64))
            .collect();
        if samples.iter().any(|p| p.len() != dim) {
            return Err(Error::Structure("path output dimension mismatch".into()));
        }
        if samples.iter().any(|p| p.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFinite("path sample".into()));
        }
        let leaves: Vec<TensorSeries> = exec::map_indices(cells, |m| {
            let inc: Vec<f64> = samples[m + 1]
                .iter()
                .zip(samples[m].iter())
                .map(|(b, a)| b - a)
                .collect();
            segment_signature(&inc, depth).expect("depth >= 1")
        });
        let mut tree = vec![leaves];
        while tree.last().unwrap().len() > 1 {
            let prev = tree.last().unwrap();
            let next: Vec<TensorSeries> = exec::map_indices(prev.len() / 2, |m| {
                tensor_product(&prev[2 * m], &prev[2 * m + 1]).expect("same shape")
            });
            tree.push(next);
        }
        Ok(Self {
            horizon,
            cells,
            samples,
            tree,
        })
    }

    fn point(&self, t: f64) -> Vec<f64> {
        let h = self.horizon / self.cells as f64;
        let pos = (t / h).clamp(0.0, self.cells as f64);
        let m = (pos.floor() as usize).min(self.cells - 1);
        let frac = pos - m as f64;
        self.samples[m]
            .iter()
            .zip(self.samples[m + 1].iter())
            .map(|(a, b)| a + frac * (b - a))
            .collect()
    }

    /// Product of the cached signatures over cells `[lo, hi)`, left to right.
    fn span(&self, lo: usize, hi: usize, depth: usize) -> TensorSeries {
        let dim = self.samples[0].len();
        let mut acc = TensorSeries::identity(dim, depth);
        let mut m = lo;
        while m < hi {
            // Largest aligned dyadic block starting at m that fits in [m, hi).
            let mut j = 0;
            while j + 1 < self.tree.len()
                && m % (1 << (j + 1)) == 0
                && m + (1 << (j + 1)) <= hi
            {
                j += 1;
            }
            let node = self.tree[j][m >> j].truncated(depth);
            acc = tensor_product(&acc, &node).expect("same shape");
            m += 1 << j;
        }
        acc
    }

    fn eval(&self, s: f64, t: f64, depth: usize) -> TensorSeries {
        let dim = self.samples[0].len();
        if t <= s {
            return TensorSeries::identity(dim, depth);
        }
        let h = self.horizon / self.cells as f64;
        let cs = ((s / h).floor() as usize).min(self.cells - 1);
        let ct = ((t / h).floor() as usize).min(self.cells - 1);
        let ps = self.point(s);
        let pt = self.point(t);
        if cs == ct {
            let inc: Vec<f64> = pt.iter().zip(ps.iter()).map(|(b, a)| b - a).collect();
            return segment_signature(&inc, depth).expect("depth >= 1");
        }
        let left_end = &self.samples[cs + 1];
        let left_inc: Vec<f64> = left_end.iter().zip(ps.iter()).map(|(b, a)| b - a).collect();
        let right_start = &self.samples[ct];
        let right_inc: Vec<f64> = pt.iter().zip(right_start.iter()).map(|(b, a)| b - a).collect();
        let mut acc = segment_signature(&left_inc, depth).expect("depth >= 1");
        acc = tensor_product(&acc, &self.span(cs + 1, ct, depth)).expect("same shape");
        tensor_product(&acc, &segment_signature(&right_inc, depth).expect("depth >= 1"))
            .expect("same shape")
    }
}

enum DriverKind {
    PureArea { area: Vec<f64> },
    Dyadic(DyadicLift),
    Polyline { times: Vec<f64>, points: Vec<Vec<f64>> },
}

struct DriverInner {
    dim: usize,
    params: SewingParameters,
    control: Control,
    kind: DriverKind,
    name: String,
}

/// A two-parameter family of truncated group elements with its scale data.
/// Cheap to clone; evaluation is read-only after construction.
#[derive(Clone)]
pub struct RoughDriver {
    inner: Arc<DriverInner>,
}

impl RoughDriver {
    pub fn dim(&self) -> usize {
        self.inner.dim
    }

    pub fn params(&self) -> &SewingParameters {
        &self.inner.params
    }

    pub fn control(&self) -> Control {
        self.inner.control
    }

    pub fn name(&self) -> &str {
        &self.inner.name
    }

    pub fn horizon(&self) -> f64 {
        self.inner.params.horizon
    }

    /// Deepest level this driver can produce.
    pub fn max_depth(&self) -> usize {
        match &self.inner.kind {
            DriverKind::PureArea { .. } => 2,
            _ => 3,
        }
    }

    /// Depth-2 increment over `[s, t]`.
    pub fn eval(&self, s: f64, t: f64) -> TensorSeries {
        self.eval_depth(s, t, 2).expect("depth 2 always available")
    }

    /// Increment over `[s, t]` up to `depth` levels.
    pub fn eval_depth(&self, s: f64, t: f64, depth: usize) -> Result<TensorSeries> {
        if depth < 1 || depth > 3 {
            return Err(Error::Invalid(format!("depth must be 1..=3, got {depth}")));
        }
        if depth > self.max_depth() {
            return Err(Error::Capability(format!(
                "driver '{}' carries {} levels, {} requested",
                self.inner.name,
                self.max_depth(),
                depth
            )));
        }
        Ok(match &self.inner.kind {
            DriverKind::PureArea { area } => {
                let l = self.inner.dim;
                let mut x = TensorSeries::identity(l, depth);
                if depth >= 2 && t > s {
                    let dt = t - s;
                    let block = x.level_mut(2);
                    for (k, &a) in area.iter().enumerate() {
                        block[k] = dt * a;
                    }
                }
                x
            }
            DriverKind::Dyadic(lift) => lift.eval(s, t, depth),
            DriverKind::Polyline { times, points } => {
                polyline_eval(times, points, s, t, depth)
            }
        })
    }
}

fn polyline_eval(times: &[f64], points: &[Vec<f64>], s: f64, t: f64, depth: usize) -> TensorSeries {
    let dim = points[0].len();
    if t <= s {
        return TensorSeries::identity(dim, depth);
    }
    let interp = |tau: f64| -> Vec<f64> {
        let tau = tau.clamp(times[0], *times.last().unwrap());
        let seg = match times.binary_search_by(|x| x.partial_cmp(&tau).unwrap()) {
            Ok(i) => i.min(times.len() - 2),
            Err(i) => i.saturating_sub(1).min(times.len() - 2),
        };
        let w = (tau - times[seg]) / (times[seg + 1] - times[seg]);
        points[seg]
            .iter()
            .zip(points[seg + 1].iter())
            .map(|(a, b)| a + w * (b - a))
            .collect()
    };
    let mut verts = vec![interp(s)];
    for (i, &tau) in times.iter().enumerate() {
        if tau > s && tau < t {
            verts.push(points[i].clone());
        }
    }
    verts.push(interp(t));
    if verts.len() == 1 {
        verts.push(verts[0].clone());
    }
    piecewise_linear_signature(&verts, depth).expect("two or more vertices")
}

/// Lift of a smooth (piecewise C^1) path: level 1 is the increment, higher
/// levels are assembled from signatures of the path's interpolant on a
/// dyadic base grid with `substeps_per_unit` cells per unit time.
pub fn lift_smooth(
    path: impl Fn(f64) -> Vec<f64> + Send + Sync + 'static,
    dim: usize,
    substeps_per_unit: usize,
    params: SewingParameters,
    control: Control,
) -> Result<RoughDriver> {
    if substeps_per_unit < 1 {
        return Err(Error::Invalid("substeps_per_unit must be >= 1".into()));
    }
    let wanted = ((substeps_per_unit as f64) * params.horizon).ceil().max(1.0) as usize;
    let cells = wanted.next_power_of_two();
    let path: PathFn = Arc::new(path);
    let lift = DyadicLift::build(&path, dim, params.horizon, cells, 3)?;
    Ok(RoughDriver {
        inner: Arc::new(DriverInner {
            dim,
            params,
            control,
            kind: DriverKind::Dyadic(lift),
            name: "smooth".into(),
        }),
    })
}

/// Driver with vanishing increments and level 2 proportional to elapsed
/// time: `x2(s, t) = (t - s) A` for an antisymmetric matrix `A` (row-major).
pub fn pure_area_driver(
    area: &[Vec<f64>],
    params: SewingParameters,
    control: Control,
) -> Result<RoughDriver> {
    let l = area.len();
    if l == 0 || area.iter().any(|row| row.len() != l) {
        return Err(Error::Structure("area matrix must be square".into()));
    }
    for i in 0..l {
        for j in 0..l {
            if (area[i][j] + area[j][i]).abs() > 1e-12 {
                return Err(Error::Invalid(format!(
                    "area matrix not antisymmetric at ({i}, {j})"
                )));
            }
        }
    }
    let flat: Vec<f64> = area.iter().flat_map(|r| r.iter().copied()).collect();
    Ok(RoughDriver {
        inner: Arc::new(DriverInner {
            dim: l,
            params,
            control,
            kind: DriverKind::PureArea { area: flat },
            name: "pure_area".into(),
        }),
    })
}

/// Exact driver of the polyline through `points`, vertices equally spaced
/// in time over the horizon.
pub fn piecewise_linear_driver(
    points: Vec<Vec<f64>>,
    params: SewingParameters,
    control: Control,
) -> Result<RoughDriver> {
    if points.len() < 2 {
        return Err(Error::Invalid("need at least 2 vertices".into()));
    }
    let dim = points[0].len();
    if dim == 0 || points.iter().any(|p| p.len() != dim) {
        return Err(Error::Structure("vertices of mixed dimension".into()));
    }
    let n = points.len() - 1;
    let times: Vec<f64> = (0..=n)
        .map(|k| params.horizon * k as f64 / n as f64)
        .collect();
    Ok(RoughDriver {
        inner: Arc::new(DriverInner {
            dim,
            params,
            control,
            kind: DriverKind::Polyline { times, points },
            name: "piecewise_linear".into(),
        }),
    })
}

/// Supremum of `|x^(k)(s, t)| / w(s, t)^(k/p)` over grid pairs and levels,
/// with the max-abs coordinate norm per level. A sampled lower bound for the
/// homogeneous driver norm.
pub fn p_norm_estimate(d: &RoughDriver, grid: &[f64]) -> Result<f64> {
    if grid.len() < 2 {
        return Err(Error::Invalid("grid needs at least 2 points".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Invalid("grid must be strictly increasing".into()));
    }
    let p = d.params().p;
    let ctrl = d.control();
    let pairs = sampling::grid_pairs(grid);
    let vals = exec::map_indices(pairs.len(), |idx| {
        let (s, t) = pairs[idx];
        let w = ctrl.eval(s, t);
        if w <= 0.0 {
            return 0.0;
        }
        let x = d.eval(s, t);
        let mut best: f64 = 0.0;
        for k in 1..=2 {
            best = best.max(x.level_max_abs(k) / w.powf(k as f64 / p));
        }
        best
    });
    Ok(vals.into_iter().fold(0.0, f64::max))
}

/// Outcome of a splitting-identity check over a family of time triples.
#[derive(Debug, Clone, Serialize)]
pub struct ChenReport {
    pub max_defect: f64,
    pub worst_triple: (f64, f64, f64),
    pub tol: f64,
    pub pass: bool,
}

/// Largest coordinate defect of `x(r,s) x(s,t) - x(r,t)` over grid triples.
pub fn check_chen(d: &RoughDriver, grid: &[f64], tol: f64) -> Result<ChenReport> {
    let triples = sampling::grid_triples(grid);
    let vals = exec::map_indices(triples.len(), |idx| {
        let (r, s, t) = triples[idx];
        let prod = tensor_product(&d.eval(r, s), &d.eval(s, t)).expect("same shape");
        prod.distance(&d.eval(r, t))
    });
    let worst = exec::argmax(&vals).ok_or_else(|| Error::Invalid("empty grid".into()))?;
    Ok(ChenReport {
        max_defect: vals[worst],
        worst_triple: triples[worst],
        tol,
        pass: vals[worst] <= tol,
    })
}

/// Largest weak-geometric defect of the driver increments over grid pairs.
pub fn check_weak_geometric(d: &RoughDriver, grid: &[f64]) -> f64 {
    let pairs = sampling::grid_pairs(grid);
    let vals = exec::map_indices(pairs.len(), |idx| {
        let (s, t) = pairs[idx];
        weak_geometric_defect(&d.eval(s, t))
    });
    vals.into_iter().fold(0.0, f64::max)
}
