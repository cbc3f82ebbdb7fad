//! Shared fixtures and independent oracles for the integration tests.
//!
//! Everything here recomputes expected values through a route that does not
//! touch the code path under test: enumeration over segment tuples for
//! signatures, truncated series for matrix exponentials, and a dense
//! one-step integrator along explicit polylines for driven ODEs.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rough_flows::{
    lift_smooth, linear_field, make_holder_control, pure_area_driver, FlowFamily, RoughDriver,
    SewingParameters, TensorSeries, VectorFieldFamily,
};

/// Matrix exponential by scaling and squaring of a truncated series.
pub fn mat_exp(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let norm = m.amax();
    let scale_pow = if norm > 0.25 {
        (norm / 0.25).log2().ceil() as i32
    } else {
        0
    };
    let scaled = m / 2f64.powi(scale_pow);
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut acc = DMatrix::<f64>::identity(n, n);
    for k in 1..=24 {
        term = &term * &scaled / k as f64;
        acc += &term;
    }
    for _ in 0..scale_pow {
        acc = &acc * &acc;
    }
    acc
}

/// Exact flow of the linear ODE `dy = L y d(t)`: `(s, t, a) -> exp((t-s) L) a`.
pub fn exp_flow(generator: &DMatrix<f64>, horizon: f64) -> FlowFamily {
    let lam = generator.clone();
    FlowFamily::new("exp_flow", horizon, move |s, t, a| {
        if t <= s {
            return a.clone();
        }
        mat_exp(&(&lam * (t - s))) * a
    })
}

/// Random matrix rescaled to a prescribed Frobenius norm.
pub fn random_matrix(rng: &mut ChaCha8Rng, dim: usize, fro_norm: f64) -> DMatrix<f64> {
    let mut m = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
    let norm = m.norm();
    if norm > 0.0 {
        m *= fro_norm / norm;
    }
    m
}

/// Rotation-area driver with two random linear fields, scaled small enough
/// that desk-level refinement reaches tight tolerances.
pub struct PureAreaFixture {
    pub driver: RoughDriver,
    pub field: VectorFieldFamily,
    pub b1: DMatrix<f64>,
    pub b2: DMatrix<f64>,
    /// Generator of the limit flow: `B2 B1 - B1 B2`.
    pub bracket: DMatrix<f64>,
}

pub fn pure_area_fixture(seed: u64, field_norm: f64) -> PureAreaFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b1 = random_matrix(&mut rng, 2, field_norm);
    let b2 = random_matrix(&mut rng, 2, field_norm);
    let bracket = &b2 * &b1 - &b1 * &b2;
    let params = SewingParameters::new(2.0, 1.0, 1.0).unwrap();
    let ctrl = make_holder_control(1.0).unwrap();
    let area = vec![vec![0.0, 1.0], vec![-1.0, 0.0]];
    PureAreaFixture {
        driver: pure_area_driver(&area, params, ctrl).unwrap(),
        field: linear_field(vec![b1.clone(), b2.clone()]).unwrap(),
        b1,
        b2,
        bracket,
    }
}

/// Vertices of the unit-speed circle `t -> (cos t, sin t)` sampled exactly
/// like the dyadic lift does on `[0, 1]`.
pub fn circle_vertices(cells: usize) -> Vec<Vec<f64>> {
    (0..=cells)
        .map(|m| {
            let t = 1.0 * m as f64 / cells as f64;
            vec![t.cos(), t.sin()]
        })
        .collect()
}

/// Dyadic lift of the circle over `[0, 1]`.
pub fn circle_driver(cells: usize, p: f64, gamma: f64) -> RoughDriver {
    let params = SewingParameters::new(p, gamma, 1.0).unwrap();
    lift_smooth(
        |t| vec![t.cos(), t.sin()],
        2,
        cells,
        params,
        make_holder_control(1.0).unwrap(),
    )
    .unwrap()
}

fn lerp(a: &[f64], b: &[f64], w: f64) -> Vec<f64> {
    a.iter().zip(b.iter()).map(|(x, y)| x + w * (y - x)).collect()
}

/// Restriction of an equally-spaced polyline on `[0, horizon]` to `[s, t]`.
pub fn sub_polyline(vertices: &[Vec<f64>], horizon: f64, s: f64, t: f64) -> Vec<Vec<f64>> {
    let n = vertices.len() - 1;
    let pos = |tau: f64| (tau / horizon * n as f64).clamp(0.0, n as f64);
    let interp = |tau: f64| {
        let x = pos(tau);
        let m = (x.floor() as usize).min(n - 1);
        lerp(&vertices[m], &vertices[m + 1], x - m as f64)
    };
    let mut out = vec![interp(s)];
    let first = pos(s).ceil() as usize;
    let last = pos(t).floor() as usize;
    for m in first..=last.min(n) {
        let tau = horizon * m as f64 / n as f64;
        if tau > s && tau < t {
            out.push(vertices[m].clone());
        }
    }
    out.push(interp(t));
    out
}

/// Reference solver: fourth-order one-step integration of `dy = f(y) dx`
/// along the segments of an explicit polyline.
pub fn ode_along_polyline(
    field: &VectorFieldFamily,
    vertices: &[Vec<f64>],
    substeps_per_segment: usize,
    a: &DVector<f64>,
) -> DVector<f64> {
    let mut y = a.clone();
    for pair in vertices.windows(2) {
        let delta: Vec<f64> = pair[1].iter().zip(pair[0].iter()).map(|(b, a)| b - a).collect();
        if delta.iter().all(|&d| d == 0.0) {
            continue;
        }
        let h = 1.0 / substeps_per_segment as f64;
        for _ in 0..substeps_per_segment {
            let drift = |state: &DVector<f64>| {
                let f = field.eval(state);
                let mut b = DVector::zeros(state.len());
                for (i, &w) in delta.iter().enumerate() {
                    b.axpy(w, &f.column(i).into_owned(), 1.0);
                }
                b
            };
            let k1 = drift(&y);
            let k2 = drift(&(&y + &k1 * (h / 2.0)));
            let k3 = drift(&(&y + &k2 * (h / 2.0)));
            let k4 = drift(&(&y + &k3 * h));
            y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
    }
    y
}

/// Signature of a polyline by explicit enumeration over ordered segment
/// tuples; exact for levels up to three. Independent of the algebra module.
pub fn polyline_signature_oracle(points: &[Vec<f64>], depth: usize) -> TensorSeries {
    let dim = points[0].len();
    let segs: Vec<Vec<f64>> = points
        .windows(2)
        .map(|w| w[1].iter().zip(w[0].iter()).map(|(b, a)| b - a).collect())
        .collect();
    let n = segs.len();
    let mut levels: Vec<Vec<f64>> = (0..=depth).map(|k| vec![0.0; dim.pow(k as u32)]).collect();
    levels[0][0] = 1.0;
    for i in 0..dim {
        levels[1][i] = segs.iter().map(|s| s[i]).sum();
    }
    if depth >= 2 {
        for i in 0..dim {
            for j in 0..dim {
                let mut acc = 0.0;
                for m in 0..n {
                    for q in (m + 1)..n {
                        acc += segs[m][i] * segs[q][j];
                    }
                    acc += 0.5 * segs[m][i] * segs[m][j];
                }
                levels[2][i * dim + j] = acc;
            }
        }
    }
    if depth >= 3 {
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    let mut acc = 0.0;
                    for m in 0..n {
                        for q in (m + 1)..n {
                            for r in (q + 1)..n {
                                acc += segs[m][i] * segs[q][j] * segs[r][k];
                            }
                            // two touching the same earlier or later segment
                            acc += 0.5 * segs[m][i] * segs[m][j] * segs[q][k];
                            acc += 0.5 * segs[m][i] * segs[q][j] * segs[q][k];
                        }
                        acc += segs[m][i] * segs[m][j] * segs[m][k] / 6.0;
                    }
                    levels[3][(i * dim + j) * dim + k] = acc;
                }
            }
        }
    }
    TensorSeries::from_levels(dim, levels).unwrap()
}

/// Log-log least-squares slope through `(scale, value)` samples.
pub fn fit_slope(samples: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|(_, e)| *e > 0.0 && e.is_finite())
        .map(|(h, e)| (h.ln(), e.ln()))
        .collect();
    let n = pts.len() as f64;
    assert!(n >= 2.0, "too few usable samples for a fit");
    let sx: f64 = pts.iter().map(|(x, _)| x).sum();
    let sy: f64 = pts.iter().map(|(_, y)| y).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = pts.iter().map(|(x, y)| x * y).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Seeded probe points in a centered cube.
pub fn probe_points(dim: usize, count: usize, half: f64, seed: u64) -> Vec<DVector<f64>> {
    rough_flows::sampling::SampleBox::centered(dim, half).sample(count, seed)
}
