//! Dyadic refinement to the limit flow, convergence-rate measurement, and
//! the constant calculators used by the recursion bound behind the sewing
//! estimates.

use std::io::Write;
use std::time::Instant;

use nalgebra::DVector;
use num_traits::Num;
use serde::Serialize;

use crate::driver::{Control, Remainder, SewingParameters};
use crate::error::{Error, Result};
use crate::exec;
use crate::flows::{iterated_product, FlowFamily, Partition};

/// One refinement level of a sewing run.
#[derive(Debug, Clone, Serialize)]
pub struct SewLevel {
    pub level: usize,
    pub mesh: f64,
    /// Sup-distance of the value at this level to the previous level.
    pub delta: Option<f64>,
}

/// Trace of the iterated products over refining dyadic partitions.
#[derive(Debug, Clone, Serialize)]
pub struct SewTrace {
    pub levels: Vec<SewLevel>,
    #[serde(skip)]
    pub value: DVector<f64>,
    pub converged: bool,
}

/// Iterate the family over dyadic partitions of the horizon until the
/// level-to-level difference drops below `tol` or `max_level` is reached.
/// Growing differences at the cap are a diagnostic failure, not a silent
/// return.
pub fn sew(
    phi: &FlowFamily,
    s: f64,
    t: f64,
    a: &DVector<f64>,
    max_level: usize,
    tol: f64,
) -> Result<SewTrace> {
    if max_level < 2 {
        return Err(Error::Invalid("max_level must be >= 2".into()));
    }
    let horizon = phi.horizon();
    let mut levels = Vec::new();
    let mut prev: Option<DVector<f64>> = None;
    let mut deltas: Vec<f64> = Vec::new();
    for level in 0..=max_level {
        let pi = Partition::dyadic(horizon, level);
        let value = iterated_product(phi, &pi, s, t, a);
        if value.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!(
                "iterated product at level {level} of '{}'",
                phi.name()
            )));
        }
        let delta = prev.as_ref().map(|p| (p - &value).norm());
        levels.push(SewLevel {
            level,
            mesh: pi.mesh(),
            delta,
        });
        if let Some(d) = delta {
            deltas.push(d);
            if d < tol {
                return Ok(SewTrace {
                    levels,
                    value,
                    converged: true,
                });
            }
        }
        prev = Some(value);
    }
    // Tolerance not reached: decreasing tails still count as (slow) Cauchy
    // behavior; growth is reported as failure.
    let tail_growing = deltas
        .iter()
        .rev()
        .take(3)
        .collect::<Vec<_>>()
        .windows(2)
        .any(|w| w[0] > w[1]);
    if tail_growing {
        return Err(Error::NonCauchy(format!(
            "level differences of '{}' grow near level {max_level}: {:?}",
            phi.name(),
            &deltas[deltas.len().saturating_sub(3)..]
        )));
    }
    Ok(SewTrace {
        levels,
        value: prev.expect("at least one level"),
        converged: false,
    })
}

/// Theoretical mesh exponent `(n + gamma)/p - 1` of a step-`n` expansion.
/// Nonpositive values are degenerate: the expansion order does not beat the
/// driver regularity.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TheoreticalRate {
    pub exponent: f64,
    pub degenerate: bool,
}

pub fn theoretical_rate(n: usize, gamma: f64, p: f64) -> TheoreticalRate {
    let exponent = (n as f64 + gamma) / p - 1.0;
    TheoreticalRate {
        exponent,
        degenerate: exponent <= 0.0,
    }
}

/// One refinement level of a convergence study.
#[derive(Debug, Clone, Serialize)]
pub struct LevelRecord {
    pub level: usize,
    pub mesh: f64,
    pub error: f64,
    pub runtime_ms: f64,
}

/// Per-level errors against a reference, the fitted mesh order, and the
/// theoretical exponent it is compared against.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub scheme: String,
    pub levels: Vec<LevelRecord>,
    /// Log-log least-squares slope over the usable levels.
    pub fitted_order: Option<f64>,
    pub theoretical: TheoreticalRate,
    /// Mesh-scale bound factor `sup m(w)/w * w(0,T) (1 + delta_T)` per level.
    pub rate_bound: Vec<f64>,
    pub probes: usize,
    pub seed: Option<u64>,
}

impl ConvergenceReport {
    /// CSV rows `level,mesh,error,runtime_ms`. With `zero_runtime` the
    /// volatile timing column is written as zero so identical runs produce
    /// identical bytes.
    pub fn write_csv(&self, out: &mut impl Write, zero_runtime: bool) -> Result<()> {
        writeln!(out, "level,mesh,error,runtime_ms")?;
        for rec in &self.levels {
            let rt = if zero_runtime { 0.0 } else { rec.runtime_ms };
            writeln!(out, "{},{:.17e},{:.17e},{}", rec.level, rec.mesh, rec.error, rt)?;
        }
        Ok(())
    }

    /// Same report with the timing column zeroed.
    pub fn without_runtimes(mut self) -> Self {
        for rec in &mut self.levels {
            rec.runtime_ms = 0.0;
        }
        self
    }
}

/// Ordinary least squares slope of `ln error` against `ln mesh`, using only
/// levels with errors in `(1e-11, inf)`; `None` below 3 usable levels.
fn fit_order(levels: &[LevelRecord]) -> Option<f64> {
    let usable: Vec<(f64, f64)> = levels
        .iter()
        .filter(|r| r.error > 1e-11 && r.error.is_finite())
        .map(|r| (r.mesh.ln(), r.error.ln()))
        .collect();
    if usable.len() < 3 {
        return None;
    }
    let n = usable.len() as f64;
    let sx: f64 = usable.iter().map(|(x, _)| x).sum();
    let sy: f64 = usable.iter().map(|(_, y)| y).sum();
    let sxx: f64 = usable.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = usable.iter().map(|(x, y)| x * y).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-30 {
        return None;
    }
    Some((n * sxy - sx * sy) / denom)
}

/// Measure sup errors of the iterated product at the horizon against a
/// reference map over a range of dyadic levels and fit the mesh order.
#[allow(clippy::too_many_arguments)]
pub fn convergence_study(
    phi: &FlowFamily,
    reference: &(dyn Fn(&DVector<f64>) -> DVector<f64> + Sync),
    probes: &[DVector<f64>],
    levels: std::ops::RangeInclusive<usize>,
    params: &SewingParameters,
    ctrl: &Control,
    theoretical: TheoreticalRate,
) -> Result<ConvergenceReport> {
    if probes.is_empty() {
        return Err(Error::Invalid("need at least one probe point".into()));
    }
    let horizon = phi.horizon();
    let level_list: Vec<usize> = levels.collect();
    if level_list.is_empty() {
        return Err(Error::Invalid("empty level range".into()));
    }
    let rem = params.remainder();
    let records: Vec<(LevelRecord, f64)> = exec::map_indices(level_list.len(), |li| {
        let level = level_list[li];
        let start = Instant::now();
        let pi = Partition::dyadic(horizon, level);
        let mut err: f64 = 0.0;
        for a in probes {
            let approx = iterated_product(phi, &pi, 0.0, horizon, a);
            err = err.max((approx - reference(a)).norm());
        }
        let mesh_mass = ctrl.eval(0.0, pi.mesh());
        let mu = rem.eval(mesh_mass) / mesh_mass;
        let bound = mu * ctrl.eval(0.0, horizon) * (1.0 + params.delta_t());
        (
            LevelRecord {
                level,
                mesh: pi.mesh(),
                error: err,
                runtime_ms: start.elapsed().as_secs_f64() * 1e3,
            },
            bound,
        )
    });
    let mut level_records = Vec::with_capacity(records.len());
    let mut rate_bound = Vec::with_capacity(records.len());
    for (rec, bound) in records {
        if !rec.error.is_finite() {
            return Err(Error::NonFinite(format!(
                "error at level {} of '{}'",
                rec.level,
                phi.name()
            )));
        }
        level_records.push(rec);
        rate_bound.push(bound);
    }
    let fitted_order = fit_order(&level_records);
    Ok(ConvergenceReport {
        scheme: phi.name().to_string(),
        levels: level_records,
        fitted_order,
        theoretical,
        rate_bound,
        probes: probes.len(),
        seed: None,
    })
}

/// Constant of the discrete recursion bound,
/// `A = (D (1 + a)^3 + B (2 + a)) / (1 - (k (1 + a)^2 + a))`,
/// defined only while `k (1 + a)^2 + a < 1`.
///
/// Generic over the scalar so rational inputs give exact rational output.
pub fn davie_constant_discrete<T>(d: T, b: T, alpha: T, kappa: T) -> Result<T>
where
    T: Num + PartialOrd + Clone,
{
    let one = T::one();
    let two = one.clone() + one.clone();
    let one_plus = one.clone() + alpha.clone();
    let contraction = kappa * one_plus.clone() * one_plus.clone() + alpha.clone();
    if contraction >= one {
        return Err(Error::Horizon(
            "k (1 + a)^2 + a >= 1: shrink the horizon".into(),
        ));
    }
    let numerator =
        d * one_plus.clone() * one_plus.clone() * one_plus + b * (two + alpha);
    Ok(numerator / (T::one() - contraction))
}

/// Constant of the continuous recursion bound,
/// `A = B (2 + a) / (1 - (k (1 + a)^2 + a))`.
pub fn davie_constant_continuous<T>(b: T, alpha: T, kappa: T) -> Result<T>
where
    T: Num + PartialOrd + Clone,
{
    davie_constant_discrete(T::zero(), b, alpha, kappa)
}

/// Outcome of checking a nonnegative two-index table against the recursion
/// bound conclusion.
#[derive(Debug, Clone, Serialize)]
pub struct RecursionCheck {
    pub ok: bool,
    pub constant: f64,
    pub worst_pair: (f64, f64),
    pub worst_ratio: f64,
}

/// Check a table `U` over pairs of partition times: preconditions are
/// `U(r, r) = 0` and the successive-pair bound `U <= D m(w)`; the
/// conclusion tested on every pair is `U(r, t) <= A m(w(r, t))` with `A`
/// from [`davie_constant_discrete`].
#[allow(clippy::too_many_arguments)]
pub fn davie_recursion_verify(
    times: &[f64],
    u: &dyn Fn(usize, usize) -> f64,
    d: f64,
    b: f64,
    alpha: f64,
    kappa: f64,
    rem: &Remainder,
    ctrl: &Control,
) -> Result<RecursionCheck> {
    if times.len() < 2 {
        return Err(Error::Invalid("need at least two times".into()));
    }
    for i in 0..times.len() {
        if u(i, i) != 0.0 {
            return Err(Error::Invalid(format!(
                "U must vanish on the diagonal, U({i}, {i}) = {}",
                u(i, i)
            )));
        }
    }
    for i in 0..times.len() - 1 {
        let bound = d * rem.eval(ctrl.eval(times[i], times[i + 1]));
        if u(i, i + 1) > bound * (1.0 + 1e-12) {
            return Err(Error::Invalid(format!(
                "successive-pair bound fails at ({}, {}): {} > {}",
                times[i],
                times[i + 1],
                u(i, i + 1),
                bound
            )));
        }
    }
    let a = davie_constant_discrete(d, b, alpha, kappa)?;
    let mut ok = true;
    let mut worst_ratio: f64 = 0.0;
    let mut worst_pair = (times[0], times[1]);
    for i in 0..times.len() {
        for j in (i + 1)..times.len() {
            let bound = a * rem.eval(ctrl.eval(times[i], times[j]));
            let ratio = if bound > 0.0 { u(i, j) / bound } else { f64::INFINITY };
            if ratio > worst_ratio {
                worst_ratio = ratio;
                worst_pair = (times[i], times[j]);
            }
            if u(i, j) > bound * (1.0 + 1e-12) {
                ok = false;
            }
        }
    }
    Ok(RecursionCheck {
        ok,
        constant: a,
        worst_pair,
        worst_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::make_holder_control;
    use num_rational::Ratio;

    #[test]
    fn rate_values() {
        let r = theoretical_rate(2, 1.0, 2.5);
        assert!((r.exponent - 0.2).abs() < 1e-15);
        assert!(!r.degenerate);
        let r = theoretical_rate(3, 1.0, 2.0);
        assert!((r.exponent - 1.0).abs() < 1e-15);
        let r = theoretical_rate(2, 1.0, 3.0);
        assert_eq!(r.exponent, 0.0);
        assert!(r.degenerate);
    }

    #[test]
    fn discrete_constant_values() {
        assert_eq!(davie_constant_discrete(1.0, 0.0, 0.0, 0.5).unwrap(), 2.0);
        assert_eq!(davie_constant_discrete(0.0, 1.0, 0.0, 0.5).unwrap(), 4.0);
        assert!(davie_constant_discrete(1.0, 1.0, 0.5, 0.5).is_err());
    }

    #[test]
    fn continuous_constant_values() {
        assert_eq!(davie_constant_continuous(1.0, 0.0, 0.5).unwrap(), 4.0);
        assert_eq!(davie_constant_continuous(0.0, 0.0, 0.5).unwrap(), 0.0);
        assert!(davie_constant_continuous(1.0, 1.0, 0.9).is_err());
    }

    #[test]
    fn constants_are_exact_over_the_rationals() {
        type Q = Ratio<i64>;
        let a = davie_constant_discrete(
            Q::new(1, 1),
            Q::new(0, 1),
            Q::new(1, 10),
            Q::new(1, 2),
        )
        .unwrap();
        // (1 * (11/10)^3) / (1 - (1/2 * (11/10)^2 + 1/10)) = (1331/1000) / (295/1000).
        assert_eq!(a, Q::new(1331, 295));
    }

    #[test]
    fn sew_of_an_exact_flow_converges_immediately() {
        let flow = FlowFamily::new("exp", 1.0, |s, t, a| a.map(|x| x * ((t - s) * 0.3).exp()));
        let a = DVector::from_vec(vec![1.0]);
        let trace = sew(&flow, 0.0, 1.0, &a, 6, 1e-12).unwrap();
        assert!(trace.converged);
        assert_eq!(trace.levels.len(), 2);
        assert!(trace.levels[1].delta.unwrap() < 1e-12);
    }

    #[test]
    fn sew_flags_growing_differences() {
        // Each step adds 1, so refining the partition diverges linearly.
        let bad = FlowFamily::new("drift", 1.0, |s, t, a| {
            if t > s {
                a.add_scalar(1.0)
            } else {
                a.clone()
            }
        });
        let a = DVector::from_vec(vec![0.0]);
        assert!(matches!(
            sew(&bad, 0.0, 1.0, &a, 6, 1e-12),
            Err(Error::NonCauchy(_))
        ));
    }

    #[test]
    fn sew_validates_max_level() {
        let flow = FlowFamily::identity(1.0);
        let a = DVector::from_vec(vec![0.0]);
        assert!(sew(&flow, 0.0, 1.0, &a, 1, 1e-12).is_err());
    }

    #[test]
    fn recursion_table_of_zeros_passes() {
        let times: Vec<f64> = (0..=8).map(|k| k as f64 / 8.0).collect();
        let rem = Remainder::power(1.5).unwrap();
        let ctrl = make_holder_control(1.0).unwrap();
        let check =
            davie_recursion_verify(&times, &|_, _| 0.0, 1.0, 0.0, 0.0, 0.5, &rem, &ctrl)
                .unwrap();
        assert!(check.ok);
    }

    #[test]
    fn recursion_rejects_successive_violations() {
        let times: Vec<f64> = vec![0.0, 0.5, 1.0];
        let rem = Remainder::power(1.5).unwrap();
        let ctrl = make_holder_control(1.0).unwrap();
        let res = davie_recursion_verify(
            &times,
            &|i, j| if j > i { 100.0 } else { 0.0 },
            1.0,
            0.0,
            0.0,
            0.5,
            &rem,
            &ctrl,
        );
        assert!(res.is_err());
    }

    #[test]
    fn csv_shape_and_determinism() {
        let report = ConvergenceReport {
            scheme: "davie".into(),
            levels: vec![LevelRecord {
                level: 3,
                mesh: 0.125,
                error: 1e-4,
                runtime_ms: 12.5,
            }],
            fitted_order: Some(2.0),
            theoretical: theoretical_rate(2, 1.0, 2.0),
            rate_bound: vec![0.1],
            probes: 4,
            seed: Some(7),
        };
        let mut buf = Vec::new();
        report.write_csv(&mut buf, true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("level,mesh,error,runtime_ms\n"));
        assert!(text.contains("3,"));
        assert!(text.trim_end().ends_with(",0"));
    }
}
