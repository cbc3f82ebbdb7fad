//! The concrete one-step families: the order-2 expansion scheme, step-N
//! Euler expansions, the bracket-ODE scheme, and the chord-plus-loops
//! transport scheme, all packaged as [`FlowFamily`] values over a driver
//! and a field family.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::algebra::TensorSeries;
use crate::driver::RoughDriver;
use crate::error::{Error, Result};
use crate::fields::{f_i_identity, VectorFieldFamily};
use crate::flows::FlowFamily;

/// Which one-step family to build, with its discretization knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchemeSpec {
    Davie,
    Euler { n: usize },
    Bailleul { substeps: usize },
    FrizVictoir { substeps: usize },
}

impl SchemeSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SchemeSpec::Euler { n } if !(1..=3).contains(&n) => Err(Error::Invalid(format!(
                "euler step order must be 1..=3, got {n}"
            ))),
            SchemeSpec::Bailleul { substeps } | SchemeSpec::FrizVictoir { substeps }
                if substeps < 1 =>
            {
                Err(Error::Invalid("substeps must be >= 1".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> String {
        match *self {
            SchemeSpec::Davie => "davie".into(),
            SchemeSpec::Euler { n } => format!("euler{n}"),
            SchemeSpec::Bailleul { .. } => "bailleul".into(),
            SchemeSpec::FrizVictoir { .. } => "friz_victoir".into(),
        }
    }

    /// Build the family over the given field and driver.
    pub fn build(&self, v: &VectorFieldFamily, d: &RoughDriver) -> Result<FlowFamily> {
        self.validate()?;
        match *self {
            SchemeSpec::Davie => davie_almost_flow(v, d),
            SchemeSpec::Euler { n } => step_n_euler(v, d, n),
            SchemeSpec::Bailleul { substeps } => bailleul_almost_flow(v, d, substeps),
            SchemeSpec::FrizVictoir { substeps } => friz_victoir_almost_flow(v, d, substeps),
        }
    }
}

fn check_dims(v: &VectorFieldFamily, d: &RoughDriver) -> Result<()> {
    if v.driver_dim() != d.dim() {
        return Err(Error::Structure(format!(
            "field drives {} channels but driver has {}",
            v.driver_dim(),
            d.dim()
        )));
    }
    Ok(())
}

/// One step of the order-2 expansion: the state plus the columns paired
/// with the level-1 coordinates plus the composed two-letter actions paired
/// with the level-2 coordinates.
pub fn davie_almost_flow(v: &VectorFieldFamily, d: &RoughDriver) -> Result<FlowFamily> {
    check_dims(v, d)?;
    if v.uses_fd_jacobian() && v.norms().grad_sup.is_none() {
        // Finite differences are allowed; nothing to reject here.
    }
    let v = v.clone();
    let d = d.clone();
    let horizon = d.horizon();
    Ok(FlowFamily::new("davie", horizon, move |s, t, a| {
        let x = d.eval(s, t);
        davie_step(&v, &x, a)
    }))
}

fn davie_step(v: &VectorFieldFamily, x: &TensorSeries, a: &DVector<f64>) -> DVector<f64> {
    let l = v.driver_dim();
    let f = v.eval(a);
    let one = x.level(1);
    let two = x.level(2);
    let mut y = a.clone();
    for i in 0..l {
        if one[i] != 0.0 {
            y.axpy(one[i], &f.column(i).into_owned(), 1.0);
        }
    }
    let cols: Vec<DVector<f64>> = (0..l).map(|i| f.column(i).into_owned()).collect();
    for j in 0..l {
        let jac_j = v.jacobian(a, j);
        for (i, col_i) in cols.iter().enumerate() {
            let w = two[i * l + j];
            if w != 0.0 {
                y.axpy(w, &(&jac_j * col_i), 1.0);
            }
        }
    }
    y
}

/// Step-`n` Euler expansion: all composed actions of words up to length `n`
/// paired with the word coordinates of the driver. Depth 3 requires a
/// driver that carries three levels and a field with second derivatives.
pub fn step_n_euler(v: &VectorFieldFamily, d: &RoughDriver, n: usize) -> Result<FlowFamily> {
    check_dims(v, d)?;
    if !(1..=3).contains(&n) {
        return Err(Error::Invalid(format!("step order must be 1..=3, got {n}")));
    }
    if n > d.max_depth() {
        return Err(Error::Capability(format!(
            "step-{n} expansion needs a depth-{n} driver, '{}' carries {}",
            d.name(),
            d.max_depth()
        )));
    }
    // Probe the field once so missing derivative providers surface at
    // construction instead of inside the evaluation closure.
    let probe = DVector::zeros(v.state_dim());
    if n >= 3 {
        f_i_identity(v, &[0, 0, 0], &probe)?;
    }
    let v = v.clone();
    let d = d.clone();
    let horizon = d.horizon();
    let name = format!("euler{n}");
    Ok(FlowFamily::new(name, horizon, move |s, t, a| {
        let x = d.eval_depth(s, t, n).expect("depth validated at build");
        let mut y = a.clone();
        let l = v.driver_dim();
        let mut word = [0usize; 3];
        for k in 1..=n {
            let block = x.level(k);
            for (idx, &coeff) in block.iter().enumerate() {
                if coeff == 0.0 {
                    continue;
                }
                let mut rem = idx;
                for slot in (0..k).rev() {
                    word[slot] = rem % l;
                    rem /= l;
                }
                let action = f_i_identity(&v, &word[..k], a).expect("word validated");
                y.axpy(coeff, &action, 1.0);
            }
        }
        y
    }))
}

fn rk4<F: Fn(&DVector<f64>) -> DVector<f64>>(
    y0: &DVector<f64>,
    length: f64,
    steps: usize,
    drift: F,
) -> DVector<f64> {
    let h = length / steps as f64;
    let mut y = y0.clone();
    for _ in 0..steps {
        let k1 = drift(&y);
        let k2 = drift(&(&y + &k1 * (h / 2.0)));
        let k3 = drift(&(&y + &k2 * (h / 2.0)));
        let k4 = drift(&(&y + &k3 * h));
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    y
}

/// Bracket-ODE step: integrate over a unit auxiliary interval the drift
/// whose columns are weighted by the level-1 coordinates and whose bracket
/// terms are weighted by half the level-2 coordinates.
pub fn bailleul_almost_flow(
    v: &VectorFieldFamily,
    d: &RoughDriver,
    substeps: usize,
) -> Result<FlowFamily> {
    check_dims(v, d)?;
    if substeps < 1 {
        return Err(Error::Invalid("substeps must be >= 1".into()));
    }
    let v = v.clone();
    let d = d.clone();
    let horizon = d.horizon();
    Ok(FlowFamily::new("bailleul", horizon, move |s, t, a| {
        let x = d.eval(s, t);
        let one = x.level(1).to_vec();
        let two = x.level(2).to_vec();
        let l = v.driver_dim();
        let drift = |y: &DVector<f64>| {
            let f = v.eval(y);
            let cols: Vec<DVector<f64>> = (0..l).map(|i| f.column(i).into_owned()).collect();
            let jacs: Vec<_> = (0..l).map(|i| v.jacobian(y, i)).collect();
            let mut b = DVector::zeros(y.len());
            for (i, col) in cols.iter().enumerate() {
                if one[i] != 0.0 {
                    b.axpy(one[i], col, 1.0);
                }
            }
            for i in 0..l {
                for j in 0..l {
                    let w = two[i * l + j];
                    if w != 0.0 {
                        // Bracket action of (i, j) on the identity.
                        let br = &jacs[j] * &cols[i] - &jacs[i] * &cols[j];
                        b.axpy(0.5 * w, &br, 1.0);
                    }
                }
            }
            b
        };
        rk4(a, 1.0, substeps, drift)
    }))
}

/// Piecewise linear path whose depth-2 signature is the group element with
/// the given increment and antisymmetric level-2 part: a straight chord
/// followed by one square loop per plane with nonzero area, each of side
/// `sqrt(|area|)` and orientation matching the sign.
pub fn axis_loop_path(increment: &[f64], area: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let l = increment.len();
    if area.len() != l || area.iter().any(|row| row.len() != l) {
        return Err(Error::Structure("area matrix shape mismatch".into()));
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
    let origin = vec![0.0; l];
    let mut vertices = vec![origin, increment.to_vec()];
    for i in 0..l {
        for j in (i + 1)..l {
            let alpha = area[i][j];
            if alpha == 0.0 {
                continue;
            }
            let side = alpha.abs().sqrt();
            // Counterclockwise in the (i, j) plane sweeps positive area.
            let (first, second) = if alpha > 0.0 { (i, j) } else { (j, i) };
            let base = vertices.last().unwrap().clone();
            let mut corner1 = base.clone();
            corner1[first] += side;
            let mut corner2 = corner1.clone();
            corner2[second] += side;
            let mut corner3 = base.clone();
            corner3[second] += side;
            vertices.push(corner1);
            vertices.push(corner2);
            vertices.push(corner3);
            vertices.push(base);
        }
    }
    Ok(vertices)
}

/// Transport step along a signature-matching path: build the chord-plus-
/// loops path for the driver increment and integrate the driven ODE along
/// its segments with a fourth-order one-step method.
pub fn friz_victoir_almost_flow(
    v: &VectorFieldFamily,
    d: &RoughDriver,
    substeps: usize,
) -> Result<FlowFamily> {
    check_dims(v, d)?;
    if substeps < 1 {
        return Err(Error::Invalid("substeps must be >= 1".into()));
    }
    let v = v.clone();
    let d = d.clone();
    let horizon = d.horizon();
    Ok(FlowFamily::new("friz_victoir", horizon, move |s, t, a| {
        let x = d.eval(s, t);
        let l = v.driver_dim();
        let one = x.level(1);
        let two = x.level(2);
        // Antisymmetric part of level 2 is what the loops must realize.
        let mut area = vec![vec![0.0; l]; l];
        for i in 0..l {
            for j in 0..l {
                area[i][j] = 0.5 * (two[i * l + j] - two[j * l + i]);
            }
        }
        let path = axis_loop_path(one, &area).expect("antisymmetric by construction");
        let mut y = a.clone();
        for pair in path.windows(2) {
            let delta: Vec<f64> = pair[1]
                .iter()
                .zip(pair[0].iter())
                .map(|(b, a)| b - a)
                .collect();
            if delta.iter().all(|&x| x == 0.0) {
                continue;
            }
            let drift = |state: &DVector<f64>| {
                let f = v.eval(state);
                let mut b = DVector::zeros(state.len());
                for (i, &w) in delta.iter().enumerate() {
                    if w != 0.0 {
                        b.axpy(w, &f.column(i).into_owned(), 1.0);
                    }
                }
                b
            };
            y = rk4(&y, 1.0, substeps, drift);
        }
        y
    }))
}

/// Difference between the bracket-ODE step and the order-2 expansion step;
/// vanishes on the diagonal and stays remainder-small.
pub fn bailleul_remainder(
    v: &VectorFieldFamily,
    d: &RoughDriver,
    substeps: usize,
) -> Result<FlowFamily> {
    let chi = bailleul_almost_flow(v, d, substeps)?;
    let phi = davie_almost_flow(v, d)?;
    let diff = chi.difference(&phi);
    Ok(FlowFamily::new("bailleul_remainder", d.horizon(), move |s, t, a| {
        diff(s, t, a)
    }))
}
