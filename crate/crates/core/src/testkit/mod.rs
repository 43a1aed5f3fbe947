//! Central finite-difference gradient checking.
//!
//! Compiled for unit tests and, through the `testkit` feature, for
//! downstream test suites. It only ever reads forward values, so it is an
//! oracle independent of every backward rule it checks.

pub mod composite;
pub mod signals;

use crate::autodiff::{Graph, Var};
use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const FD_STEP: f64 = 1e-5;

/// Denominator floor for the relative error, so that gradients that are
/// zero up to round-off do not produce spurious failures.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, Default)]
pub struct GradReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub checked: usize,
    /// `(input, index, analytic, numeric)` of the worst coordinate.
    pub worst: Option<(usize, usize, f64, f64)>,
}

impl GradReport {
    pub(crate) fn record(&mut self, input: usize, idx: usize, analytic: f64, numeric: f64) {
        let abs = (analytic - numeric).abs();
        let rel = abs / analytic.abs().max(numeric.abs()).max(REL_FLOOR);
        self.checked += 1;
        self.max_abs_err = self.max_abs_err.max(abs);
        if rel > self.max_rel_err || self.worst.is_none() {
            self.max_rel_err = self.max_rel_err.max(rel);
            self.worst = Some((input, idx, analytic, numeric));
        }
    }

    pub fn merge(&mut self, other: &GradReport) {
        self.checked += other.checked;
        self.max_abs_err = self.max_abs_err.max(other.max_abs_err);
        if other.max_rel_err >= self.max_rel_err {
            self.max_rel_err = other.max_rel_err;
            self.worst = other.worst;
        }
    }
}

fn eval<F>(inputs: &[Tensor<f64>], f: &F) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    Ok(g.value(out).item())
}

/// Analytic gradients of the scalar `f` with respect to every input.
pub fn analytic_gradients<F>(inputs: &[Tensor<f64>], f: &F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    g.backward(out)?;
    Ok(vars.iter().map(|&v| g.grad_or_zeros(v)).collect())
}

/// Central difference of `f` along coordinate `(input, idx)`.
pub fn numeric_partial<F>(inputs: &[Tensor<f64>], input: usize, idx: usize, f: &F) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut plus = inputs.to_vec();
    plus[input].data_mut()[idx] += FD_STEP;
    let mut minus = inputs.to_vec();
    minus[input].data_mut()[idx] -= FD_STEP;
    Ok((eval(&plus, f)? - eval(&minus, f)?) / (2.0 * FD_STEP))
}

/// Compare every coordinate of every input.
pub fn check_gradients<F>(inputs: &[Tensor<f64>], f: F) -> Result<GradReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let analytic = analytic_gradients(inputs, &f)?;
    let mut report = GradReport::default();
    for (i, t) in inputs.iter().enumerate() {
        for idx in 0..t.len() {
            let num = numeric_partial(inputs, i, idx, &f)?;
            report.record(i, idx, analytic[i][idx], num);
        }
    }
    Ok(report)
}

/// Compare at most `per_input` randomly chosen coordinates of each input.
pub fn check_gradients_sampled<F>(inputs: &[Tensor<f64>], per_input: usize, rng: &mut Rng, f: F) -> Result<GradReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let analytic = analytic_gradients(inputs, &f)?;
    let mut report = GradReport::default();
    for (i, t) in inputs.iter().enumerate() {
        let picks: Vec<usize> = if t.len() <= per_input {
            (0..t.len()).collect()
        } else {
            (0..per_input).map(|_| rng.below(t.len())).collect()
        };
        for idx in picks {
            let num = numeric_partial(inputs, i, idx, &f)?;
            report.record(i, idx, analytic[i][idx], num);
        }
    }
    Ok(report)
}

/// Directional derivative along a random unit-variance direction touching
/// every coordinate of every input at once.
pub fn check_directional<F>(inputs: &[Tensor<f64>], rng: &mut Rng, f: F) -> Result<GradReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let analytic = analytic_gradients(inputs, &f)?;
    let dirs: Vec<Vec<f64>> = inputs.iter().map(|t| rng.normal_vec(t.len())).collect();
    let along = |sign: f64| -> Vec<Tensor<f64>> {
        inputs
            .iter()
            .zip(&dirs)
            .map(|(t, d)| {
                let mut t = t.clone();
                for (x, dx) in t.data_mut().iter_mut().zip(d) {
                    *x += sign * FD_STEP * dx;
                }
                t
            })
            .collect()
    };
    let numeric = (eval(&along(1.0), &f)? - eval(&along(-1.0), &f)?) / (2.0 * FD_STEP);
    let projected: f64 = analytic
        .iter()
        .zip(&dirs)
        .map(|(g, d)| g.iter().zip(d).map(|(a, b)| a * b).sum::<f64>())
        .sum();
    let mut report = GradReport::default();
    report.record(0, 0, projected, numeric);
    Ok(report)
}
