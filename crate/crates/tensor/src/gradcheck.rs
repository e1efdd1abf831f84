//! Central finite-difference oracle for tape gradients.
//!
//! The numeric side only ever evaluates forward passes, so it shares no code
//! with the backward rules it checks.

use crate::error::Result;
use crate::params::ParamStore;
use crate::tape::{Tape, Var};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// Denominator floor for [`relative_error`]. Central differences at
/// `h = 1e-5` carry ~1e-9 absolute truncation error, so components smaller
/// than this are compared on an absolute scale of `tolerance * floor`.
pub const RELATIVE_FLOOR: f64 = 1e-3;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Central differences of a scalar function of a flat vector.
pub fn numerical_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let plus = f(&probe);
            probe[i] = orig - h;
            let minus = f(&probe);
            probe[i] = orig;
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    /// Parameter name and flat index of the worst component.
    pub worst: Option<(String, usize)>,
}

impl GradCheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.checked > 0 && self.max_rel_err <= tolerance
    }

    fn record(&mut self, name: &str, index: usize, err: f64) {
        self.checked += 1;
        if err > self.max_rel_err || self.worst.is_none() {
            self.max_rel_err = self.max_rel_err.max(err);
            self.worst = Some((name.to_string(), index));
        }
    }
}

/// Compares tape gradients of `objective` against central differences for
/// every scalar in `params` (or only the names in `only`).
pub fn check_params<F>(
    params: &ParamStore,
    only: Option<&[&str]>,
    h: f64,
    objective: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let loss = objective(&mut tape, params)?;
    let grads = tape.backward(loss)?.for_store(params);

    let eval = |store: &ParamStore| -> Result<f64> {
        let mut t = Tape::new();
        let l = objective(&mut t, store)?;
        Ok(t.value(l).item())
    };

    let mut report = GradCheckReport::default();
    let mut probe = params.clone();
    let names: Vec<String> = params
        .names()
        .filter(|n| only.map_or(true, |o| o.contains(n)))
        .map(str::to_string)
        .collect();
    for name in names {
        let analytic = grads.get(&name).expect("for_store covers all").clone();
        for i in 0..analytic.numel() {
            let orig = probe.get(&name).unwrap().data()[i];
            probe.get_mut(&name).unwrap().data_mut()[i] = orig + h;
            let plus = eval(&probe)?;
            probe.get_mut(&name).unwrap().data_mut()[i] = orig - h;
            let minus = eval(&probe)?;
            probe.get_mut(&name).unwrap().data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            report.record(&name, i, relative_error(analytic.data()[i], numeric));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn numerical_gradient_of_quadratic() {
        let g = numerical_gradient(|x| x[0] * x[0] + 3.0 * x[1], &[2.0, -1.0], 1e-5);
        assert!((g[0] - 4.0).abs() < 1e-8);
        assert!((g[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn tanh_sum_passes_and_counts_scalars() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::from_rows(&[vec![0.3, -0.7], vec![1.1, 0.2]]));
        let report = check_params(&store, None, DEFAULT_STEP, |tape, s| {
            let w = tape.param(s, "w")?;
            let t = tape.tanh(w);
            Ok(tape.sum(t))
        })
        .unwrap();
        assert_eq!(report.checked, 4);
        assert!(report.passed(DEFAULT_TOLERANCE), "{report:?}");
    }

    #[test]
    fn relative_error_uses_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-9, 0.0) - 1e-6).abs() < 1e-18);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
    }
}
