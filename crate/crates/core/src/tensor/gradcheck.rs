//! Central finite-difference gradient checking.

use serde::Serialize;

/// `|a - n| / max(|a|, |n|, floor)`. The floor keeps entries whose true
/// gradient is essentially zero from reporting round-off as huge relative
/// error.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / denom
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub probes: usize,
    pub max_relative_error: f64,
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub step: f64,
    pub tolerance: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.max_relative_error)
            .fold(0.0, f64::max)
    }

    pub fn failures(&self) -> Vec<&ParamCheck> {
        self.params
            .iter()
            .filter(|p| p.max_relative_error.is_nan() || p.max_relative_error >= self.tolerance)
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }
}

/// Collects per-parameter comparisons between analytic gradients and
/// `(f(x + h) - f(x - h)) / 2h`.
#[derive(Debug, Clone)]
pub struct GradientCheck {
    step: f64,
    tolerance: f64,
    floor: f64,
    params: Vec<ParamCheck>,
}

impl GradientCheck {
    pub const DEFAULT_FLOOR: f64 = 1e-8;

    pub fn new(step: f64, tolerance: f64) -> Self {
        GradientCheck {
            step,
            tolerance,
            floor: Self::DEFAULT_FLOOR,
            params: Vec::new(),
        }
    }

    pub fn with_floor(mut self, floor: f64) -> Self {
        self.floor = floor;
        self
    }

    /// Probes `point[i]` for every `i` in `indices`, evaluating `f` on a
    /// perturbed copy of `point`. `analytic` must be the gradient of `f` at
    /// `point`.
    pub fn check<F>(&mut self, name: &str, point: &[f64], analytic: &[f64], indices: &[usize], mut f: F)
    where
        F: FnMut(&[f64]) -> f64,
    {
        assert_eq!(point.len(), analytic.len(), "gradient length for {name}");
        let mut x = point.to_vec();
        let mut worst = (0.0f64, 0usize, 0.0f64, 0.0f64);
        for &i in indices {
            let orig = x[i];
            x[i] = orig + self.step;
            let plus = f(&x);
            x[i] = orig - self.step;
            let minus = f(&x);
            x[i] = orig;
            let numeric = (plus - minus) / (2.0 * self.step);
            let err = relative_error(analytic[i], numeric, self.floor);
            if err > worst.0 || err.is_nan() {
                worst = (err, i, analytic[i], numeric);
            }
        }
        self.params.push(ParamCheck {
            name: name.to_string(),
            probes: indices.len(),
            max_relative_error: worst.0,
            worst_index: worst.1,
            worst_analytic: worst.2,
            worst_numeric: worst.3,
        });
    }

    /// Like [`GradientCheck::check`] over every coordinate.
    pub fn check_all<F>(&mut self, name: &str, point: &[f64], analytic: &[f64], f: F)
    where
        F: FnMut(&[f64]) -> f64,
    {
        let indices: Vec<usize> = (0..point.len()).collect();
        self.check(name, point, analytic, &indices, f);
    }

    pub fn report(self) -> GradCheckReport {
        GradCheckReport {
            step: self.step,
            tolerance: self.tolerance,
            params: self.params,
        }
    }
}
