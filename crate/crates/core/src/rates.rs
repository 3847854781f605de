//! Sweep records and log-log power-law fits.

use serde::Serialize;

use crate::error::FitError;

/// One sample of a convergence sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateRecord {
    pub param: f64,
    pub cost_gap: f64,
    pub sup_dev: f64,
    pub l1_dev: f64,
    pub tv: f64,
    pub wall_ms: f64,
}

impl RateRecord {
    pub const HEADER: &'static str = "param,cost_gap,sup_dev,l1_dev,tv,wall_ms";

    pub fn get(&self, column: Column) -> f64 {
        match column {
            Column::Param => self.param,
            Column::CostGap => self.cost_gap,
            Column::SupDev => self.sup_dev,
            Column::L1Dev => self.l1_dev,
            Column::Tv => self.tv,
            Column::WallMs => self.wall_ms,
        }
    }

    pub fn is_finite(&self) -> bool {
        [
            self.param,
            self.cost_gap,
            self.sup_dev,
            self.l1_dev,
            self.tv,
            self.wall_ms,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    Param,
    CostGap,
    SupDev,
    L1Dev,
    Tv,
    WallMs,
}

/// `y ≈ constant · x^exponent`; `residual` is the largest relative misfit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub constant: f64,
    pub residual: f64,
}

impl PowerLawFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.constant * x.powf(self.exponent)
    }
}

/// Least squares on `(ln x, ln y)`.
pub fn fit_power_law(
    records: &[RateRecord],
    x: Column,
    y: Column,
) -> Result<PowerLawFit, FitError> {
    let points: Vec<(f64, f64)> = records.iter().map(|r| (r.get(x), r.get(y))).collect();
    fit_points(&points)
}

/// Same fit on raw `(x, y)` pairs.
pub fn fit_points(points: &[(f64, f64)]) -> Result<PowerLawFit, FitError> {
    if points.len() < 3 {
        return Err(FitError::DegenerateFit(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some((px, py)) = points
        .iter()
        .find(|(px, py)| !(*px > 0.0 && *py > 0.0) || !px.is_finite() || !py.is_finite())
    {
        return Err(FitError::DegenerateFit(format!(
            "non-positive or non-finite point ({px}, {py})"
        )));
    }
    let n = points.len() as f64;
    let logs: Vec<(f64, f64)> = points.iter().map(|(a, b)| (a.ln(), b.ln())).collect();
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 1e-24 {
        return Err(FitError::DegenerateFit("x values do not vary".into()));
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let exponent = sxy / sxx;
    let constant = (my - exponent * mx).exp();
    let fit = PowerLawFit {
        exponent,
        constant,
        residual: 0.0,
    };
    let residual = points
        .iter()
        .map(|(a, b)| ((fit.eval(*a) - b) / b).abs())
        .fold(0.0, f64::max);
    Ok(PowerLawFit { residual, ..fit })
}

/// True when `values` never increases (within `slack`).
pub fn is_nonincreasing(values: &[f64], slack: f64) -> bool {
    values.windows(2).all(|w| w[1] <= w[0] + slack)
}

/// True when `values` never decreases (within `slack`).
pub fn is_nondecreasing(values: &[f64], slack: f64) -> bool {
    values.windows(2).all(|w| w[1] >= w[0] - slack)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(x: f64, y: f64) -> RateRecord {
        RateRecord {
            param: x,
            cost_gap: y,
            sup_dev: 0.0,
            l1_dev: 0.0,
            tv: 0.0,
            wall_ms: 0.0,
        }
    }

    #[test]
    fn exact_linear_data() {
        let r: Vec<_> = [0.1, 0.5, 1.0, 3.0]
            .iter()
            .map(|&x| rec(x, 2.0 * x))
            .collect();
        let fit = fit_power_law(&r, Column::Param, Column::CostGap).unwrap();
        assert!((fit.exponent - 1.0).abs() < 1e-12);
        assert!((fit.constant - 2.0).abs() < 1e-12);
        assert!(fit.residual <= 1e-12);
    }

    #[test]
    fn exact_square_root_data() {
        let r: Vec<_> = [0.01, 0.1, 1.0]
            .iter()
            .map(|&x: &f64| rec(x, 3.0 * x.sqrt()))
            .collect();
        let fit = fit_power_law(&r, Column::Param, Column::CostGap).unwrap();
        assert!((fit.exponent - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_point_is_degenerate() {
        assert!(fit_power_law(&[rec(1.0, 1.0)], Column::Param, Column::CostGap).is_err());
        let zero = [rec(1.0, 0.0), rec(2.0, 1.0), rec(3.0, 1.0)];
        assert!(fit_power_law(&zero, Column::Param, Column::CostGap).is_err());
    }

    proptest! {
        #[test]
        fn recovers_any_exact_power_law(a in -3.0f64..3.0, c in 0.01f64..100.0) {
            let pts: Vec<(f64, f64)> = (0..6).map(|i| {
                let x = 10f64.powf(-(i as f64) * 0.5);
                (x, c * x.powf(a))
            }).collect();
            let fit = fit_points(&pts).unwrap();
            prop_assert!((fit.exponent - a).abs() < 1e-9);
            prop_assert!((fit.constant / c - 1.0).abs() < 1e-9);
        }
    }
}
