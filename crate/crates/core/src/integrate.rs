//! Fixed-step integration and quadrature shared by the continuous and hybrid layers.

/// One classical fourth-order Runge-Kutta step of size `h`.
pub fn rk4_step<F>(field: &F, x: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> Vec<f64> + ?Sized,
{
    let k1 = field(x);
    let probe = |k: &[f64], scale: f64| -> Vec<f64> {
        x.iter().zip(k).map(|(xi, ki)| xi + scale * ki).collect()
    };
    let k2 = field(&probe(&k1, h / 2.0));
    let k3 = field(&probe(&k2, h / 2.0));
    let k4 = field(&probe(&k3, h));
    x.iter()
        .enumerate()
        .map(|(i, xi)| xi + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Smallest even interval count whose spacing over `length` does not exceed `max_step`.
pub fn even_steps(length: f64, max_step: f64) -> usize {
    let n = (length / max_step).ceil().max(2.0) as usize;
    n + n % 2
}

/// Composite Simpson rule over equally spaced samples (odd sample count).
pub fn simpson(samples: &[f64], h: f64) -> f64 {
    let n = samples.len();
    debug_assert!(
        n >= 3 && n % 2 == 1,
        "simpson needs an odd sample count >= 3"
    );
    let mut acc = samples[0] + samples[n - 1];
    for (i, s) in samples.iter().enumerate().take(n - 1).skip(1) {
        acc += if i % 2 == 1 { 4.0 * s } else { 2.0 * s };
    }
    acc * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rk4_is_exact_for_quadratic_flows() {
        // x1' = x2, x2' = -1
        let field = |x: &[f64]| vec![x[1], -1.0];
        let x = rk4_step(&field, &[1.0, 0.5], 0.3);
        assert!((x[0] - (1.0 + 0.5 * 0.3 - 0.045)).abs() < 1e-15);
        assert!((x[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn simpson_integrates_cubics_exactly() {
        let h = 0.25;
        let samples: Vec<f64> = (0..=4).map(|i| (i as f64 * h).powi(3)).collect();
        assert!((simpson(&samples, h) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn even_steps_respects_bound() {
        assert_eq!(even_steps(1.0, 0.3), 4);
        assert_eq!(even_steps(1.0, 1.0), 2);
        assert_eq!(even_steps(0.9, 0.1), 10);
    }
}
