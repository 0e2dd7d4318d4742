//! Standard normal helpers and small order statistics.

use statrs::function::erf::{erfc, erfc_inv};
use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// `ln Phi(x)`, accurate far into the lower tail.
pub fn log_norm_cdf(x: f64) -> f64 {
    if x > 0.0 {
        (-norm_cdf(-x)).ln_1p()
    } else if x > -30.0 {
        norm_cdf(x).ln()
    } else {
        let r = 1.0 / (x * x);
        let series = 1.0 - r + 3.0 * r * r - 15.0 * r * r * r + 105.0 * r * r * r * r;
        log_norm_pdf(x) - (-x).ln() + series.ln()
    }
}

pub fn log_norm_pdf(x: f64) -> f64 {
    -0.5 * x * x + INV_SQRT_2PI.ln()
}

/// `d/dx ln Phi(x) = phi(x) / Phi(x)`.
pub fn log_norm_cdf_slope(x: f64) -> f64 {
    (log_norm_pdf(x) - log_norm_cdf(x)).exp()
}

/// Inverse standard normal CDF; `±inf` at the endpoints.
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        -SQRT_2 * erfc_inv(2.0 * p)
    }
}

/// Median with the usual midpoint convention for even lengths. `None` when empty.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn normal_reference_values() {
        assert_abs_diff_eq!(norm_cdf(0.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(norm_cdf(1.959_963_984_540_054), 0.975, epsilon = 1e-11);
        assert_abs_diff_eq!(norm_quantile(0.975), 1.959_963_984_540_054, epsilon = 1e-10);
        assert_abs_diff_eq!(norm_pdf(0.0), 0.398_942_280_401_432_7, epsilon = 1e-15);
        assert!(norm_quantile(1.0).is_infinite());
    }

    #[test]
    fn log_cdf_tail() {
        // mpmath, 40 digits
        let cases = [
            (-40.0, -804.608_442_013_753_8, 40.024_968_847_207_26),
            (-30.5, -469.462_737_322_912_1, 30.532_716_770_660_16),
            (-29.5, -439.429_474_609_150_2, 29.533_820_844_167_98),
            (-5.0, -15.064_998_393_988_73, 5.186_503_967_125_842),
            (0.0, -0.693_147_180_559_945_3, 0.797_884_560_802_865_4),
            (3.0, -0.001_350_809_964_748_194, 0.004_437_839_042_125_664),
        ];
        for (x, l, s) in cases {
            assert!(((log_norm_cdf(x) - l) / l).abs() < 1e-10, "{x}");
            assert!(((log_norm_cdf_slope(x) - s) / s).abs() < 1e-8, "{x}");
        }
    }

    #[test]
    fn median_conventions() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }
}
