//! The binomial evidence-amplification model.
//!
//! A base detector with per-observation recall `r` and precision `p`,
//! applied independently to `n` observations of the same site, yields an
//! aggregate decision "at least `TH` of `n` positive". The aggregate
//! recall is the upper tail of Binomial(n, r) at TH; the aggregate
//! precision is one minus the upper tail of Binomial(n, 1-p). Sweeping TH
//! trades the two off; the selected threshold maximizes their harmonic
//! mean.
//!
//! Windows are capped at 64 observations so binomial coefficients stay
//! exact in 128-bit integers; terms are accumulated in f64, keeping the
//! absolute error well under 1e-12.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest supported window; C(64, 32) still fits u128 exactly.
pub const MAX_WINDOW: usize = 64;

#[derive(Debug, Error)]
pub enum AmplifyError {
    #[error("threshold {threshold} out of range [1, {window}]")]
    ThresholdOutOfRange { threshold: usize, window: usize },
    #[error("window {0} out of range [1, {MAX_WINDOW}]")]
    WindowOutOfRange(usize),
    #[error("{name} must be in (0, 1], got {value}")]
    MetricOutOfRange { name: &'static str, value: f64 },
}

/// Per-observation recall and precision of the base detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseMetrics {
    pub recall: f64,
    pub precision: f64,
}

impl BaseMetrics {
    pub fn new(recall: f64, precision: f64) -> Result<BaseMetrics, AmplifyError> {
        for (name, value) in [("recall", recall), ("precision", precision)] {
            if !value.is_finite() || value <= 0.0 || value > 1.0 {
                return Err(AmplifyError::MetricOutOfRange { name, value });
            }
        }
        Ok(BaseMetrics { recall, precision })
    }
}

/// Aggregate metrics at one (window, threshold) operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplifiedMetrics {
    pub threshold: usize,
    pub window: usize,
    pub recall: f64,
    pub precision: f64,
}

impl AmplifiedMetrics {
    /// Harmonic mean of recall and precision (the selection score).
    pub fn harmonic_mean(&self) -> f64 {
        if self.recall + self.precision == 0.0 {
            0.0
        } else {
            2.0 * self.recall * self.precision / (self.recall + self.precision)
        }
    }
}

fn check_range(window: usize, threshold: usize) -> Result<(), AmplifyError> {
    if window == 0 || window > MAX_WINDOW {
        return Err(AmplifyError::WindowOutOfRange(window));
    }
    if threshold == 0 || threshold > window {
        return Err(AmplifyError::ThresholdOutOfRange { threshold, window });
    }
    Ok(())
}

/// Exact binomial coefficient for n <= 64. Each intermediate product of
/// the multiplicative form is divisible by its step index, so the
/// division stays exact.
fn binomial_coefficient(n: usize, k: usize) -> u128 {
    debug_assert!(n <= MAX_WINDOW && k <= n);
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 1..=k {
        c = c * (n - k + i) as u128 / i as u128;
    }
    c
}

/// Upper-tail binomial probability P(X >= threshold), X ~ Binomial(n, rate).
pub fn binomial_tail(window: usize, threshold: usize, rate: f64) -> Result<f64, AmplifyError> {
    check_range(window, threshold)?;
    if !(0.0..=1.0).contains(&rate) || !rate.is_finite() {
        return Err(AmplifyError::MetricOutOfRange {
            name: "rate",
            value: rate,
        });
    }
    if rate == 0.0 {
        return Ok(0.0); // threshold >= 1
    }
    if rate == 1.0 {
        return Ok(1.0);
    }
    let q = 1.0 - rate;
    let mut sum = 0.0f64;
    for j in threshold..=window {
        let coef = binomial_coefficient(window, j) as f64;
        sum += coef * rate.powi(j as i32) * q.powi((window - j) as i32);
    }
    Ok(sum.clamp(0.0, 1.0))
}

/// Aggregate recall of the over-time decision: the probability that at
/// least `threshold` of `window` independent observations of a real site
/// are detected.
pub fn amplified_recall(
    base: &BaseMetrics,
    window: usize,
    threshold: usize,
) -> Result<f64, AmplifyError> {
    binomial_tail(window, threshold, base.recall)
}

/// Aggregate precision of the over-time decision, modeling each
/// observation's false-positive chance as `1 - p`.
pub fn amplified_precision(
    base: &BaseMetrics,
    window: usize,
    threshold: usize,
) -> Result<f64, AmplifyError> {
    Ok(1.0 - binomial_tail(window, threshold, 1.0 - base.precision)?)
}

/// Amplified metrics for every threshold `1..=window`. Recall is
/// nonincreasing and precision nondecreasing along the sweep.
pub fn pr_curve(base: &BaseMetrics, window: usize) -> Result<Vec<AmplifiedMetrics>, AmplifyError> {
    check_range(window, 1)?;
    (1..=window)
        .map(|threshold| {
            Ok(AmplifiedMetrics {
                threshold,
                window,
                recall: amplified_recall(base, window, threshold)?,
                precision: amplified_precision(base, window, threshold)?,
            })
        })
        .collect()
}

/// The operating point maximizing the harmonic mean of amplified recall
/// and precision; ties break toward the larger threshold.
pub fn select_threshold(
    base: &BaseMetrics,
    window: usize,
) -> Result<AmplifiedMetrics, AmplifyError> {
    let curve = pr_curve(base, window)?;
    let mut best = curve[0];
    for point in &curve[1..] {
        if point.harmonic_mean() >= best.harmonic_mean() {
            best = *point;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const REFERENCE_BASE: BaseMetrics = BaseMetrics {
        recall: 0.5676,
        precision: 0.9329,
    };

    // Exact tails for the default operating points, frozen from an
    // independent big-integer evaluation of the binomial sum.
    const EXPECTED: [(usize, f64, f64); 3] = [
        (5, 0.999_095_881_952_226_5, 0.991_004_685_143_791_5),
        (6, 0.995_941_306_112_256_6, 0.998_444_853_393_979_4),
        (7, 0.985_588_986_230_394_1, 0.999_782_711_925_407_1),
    ];

    #[test]
    fn reproduces_reference_operating_points() {
        for (th, recall, precision) in EXPECTED {
            let r = amplified_recall(&REFERENCE_BASE, 20, th).unwrap();
            let p = amplified_precision(&REFERENCE_BASE, 20, th).unwrap();
            assert!((r - recall).abs() < 1e-12, "TH={th} recall {r}");
            assert!((p - precision).abs() < 1e-12, "TH={th} precision {p}");
        }
    }

    #[test]
    fn degenerate_rates() {
        let perfect = BaseMetrics::new(1.0, 1.0).unwrap();
        for th in [1, 6, 20] {
            assert_eq!(amplified_recall(&perfect, 20, th).unwrap(), 1.0);
            assert_eq!(amplified_precision(&perfect, 20, th).unwrap(), 1.0);
        }
    }

    #[test]
    fn window_of_one_collapses_to_base() {
        let curve = pr_curve(&REFERENCE_BASE, 1).unwrap();
        assert_eq!(curve.len(), 1);
        assert!((curve[0].recall - REFERENCE_BASE.recall).abs() < 1e-15);
        assert!((curve[0].precision - REFERENCE_BASE.precision).abs() < 1e-15);
    }

    #[test]
    fn selects_threshold_six_for_reference_metrics() {
        let selected = select_threshold(&REFERENCE_BASE, 20).unwrap();
        assert_eq!(selected.threshold, 6);
    }

    #[test]
    fn perfect_base_ties_break_to_largest_threshold() {
        let perfect = BaseMetrics::new(1.0, 1.0).unwrap();
        assert_eq!(select_threshold(&perfect, 20).unwrap().threshold, 20);
        // and the whole curve sits at (1, 1)
        for point in pr_curve(&perfect, 20).unwrap() {
            assert_eq!((point.recall, point.precision), (1.0, 1.0));
        }
    }

    #[test]
    fn skewed_base_pushes_threshold_up() {
        // High recall, poor precision: brute-force sweep should land high.
        let base = BaseMetrics::new(0.99, 0.5).unwrap();
        let selected = select_threshold(&base, 20).unwrap();
        let brute = (1..=20)
            .map(|th| AmplifiedMetrics {
                threshold: th,
                window: 20,
                recall: amplified_recall(&base, 20, th).unwrap(),
                precision: amplified_precision(&base, 20, th).unwrap(),
            })
            .max_by(|a, b| {
                a.harmonic_mean()
                    .total_cmp(&b.harmonic_mean())
                    .then(a.threshold.cmp(&b.threshold))
            })
            .unwrap();
        assert_eq!(selected.threshold, brute.threshold);
        assert!(selected.threshold >= 11, "threshold {}", selected.threshold);
    }

    #[test]
    fn rejects_out_of_range_parameters() {
        assert!(amplified_recall(&REFERENCE_BASE, 20, 0).is_err());
        assert!(amplified_recall(&REFERENCE_BASE, 20, 21).is_err());
        assert!(amplified_recall(&REFERENCE_BASE, 65, 1).is_err());
        assert!(BaseMetrics::new(0.0, 0.5).is_err());
        assert!(BaseMetrics::new(0.5, 1.2).is_err());
    }

    #[test]
    fn coefficients_are_exact() {
        assert_eq!(binomial_coefficient(20, 6), 38_760);
        assert_eq!(binomial_coefficient(64, 32), 1_832_624_140_942_590_534);
        assert_eq!(binomial_coefficient(20, 0), 1);
        assert_eq!(binomial_coefficient(20, 20), 1);
    }

    proptest! {
        /// The binomial kernel normalizes: full-range tail is 1.
        #[test]
        fn kernel_normalization(rate in 0.0f64..=1.0, window in 1usize..=64) {
            let full = binomial_tail(window, 1, rate).unwrap();
            let p0 = (1.0 - rate).powi(window as i32);
            prop_assert!((full + p0 - 1.0).abs() < 1e-12, "sum deviates: {}", full + p0);
        }

        #[test]
        fn recall_monotone_in_rate_and_threshold(
            r1 in 0.01f64..0.99,
            dr in 0.0f64..0.009,
            th in 1usize..=20,
        ) {
            let base_lo = BaseMetrics::new(r1, 0.9).unwrap();
            let base_hi = BaseMetrics::new(r1 + dr, 0.9).unwrap();
            let lo = amplified_recall(&base_lo, 20, th).unwrap();
            let hi = amplified_recall(&base_hi, 20, th).unwrap();
            prop_assert!(hi >= lo - 1e-12);
            if th < 20 {
                let next = amplified_recall(&base_lo, 20, th + 1).unwrap();
                prop_assert!(next <= lo + 1e-12);
            }
        }

        #[test]
        fn precision_monotone_in_base_and_threshold(
            p1 in 0.01f64..0.99,
            dp in 0.0f64..0.009,
            th in 1usize..=20,
        ) {
            let base_lo = BaseMetrics::new(0.5, p1).unwrap();
            let base_hi = BaseMetrics::new(0.5, p1 + dp).unwrap();
            let lo = amplified_precision(&base_lo, 20, th).unwrap();
            let hi = amplified_precision(&base_hi, 20, th).unwrap();
            prop_assert!(hi >= lo - 1e-12);
            if th < 20 {
                let next = amplified_precision(&base_lo, 20, th + 1).unwrap();
                prop_assert!(next >= lo - 1e-12);
            }
        }

        #[test]
        fn curve_is_monotone(r in 0.01f64..1.0, p in 0.01f64..1.0, window in 1usize..=32) {
            let base = BaseMetrics::new(r, p).unwrap();
            let curve = pr_curve(&base, window).unwrap();
            prop_assert_eq!(curve.len(), window);
            for pair in curve.windows(2) {
                prop_assert!(pair[1].recall <= pair[0].recall + 1e-12);
                prop_assert!(pair[1].precision >= pair[0].precision - 1e-12);
            }
        }
    }
}
