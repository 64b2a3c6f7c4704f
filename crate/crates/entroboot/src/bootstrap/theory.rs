//! Closed-form analysis of the sparse-label entropy and a Monte Carlo
//! simulator for checking it.
//!
//! With a label rate `epsilon` on true nucleus pixels and perfect
//! background labels, the positive-label probability of a pixel whose
//! ground-truth nucleus probability is `x` is `epsilon * x`. Its binary
//! entropy expands into three terms of which `-epsilon * x * ln(epsilon)`
//! dominates as `epsilon` shrinks, making the entropy proportional to
//! `x` itself — the reason an entropy map doubles as a soft segmentation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bootstrap::binary_entropy;
use crate::error::{Error, Result};

/// One evaluation of the entropy expansion at `(epsilon, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryPoint {
    pub epsilon: f64,
    pub x: f64,
    /// Exact three-term entropy in nats.
    pub h_exact: f64,
    /// Dominant-term value `-epsilon * x * ln(epsilon)` in nats.
    pub h_approx: f64,
    /// Share of the exact entropy carried by the dominant term.
    pub dominant_fraction: f64,
}

fn check_args(epsilon: f64, x: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon {epsilon} must be in (0, 1)"
        )));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidParameter(format!("x {x} must be in [0, 1]")));
    }
    Ok(())
}

/// Exact entropy of the positive-label rate `epsilon * x`:
/// `-eps*x*ln(eps) - eps*x*ln(x) - (1 - eps*x)*ln(1 - eps*x)`.
pub fn theory_exact(epsilon: f64, x: f64) -> Result<f64> {
    check_args(epsilon, x)?;
    let px = epsilon * x;
    if px >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "epsilon * x = {px} must be below 1"
        )));
    }
    Ok(binary_entropy(px))
}

/// Dominant term `-epsilon * x * ln(epsilon)`. Non-negative for
/// `epsilon < 1`.
pub fn theory_approx(epsilon: f64, x: f64) -> f64 {
    -epsilon * x * epsilon.ln()
}

/// Splits the exact entropy into its three terms and reports the share
/// of the dominant one. As `epsilon` decreases the fraction climbs
/// toward 1, which is the limit argument made numerical.
pub fn dominance_report(epsilon: f64, x: f64) -> Result<TheoryPoint> {
    check_args(epsilon, x)?;
    if x <= 0.0 {
        return Err(Error::InvalidParameter(
            "dominance undefined at x = 0".into(),
        ));
    }
    let px = epsilon * x;
    let term_eps = -px * epsilon.ln();
    let term_x = -px * x.ln();
    let term_rest = if px < 1.0 {
        -(1.0 - px) * (1.0 - px).ln()
    } else {
        0.0
    };
    let h_exact = term_eps + term_x + term_rest;
    Ok(TheoryPoint {
        epsilon,
        x,
        h_exact,
        h_approx: term_eps,
        dominant_fraction: term_eps / h_exact,
    })
}

/// Outcome of simulating the labeling model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelSimResult {
    /// Fraction of trials labeled positive.
    pub empirical_label_rate: f64,
    /// Plug-in binary entropy of that rate, in nats.
    pub empirical_entropy: f64,
    pub n_trials: u64,
}

/// Simulates the labeling model pixel by pixel: ground truth is
/// Bernoulli(`p_ct`); a true nucleus pixel is labeled positive with
/// probability `epsilon`, background is always labeled negative.
pub fn monte_carlo_label_sim(
    p_ct: f64,
    epsilon: f64,
    n_trials: u64,
    seed: u64,
) -> Result<LabelSimResult> {
    if n_trials < 1 {
        return Err(Error::InvalidParameter("n_trials must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&p_ct) || !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidParameter(
            "p_ct and epsilon must be in [0, 1]".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positives = 0u64;
    for _ in 0..n_trials {
        let is_nucleus = rng.gen::<f64>() < p_ct;
        if is_nucleus && rng.gen::<f64>() < epsilon {
            positives += 1;
        }
    }
    let rate = positives as f64 / n_trials as f64;
    Ok(LabelSimResult {
        empirical_label_rate: rate,
        empirical_entropy: binary_entropy(rate),
        n_trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_reference_values() {
        assert!((theory_exact(0.05, 1.0).unwrap() - 0.198515).abs() < 1e-6);
        assert!((theory_exact(0.01, 1.0).unwrap() - 0.056002).abs() < 1e-6);
        assert_eq!(theory_exact(0.05, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn approx_reference_values() {
        assert!((theory_approx(0.05, 1.0) - 0.149787).abs() < 1e-6);
        assert_eq!(theory_approx(0.3, 0.0), 0.0);
        let e_inv = std::f64::consts::E.recip();
        assert!((theory_approx(e_inv, 1.0) - e_inv).abs() < 1e-12);
    }

    #[test]
    fn argument_validation() {
        assert!(theory_exact(0.0, 0.5).is_err());
        assert!(theory_exact(1.0, 0.5).is_err());
        assert!(theory_exact(0.5, 1.5).is_err());
        assert!(dominance_report(0.5, 0.0).is_err());
    }

    #[test]
    fn dominance_reference_values() {
        let p = dominance_report(1e-6, 1.0).unwrap();
        assert!(
            (p.dominant_fraction - 0.932505).abs() < 1e-4,
            "got {}",
            p.dominant_fraction
        );
        let p = dominance_report(1e-6, 0.1).unwrap();
        assert!(
            (p.dominant_fraction - 0.80707).abs() < 1e-4,
            "got {}",
            p.dominant_fraction
        );
    }

    #[test]
    fn dominance_increases_as_epsilon_shrinks() {
        for xi in 1..=10 {
            let x = xi as f64 / 10.0;
            let mut last = 0.0;
            for k in 2..=8 {
                let eps = 10f64.powi(-k);
                let frac = dominance_report(eps, x).unwrap().dominant_fraction;
                assert!(frac > last, "x={x} eps={eps}: {frac} <= {last}");
                last = frac;
            }
        }
    }

    #[test]
    fn exact_dominates_approx_on_grid() {
        // the two non-dominant terms are non-negative for eps < 1/e
        let e_inv = std::f64::consts::E.recip();
        for i in 1..=100 {
            let eps = e_inv * i as f64 / 101.0;
            for j in 1..=100 {
                let x = j as f64 / 100.0;
                let exact = theory_exact(eps, x).unwrap();
                let approx = theory_approx(eps, x);
                assert!(
                    exact >= approx - 1e-15,
                    "eps={eps} x={x}: {exact} < {approx}"
                );
            }
        }
    }

    #[test]
    fn monte_carlo_degenerate_rates() {
        let r = monte_carlo_label_sim(0.5, 0.0, 10_000, 1).unwrap();
        assert_eq!(r.empirical_label_rate, 0.0);
        let r = monte_carlo_label_sim(1.0, 1.0, 10_000, 2).unwrap();
        assert_eq!(r.empirical_label_rate, 1.0);
        assert_eq!(r.empirical_entropy, 0.0);
    }

    #[test]
    fn monte_carlo_tracks_product_rate() {
        // empirical rate near eps * p_ct within 4 binomial sigma
        let (p_ct, eps, n) = (0.3, 0.05, 200_000u64);
        let expect = eps * p_ct;
        let sigma = (expect * (1.0 - expect) / n as f64).sqrt();
        for seed in 0..5 {
            let r = monte_carlo_label_sim(p_ct, eps, n, seed).unwrap();
            assert!(
                (r.empirical_label_rate - expect).abs() <= 4.0 * sigma,
                "seed {seed}: {} vs {expect}",
                r.empirical_label_rate
            );
        }
    }

    #[test]
    fn monte_carlo_deterministic_in_seed() {
        let a = monte_carlo_label_sim(0.3, 0.05, 50_000, 9).unwrap();
        let b = monte_carlo_label_sim(0.3, 0.05, 50_000, 9).unwrap();
        assert_eq!(a, b);
    }
}
