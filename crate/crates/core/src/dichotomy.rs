//! Spreading-vanishing threshold radius and outcome classification.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GrowthFunction, ModelSpec};
use crate::solution::RealizationResult;

/// First positive zero of the Bessel function J0.
pub const BESSEL_J0_ZERO: f64 = 2.404_825_557_695_773;

/// Integrator step as a fraction of the local oscillation length `sqrt(D / alpha_min)`.
const STEP_FRACTION: f64 = 1e-4;
const BISECTION_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMethod {
    Analytic,
    IvpRoot,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub r_star: f64,
    pub method: ThresholdMethod,
    pub d_used: f64,
    /// `|phi(r_star)|` from the integrator; zero for the closed form.
    pub residual: f64,
}

/// `r0 sqrt(D / alpha)` for constant growth.
pub fn rstar_analytic(d: f64, alpha: f64) -> f64 {
    BESSEL_J0_ZERO * (d / alpha).sqrt()
}

/// First positive root of `phi'' + phi'/r + (alpha(r)/D) phi = 0`,
/// `phi(0) = c`, `phi'(0) = 0`, by fixed-step RK4 and bisection.
pub fn rstar_numeric(d: f64, alpha: &GrowthFunction, c: f64, r_cap: f64) -> Result<ThresholdResult> {
    if !(d > 0.0) {
        return Err(Error::config("D", "diffusion must be > 0"));
    }
    if !(c > 0.0) {
        return Err(Error::config("C", "initial amplitude must be > 0"));
    }
    if !(r_cap > 0.0) || !r_cap.is_finite() {
        return Err(Error::config("r_cap", "search cap must be finite and > 0"));
    }
    let (alpha_min, _) = alpha.bounds(r_cap)?;
    let dr = STEP_FRACTION * (d / alpha_min).sqrt();
    let rhs = |r: f64, y: [f64; 2]| -> Result<[f64; 2]> {
        let q = alpha.eval(r)? / d;
        let accel = if r == 0.0 {
            -0.5 * q * y[0]
        } else {
            -y[1] / r - q * y[0]
        };
        Ok([y[1], accel])
    };
    let rk4 = |r: f64, y: [f64; 2], s: f64| -> Result<[f64; 2]> {
        let k1 = rhs(r, y)?;
        let k2 = rhs(r + 0.5 * s, [y[0] + 0.5 * s * k1[0], y[1] + 0.5 * s * k1[1]])?;
        let k3 = rhs(r + 0.5 * s, [y[0] + 0.5 * s * k2[0], y[1] + 0.5 * s * k2[1]])?;
        let k4 = rhs(r + s, [y[0] + s * k3[0], y[1] + s * k3[1]])?;
        Ok([
            y[0] + s / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            y[1] + s / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ])
    };

    let mut r = 0.0;
    let mut y = [c, 0.0];
    while r < r_cap {
        let s = dr.min(r_cap - r);
        let next = rk4(r, y, s)?;
        if next[0] <= 0.0 {
            // bracket [r, r + s]: bisect on the partial step length
            let (mut lo, mut hi) = (0.0, s);
            let mut phi_hi = next[0];
            while hi - lo > BISECTION_TOL {
                let mid = 0.5 * (lo + hi);
                let phi = rk4(r, y, mid)?[0];
                if phi > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                    phi_hi = phi;
                }
            }
            let phi_lo = if lo == 0.0 { y[0] } else { rk4(r, y, lo)?[0] };
            let (root, residual) = if phi_lo.abs() < phi_hi.abs() {
                (r + lo, phi_lo.abs())
            } else {
                (r + hi, phi_hi.abs())
            };
            return Ok(ThresholdResult {
                r_star: root,
                method: ThresholdMethod::IvpRoot,
                d_used: d,
                residual,
            });
        }
        r += s;
        y = next;
    }
    Err(Error::NoRootFound { r_cap })
}

/// Threshold for a given diffusion: closed form for constant growth, IVP otherwise.
pub fn rstar_for(d: f64, alpha: &GrowthFunction) -> Result<ThresholdResult> {
    match alpha {
        GrowthFunction::Constant(a) => {
            if !(*a > 0.0) {
                return Err(Error::ModelViolation(format!("growth rate must be > 0, got {a}")));
            }
            Ok(ThresholdResult {
                r_star: rstar_analytic(d, *a),
                method: ThresholdMethod::Analytic,
                d_used: d,
                residual: 0.0,
            })
        }
        _ => {
            // alpha >= alpha_min puts the root below the constant-alpha_min root
            let (alpha_min, _) = alpha.bounds(default_cap_domain(alpha))?;
            let r_cap = 2.0 * rstar_analytic(d, alpha_min) + 1.0;
            rstar_numeric(d, alpha, 1.0, r_cap)
        }
    }
}

fn default_cap_domain(alpha: &GrowthFunction) -> f64 {
    match alpha {
        GrowthFunction::Tabulated(knots) => knots[knots.len() - 1].0,
        _ => 1e3,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpreadingGuarantee {
    pub guaranteed: bool,
    pub r_star_max: f64,
    pub threshold: ThresholdResult,
}

/// Spreading holds for every realization when `H0 >= R*(d2)`.
pub fn spreading_guarantee(spec: &ModelSpec) -> Result<SpreadingGuarantee> {
    let threshold = rstar_for(spec.d2(), &spec.alpha)?;
    Ok(SpreadingGuarantee {
        guaranteed: spec.h0() >= threshold.r_star,
        r_star_max: threshold.r_star,
        threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Spreading,
    Vanishing,
    Undetermined,
}

impl Outcome {
    pub fn label(self) -> &'static str {
        match self {
            Outcome::Spreading => "spreading",
            Outcome::Vanishing => "vanishing",
            Outcome::Undetermined => "undetermined",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierSettings {
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Fraction of recorded levels forming the tail window.
    #[serde(default = "default_tail_fraction")]
    pub tail_fraction: f64,
}

fn default_tol() -> f64 {
    1e-4
}

fn default_tail_fraction() -> f64 {
    0.1
}

impl Default for ClassifierSettings {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            tail_fraction: default_tail_fraction(),
        }
    }
}

impl ClassifierSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::config("classify.tol", "tol must be > 0"));
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction <= 1.0) {
            return Err(Error::config(
                "classify.tail_fraction",
                "tail fraction must lie in (0,1]",
            ));
        }
        Ok(())
    }

    pub fn tail_window(&self, levels: usize) -> usize {
        ((levels as f64 * self.tail_fraction).ceil() as usize).clamp(2.min(levels), levels)
    }

    pub fn classify(&self, result: &RealizationResult) -> Result<Outcome> {
        classify_outcome(result, self.tail_window(result.max_population.len()), self.tol)
    }
}

/// Labels a finished run from its recorded maximum population and front.
///
/// Spreading: over the tail window the maximum population does not fall by
/// more than `tol`, stays above `tol`, and the front moves faster than `tol`.
/// Vanishing: the final maximum population is below `tol`.
pub fn classify_outcome(result: &RealizationResult, tail_window: usize, tol: f64) -> Result<Outcome> {
    let maxima = &result.max_population;
    let fronts = &result.front.values;
    if tail_window < 2 || maxima.len() < tail_window || fronts.len() != maxima.len() {
        return Err(Error::InsufficientData(format!(
            "classification needs a tail window of at least 2 recorded levels, got window {tail_window} over {} levels",
            maxima.len()
        )));
    }
    let last = maxima[maxima.len() - 1];
    if last < tol {
        return Ok(Outcome::Vanishing);
    }
    let start = maxima.len() - tail_window;
    let tail = &maxima[start..];
    let trend_holds = tail.windows(2).all(|w| w[1] >= w[0] - tol) && tail[tail.len() - 1] >= tail[0] - tol;
    let above = tail.iter().all(|&m| m > tol);
    let span = (tail_window - 1) as f64 * result.front.dt;
    let velocity = if span > 0.0 {
        (fronts[fronts.len() - 1] - fronts[start]) / span
    } else {
        0.0
    };
    if trend_holds && above && velocity > tol {
        Ok(Outcome::Spreading)
    } else {
        Ok(Outcome::Undetermined)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Distribution, InitialCondition, InitialProfile, Sample};
    use crate::solution::{Diagnostics, FrontTrajectory, Method};
    use proptest::prelude::*;

    fn variable_alpha() -> GrowthFunction {
        GrowthFunction::RationalAffine {
            p: 2.0,
            q: 3.0,
            s: 2.0,
            t: 2.0,
        }
    }

    #[test]
    fn analytic_values() {
        assert!((rstar_analytic(1.0, 1.0) - 2.40483).abs() < 1e-5);
        assert!((rstar_analytic(1.2, 1.0) - 2.6344).abs() < 5e-4);
        assert_eq!(rstar_analytic(4.0, 1.0), 2.0 * rstar_analytic(1.0, 1.0));
    }

    #[test]
    fn numeric_matches_analytic() {
        for d in [0.8, 1.0, 1.2] {
            let r = rstar_numeric(d, &GrowthFunction::Constant(1.0), 1.0, 10.0).unwrap();
            assert!(
                (r.r_star - rstar_analytic(d, 1.0)).abs() < 1e-4,
                "D = {d}: {}",
                r.r_star
            );
            assert!(r.residual < 1e-6);
            assert_eq!(r.method, ThresholdMethod::IvpRoot);
        }
    }

    #[test]
    fn numeric_root_is_scale_free() {
        let a = rstar_numeric(1.0, &variable_alpha(), 1.0, 10.0).unwrap();
        let b = rstar_numeric(1.0, &variable_alpha(), 17.0, 10.0).unwrap();
        assert!((a.r_star - b.r_star).abs() < 1e-10);
    }

    #[test]
    fn variable_alpha_is_bracketed() {
        let r = rstar_numeric(1.0, &variable_alpha(), 1.0, 10.0).unwrap().r_star;
        assert!(r > rstar_analytic(1.0, 1.5) && r < rstar_analytic(1.0, 1.0), "{r}");
    }

    #[test]
    fn missing_root_is_reported() {
        let err = rstar_numeric(1.0, &GrowthFunction::Constant(1.0), 1.0, 2.0).unwrap_err();
        assert!(matches!(err, Error::NoRootFound { .. }));
    }

    fn constant_spec(h0: f64) -> ModelSpec {
        ModelSpec::new(
            Distribution::truncated_normal(1.0, 0.1, 0.8, 1.2).unwrap(),
            Distribution::truncated_beta(2.0, 4.0, 1.6, 2.4).unwrap(),
            GrowthFunction::Constant(1.0),
            GrowthFunction::Constant(1.0),
            InitialCondition::new(InitialProfile::CosineBump, h0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn guarantee_cases() {
        let g = spreading_guarantee(&constant_spec(3.0)).unwrap();
        assert!(g.guaranteed);
        assert!((g.r_star_max - 2.6344).abs() < 5e-4);
        assert!(!spreading_guarantee(&constant_spec(2.0)).unwrap().guaranteed);
        let boundary = rstar_analytic(1.2, 1.0);
        assert!(spreading_guarantee(&constant_spec(boundary)).unwrap().guaranteed);
    }

    #[test]
    fn guarantee_for_variable_growth_uses_ivp() {
        let mut spec = constant_spec(3.0);
        spec.alpha = variable_alpha();
        let g = spreading_guarantee(&spec).unwrap();
        assert_eq!(g.threshold.method, ThresholdMethod::IvpRoot);
        assert!(g.r_star_max < rstar_analytic(1.2, 1.0));
    }

    fn synthetic(maxima: Vec<f64>, fronts: Vec<f64>) -> RealizationResult {
        RealizationResult {
            method: Method::FrontFixing,
            sample: Sample {
                diffusion: 1.0,
                eta: 1.0,
            },
            h: 0.02,
            k: 0.1,
            steps: maxima.len() - 1,
            profile: vec![],
            radii: vec![],
            front: FrontTrajectory {
                dt: 0.1,
                values: fronts,
            },
            max_population: maxima,
            node_count: 0,
            diagnostics: Diagnostics::default(),
            dropped_nodes: vec![],
        }
    }

    #[test]
    fn classifier_labels() {
        let n = 50;
        let zero = synthetic(vec![0.0; n], vec![2.0; n]);
        assert_eq!(
            ClassifierSettings::default().classify(&zero).unwrap(),
            Outcome::Vanishing
        );

        let growing = synthetic(
            (0..n).map(|i| 0.5 + 0.01 * i as f64).collect(),
            (0..n).map(|i| 2.0 + 0.1 * i as f64).collect(),
        );
        assert_eq!(
            ClassifierSettings::default().classify(&growing).unwrap(),
            Outcome::Spreading
        );

        let stalled = synthetic((0..n).map(|i| 0.5 - 0.005 * i as f64).collect(), vec![2.5; n]);
        assert_eq!(
            ClassifierSettings::default().classify(&stalled).unwrap(),
            Outcome::Undetermined
        );

        let short = synthetic(vec![1.0], vec![1.0]);
        assert!(ClassifierSettings::default().classify(&short).is_err());
    }

    #[test]
    fn tail_window_defaults_to_last_tenth() {
        let s = ClassifierSettings::default();
        assert_eq!(s.tail_window(1001), 101);
        assert_eq!(s.tail_window(5), 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn larger_growth_gives_smaller_threshold(d in 0.5f64..2.0, a in 0.5f64..2.0, gap in 0.01f64..1.0) {
            let b = a + gap;
            let ra = rstar_numeric(d, &GrowthFunction::Constant(a), 1.0, 20.0).unwrap().r_star;
            let rb = rstar_numeric(d, &GrowthFunction::Constant(b), 1.0, 20.0).unwrap().r_star;
            prop_assert!(ra >= rb);
        }

        #[test]
        fn threshold_grows_with_diffusion(d in 0.5f64..2.0, gap in 0.01f64..1.0) {
            let alpha = variable_alpha();
            let lo = rstar_numeric(d, &alpha, 1.0, 20.0).unwrap().r_star;
            let hi = rstar_numeric(d + gap, &alpha, 1.0, 20.0).unwrap().r_star;
            prop_assert!(hi >= lo);
        }

        #[test]
        fn pinched_growth_is_bracketed(d in 0.5f64..2.0, q in 1.1f64..4.0, t in 0.5f64..3.0) {
            // (t r + q t) / (t r + t) runs from q down to 1
            let alpha = GrowthFunction::RationalAffine { p: t, q: q * t, s: t, t };
            let r = rstar_numeric(d, &alpha, 1.0, 20.0).unwrap().r_star;
            prop_assert!(r >= rstar_analytic(d, q) - 1e-6);
            prop_assert!(r <= rstar_analytic(d, 1.0) + 1e-6);
        }
    }
}
