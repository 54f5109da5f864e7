//! Problem instance: random parameters, growth functions, initial data and
//! the derived constants that feed both finite-difference stability bounds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution as _, Normal};
use statrs::distribution::{ContinuousCDF, Normal as NormalCdf};

use crate::error::{Error, Result};

/// Truncated normal supports whose acceptance mass falls below this are rejected.
const MIN_ACCEPTANCE: f64 = 1e-3;

/// Points used when bounds must be found by scanning.
const SCAN_POINTS: usize = 10_000;

/// A bounded random parameter.
#[derive(Debug, Clone, PartialEq)]
pub enum Distribution {
    /// Degenerate point mass.
    Point(f64),
    /// Normal(mean, std) conditioned on `[lo, hi]`, sampled by rejection.
    TruncatedNormal { mean: f64, std: f64, lo: f64, hi: f64 },
    /// Beta(a, b) mapped affinely onto `[lo, hi]`.
    TruncatedBeta { a: f64, b: f64, lo: f64, hi: f64 },
}

impl Distribution {
    pub fn point(value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::config("value", "point mass must be finite"));
        }
        Ok(Distribution::Point(value))
    }

    pub fn truncated_normal(mean: f64, std: f64, lo: f64, hi: f64) -> Result<Self> {
        check_interval(lo, hi)?;
        if !(std >= 0.0) || !std.is_finite() {
            return Err(Error::config("std", "scale must be finite and >= 0"));
        }
        if !mean.is_finite() {
            return Err(Error::config("mean", "mean must be finite"));
        }
        if std == 0.0 {
            if mean < lo || mean > hi {
                return Err(Error::config("mean", "zero-scale normal must sit inside its support"));
            }
        } else {
            let cdf = NormalCdf::new(mean, std).map_err(|e| Error::config("std", e.to_string()))?;
            let mass = cdf.cdf(hi) - cdf.cdf(lo);
            if mass < MIN_ACCEPTANCE {
                return Err(Error::config(
                    "lo",
                    format!("support [{lo}, {hi}] carries only {mass:e} of the normal mass"),
                ));
            }
        }
        Ok(Distribution::TruncatedNormal { mean, std, lo, hi })
    }

    pub fn truncated_beta(a: f64, b: f64, lo: f64, hi: f64) -> Result<Self> {
        check_interval(lo, hi)?;
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::config("a", "beta shape must be > 0"));
        }
        if !(b > 0.0) || !b.is_finite() {
            return Err(Error::config("b", "beta shape must be > 0"));
        }
        Ok(Distribution::TruncatedBeta { a, b, lo, hi })
    }

    /// Support interval `[lo, hi]`; both ends equal the value for a point mass.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Distribution::Point(v) => (v, v),
            Distribution::TruncatedNormal { lo, hi, .. } | Distribution::TruncatedBeta { lo, hi, .. } => (lo, hi),
        }
    }

    /// True when every draw returns the same value.
    pub fn is_degenerate(&self) -> bool {
        match *self {
            Distribution::Point(_) => true,
            Distribution::TruncatedNormal { std, .. } => std == 0.0,
            Distribution::TruncatedBeta { .. } => false,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Distribution::Point(v) => v,
            Distribution::TruncatedNormal { mean, std, lo, hi } => {
                if std == 0.0 {
                    return mean;
                }
                let normal = Normal::new(mean, std).expect("validated at construction");
                loop {
                    let x = normal.sample(rng);
                    if (lo..=hi).contains(&x) {
                        return x;
                    }
                }
            }
            Distribution::TruncatedBeta { a, b, lo, hi } => {
                let beta = Beta::new(a, b).expect("validated at construction");
                let x: f64 = beta.sample(rng);
                (lo + (hi - lo) * x).clamp(lo, hi)
            }
        }
    }
}

fn check_interval(lo: f64, hi: f64) -> Result<()> {
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::config("lo", "support endpoints must be finite"));
    }
    if lo >= hi {
        return Err(Error::config(
            "hi",
            format!("support requires lo < hi, got [{lo}, {hi}]"),
        ));
    }
    Ok(())
}

/// Intrinsic growth rate or crowding coefficient as a function of radius.
#[derive(Debug, Clone, PartialEq)]
pub enum GrowthFunction {
    Constant(f64),
    /// `(p r + q) / (s r + t)`.
    RationalAffine {
        p: f64,
        q: f64,
        s: f64,
        t: f64,
    },
    /// Sorted `(r, value)` knots, linearly interpolated, no extrapolation.
    Tabulated(Vec<(f64, f64)>),
}

impl GrowthFunction {
    pub fn tabulated(knots: Vec<(f64, f64)>) -> Result<Self> {
        check_knots(&knots, "knots")?;
        Ok(GrowthFunction::Tabulated(knots))
    }

    pub fn eval(&self, r: f64) -> Result<f64> {
        match self {
            GrowthFunction::Constant(v) => Ok(*v),
            GrowthFunction::RationalAffine { p, q, s, t } => Ok((p * r + q) / (s * r + t)),
            GrowthFunction::Tabulated(knots) => interpolate(knots, r),
        }
    }

    /// `(inf, sup)` over `[0, r_max]`, or over `[0, inf)` for a rational with
    /// a finite limit.
    pub fn bounds(&self, r_max: f64) -> Result<(f64, f64)> {
        let (lo, hi) = match self {
            GrowthFunction::Constant(v) => (*v, *v),
            GrowthFunction::RationalAffine { .. } => {
                let (a, b) = self.rational_ends(r_max)?;
                (a.min(b), a.max(b))
            }
            GrowthFunction::Tabulated(knots) => {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for v in [self.eval(0.0)?, self.eval(r_max)?]
                    .into_iter()
                    .chain(knots.iter().filter(|(r, _)| (0.0..=r_max).contains(r)).map(|&(_, v)| v))
                {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                (lo, hi)
            }
        };
        if !(lo > 0.0) || !hi.is_finite() {
            return Err(Error::ModelViolation(format!(
                "growth function must be positive and bounded on [0, {r_max}], got range [{lo}, {hi}]"
            )));
        }
        Ok((lo, hi))
    }

    /// Values at r = 0 and at the far end of the domain: the limit r -> inf when
    /// the rational is bounded (s != 0), else r = r_max.
    fn rational_ends(&self, r_max: f64) -> Result<(f64, f64)> {
        let GrowthFunction::RationalAffine { p, q, s, t } = *self else {
            unreachable!()
        };
        let pole_in_domain = if s != 0.0 { -t / s >= 0.0 } else { t == 0.0 };
        if pole_in_domain {
            return Err(Error::ModelViolation(format!(
                "rational growth function ({p} r + {q}) / ({s} r + {t}) has a pole on the working domain"
            )));
        }
        let far = if s != 0.0 { p / s } else { self.eval(r_max)? };
        Ok((q / t, far))
    }

    fn bounded_at_infinity(&self) -> bool {
        match self {
            GrowthFunction::Constant(_) => true,
            GrowthFunction::RationalAffine { s, .. } => *s != 0.0,
            GrowthFunction::Tabulated(_) => false,
        }
    }

    /// Numerator and denominator coefficients `[c0, c1]` of the affine form.
    fn affine_parts(&self) -> Option<([f64; 2], [f64; 2])> {
        match *self {
            GrowthFunction::Constant(v) => Some(([v, 0.0], [1.0, 0.0])),
            GrowthFunction::RationalAffine { p, q, s, t } => Some(([q, p], [t, s])),
            GrowthFunction::Tabulated(_) => None,
        }
    }

    fn knots(&self) -> &[(f64, f64)] {
        match self {
            GrowthFunction::Tabulated(k) => k,
            _ => &[],
        }
    }
}

fn check_knots(knots: &[(f64, f64)], key: &str) -> Result<()> {
    if knots.len() < 2 {
        return Err(Error::config(key, "at least two knots are required"));
    }
    if knots.iter().any(|(r, v)| !r.is_finite() || !v.is_finite()) {
        return Err(Error::config(key, "knots must be finite"));
    }
    if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::config(key, "knot radii must be strictly increasing"));
    }
    Ok(())
}

fn interpolate(knots: &[(f64, f64)], r: f64) -> Result<f64> {
    let (lo, hi) = (knots[0].0, knots[knots.len() - 1].0);
    if !(lo..=hi).contains(&r) {
        return Err(Error::Extrapolation { r, lo, hi });
    }
    let idx = knots.partition_point(|&(x, _)| x <= r);
    if idx >= knots.len() {
        return Ok(knots[knots.len() - 1].1);
    }
    let (x0, y0) = knots[idx - 1];
    let (x1, y1) = knots[idx];
    Ok(y0 + (y1 - y0) * (r - x0) / (x1 - x0))
}

/// Shape of the initial population density.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialProfile {
    /// `cos(pi r / (2 H0))`
    CosineBump,
    /// `1 - (r / H0)^2`
    ParabolicBump,
    /// Linear interpolation through `(r, value)` knots spanning `[0, H0]`.
    Tabulated(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialCondition {
    profile: InitialProfile,
    h0: f64,
}

impl InitialCondition {
    pub fn new(profile: InitialProfile, h0: f64) -> Result<Self> {
        if !(h0 > 0.0) || !h0.is_finite() {
            return Err(Error::config("model.H0", "initial front radius must be > 0"));
        }
        if let InitialProfile::Tabulated(knots) = &profile {
            check_knots(knots, "model.u0.knots")?;
            let (first, last) = (knots[0], knots[knots.len() - 1]);
            if first.0 != 0.0 || (last.0 - h0).abs() > 1e-12 * h0 {
                return Err(Error::config("model.u0.knots", "knots must span exactly [0, H0]"));
            }
            if last.1 != 0.0 {
                return Err(Error::config("model.u0.knots", "u0(H0) must be 0"));
            }
            if knots[..knots.len() - 1].iter().any(|&(_, v)| !(v > 0.0)) {
                return Err(Error::config("model.u0.knots", "u0 must be positive on [0, H0)"));
            }
        }
        Ok(Self { profile, h0 })
    }

    pub fn h0(&self) -> f64 {
        self.h0
    }

    pub fn profile(&self) -> &InitialProfile {
        &self.profile
    }

    /// Initial density; zero beyond the initial front.
    pub fn eval(&self, r: f64) -> f64 {
        if r >= self.h0 {
            return 0.0;
        }
        match &self.profile {
            InitialProfile::CosineBump => (std::f64::consts::PI * r / (2.0 * self.h0)).cos(),
            InitialProfile::ParabolicBump => 1.0 - (r / self.h0).powi(2),
            InitialProfile::Tabulated(knots) => interpolate(knots, r.max(0.0)).unwrap_or(0.0),
        }
    }

    /// `u0'(H0)`.
    pub fn slope_at_front(&self) -> f64 {
        match &self.profile {
            InitialProfile::CosineBump => -std::f64::consts::PI / (2.0 * self.h0),
            InitialProfile::ParabolicBump => -2.0 / self.h0,
            InitialProfile::Tabulated(knots) => {
                let n = knots.len();
                let (x0, y0) = knots[n - 2];
                let (x1, y1) = knots[n - 1];
                (y1 - y0) / (x1 - x0)
            }
        }
    }

    /// `max u0` on `[0, H0]`.
    pub fn max_value(&self) -> f64 {
        match &self.profile {
            InitialProfile::CosineBump | InitialProfile::ParabolicBump => 1.0,
            InitialProfile::Tabulated(knots) => knots.iter().map(|k| k.1).fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// One sampled realization of the random parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub diffusion: f64,
    pub eta: f64,
}

/// Full problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub diffusion: Distribution,
    pub eta: Distribution,
    pub alpha: GrowthFunction,
    pub beta: GrowthFunction,
    pub initial: InitialCondition,
}

impl ModelSpec {
    pub fn new(
        diffusion: Distribution,
        eta: Distribution,
        alpha: GrowthFunction,
        beta: GrowthFunction,
        initial: InitialCondition,
    ) -> Result<Self> {
        if !(diffusion.support().0 > 0.0) {
            return Err(Error::config("model.D", "diffusion lower bound d1 must be > 0"));
        }
        if !(eta.support().0 > 0.0) {
            return Err(Error::config("model.eta", "lower bound eta0 must be > 0"));
        }
        Ok(Self {
            diffusion,
            eta,
            alpha,
            beta,
            initial,
        })
    }

    pub fn d1(&self) -> f64 {
        self.diffusion.support().0
    }

    pub fn d2(&self) -> f64 {
        self.diffusion.support().1
    }

    pub fn eta0(&self) -> f64 {
        self.eta.support().0
    }

    pub fn h0(&self) -> f64 {
        self.initial.h0()
    }

    /// Default scan window for growth-function bounds: H0 plus ten H0 of travel.
    pub fn default_r_max(&self) -> f64 {
        11.0 * self.h0()
    }

    /// Draws `(D, eta)` in that order from `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Sample {
        let diffusion = self.diffusion.sample(rng);
        let eta = self.eta.sample(rng);
        Sample { diffusion, eta }
    }

    /// The only possible sample when both parameters are point masses.
    pub fn point_sample(&self) -> Option<Sample> {
        match (&self.diffusion, &self.eta) {
            (Distribution::Point(d), Distribution::Point(e)) => Some(Sample { diffusion: *d, eta: *e }),
            _ => None,
        }
    }
}

/// Independent random stream for realization `index` under `seed`.
pub fn realization_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Bounds on the growth data and the initial profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedConstants {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// sup alpha/beta
    pub c0: f64,
    /// inf alpha/beta
    pub cm: f64,
    /// max u0
    pub m0: f64,
    /// max(m0, c0)
    pub p0: f64,
}

pub fn derive_constants(spec: &ModelSpec, r_max: f64) -> Result<DerivedConstants> {
    if !(r_max > 0.0) || !r_max.is_finite() {
        return Err(Error::config("model.r_max", "working domain r_max must be > 0"));
    }
    let (alpha1, alpha2) = spec.alpha.bounds(r_max)?;
    let (beta1, beta2) = spec.beta.bounds(r_max)?;
    let (cm, c0) = ratio_bounds(&spec.alpha, &spec.beta, r_max)?;
    let m0 = spec.initial.max_value();
    Ok(DerivedConstants {
        alpha1,
        alpha2,
        beta1,
        beta2,
        c0,
        cm,
        m0,
        p0: m0.max(c0),
    })
}

/// `(inf, sup)` of alpha/beta. Closed form for affine rationals: the ratio of
/// two affine rationals is a ratio of quadratics whose derivative numerator is
/// itself quadratic, so extrema sit at the domain ends or at its real roots.
fn ratio_bounds(alpha: &GrowthFunction, beta: &GrowthFunction, r_max: f64) -> Result<(f64, f64)> {
    let mut candidates = Vec::new();
    match (alpha.affine_parts(), beta.affine_parts()) {
        (Some((an, ad)), Some((bn, bd))) => {
            // alpha/beta = (an * bd) / (ad * bn)
            let num = poly_mul(an, bd);
            let den = poly_mul(ad, bn);
            let infinite = alpha.bounded_at_infinity() && beta.bounded_at_infinity();
            let end = if infinite { f64::INFINITY } else { r_max };
            let eval = |r: f64| -> Result<f64> { Ok(alpha.eval(r)? / beta.eval(r)?) };
            candidates.push(eval(0.0)?);
            if infinite {
                let (_, a_far) = far_value(alpha, r_max)?;
                let (_, b_far) = far_value(beta, r_max)?;
                candidates.push(a_far / b_far);
            } else {
                candidates.push(eval(r_max)?);
            }
            // derivative numerator: c2 r^2 + c1 r + c0
            let c2 = num[2] * den[1] - num[1] * den[2];
            let c1 = 2.0 * (num[2] * den[0] - num[0] * den[2]);
            let c0 = num[1] * den[0] - num[0] * den[1];
            for root in quadratic_roots(c2, c1, c0) {
                if root > 0.0 && root < end {
                    candidates.push(eval(root)?);
                }
            }
        }
        _ => {
            for i in 0..=SCAN_POINTS {
                let r = r_max * i as f64 / SCAN_POINTS as f64;
                candidates.push(alpha.eval(r)? / beta.eval(r)?);
            }
            for &(r, _) in alpha.knots().iter().chain(beta.knots()) {
                if (0.0..=r_max).contains(&r) {
                    candidates.push(alpha.eval(r)? / beta.eval(r)?);
                }
            }
        }
    }
    let lo = candidates.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = candidates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((lo, hi))
}

fn far_value(g: &GrowthFunction, r_max: f64) -> Result<(f64, f64)> {
    match g {
        GrowthFunction::Constant(v) => Ok((*v, *v)),
        GrowthFunction::RationalAffine { .. } => g.rational_ends(r_max),
        GrowthFunction::Tabulated(_) => Ok((g.eval(0.0)?, g.eval(r_max)?)),
    }
}

fn poly_mul(a: [f64; 2], b: [f64; 2]) -> [f64; 3] {
    [a[0] * b[0], a[0] * b[1] + a[1] * b[0], a[1] * b[1]]
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return Vec::new();
    }
    if a.abs() <= 1e-14 * scale {
        if b.abs() <= 1e-14 * scale {
            return Vec::new();
        }
        return vec![-c / b];
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    let sq = disc.sqrt();
    let q = -0.5 * (b + b.signum() * sq);
    let mut roots = vec![q / a];
    if q != 0.0 {
        roots.push(c / q);
    }
    roots
}
