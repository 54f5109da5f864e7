//! Cross-method and convergence diagnostics.

use serde::Serialize;

use crate::ensemble::EnsembleStats;
use crate::error::{Error, Result};
use crate::solution::{Method, RealizationResult};

/// Natural cubic spline through strictly increasing knots.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl NaturalSpline {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n != y.len() {
            return Err(Error::InsufficientData(format!(
                "{} abscissae but {} values",
                n,
                y.len()
            )));
        }
        if n < 4 {
            return Err(Error::InsufficientData(format!(
                "a cubic spline needs at least 4 knots, got {n}"
            )));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InsufficientData(
                "spline knots must be strictly increasing".into(),
            ));
        }
        // Thomas algorithm on the interior second derivatives.
        let mut m = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for i in 1..n - 1 {
            let h0 = x[i] - x[i - 1];
            let h1 = x[i + 1] - x[i];
            diag[i] = 2.0 * (h0 + h1);
            rhs[i] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
            if i > 1 {
                let w = h0 / diag[i - 1];
                diag[i] -= w * h0;
                rhs[i] -= w * rhs[i - 1];
            }
        }
        for i in (1..n - 1).rev() {
            let upper = if i + 1 < n - 1 {
                (x[i + 1] - x[i]) * m[i + 1]
            } else {
                0.0
            };
            m[i] = (rhs[i] - upper) / diag[i];
        }
        Ok(Self { x, y, m })
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.x, &self.y)
    }

    /// Value at `t` inside the knot range.
    pub fn eval(&self, t: f64) -> Result<f64> {
        let (lo, hi) = (self.x[0], self.x[self.x.len() - 1]);
        if !(t >= lo && t <= hi) {
            return Err(Error::Extrapolation { r: t, lo, hi });
        }
        let i = self.x.partition_point(|&v| v <= t).clamp(1, self.x.len() - 1) - 1;
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        Ok(a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0)
    }
}

/// Resamples a front-tracking profile by the natural spline through its nodes
/// and `(front, 0)`. Queries at or beyond the front return 0.
pub fn spline_resample(radii: &[f64], values: &[f64], front: f64, queries: &[f64]) -> Result<Vec<f64>> {
    let mut x = radii.to_vec();
    let mut y = values.to_vec();
    x.push(front);
    y.push(0.0);
    let spline = NaturalSpline::new(x, y)?;
    queries
        .iter()
        .map(|&q| if q >= front { Ok(0.0) } else { spline.eval(q) })
        .collect()
}

/// Maximum over realizations and FF nodes `j < M` of `|u_FF - u_FT| / |u_FF|`,
/// with the FT profile resampled onto `r_j = z_j H_FF(T)`.
pub fn relerr_ff_ft(ff_runs: &[RealizationResult], ft_runs: &[RealizationResult]) -> Result<f64> {
    check_matched(ff_runs, ft_runs)?;
    let mut worst: f64 = 0.0;
    for (ff, ft) in ff_runs.iter().zip(ft_runs) {
        let m = ff.profile.len() - 1;
        let resampled = spline_resample(&ft.radii, &ft.profile, ft.final_front(), &ff.radii[..m])?;
        for (u_ff, u_ft) in ff.profile[..m].iter().zip(&resampled) {
            let rel = (u_ff - u_ft).abs() / u_ff.abs();
            if !rel.is_finite() {
                return Err(Error::InsufficientData(format!(
                    "front-fixing value {u_ff} admits no relative error"
                )));
            }
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

fn check_matched(ff_runs: &[RealizationResult], ft_runs: &[RealizationResult]) -> Result<()> {
    if ff_runs.len() != ft_runs.len() || ff_runs.is_empty() {
        return Err(Error::config(
            "relerr",
            format!(
                "realization sets differ in size: {} vs {}",
                ff_runs.len(),
                ft_runs.len()
            ),
        ));
    }
    for (l, (a, b)) in ff_runs.iter().zip(ft_runs).enumerate() {
        if a.method != Method::FrontFixing || b.method != Method::FrontTracking {
            return Err(Error::config(
                "relerr",
                format!("realization {l} pairs the wrong methods"),
            ));
        }
        if a.sample != b.sample {
            return Err(Error::config(
                "relerr",
                format!("realization {l} uses different samples"),
            ));
        }
    }
    Ok(())
}

/// Pointwise `|mu_a[H] - mu_b[H]|` and `|sigma_a[H] - sigma_b[H]|`.
pub fn absdev_front_moments(a: &EnsembleStats, b: &EnsembleStats) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.mean_h.len() != b.mean_h.len() || a.dt != b.dt {
        return Err(Error::config(
            "absdev",
            format!(
                "time grids differ: {} levels at dt {} vs {} levels at dt {}",
                a.mean_h.len(),
                a.dt,
                b.mean_h.len(),
                b.dt
            ),
        ));
    }
    let diff = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q).abs()).collect();
    Ok((diff(&a.mean_h, &b.mean_h), diff(&a.std_h, &b.std_h)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Quantity {
    U,
    H,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Moment {
    Mean,
    Std,
}

/// Infinity norm of the difference of one moment between two ensembles.
///
/// Grids may be nested: when one spacing is an integer multiple of the other
/// the finer sequence is subsampled onto the coarser one. Equal spacings with
/// different lengths (front-tracking profiles) are zero-padded.
pub fn pairwise_error(a: &EnsembleStats, b: &EnsembleStats, quantity: Quantity, moment: Moment) -> Result<f64> {
    let (xa, xb, sa, sb) = match (quantity, moment) {
        (Quantity::U, Moment::Mean) => (&a.mean_u, &b.mean_u, a.h, b.h),
        (Quantity::U, Moment::Std) => (&a.std_u, &b.std_u, a.h, b.h),
        (Quantity::H, Moment::Mean) => (&a.mean_h, &b.mean_h, a.dt, b.dt),
        (Quantity::H, Moment::Std) => (&a.std_h, &b.std_h, a.dt, b.dt),
    };
    let pad = quantity == Quantity::U && a.method == Method::FrontTracking;
    let (coarse, fine, stride) = nesting(xa, xb, sa, sb)?;
    let coarse_len = if pad {
        coarse.len().max(fine.len().div_ceil(stride))
    } else {
        if (coarse.len() - 1) * stride != fine.len() - 1 {
            return Err(Error::config(
                "pairwise",
                format!("grids of {} and {} points are not nested", coarse.len(), fine.len()),
            ));
        }
        coarse.len()
    };
    let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    Ok((0..coarse_len)
        .map(|i| (at(coarse, i) - at(fine, i * stride)).abs())
        .fold(0.0, f64::max))
}

fn nesting<'a>(xa: &'a [f64], xb: &'a [f64], sa: f64, sb: f64) -> Result<(&'a [f64], &'a [f64], usize)> {
    if xa.is_empty() || xb.is_empty() {
        return Err(Error::InsufficientData("empty moment sequence".into()));
    }
    let (coarse, fine, ratio) = if sa >= sb { (xa, xb, sa / sb) } else { (xb, xa, sb / sa) };
    let stride = ratio.round();
    if !ratio.is_finite() || stride < 1.0 || (ratio - stride).abs() > 1e-9 * ratio {
        return Err(Error::config(
            "pairwise",
            format!("spacings {sa} and {sb} are not nested"),
        ));
    }
    Ok((coarse, fine, stride as usize))
}

/// One row of the mean-radius map at the final time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanRadiusPoint {
    pub j: usize,
    pub r_bar: f64,
    pub mean: f64,
    pub std: f64,
}

/// Assigns the FF moments at node `j` to the radius `(j/M) mu[H(T)]`.
pub fn mean_radius_map(stats: &EnsembleStats) -> Result<Vec<MeanRadiusPoint>> {
    if stats.method != Method::FrontFixing {
        return Err(Error::config("mean_radius_map", "requires a front-fixing ensemble"));
    }
    let m = stats.mean_u.len() - 1;
    let front = *stats
        .mean_h
        .last()
        .ok_or_else(|| Error::InsufficientData("no front moments recorded".into()))?;
    Ok((0..=m)
        .map(|j| MeanRadiusPoint {
            j,
            r_bar: j as f64 / m as f64 * front,
            mean: stats.mean_u[j],
            std: stats.std_u[j],
        })
        .collect())
}

/// Counts of `values` in `bins` equal-width bins over `[lo, hi]`; the last
/// bin is closed. A zero-width range collapses to one bin.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<(f64, f64, usize)> {
    if !(hi > lo) {
        return vec![(lo, hi, values.iter().filter(|&&v| v == lo).count())];
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        if v >= lo && v <= hi {
            let b = (((v - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(b, c)| {
            (
                lo + b as f64 * width,
                if b + 1 == bins { hi } else { lo + (b + 1) as f64 * width },
                c,
            )
        })
        .collect()
}

/// A named error figure for one comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    pub metric: String,
    pub pair: (f64, f64),
    pub value: f64,
    pub horizon: f64,
    pub case: String,
}
