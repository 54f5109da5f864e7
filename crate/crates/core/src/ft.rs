//! Front-tracking scheme on a fixed physical grid `r_j = j h`.
//!
//! The front sits at `H = (i + p) h`, where `i` is the last interior node and
//! `p` the fractional distance to the front. Nodes `1..i-1` use the centred
//! stencil; node `i` and the Stefan condition use the quadratic through
//! `(r_{i-1}, u_{i-1})`, `(r_i, u_i)`, `(H, 0)`. When the front crosses into
//! the next cell a node is activated and seeded by interpolation.

use crate::error::{Error, Result};
use crate::ff::{auto_steps, max_of, Coefficients};
use crate::model::{DerivedConstants, ModelSpec, Sample};
use crate::solution::{
    record_level, trajectory_dt, Diagnostics, DroppedNode, FrontTrajectory, Method, RealizationResult, Recording,
};

pub const DEFAULT_EPS: f64 = 0.5;

/// The three step-size bounds; the scheme needs `k <= min`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FtLimits {
    /// Front advances less than one cell per step.
    pub front_speed: f64,
    /// Interior diagonal coefficient stays non-negative.
    pub interior: f64,
    /// Last interior coefficient stays non-negative for `p > eps`.
    pub last_interior: f64,
}

impl FtLimits {
    pub fn min(&self) -> f64 {
        self.front_speed.min(self.interior).min(self.last_interior)
    }
}

pub fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::config("ft.eps", "eps must lie in (0,1)"));
    }
    Ok(())
}

pub fn ft_stability_terms(
    spec: &ModelSpec,
    consts: &DerivedConstants,
    h: f64,
    i0: usize,
    eps: f64,
) -> Result<FtLimits> {
    check_eps(eps)?;
    let d2 = spec.d2();
    let slope = spec.initial.slope_at_front().abs();
    let front_speed = if slope == 0.0 {
        f64::INFINITY
    } else {
        h / (spec.eta0() * slope)
    };
    let interior = h * h / (2.0 * d2 + (consts.alpha1 - consts.beta2 * consts.p0).abs() * h * h);
    let i0 = i0 as f64;
    let last_interior = eps * h * h * i0 / (d2 * (2.0 * i0 + 1.0 - eps));
    Ok(FtLimits {
        front_speed,
        interior,
        last_interior,
    })
}

pub fn ft_stability_limit(spec: &ModelSpec, consts: &DerivedConstants, h: f64, i0: usize, eps: f64) -> Result<f64> {
    Ok(ft_stability_terms(spec, consts, h, i0, eps)?.min())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FtGrid {
    m: usize,
    n: usize,
    t: f64,
    h0: f64,
    eps: f64,
}

impl FtGrid {
    pub fn new(spec: &ModelSpec, m: usize, n: usize, t: f64, eps: f64) -> Result<Self> {
        check_eps(eps)?;
        if m < 4 {
            return Err(Error::config("grid.M", "front-tracking needs M >= 4"));
        }
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::config("grid.T", "horizon must be finite and >= 0"));
        }
        if n == 0 && t > 0.0 {
            return Err(Error::config("grid.N", "N must be >= 1 for a positive horizon"));
        }
        Ok(Self {
            m,
            n,
            t,
            h0: spec.h0(),
            eps,
        })
    }

    pub fn auto(spec: &ModelSpec, consts: &DerivedConstants, m: usize, t: f64, eps: f64) -> Result<Self> {
        let h = spec.h0() / m as f64;
        let limit = ft_stability_limit(spec, consts, h, m - 1, eps)?;
        Self::new(spec, m, auto_steps(t, limit), t, eps)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> f64 {
        self.t
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn h(&self) -> f64 {
        self.h0 / self.m as f64
    }

    pub fn k(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.t / self.n as f64
        }
    }
}

/// Active nodal values plus the fractional front cell.
#[derive(Debug, Clone, PartialEq)]
pub struct FtState {
    /// `u[0..=i]`
    u: Vec<f64>,
    i: usize,
    p: f64,
    h: f64,
    k: f64,
    eps: f64,
    n: usize,
}

/// What happened to the front during one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepEvents {
    pub delta: f64,
    pub clamped: bool,
    pub node_added: bool,
    /// Value that left the stencil on a rebase.
    pub dropped: Option<f64>,
}

impl FtState {
    pub fn new(u: Vec<f64>, p: f64, h: f64, k: f64, eps: f64) -> Result<Self> {
        check_eps(eps)?;
        if u.len() < 3 {
            return Err(Error::DomainExhausted {
                index: u.len().saturating_sub(1),
            });
        }
        if !(p > 0.0 && p <= 1.0 + eps) {
            return Err(Error::Contract { p, eps });
        }
        let i = u.len() - 1;
        Ok(Self {
            u,
            i,
            p,
            h,
            k,
            eps,
            n: 0,
        })
    }

    /// `u_j = u0(j h)` for `j < M`, `i = M - 1`, `p = 1`.
    pub fn initial(spec: &ModelSpec, grid: &FtGrid) -> Result<Self> {
        let h = grid.h();
        let u: Vec<f64> = (0..grid.m()).map(|j| spec.initial.eval(j as f64 * h)).collect();
        if u.iter().all(|&x| x == 0.0) {
            return Err(Error::config("model.u0", "initial population is identically zero"));
        }
        Self::new(u, 1.0, h, grid.k(), grid.eps())
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn last_interior(&self) -> usize {
        self.i
    }

    pub fn fraction(&self) -> f64 {
        self.p
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn level(&self) -> usize {
        self.n
    }

    /// `H = (i + p) h`.
    pub fn front(&self) -> f64 {
        (self.i as f64 + self.p) * self.h
    }

    /// Origin, interior nodes and the front point.
    pub fn node_count(&self) -> usize {
        self.i + 2
    }

    pub fn interior_coefficients(&self, d: f64, alpha_j: f64, beta_j: f64, j: usize) -> Coefficients {
        ft_interior_coefficients(d, self.k, self.h, j, alpha_j, beta_j, self.u[j])
    }

    /// Centred update at node `j` in `1..i`.
    pub fn interior_update(&self, d: f64, alpha_j: f64, beta_j: f64, j: usize) -> f64 {
        debug_assert!(j >= 1 && j < self.i);
        let c = self.interior_coefficients(d, alpha_j, beta_j, j);
        c.a * self.u[j - 1] + c.b * self.u[j] + c.c * self.u[j + 1]
    }

    /// Update at the last interior node from the quadratic through the front.
    pub fn last_interior_update(&self, d: f64, alpha_i: f64, beta_i: f64) -> Result<f64> {
        if self.p <= self.eps {
            return Err(Error::Contract {
                p: self.p,
                eps: self.eps,
            });
        }
        Ok(last_interior_formula(
            self.u[self.i - 1],
            self.u[self.i],
            self.i,
            self.p,
            d,
            self.k,
            self.h,
            alpha_i,
            beta_i,
        ))
    }

    /// Discrete Stefan condition: returns `(Delta, H^{n+1})` with
    /// `H^{n+1} = (i + Delta) h`.
    pub fn front_advance(&self, eta: f64) -> Result<(f64, f64)> {
        if self.p <= self.eps {
            return Err(Error::Contract {
                p: self.p,
                eps: self.eps,
            });
        }
        let delta = front_advance_formula(self.u[self.i - 1], self.u[self.i], self.p, eta, self.k, self.h);
        if !delta.is_finite() {
            return Err(Error::NonFinite {
                step: self.n,
                what: "front advance",
            });
        }
        if delta > 2.0 + self.eps {
            return Err(Error::StepSizeViolation { step: self.n, delta });
        }
        Ok((delta, (self.i as f64 + delta) * self.h))
    }

    /// Shifts the last interior index back one node when `0 < p <= eps`.
    /// Returns the value that left the stencil.
    pub fn rebase(&mut self) -> Result<f64> {
        if self.i < 3 {
            return Err(Error::DomainExhausted { index: self.i });
        }
        let dropped = self.u.pop().expect("i >= 3");
        self.i -= 1;
        self.p += 1.0;
        Ok(dropped)
    }

    /// Advances one level. `scratch` is reused between calls.
    pub fn step(&mut self, spec: &ModelSpec, sample: Sample, scratch: &mut Vec<f64>) -> Result<StepEvents> {
        let d = sample.diffusion;
        let i = self.i;
        scratch.clear();
        scratch.resize(i + 1, 0.0);
        for j in 1..i {
            let r = j as f64 * self.h;
            scratch[j] = self.interior_update(d, spec.alpha.eval(r)?, spec.beta.eval(r)?, j);
        }
        let r_i = i as f64 * self.h;
        scratch[i] = self.last_interior_update(d, spec.alpha.eval(r_i)?, spec.beta.eval(r_i)?)?;
        scratch[0] = (4.0 * scratch[1] - scratch[2]) / 3.0;

        let (raw, _) = self.front_advance(sample.eta)?;
        let clamped = raw < self.p;
        let delta = raw.max(self.p);

        let mut node_added = false;
        if delta > 1.0 + self.eps {
            let seeded = new_node_value(delta, scratch[i - 1], scratch[i]);
            scratch.push(seeded);
            self.i += 1;
            self.p = delta - 1.0;
            node_added = true;
        } else {
            self.p = delta;
        }

        for (j, &x) in scratch.iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::NonFinite {
                    step: self.n,
                    what: "population",
                });
            }
            if x < 0.0 {
                return Err(Error::InvariantViolation {
                    step: self.n,
                    message: format!("negative density {x:e} at node {j} under a compliant step size"),
                });
            }
        }
        std::mem::swap(&mut self.u, scratch);

        let dropped = if self.p <= self.eps { Some(self.rebase()?) } else { None };
        self.n += 1;
        Ok(StepEvents {
            delta,
            clamped,
            node_added,
            dropped,
        })
    }
}

pub fn ft_interior_coefficients(d: f64, k: f64, h: f64, j: usize, alpha_j: f64, beta_j: f64, u_j: f64) -> Coefficients {
    let diffusion = k * d / (h * h);
    let radial = 1.0 / (2.0 * j as f64);
    Coefficients {
        a: diffusion * (1.0 - radial),
        b: 1.0 + k * (-2.0 * d / (h * h) + alpha_j - beta_j * u_j),
        c: diffusion * (1.0 + radial),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn last_interior_formula(
    u_prev: f64,
    u_i: f64,
    i: usize,
    p: f64,
    d: f64,
    k: f64,
    h: f64,
    alpha_i: f64,
    beta_i: f64,
) -> f64 {
    let i = i as f64;
    let bracket = u_prev / (p + 1.0) * (2.0 - p / i) - u_i / p * (2.0 + (1.0 - p) / i);
    u_i + k * (d / (h * h) * bracket + u_i * (alpha_i - beta_i * u_i))
}

pub fn front_advance_formula(u_prev: f64, u_i: f64, p: f64, eta: f64, k: f64, h: f64) -> f64 {
    p + k * eta / (h * h) * ((p + 1.0) / p * u_i - p / (p + 1.0) * u_prev)
}

/// Seed for a newly activated node: the quadratic through `r_{i-1}`, `r_i`
/// and the new front when that is positive, else the line through `r_i` and
/// the front.
pub fn new_node_value(delta: f64, u_prev: f64, u_i: f64) -> f64 {
    let quadratic = (1.0 - delta) / (1.0 + delta) * u_prev + 2.0 * (delta - 1.0) / delta * u_i;
    if quadratic > 0.0 {
        quadratic
    } else {
        ((1.0 - 1.0 / delta) * u_i).max(0.0)
    }
}

pub fn ft_solve(
    spec: &ModelSpec,
    consts: &DerivedConstants,
    sample: Sample,
    grid: &FtGrid,
) -> Result<RealizationResult> {
    ft_solve_with(spec, consts, sample, grid, Recording::EveryLevel)
}

pub fn ft_solve_with(
    spec: &ModelSpec,
    consts: &DerivedConstants,
    sample: Sample,
    grid: &FtGrid,
    recording: Recording,
) -> Result<RealizationResult> {
    let k = grid.k();
    let h = grid.h();
    if grid.n() > 0 {
        let limit = ft_stability_limit(spec, consts, h, grid.m() - 1, grid.eps())?;
        if !(k <= limit) {
            return Err(Error::Stability {
                method: "front-tracking",
                k,
                limit,
            });
        }
    }
    let mut state = FtState::initial(spec, grid)?;
    let steps = grid.n();
    let mut scratch = Vec::with_capacity(2 * grid.m());
    let mut fronts = Vec::new();
    let mut maxima = Vec::new();
    let mut diagnostics = Diagnostics::default();
    let mut dropped_nodes = Vec::new();
    record_level(
        recording,
        0,
        steps,
        state.front(),
        max_of(state.u()),
        &mut fronts,
        &mut maxima,
    );
    for n in 1..=steps {
        let events = state.step(spec, sample, &mut scratch)?;
        if events.clamped {
            diagnostics.clamped_retreats += 1;
        }
        if events.node_added {
            diagnostics.nodes_added += 1;
        }
        if let Some(value) = events.dropped {
            diagnostics.rebases += 1;
            dropped_nodes.push(DroppedNode {
                step: n,
                index: state.last_interior() + 1,
                value,
            });
        }
        record_level(
            recording,
            n,
            steps,
            state.front(),
            max_of(state.u()),
            &mut fronts,
            &mut maxima,
        );
    }
    let radii = (0..state.u().len()).map(|j| j as f64 * h).collect();
    Ok(RealizationResult {
        method: Method::FrontTracking,
        sample,
        h,
        k,
        steps,
        node_count: state.node_count(),
        profile: state.u,
        radii,
        front: FrontTrajectory {
            dt: trajectory_dt(recording, k, steps),
            values: fronts,
        },
        max_population: maxima,
        diagnostics,
        dropped_nodes,
    })
}
