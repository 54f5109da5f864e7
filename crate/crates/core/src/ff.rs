//! Front-fixing scheme.
//!
//! The change of variables `z = r / H(t)` maps the moving domain onto
//! `[0, 1]`. The unknowns become the transformed density `v(z, t)` and the
//! squared front `g = H^2`. Each step advances `g` first, because the
//! convection coefficients depend on `g^{n+1} / g^n`, then the interior
//! nodes with a three-point explicit stencil, then the two boundary closures.

use crate::error::{Error, Result};
use crate::model::{DerivedConstants, ModelSpec, Sample};
use crate::solution::{
    record_level, trajectory_dt, Diagnostics, FrontTrajectory, Method, RealizationResult, Recording,
};

/// Automatic step sizes use this fraction of the stability limit.
pub const AUTO_STEP_FRACTION: f64 = 0.9;

/// Uniform grid on `[0, 1] x [0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FfGrid {
    m: usize,
    n: usize,
    t: f64,
}

impl FfGrid {
    pub fn new(m: usize, n: usize, t: f64) -> Result<Self> {
        if m < 4 {
            return Err(Error::config("grid.M", "front-fixing needs M >= 4"));
        }
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::config("grid.T", "horizon must be finite and >= 0"));
        }
        if n == 0 && t > 0.0 {
            return Err(Error::config("grid.N", "N must be >= 1 for a positive horizon"));
        }
        Ok(Self { m, n, t })
    }

    /// `N = ceil(T / (0.9 k_max))`, so that `k = T / N` sits below the limit.
    pub fn auto(spec: &ModelSpec, consts: &DerivedConstants, m: usize, t: f64) -> Result<Self> {
        let limit = ff_stability_limit(spec, consts, 1.0 / m as f64);
        Self::new(m, auto_steps(t, limit), t)
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

    pub fn h(&self) -> f64 {
        1.0 / self.m as f64
    }

    pub fn k(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.t / self.n as f64
        }
    }

    pub fn z(&self, j: usize) -> f64 {
        j as f64 / self.m as f64
    }
}

pub(crate) fn auto_steps(t: f64, limit: f64) -> usize {
    if t == 0.0 {
        0
    } else {
        (t / (AUTO_STEP_FRACTION * limit)).ceil().max(1.0) as usize
    }
}

/// Largest admissible time step, `Q h^2` with `Q = min(Q1, Q2, Q3)`.
pub fn ff_stability_limit(spec: &ModelSpec, consts: &DerivedConstants, h: f64) -> f64 {
    let h0 = spec.h0();
    let h02 = h0 * h0;
    let d2 = spec.d2();
    let h2 = h * h;
    let c = consts;
    let q1 = h02 / (2.0 * d2 + h2 * c.alpha1 * h02 * (c.alpha2 * c.beta2 / (c.alpha1 * c.beta1) - 1.0));
    let q2 = h02 / (2.0 * d2 + h2 * c.beta2 * h02 * (2.0 * c.m0 - c.cm));
    let q3 = 4.0 * h02 / (9.0 * d2 + 8.0 * h2 * c.beta2 * h02 * c.p0);
    q1.min(q2).min(q3) * h2
}

/// Transformed density and squared front at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct FfState {
    v: Vec<f64>,
    g: f64,
    n: usize,
}

impl FfState {
    /// `v` holds the `M + 1` nodal values; `v[M]` must be zero.
    pub fn new(v: Vec<f64>, g: f64) -> Result<Self> {
        if v.len() < 5 {
            return Err(Error::config("grid.M", "front-fixing state needs M >= 4"));
        }
        if *v.last().unwrap() != 0.0 {
            return Err(Error::InvariantViolation {
                step: 0,
                message: "transformed density must vanish at z = 1".into(),
            });
        }
        if !(g > 0.0) || !g.is_finite() {
            return Err(Error::FrontCollapse { step: 0, g });
        }
        Ok(Self { v, g, n: 0 })
    }

    pub fn initial(spec: &ModelSpec, m: usize) -> Result<Self> {
        let h0 = spec.h0();
        let mut v: Vec<f64> = (0..=m).map(|j| spec.initial.eval(h0 * j as f64 / m as f64)).collect();
        v[m] = 0.0;
        Self::new(v, h0 * h0)
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn front(&self) -> f64 {
        self.g.sqrt()
    }

    pub fn level(&self) -> usize {
        self.n
    }

    fn m(&self) -> usize {
        self.v.len() - 1
    }

    /// Explicit update of the squared front from the one-sided front gradient.
    pub fn front_update(&self, eta: f64, k: f64, h: f64) -> Result<f64> {
        let m = self.m();
        let g_next = self.g + (k / h) * eta * (4.0 * self.v[m - 1] - self.v[m - 2]);
        if !g_next.is_finite() {
            return Err(Error::NonFinite {
                step: self.n,
                what: "squared front",
            });
        }
        if g_next <= 0.0 {
            return Err(Error::FrontCollapse {
                step: self.n,
                g: g_next,
            });
        }
        Ok(g_next)
    }

    /// Advances one level in place.
    pub fn step(&mut self, spec: &ModelSpec, sample: Sample, grid: &FfGrid, scratch: &mut Vec<f64>) -> Result<()> {
        let (h, k) = (grid.h(), grid.k());
        let m = self.m();
        let g_next = self.front_update(sample.eta, k, h)?;
        let front = self.g.sqrt();
        scratch.clear();
        scratch.resize(m + 1, 0.0);
        for j in 1..m {
            let z = j as f64 * h;
            let r = z * front;
            let a = spec.alpha.eval(r)?;
            let b = spec.beta.eval(r)?;
            let c = ff_coefficients(sample.diffusion, k, h, self.g, g_next, z, a, b, self.v[j]);
            scratch[j] = c.a * self.v[j - 1] + c.b * self.v[j] + c.c * self.v[j + 1];
        }
        scratch[0] = (4.0 * scratch[1] - scratch[2]) / 3.0;
        scratch[m] = 0.0;
        for (j, &x) in scratch.iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::NonFinite {
                    step: self.n,
                    what: "transformed density",
                });
            }
            if x < 0.0 {
                return Err(Error::InvariantViolation {
                    step: self.n,
                    message: format!("negative density {x:e} at node {j} under a compliant step size"),
                });
            }
        }
        std::mem::swap(&mut self.v, scratch);
        self.g = g_next;
        self.n += 1;
        Ok(())
    }
}

/// Stencil weights for `v_{j-1}, v_j, v_{j+1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// Interior coefficients of the transformed equation at `z_j`.
#[allow(clippy::too_many_arguments)]
pub fn ff_coefficients(
    d: f64,
    k: f64,
    h: f64,
    g_n: f64,
    g_next: f64,
    z_j: f64,
    a_j: f64,
    b_j: f64,
    v_j: f64,
) -> Coefficients {
    let diffusion = d * k / (h * h * g_n);
    let radial = d * k / (2.0 * h * g_n * z_j);
    let moving = z_j / (4.0 * h) * (g_next / g_n - 1.0);
    Coefficients {
        a: diffusion - radial - moving,
        b: 1.0 + k * (a_j - b_j * v_j) - 2.0 * diffusion,
        c: diffusion + radial + moving,
    }
}

/// Runs one realization to the grid horizon.
pub fn ff_solve(
    spec: &ModelSpec,
    consts: &DerivedConstants,
    sample: Sample,
    grid: &FfGrid,
) -> Result<RealizationResult> {
    ff_solve_with(spec, consts, sample, grid, Recording::EveryLevel)
}

pub fn ff_solve_with(
    spec: &ModelSpec,
    consts: &DerivedConstants,
    sample: Sample,
    grid: &FfGrid,
    recording: Recording,
) -> Result<RealizationResult> {
    let k = grid.k();
    if grid.n() > 0 {
        let limit = ff_stability_limit(spec, consts, grid.h());
        if !(k < limit) {
            return Err(Error::Stability {
                method: "front-fixing",
                k,
                limit,
            });
        }
    }
    let mut state = FfState::initial(spec, grid.m())?;
    let mut scratch = Vec::with_capacity(grid.m() + 1);
    let steps = grid.n();
    let mut fronts = Vec::new();
    let mut maxima = Vec::new();
    record_level(
        recording,
        0,
        steps,
        state.front(),
        max_of(state.v()),
        &mut fronts,
        &mut maxima,
    );
    for n in 1..=steps {
        state.step(spec, sample, grid, &mut scratch)?;
        record_level(
            recording,
            n,
            steps,
            state.front(),
            max_of(state.v()),
            &mut fronts,
            &mut maxima,
        );
    }
    let front_t = state.front();
    let radii = (0..=grid.m()).map(|j| grid.z(j) * front_t).collect();
    Ok(RealizationResult {
        method: Method::FrontFixing,
        sample,
        h: grid.h(),
        k,
        steps,
        profile: state.v,
        radii,
        front: FrontTrajectory {
            dt: trajectory_dt(recording, k, steps),
            values: fronts,
        },
        max_population: maxima,
        node_count: grid.m() + 1,
        diagnostics: Diagnostics::default(),
        dropped_nodes: Vec::new(),
    })
}

pub(crate) fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{derive_constants, Distribution, GrowthFunction, InitialCondition, InitialProfile};

    fn spec_with_d(d: Distribution, eta: Distribution) -> ModelSpec {
        ModelSpec::new(
            d,
            eta,
            GrowthFunction::Constant(1.0),
            GrowthFunction::Constant(1.0),
            InitialCondition::new(InitialProfile::CosineBump, 3.0).unwrap(),
        )
        .unwrap()
    }

    fn deterministic() -> ModelSpec {
        spec_with_d(Distribution::point(1.0).unwrap(), Distribution::point(1.0).unwrap())
    }

    fn unit_sample() -> Sample {
        Sample {
            diffusion: 1.0,
            eta: 1.0,
        }
    }

    #[test]
    fn stability_limit_deterministic_constant_case() {
        let spec = deterministic();
        let c = derive_constants(&spec, 33.0).unwrap();
        let k = ff_stability_limit(&spec, &c, 1.0 / 50.0);
        // Q3 = 36 / (9 + 8 * 4e-4 * 9) binds
        let expected = 36.0 / (9.0 + 8.0 * 4e-4 * 9.0) * 4e-4;
        assert!((k - expected).abs() < 1e-18);
        assert!((1.59e-3..1.60e-3).contains(&k));
    }

    #[test]
    fn stability_limit_random_constant_case() {
        let spec = spec_with_d(
            Distribution::truncated_normal(1.0, 0.1, 0.8, 1.2).unwrap(),
            Distribution::truncated_beta(2.0, 4.0, 1.6, 2.4).unwrap(),
        );
        let c = derive_constants(&spec, 33.0).unwrap();
        let k = ff_stability_limit(&spec, &c, 1.0 / 50.0);
        assert!((k - 1.330e-3).abs() < 1e-6, "{k}");
    }

    #[test]
    fn stability_limit_small_h_limit() {
        let spec = deterministic();
        let c = derive_constants(&spec, 33.0).unwrap();
        let h = 1e-5;
        let q = ff_stability_limit(&spec, &c, h) / (h * h);
        // Q3 -> 4 H0^2 / (9 d2) is the smallest of the three h -> 0 limits
        assert!((q - 4.0 * 9.0 / 9.0).abs() < 1e-6);
        assert!(q <= 9.0 / 2.0);
    }

    #[test]
    fn front_update_cases() {
        let mut v = vec![0.0; 51];
        let s = FfState::new(v.clone(), 9.0).unwrap();
        assert_eq!(s.front_update(1.0, 1e-3, 0.02).unwrap(), 9.0);

        v[49] = 0.05;
        v[48] = 0.09;
        let s = FfState::new(v, 9.0).unwrap();
        let g = s.front_update(1.0, 1e-3, 0.02).unwrap();
        assert!((g - 9.0055).abs() < 1e-12);
    }

    #[test]
    fn front_collapse_is_reported() {
        let mut v = vec![0.0; 6];
        v[3] = 100.0;
        let s = FfState::new(v, 1e-3).unwrap();
        assert!(matches!(
            s.front_update(1.0, 1e-3, 0.2),
            Err(Error::FrontCollapse { .. })
        ));
    }

    #[test]
    fn coefficient_hand_values() {
        let c = ff_coefficients(1.0, 1e-3, 0.02, 9.0, 9.0, 0.5, 1.0, 1.0, 1.0);
        // Dk/(h^2 g) = 1e-3/(4e-4*9) = 0.27777..., Dk/(2 h g z) = 1e-3/(0.04*9*0.5) = 0.005555...
        assert!((c.a - (0.277_777_777_777_777_8 - 0.005_555_555_555_555_556)).abs() < 1e-15);
        assert!((c.c - (0.277_777_777_777_777_8 + 0.005_555_555_555_555_556)).abs() < 1e-15);
        assert!((c.b - (1.0 - 0.555_555_555_555_555_6)).abs() < 1e-15);
        assert!((c.a - 0.272_222_222_222_222_2).abs() < 1e-15);
        assert!((c.c - 0.283_333_333_333_333_3).abs() < 1e-15);
    }

    #[test]
    fn stationary_front_coefficients_differ_only_by_radial_term() {
        let c = ff_coefficients(1.3, 2e-4, 0.05, 4.0, 4.0, 0.3, 1.2, 0.7, 0.4);
        let radial = 1.3 * 2e-4 / (2.0 * 0.05 * 4.0 * 0.3);
        assert!(((c.c - c.a) - 2.0 * radial).abs() < 1e-16);
    }

    #[test]
    fn zero_state_is_a_fixed_point() {
        let spec = deterministic();
        let grid = FfGrid::new(10, 10, 0.01).unwrap();
        let mut s = FfState::new(vec![0.0; 11], 9.0).unwrap();
        let mut scratch = Vec::new();
        s.step(&spec, unit_sample(), &grid, &mut scratch).unwrap();
        assert!(s.v().iter().all(|&x| x == 0.0));
        assert_eq!(s.g(), 9.0);
    }

    #[test]
    fn nonzero_front_value_is_rejected() {
        assert!(FfState::new(vec![1.0; 51], 9.0).is_err());
    }

    #[test]
    fn one_step_keeps_theorem_properties() {
        let spec = deterministic();
        let grid = FfGrid::new(50, 1, 8e-4).unwrap();
        let mut s = FfState::initial(&spec, 50).unwrap();
        let g0 = s.g();
        let mut scratch = Vec::new();
        s.step(&spec, unit_sample(), &grid, &mut scratch).unwrap();
        assert!(s.g() > g0);
        assert!(s.v()[..50].iter().all(|&x| x > 0.0));
        assert!(s.v().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn zero_horizon_returns_initial_data() {
        let spec = deterministic();
        let c = derive_constants(&spec, 33.0).unwrap();
        let grid = FfGrid::new(50, 0, 0.0).unwrap();
        let r = ff_solve(&spec, &c, unit_sample(), &grid).unwrap();
        assert_eq!(r.front.values, vec![3.0]);
        let init = FfState::initial(&spec, 50).unwrap();
        assert_eq!(r.profile, init.v());
        assert_eq!(r.radii[50], 3.0);
    }

    #[test]
    fn oversize_step_is_an_error() {
        let spec = deterministic();
        let c = derive_constants(&spec, 33.0).unwrap();
        let grid = FfGrid::new(50, 100, 1.0).unwrap(); // k = 1e-2
        assert!(matches!(
            ff_solve(&spec, &c, unit_sample(), &grid),
            Err(Error::Stability { .. })
        ));
    }

    #[test]
    fn auto_grid_is_below_limit() {
        let spec = deterministic();
        let c = derive_constants(&spec, 33.0).unwrap();
        let grid = FfGrid::auto(&spec, &c, 50, 1.0).unwrap();
        let limit = ff_stability_limit(&spec, &c, grid.h());
        assert!(grid.k() < limit);
        assert!(grid.k() <= AUTO_STEP_FRACTION * limit + 1e-18);
        assert!((grid.k() * grid.n() as f64 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn smaller_eta_never_outruns_larger_eta() {
        let spec = spec_with_d(
            Distribution::point(1.0).unwrap(),
            Distribution::truncated_beta(2.0, 4.0, 1.6, 2.4).unwrap(),
        );
        let c = derive_constants(&spec, 33.0).unwrap();
        let grid = FfGrid::new(50, 2000, 1.0).unwrap();
        let slow = ff_solve(
            &spec,
            &c,
            Sample {
                diffusion: 1.0,
                eta: 1.6,
            },
            &grid,
        )
        .unwrap();
        let fast = ff_solve(
            &spec,
            &c,
            Sample {
                diffusion: 1.0,
                eta: 2.2,
            },
            &grid,
        )
        .unwrap();
        for (a, b) in slow.front.values.iter().zip(&fast.front.values) {
            assert!(a <= b);
        }
        assert!(slow.final_front() < fast.final_front());
    }
}
