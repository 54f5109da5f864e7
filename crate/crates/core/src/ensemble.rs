//! Monte Carlo driver with order-independent moment accumulation.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ff::{ff_solve_with, FfGrid};
use crate::ft::{ft_solve_with, FtGrid, DEFAULT_EPS};
use crate::model::{derive_constants, realization_rng, DerivedConstants, ModelSpec, Sample};
use crate::solution::{Method, RealizationResult, Recording};

/// Realizations per work item. Fixed so the reduction tree does not depend
/// on the worker count.
pub const CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepControl {
    /// Largest step count giving `k = 0.9 x` the worst-case limit.
    Auto,
    Steps(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub k_realizations: usize,
    pub method: Method,
    pub seed: u64,
    pub m: usize,
    pub steps: StepControl,
    pub horizon: f64,
    pub eps: f64,
    pub spec: ModelSpec,
    pub record_trajectory: bool,
    /// Worker threads; 0 uses the global pool size.
    pub workers: usize,
    /// Working radius for the growth bounds; defaults to the spec's.
    pub r_max: Option<f64>,
}

impl EnsembleConfig {
    pub fn new(spec: ModelSpec, method: Method, k_realizations: usize, m: usize, horizon: f64) -> Self {
        Self {
            k_realizations,
            method,
            seed: 0,
            m,
            steps: StepControl::Auto,
            horizon,
            eps: DEFAULT_EPS,
            spec,
            record_trajectory: true,
            workers: 0,
            r_max: None,
        }
    }

    pub fn prepare(&self) -> Result<PreparedEnsemble> {
        if self.k_realizations == 0 {
            return Err(Error::config("mc.K", "K must be >= 1"));
        }
        let r_max = self.r_max.unwrap_or_else(|| self.spec.default_r_max());
        let consts = derive_constants(&self.spec, r_max)?;
        let grid = match self.method {
            Method::FrontFixing => SolverGrid::Ff(match self.steps {
                StepControl::Auto => FfGrid::auto(&self.spec, &consts, self.m, self.horizon)?,
                StepControl::Steps(n) => FfGrid::new(self.m, n, self.horizon)?,
            }),
            Method::FrontTracking => SolverGrid::Ft(match self.steps {
                StepControl::Auto => FtGrid::auto(&self.spec, &consts, self.m, self.horizon, self.eps)?,
                StepControl::Steps(n) => FtGrid::new(&self.spec, self.m, n, self.horizon, self.eps)?,
            }),
        };
        Ok(PreparedEnsemble {
            cfg: self.clone(),
            consts,
            grid,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverGrid {
    Ff(FfGrid),
    Ft(FtGrid),
}

impl SolverGrid {
    pub fn k(&self) -> f64 {
        match self {
            SolverGrid::Ff(g) => g.k(),
            SolverGrid::Ft(g) => g.k(),
        }
    }

    pub fn n(&self) -> usize {
        match self {
            SolverGrid::Ff(g) => g.n(),
            SolverGrid::Ft(g) => g.n(),
        }
    }

    pub fn h(&self) -> f64 {
        match self {
            SolverGrid::Ff(g) => g.h(),
            SolverGrid::Ft(g) => g.h(),
        }
    }
}

/// A validated configuration with its grid and derived constants.
#[derive(Debug, Clone)]
pub struct PreparedEnsemble {
    cfg: EnsembleConfig,
    consts: DerivedConstants,
    grid: SolverGrid,
}

impl PreparedEnsemble {
    pub fn config(&self) -> &EnsembleConfig {
        &self.cfg
    }

    pub fn constants(&self) -> &DerivedConstants {
        &self.consts
    }

    pub fn grid(&self) -> &SolverGrid {
        &self.grid
    }

    /// Sample for realization `index`, reproducible in isolation.
    pub fn sample(&self, index: usize) -> Sample {
        let mut rng = realization_rng(self.cfg.seed, index as u64);
        self.cfg.spec.sample(&mut rng)
    }

    pub fn solve_sample(&self, sample: Sample) -> Result<RealizationResult> {
        let recording = if self.cfg.record_trajectory {
            Recording::EveryLevel
        } else {
            Recording::Endpoints
        };
        match &self.grid {
            SolverGrid::Ff(g) => ff_solve_with(&self.cfg.spec, &self.consts, sample, g, recording),
            SolverGrid::Ft(g) => ft_solve_with(&self.cfg.spec, &self.consts, sample, g, recording),
        }
    }

    pub fn run_one(&self, index: usize) -> Result<RealizationResult> {
        self.solve_sample(self.sample(index)).map_err(|e| Error::Realization {
            index,
            source: Box::new(e),
        })
    }

    /// Applies `f` to every realization and returns the outputs in index order.
    pub fn map_realizations<T, F>(&self, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize, RealizationResult) -> T + Sync,
    {
        let k = self.cfg.k_realizations;
        let run = || -> Vec<Result<Vec<T>>> {
            chunk_starts(k)
                .into_par_iter()
                .map(|start| {
                    (start..(start + CHUNK).min(k))
                        .map(|index| self.run_one(index).map(|r| f(index, r)))
                        .collect()
                })
                .collect()
        };
        let chunks = with_pool(self.cfg.workers, run)?;
        let mut out = Vec::with_capacity(k);
        for chunk in chunks {
            out.extend(chunk?);
        }
        Ok(out)
    }

    pub fn run(&self) -> Result<EnsembleStats> {
        Ok(self.run_with(|_, _| ())?.0)
    }

    /// Accumulates moments and also keeps `f(index, result)` per realization.
    pub fn run_with<T, F>(&self, f: F) -> Result<(EnsembleStats, Vec<T>)>
    where
        T: Send,
        F: Fn(usize, &RealizationResult) -> T + Sync,
    {
        let k = self.cfg.k_realizations;
        let run = || -> Vec<Result<(MomentAccumulator, Vec<T>)>> {
            chunk_starts(k)
                .into_par_iter()
                .map(|start| {
                    let mut acc = MomentAccumulator::new();
                    let mut kept = Vec::new();
                    for index in start..(start + CHUNK).min(k) {
                        let r = self.run_one(index)?;
                        acc.add(&r)?;
                        kept.push(f(index, &r));
                    }
                    Ok((acc, kept))
                })
                .collect()
        };
        let partials = with_pool(self.cfg.workers, run)?;
        let mut total = MomentAccumulator::new();
        let mut kept = Vec::with_capacity(k);
        for partial in partials {
            let (acc, items) = partial?;
            total = merge_stats(total, acc)?;
            kept.extend(items);
        }
        Ok((total.finish(self.cfg.method, self.grid.h(), self.grid.k())?, kept))
    }
}

fn chunk_starts(k: usize) -> Vec<usize> {
    (0..k).step_by(CHUNK).collect()
}

fn with_pool<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(job());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config("mc.workers", e.to_string()))?;
    Ok(pool.install(job))
}

/// Runs the ensemble and returns its moments.
pub fn run_ensemble(cfg: &EnsembleConfig) -> Result<EnsembleStats> {
    cfg.prepare()?.run()
}

/// Runs every realization and keeps the individual results.
pub fn run_realizations(cfg: &EnsembleConfig) -> Result<Vec<RealizationResult>> {
    cfg.prepare()?.map_realizations(|_, r| r)
}

/// Moments over the nested prefixes `results[..K]` for each `K` in `ladder`,
/// accumulated in index order.
pub fn prefix_stats(results: &[RealizationResult], ladder: &[usize], k: f64) -> Result<Vec<EnsembleStats>> {
    let first = results
        .first()
        .ok_or_else(|| Error::InsufficientData("no realizations".into()))?;
    let mut sorted: Vec<usize> = ladder.to_vec();
    sorted.sort_unstable();
    if *sorted.last().expect("non-empty ladder") > results.len() {
        return Err(Error::InsufficientData(format!(
            "ladder needs {} realizations, got {}",
            sorted.last().unwrap(),
            results.len()
        )));
    }
    let mut acc = MomentAccumulator::new();
    let mut snapshots = Vec::with_capacity(ladder.len());
    let mut done = 0;
    for &target in &sorted {
        for r in &results[done..target] {
            acc.add(r)?;
        }
        done = target;
        snapshots.push((target, acc.finish(first.method, first.h, k)?));
    }
    Ok(ladder
        .iter()
        .map(|kk| snapshots.iter().find(|(t, _)| t == kk).expect("present").1.clone())
        .collect())
}

/// Running `SUM` and `SUM2` over realizations. Profiles of different lengths
/// are padded with zeros, which leaves the sums unchanged.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MomentAccumulator {
    count: usize,
    sum_u: Vec<f64>,
    sum2_u: Vec<f64>,
    sum_h: Vec<f64>,
    sum2_h: Vec<f64>,
    max_nodes: usize,
    spatial_step: Option<f64>,
    dt: Option<f64>,
}

impl MomentAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn add(&mut self, r: &RealizationResult) -> Result<()> {
        check_same("spatial step", &mut self.spatial_step, r.h)?;
        check_same("trajectory spacing", &mut self.dt, r.front.dt)?;
        if self.count > 0 && self.sum_h.len() != r.front.values.len() {
            return Err(Error::IncompatibleEnsemble(format!(
                "front trajectory has {} levels, expected {}",
                r.front.values.len(),
                self.sum_h.len()
            )));
        }
        grow(&mut self.sum_u, r.profile.len());
        grow(&mut self.sum2_u, r.profile.len());
        grow(&mut self.sum_h, r.front.values.len());
        grow(&mut self.sum2_h, r.front.values.len());
        for (j, &u) in r.profile.iter().enumerate() {
            self.sum_u[j] += u;
            self.sum2_u[j] += u * u;
        }
        for (n, &h) in r.front.values.iter().enumerate() {
            self.sum_h[n] += h;
            self.sum2_h[n] += h * h;
        }
        self.max_nodes = self.max_nodes.max(r.node_count);
        self.count += 1;
        Ok(())
    }

    pub fn finish(&self, method: Method, spatial_step: f64, k: f64) -> Result<EnsembleStats> {
        if self.count == 0 {
            return Err(Error::InsufficientData("no realizations accumulated".into()));
        }
        let kf = self.count as f64;
        let moments = |sum: &[f64], sum2: &[f64]| -> (Vec<f64>, Vec<f64>) {
            sum.iter()
                .zip(sum2)
                .map(|(&s, &s2)| {
                    let mu = s / kf;
                    (mu, (s2 / kf - mu * mu).max(0.0).sqrt())
                })
                .unzip()
        };
        let (mean_u, std_u) = moments(&self.sum_u, &self.sum2_u);
        let (mean_h, std_h) = moments(&self.sum_h, &self.sum2_h);
        Ok(EnsembleStats {
            method,
            mean_u,
            std_u,
            mean_h,
            std_h,
            k_effective: self.count,
            i_max: self.max_nodes,
            h: self.spatial_step.unwrap_or(spatial_step),
            k,
            dt: self.dt.unwrap_or(k),
        })
    }
}

fn grow(v: &mut Vec<f64>, len: usize) {
    if v.len() < len {
        v.resize(len, 0.0);
    }
}

fn check_same(what: &str, slot: &mut Option<f64>, value: f64) -> Result<()> {
    match *slot {
        None => {
            *slot = Some(value);
            Ok(())
        }
        Some(prev) if prev == value => Ok(()),
        Some(prev) => Err(Error::IncompatibleEnsemble(format!(
            "{what} {value} differs from {prev}"
        ))),
    }
}

/// Element-wise sum of two partial accumulators.
pub fn merge_stats(a: MomentAccumulator, b: MomentAccumulator) -> Result<MomentAccumulator> {
    if a.count == 0 {
        return Ok(b);
    }
    if b.count == 0 {
        return Ok(a);
    }
    let mut out = a;
    check_same(
        "spatial step",
        &mut out.spatial_step,
        b.spatial_step.expect("non-empty"),
    )?;
    check_same("trajectory spacing", &mut out.dt, b.dt.expect("non-empty"))?;
    if out.sum_h.len() != b.sum_h.len() {
        return Err(Error::IncompatibleEnsemble(format!(
            "front trajectories have {} and {} levels",
            out.sum_h.len(),
            b.sum_h.len()
        )));
    }
    grow(&mut out.sum_u, b.sum_u.len());
    grow(&mut out.sum2_u, b.sum2_u.len());
    for (j, (&s, &s2)) in b.sum_u.iter().zip(&b.sum2_u).enumerate() {
        out.sum_u[j] += s;
        out.sum2_u[j] += s2;
    }
    for (n, (&s, &s2)) in b.sum_h.iter().zip(&b.sum2_h).enumerate() {
        out.sum_h[n] += s;
        out.sum2_h[n] += s2;
    }
    out.count += b.count;
    out.max_nodes = out.max_nodes.max(b.max_nodes);
    Ok(out)
}

/// Mean and standard deviation of the population and the front.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub method: Method,
    /// Over the common spatial index: `z_j = j h` for FF, `r_j = j h` for FT.
    pub mean_u: Vec<f64>,
    pub std_u: Vec<f64>,
    /// Over recorded time levels, spaced by `dt`.
    pub mean_h: Vec<f64>,
    pub std_h: Vec<f64>,
    pub k_effective: usize,
    /// Widest node count over the realizations.
    pub i_max: usize,
    pub h: f64,
    pub k: f64,
    pub dt: f64,
}

/// Zero-padded profile table for FT results sharing `h` and the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedTable {
    pub i_max: usize,
    pub rows: Vec<Vec<f64>>,
}

pub fn pad_to_common_grid(results: &[RealizationResult]) -> Result<PaddedTable> {
    let first = results
        .first()
        .ok_or_else(|| Error::InsufficientData("no results to pad".into()))?;
    for r in results {
        if r.h != first.h {
            return Err(Error::IncompatibleEnsemble(format!(
                "step size {} differs from {}",
                r.h, first.h
            )));
        }
        if r.horizon() != first.horizon() {
            return Err(Error::IncompatibleEnsemble(format!(
                "horizon {} differs from {}",
                r.horizon(),
                first.horizon()
            )));
        }
    }
    let width = results.iter().map(|r| r.profile.len()).max().unwrap_or(0);
    let rows = results
        .iter()
        .map(|r| {
            let mut row = r.profile.clone();
            row.resize(width, 0.0);
            row
        })
        .collect();
    Ok(PaddedTable { i_max: width, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Distribution, GrowthFunction, InitialCondition, InitialProfile};
    use crate::solution::{Diagnostics, FrontTrajectory};
    use proptest::prelude::*;

    fn random_constant() -> ModelSpec {
        ModelSpec::new(
            Distribution::truncated_normal(1.0, 0.1, 0.8, 1.2).unwrap(),
            Distribution::truncated_beta(2.0, 4.0, 1.6, 2.4).unwrap(),
            GrowthFunction::Constant(1.0),
            GrowthFunction::Constant(1.0),
            InitialCondition::new(InitialProfile::CosineBump, 3.0).unwrap(),
        )
        .unwrap()
    }

    fn fake(profile: Vec<f64>, fronts: Vec<f64>) -> RealizationResult {
        RealizationResult {
            method: Method::FrontTracking,
            sample: Sample {
                diffusion: 1.0,
                eta: 1.0,
            },
            h: 0.06,
            k: 1e-3,
            steps: fronts.len() - 1,
            node_count: profile.len() + 1,
            radii: (0..profile.len()).map(|j| j as f64 * 0.06).collect(),
            profile,
            front: FrontTrajectory {
                dt: 1e-3,
                values: fronts,
            },
            max_population: vec![],
            diagnostics: Diagnostics::default(),
            dropped_nodes: vec![],
        }
    }

    #[test]
    fn single_realization_has_zero_spread() {
        let mut cfg = EnsembleConfig::new(random_constant(), Method::FrontFixing, 1, 20, 0.2);
        cfg.seed = 3;
        let stats = run_ensemble(&cfg).unwrap();
        let single = cfg.prepare().unwrap().run_one(0).unwrap();
        assert!(stats.std_u.iter().chain(&stats.std_h).all(|&s| s == 0.0));
        assert_eq!(stats.mean_u, single.profile);
        assert_eq!(stats.mean_h, single.front.values);
    }

    #[test]
    fn degenerate_distributions_reproduce_deterministic_run() {
        let mut spec = random_constant();
        spec.diffusion = Distribution::point(1.0).unwrap();
        spec.eta = Distribution::point(1.0).unwrap();
        let cfg = EnsembleConfig::new(spec, Method::FrontTracking, 100, 20, 0.2);
        let stats = run_ensemble(&cfg).unwrap();
        let single = cfg.prepare().unwrap().run_one(0).unwrap();
        for (m, u) in stats.mean_u.iter().zip(&single.profile) {
            assert!((m - u).abs() <= 4.0 * f64::EPSILON * u.abs().max(1.0));
        }
        assert!(stats.std_u.iter().all(|&s| s < 1e-7));
        assert!(stats.std_h.iter().all(|&s| s < 1e-6));
    }

    #[test]
    fn initial_front_moments() {
        let cfg = EnsembleConfig::new(random_constant(), Method::FrontFixing, 100, 20, 0.1);
        let stats = run_ensemble(&cfg).unwrap();
        assert!((stats.mean_h[0] - 3.0).abs() < 1e-14);
        assert_eq!(stats.std_h[0], 0.0);
        assert_eq!(*stats.mean_u.last().unwrap(), 0.0);
        assert_eq!(*stats.std_u.last().unwrap(), 0.0);
        assert!(stats.std_h.last().unwrap() > &0.0);
    }

    #[test]
    fn worker_count_does_not_change_bits() {
        let mut cfg = EnsembleConfig::new(random_constant(), Method::FrontTracking, 150, 16, 0.2);
        cfg.seed = 11;
        cfg.workers = 1;
        let a = run_ensemble(&cfg).unwrap();
        cfg.workers = 3;
        let b = run_ensemble(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn failing_realization_is_named() {
        let mut cfg = EnsembleConfig::new(random_constant(), Method::FrontFixing, 4, 20, 0.1);
        cfg.steps = StepControl::Steps(1);
        let err = run_ensemble(&cfg).unwrap_err();
        assert!(matches!(err, Error::Realization { index: 0, .. }), "{err}");
    }

    #[test]
    fn padding_matches_brute_force() {
        let a = fake(vec![1.0; 300], vec![3.0, 3.1]);
        let b = fake(vec![0.5; 310], vec![3.0, 3.2]);
        let table = pad_to_common_grid(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(table.i_max, 310);
        assert!(table.rows[0][300..].iter().all(|&x| x == 0.0));

        let mut acc = MomentAccumulator::new();
        acc.add(&a).unwrap();
        acc.add(&b).unwrap();
        let stats = acc.finish(Method::FrontTracking, 0.06, 1e-3).unwrap();
        for j in 0..310 {
            let column: Vec<f64> = table.rows.iter().map(|r| r[j]).collect();
            let mean = column.iter().sum::<f64>() / 2.0;
            let var = column.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 2.0;
            assert!((stats.mean_u[j] - mean).abs() < 1e-15);
            assert!((stats.std_u[j] - var.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn same_length_padding_is_a_no_op() {
        let a = fake(vec![1.0, 2.0, 0.0], vec![3.0]);
        let table = pad_to_common_grid(&[a.clone(), a.clone()]).unwrap();
        assert_eq!(table.rows[0], a.profile);
    }

    #[test]
    fn mixed_steps_are_incompatible() {
        let a = fake(vec![1.0; 4], vec![3.0]);
        let mut b = a.clone();
        b.h = 0.03;
        assert!(matches!(
            pad_to_common_grid(&[a.clone(), b.clone()]),
            Err(Error::IncompatibleEnsemble(_))
        ));
        let mut acc = MomentAccumulator::new();
        acc.add(&a).unwrap();
        assert!(acc.add(&b).is_err());
    }

    #[test]
    fn merge_identity_and_split() {
        let rs: Vec<_> = (0..8)
            .map(|l| fake(vec![l as f64 * 0.1, 1.0 / (l as f64 + 1.0)], vec![3.0, 3.0 + l as f64]))
            .collect();
        let mut seq = MomentAccumulator::new();
        rs.iter().for_each(|r| seq.add(r).unwrap());
        let mut left = MomentAccumulator::new();
        let mut right = MomentAccumulator::new();
        rs[..4].iter().for_each(|r| left.add(r).unwrap());
        rs[4..].iter().for_each(|r| right.add(r).unwrap());
        assert_eq!(merge_stats(seq.clone(), MomentAccumulator::new()).unwrap(), seq);
        let split = merge_stats(left.clone(), right.clone()).unwrap();
        let swapped = merge_stats(right, left).unwrap();
        assert_eq!(split, swapped);
        let s1 = seq.finish(Method::FrontTracking, 0.06, 1e-3).unwrap();
        let s2 = split.finish(Method::FrontTracking, 0.06, 1e-3).unwrap();
        for (a, b) in s1.mean_u.iter().chain(&s1.std_u).zip(s2.mean_u.iter().chain(&s2.std_u)) {
            assert!((a - b).abs() <= 8.0 * f64::EPSILON * a.abs().max(1e-300));
        }
    }

    #[test]
    fn prefix_stats_match_direct_accumulation() {
        let rs: Vec<_> = (0..10)
            .map(|l| fake(vec![l as f64, 1.0], vec![3.0, 3.0 + l as f64]))
            .collect();
        let ladder = [4, 10, 2];
        let out = prefix_stats(&rs, &ladder, 1e-3).unwrap();
        for (stats, &k) in out.iter().zip(&ladder) {
            let mut acc = MomentAccumulator::new();
            rs[..k].iter().for_each(|r| acc.add(r).unwrap());
            assert_eq!(*stats, acc.finish(Method::FrontTracking, 0.06, 1e-3).unwrap());
        }
        assert!(prefix_stats(&rs, &[11], 1e-3).is_err());
    }

    #[test]
    fn run_with_keeps_index_order() {
        let mut cfg = EnsembleConfig::new(random_constant(), Method::FrontFixing, 70, 10, 0.05);
        cfg.workers = 2;
        let p = cfg.prepare().unwrap();
        let (stats, kept) = p.run_with(|i, r| (i, r.sample)).unwrap();
        assert_eq!(stats, p.run().unwrap());
        for (i, (idx, s)) in kept.iter().enumerate() {
            assert_eq!(i, *idx);
            assert_eq!(*s, p.sample(i));
        }
    }

    proptest! {
        #[test]
        fn moments_respect_sample_range(values in prop::collection::vec(prop::collection::vec(0.0f64..2.0, 5), 2..20)) {
            let mut acc = MomentAccumulator::new();
            for v in &values {
                acc.add(&fake(v.clone(), vec![3.0])).unwrap();
            }
            let stats = acc.finish(Method::FrontTracking, 0.06, 1e-3).unwrap();
            let kf = values.len() as f64;
            for j in 0..5 {
                let lo = values.iter().map(|v| v[j]).fold(f64::INFINITY, f64::min);
                let hi = values.iter().map(|v| v[j]).fold(f64::NEG_INFINITY, f64::max);
                let slack = 1e-12;
                prop_assert!(stats.mean_u[j] >= lo - slack && stats.mean_u[j] <= hi + slack);
                prop_assert!(stats.std_u[j] >= 0.0);
                prop_assert!(stats.std_u[j] <= (hi - lo) / 2.0 * (kf / (kf - 1.0)).sqrt() + 1e-6);
            }
        }
    }
}
