//! Command-line front end. Every command writes CSV files and a
//! `manifest.json` under `--out`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::analysis::{
    absdev_front_moments, histogram, mean_radius_map, pairwise_error, relerr_ff_ft, Moment, Quantity,
};
use crate::config::{Config, Overrides, RawConfig};
use crate::dichotomy::{rstar_for, spreading_guarantee, Outcome};
use crate::ensemble::{prefix_stats, EnsembleStats, StepControl};
use crate::error::{Error, Result};
use crate::ff::ff_stability_limit;
use crate::ft::ft_stability_terms;
use crate::model::derive_constants;
use crate::solution::{Method, RealizationResult};

#[derive(Debug, Parser)]
#[command(name = "freefront", version, about = "Random radial Stefan-problem solvers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One front-fixing realization.
    SolveFf(CommonArgs),
    /// One front-tracking realization.
    SolveFt(CommonArgs),
    /// Monte Carlo moments of the population and the front.
    Ensemble(CommonArgs),
    /// Front-fixing vs front-tracking on matched samples.
    Compare(CommonArgs),
    /// Threshold radius and the spreading guarantee.
    Rstar(CommonArgs),
    /// Pairwise errors over K, M and N ladders.
    Convergence(CommonArgs),
    /// Step-size limits of both schemes.
    Stability(CommonArgs),
    /// Histograms of sampled D, eta and R*.
    Histogram(CommonArgs),
    /// Repeats the run recorded in a manifest.
    Rerun {
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, env = "FREEFRONT_WORKERS")]
    pub workers: Option<usize>,
    #[arg(long)]
    pub method: Option<Method>,
    #[arg(long = "K")]
    pub k: Option<usize>,
    #[arg(long = "M")]
    pub m: Option<usize>,
    #[arg(long = "N")]
    pub n: Option<usize>,
    #[arg(long = "T")]
    pub t: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            workers: self.workers,
            k: self.k,
            m: self.m,
            n: self.n,
            t: self.t,
            eps: self.eps,
            method: self.method,
        }
    }
}

impl clap::ValueEnum for Method {
    fn value_variants<'a>() -> &'a [Self] {
        &[Method::FrontFixing, Method::FrontTracking]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(self.label()))
    }
}

/// Everything needed to repeat a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub duration_seconds: f64,
    pub config: RawConfig,
    pub files: Vec<String>,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            1
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    let (name, raw, out) = match command {
        Command::Rerun { manifest, out } => {
            let text = fs::read_to_string(&manifest).map_err(|source| Error::Io {
                stage: format!("reading manifest {}", manifest.display()),
                source,
            })?;
            let m: RunManifest = serde_json::from_str(&text).map_err(|e| Error::config("manifest", e.to_string()))?;
            let out = out.unwrap_or_else(|| manifest.parent().map(Path::to_path_buf).unwrap_or_default());
            (m.command, m.config, out)
        }
        other => {
            let (name, args) = split(other);
            let mut raw = RawConfig::load(&args.config)?;
            raw.apply(&args.overrides());
            (name.to_string(), raw, args.out)
        }
    };
    execute(&name, raw, &out)
}

fn split(command: Command) -> (&'static str, CommonArgs) {
    match command {
        Command::SolveFf(a) => ("solve-ff", a),
        Command::SolveFt(a) => ("solve-ft", a),
        Command::Ensemble(a) => ("ensemble", a),
        Command::Compare(a) => ("compare", a),
        Command::Rstar(a) => ("rstar", a),
        Command::Convergence(a) => ("convergence", a),
        Command::Stability(a) => ("stability", a),
        Command::Histogram(a) => ("histogram", a),
        Command::Rerun { .. } => unreachable!("handled by run"),
    }
}

/// Runs a named command on an already-overridden config.
pub fn execute(command: &str, raw: RawConfig, out: &Path) -> Result<()> {
    let cfg = raw.resolve()?;
    fs::create_dir_all(out).map_err(|source| Error::Io {
        stage: format!("creating output directory {}", out.display()),
        source,
    })?;
    let start = Instant::now();
    let mut w = Writer {
        dir: out.to_path_buf(),
        files: Vec::new(),
    };
    match command {
        "solve-ff" => solve(&cfg, Method::FrontFixing, &mut w)?,
        "solve-ft" => solve(&cfg, Method::FrontTracking, &mut w)?,
        "ensemble" => ensemble(&cfg, &mut w)?,
        "compare" => compare(&cfg, &mut w)?,
        "rstar" => rstar(&cfg, &mut w)?,
        "convergence" => convergence(&cfg, &mut w)?,
        "stability" => stability(&cfg, &mut w)?,
        "histogram" => hist(&cfg, &mut w)?,
        other => return Err(Error::config("command", format!("unknown command `{other}`"))),
    }
    let manifest = RunManifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        duration_seconds: start.elapsed().as_secs_f64(),
        config: raw,
        files: w.files.clone(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Output(e.to_string()))?;
    w.write_text("manifest.json", &text)
}

struct Writer {
    dir: PathBuf,
    files: Vec<String>,
}

impl Writer {
    fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let path = self.dir.join(name);
        let io = |e: csv::Error| Error::Output(format!("writing {}: {e}", path.display()));
        let mut wtr = csv::Writer::from_path(&path).map_err(io)?;
        wtr.write_record(header).map_err(io)?;
        for row in rows {
            wtr.write_record(&row).map_err(io)?;
        }
        wtr.flush().map_err(|source| Error::Io {
            stage: format!("writing {}", path.display()),
            source,
        })?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value).map_err(|e| Error::Output(e.to_string()))?;
        self.write_text(name, &text)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn write_text(&self, name: &str, text: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, format!("{text}\n")).map_err(|source| Error::Io {
            stage: format!("writing {}", path.display()),
            source,
        })
    }
}

/// 17 significant digits.
fn f(x: f64) -> String {
    format!("{x:.16e}")
}

fn solve(cfg: &Config, method: Method, w: &mut Writer) -> Result<()> {
    let prepared = cfg.ensemble(method).prepare()?;
    let sample = cfg
        .spec
        .point_sample()
        .unwrap_or_else(|| prepared.sample(cfg.realization));
    let r = prepared.solve_sample(sample)?;
    write_profile(w, "profile.csv", &r)?;
    w.csv(
        "front.csv",
        &["index", "time", "front", "max_population"],
        r.front
            .times()
            .zip(&r.front.values)
            .zip(&r.max_population)
            .enumerate()
            .map(|(n, ((t, h), m))| vec![n.to_string(), f(t), f(*h), f(*m)]),
    )?;
    #[derive(Serialize)]
    struct Summary {
        method: Method,
        diffusion: f64,
        eta: f64,
        h: f64,
        k: f64,
        steps: usize,
        final_front: f64,
        node_count: usize,
        clamped_retreats: usize,
        rebases: usize,
        nodes_added: usize,
    }
    let s = Summary {
        method,
        diffusion: r.sample.diffusion,
        eta: r.sample.eta,
        h: r.h,
        k: r.k,
        steps: r.steps,
        final_front: r.final_front(),
        node_count: r.node_count,
        clamped_retreats: r.diagnostics.clamped_retreats,
        rebases: r.diagnostics.rebases,
        nodes_added: r.diagnostics.nodes_added,
    };
    println!(
        "{}: H(T) = {:.10}, nodes = {}, steps = {}",
        method.label(),
        s.final_front,
        s.node_count,
        s.steps
    );
    w.json("summary.json", &s)
}

fn write_profile(w: &mut Writer, name: &str, r: &RealizationResult) -> Result<()> {
    w.csv(
        name,
        &["index", "radius", "value"],
        r.radii
            .iter()
            .zip(&r.profile)
            .enumerate()
            .map(|(j, (x, u))| vec![j.to_string(), f(*x), f(*u)]),
    )
}

fn write_stats(w: &mut Writer, prefix: &str, stats: &EnsembleStats) -> Result<()> {
    let radii: Vec<f64> = match stats.method {
        Method::FrontFixing => mean_radius_map(stats)?.iter().map(|p| p.r_bar).collect(),
        Method::FrontTracking => (0..stats.mean_u.len()).map(|j| j as f64 * stats.h).collect(),
    };
    w.csv(
        &format!("{prefix}_u.csv"),
        &["index", "radius", "mean", "std"],
        (0..stats.mean_u.len()).map(|j| vec![j.to_string(), f(radii[j]), f(stats.mean_u[j]), f(stats.std_u[j])]),
    )?;
    w.csv(
        &format!("{prefix}_h.csv"),
        &["index", "time", "mean", "std"],
        (0..stats.mean_h.len()).map(|n| {
            vec![
                n.to_string(),
                f(n as f64 * stats.dt),
                f(stats.mean_h[n]),
                f(stats.std_h[n]),
            ]
        }),
    )
}

fn ensemble(cfg: &Config, w: &mut Writer) -> Result<()> {
    let prepared = cfg.ensemble(cfg.method).prepare()?;
    let settings = cfg.classify;
    let (stats, rows) = prepared.run_with(|i, r| {
        let outcome = settings.classify(r).unwrap_or(Outcome::Undetermined);
        (i, r.sample, r.final_front(), outcome)
    })?;
    write_stats(w, "ensemble", &stats)?;
    w.csv(
        "outcomes.csv",
        &["index", "diffusion", "eta", "final_front", "outcome"],
        rows.iter()
            .map(|(i, s, h, o)| vec![i.to_string(), f(s.diffusion), f(s.eta), f(*h), o.label().to_string()]),
    )?;
    let count = |o: Outcome| rows.iter().filter(|r| r.3 == o).count();
    #[derive(Serialize)]
    struct Summary {
        method: Method,
        k_effective: usize,
        i_max: usize,
        h: f64,
        k: f64,
        spreading: usize,
        vanishing: usize,
        undetermined: usize,
    }
    let s = Summary {
        method: stats.method,
        k_effective: stats.k_effective,
        i_max: stats.i_max,
        h: stats.h,
        k: stats.k,
        spreading: count(Outcome::Spreading),
        vanishing: count(Outcome::Vanishing),
        undetermined: count(Outcome::Undetermined),
    };
    println!(
        "{} ensemble: K = {}, mu[H(T)] = {:.10}, sigma[H(T)] = {:.10}; spreading {}, vanishing {}, undetermined {}",
        stats.method.label(),
        stats.k_effective,
        stats.mean_h.last().copied().unwrap_or(f64::NAN),
        stats.std_h.last().copied().unwrap_or(f64::NAN),
        s.spreading,
        s.vanishing,
        s.undetermined
    );
    w.json("summary.json", &s)
}

/// Step count valid for both schemes when the config leaves it automatic.
pub fn common_steps(cfg: &Config) -> Result<StepControl> {
    if let StepControl::Steps(_) = cfg.steps {
        return Ok(cfg.steps);
    }
    let ff = cfg.ensemble(Method::FrontFixing).prepare()?;
    let ft = cfg.ensemble(Method::FrontTracking).prepare()?;
    Ok(StepControl::Steps(ff.grid().n().max(ft.grid().n())))
}

fn compare(cfg: &Config, w: &mut Writer) -> Result<()> {
    let k_max = *cfg.compare_k.iter().max().expect("validated non-empty");
    let steps = common_steps(cfg)?;
    let mut ff_cfg = cfg.ensemble(Method::FrontFixing);
    ff_cfg.k_realizations = k_max;
    ff_cfg.steps = steps;
    let mut ft_cfg = ff_cfg.clone();
    ft_cfg.method = Method::FrontTracking;
    let ff_p = ff_cfg.prepare()?;
    let ft_p = ft_cfg.prepare()?;
    let ff_runs = ff_p.map_realizations(|_, r| r)?;
    let ft_runs = ft_p.map_realizations(|_, r| r)?;
    let k = ff_p.grid().k();
    let ff_stats = prefix_stats(&ff_runs, &cfg.compare_k, k)?;
    let ft_stats = prefix_stats(&ft_runs, &cfg.compare_k, k)?;
    let mut rows = Vec::new();
    for (i, &kk) in cfg.compare_k.iter().enumerate() {
        let rel = relerr_ff_ft(&ff_runs[..kk], &ft_runs[..kk])?;
        let (dm, ds) = absdev_front_moments(&ff_stats[i], &ft_stats[i])?;
        let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
        println!(
            "K = {kk}: RelErr = {rel:.4e}, max AbsDev mu[H] = {:.4e}, max AbsDev sigma[H] = {:.4e}",
            max(&dm),
            max(&ds)
        );
        rows.push(vec![kk.to_string(), f(cfg.horizon), f(rel), f(max(&dm)), f(max(&ds))]);
        w.csv(
            &format!("absdev_K{kk}.csv"),
            &["index", "time", "dev_mean", "dev_std"],
            (0..dm.len()).map(|n| vec![n.to_string(), f(n as f64 * ff_stats[i].dt), f(dm[n]), f(ds[n])]),
        )?;
    }
    w.csv(
        "relerr.csv",
        &["K", "T", "relerr", "absdev_mean_max", "absdev_std_max"],
        rows,
    )
}

fn rstar(cfg: &Config, w: &mut Writer) -> Result<()> {
    let g = spreading_guarantee(&cfg.spec)?;
    println!("guaranteed: {}, R*_max = {:.4}", g.guaranteed, g.r_star_max);
    #[derive(Serialize)]
    struct Out {
        guaranteed: bool,
        r_star_max: f64,
        h0: f64,
        d2: f64,
        threshold: crate::dichotomy::ThresholdResult,
    }
    w.json(
        "rstar.json",
        &Out {
            guaranteed: g.guaranteed,
            r_star_max: g.r_star_max,
            h0: cfg.spec.h0(),
            d2: cfg.spec.d2(),
            threshold: g.threshold,
        },
    )
}

fn ladder_rows(label: &str, values: &[usize], stats: &[EnsembleStats]) -> Result<Vec<Vec<String>>> {
    let mut rows = Vec::new();
    for i in 0..values.len().saturating_sub(1) {
        let (a, b) = (&stats[i], &stats[i + 1]);
        let e = [
            pairwise_error(a, b, Quantity::U, Moment::Mean)?,
            pairwise_error(a, b, Quantity::U, Moment::Std)?,
            pairwise_error(a, b, Quantity::H, Moment::Mean)?,
            pairwise_error(a, b, Quantity::H, Moment::Std)?,
        ];
        println!(
            "{label} {{{}, {}}}: mu[u] {:.4e}  sigma[u] {:.4e}  mu[H] {:.4e}  sigma[H] {:.4e}",
            values[i],
            values[i + 1],
            e[0],
            e[1],
            e[2],
            e[3]
        );
        let mut row = vec![values[i].to_string(), values[i + 1].to_string()];
        row.extend(e.iter().map(|&x| f(x)));
        rows.push(row);
    }
    Ok(rows)
}

const LADDER_HEADER: [&str; 6] = ["first", "second", "mean_u", "std_u", "mean_h", "std_h"];

fn convergence(cfg: &Config, w: &mut Writer) -> Result<()> {
    let method = cfg.method;
    // K ladder: nested prefixes of one stream of realizations
    let mut k_cfg = cfg.ensemble(method);
    k_cfg.k_realizations = *cfg.ladder_k.iter().max().expect("validated");
    let k_p = k_cfg.prepare()?;
    let runs = k_p.map_realizations(|_, r| r)?;
    let k_stats = prefix_stats(&runs, &cfg.ladder_k, k_p.grid().k())?;
    drop(runs);
    let rows = ladder_rows("K", &cfg.ladder_k, &k_stats)?;
    w.csv("convergence_K.csv", &LADDER_HEADER, rows)?;

    let mut m_stats = Vec::new();
    for &m in &cfg.ladder_m {
        let mut c = cfg.ensemble(method);
        c.m = m;
        c.steps = StepControl::Steps(cfg.ladder_m_steps);
        m_stats.push(c.prepare()?.run()?);
    }
    let rows = ladder_rows("M", &cfg.ladder_m, &m_stats)?;
    w.csv("convergence_M.csv", &LADDER_HEADER, rows)?;

    let mut n_stats = Vec::new();
    for &n in &cfg.ladder_n {
        let mut c = cfg.ensemble(method);
        c.steps = StepControl::Steps(n);
        n_stats.push(c.prepare()?.run()?);
    }
    let rows = ladder_rows("N", &cfg.ladder_n, &n_stats)?;
    w.csv("convergence_N.csv", &LADDER_HEADER, rows)
}

fn stability(cfg: &Config, w: &mut Writer) -> Result<()> {
    let consts = derive_constants(&cfg.spec, cfg.r_max)?;
    let ff = ff_stability_limit(&cfg.spec, &consts, 1.0 / cfg.m as f64);
    let ft = ft_stability_terms(&cfg.spec, &consts, cfg.spec.h0() / cfg.m as f64, cfg.m - 1, cfg.eps)?;
    println!("FF k-limit: {ff:.4e}");
    println!(
        "FT k-limit: {:.4e} (front speed {:.4e}, interior {:.4e}, last interior {:.4e})",
        ft.min(),
        ft.front_speed,
        ft.interior,
        ft.last_interior
    );
    #[derive(Serialize)]
    struct Out {
        m: usize,
        eps: f64,
        ff_limit: f64,
        ft_limit: f64,
        ft_front_speed: f64,
        ft_interior: f64,
        ft_last_interior: f64,
    }
    w.json(
        "stability.json",
        &Out {
            m: cfg.m,
            eps: cfg.eps,
            ff_limit: ff,
            ft_limit: ft.min(),
            ft_front_speed: ft.front_speed,
            ft_interior: ft.interior,
            ft_last_interior: ft.last_interior,
        },
    )
}

fn hist(cfg: &Config, w: &mut Writer) -> Result<()> {
    let prepared = cfg.ensemble(cfg.method).prepare()?;
    let samples: Vec<_> = (0..cfg.k_realizations).map(|i| prepared.sample(i)).collect();
    let rstars = samples
        .iter()
        .map(|s| rstar_for(s.diffusion, &cfg.spec.alpha).map(|t| t.r_star))
        .collect::<Result<Vec<_>>>()?;
    w.csv(
        "samples.csv",
        &["index", "diffusion", "eta", "r_star"],
        samples
            .iter()
            .zip(&rstars)
            .enumerate()
            .map(|(i, (s, r))| vec![i.to_string(), f(s.diffusion), f(s.eta), f(*r)]),
    )?;
    let d: Vec<f64> = samples.iter().map(|s| s.diffusion).collect();
    let eta: Vec<f64> = samples.iter().map(|s| s.eta).collect();
    let (d_lo, d_hi) = cfg.spec.diffusion.support();
    let (e_lo, e_hi) = cfg.spec.eta.support();
    let r_lo = rstar_for(d_lo, &cfg.spec.alpha)?.r_star;
    let r_hi = rstar_for(d_hi, &cfg.spec.alpha)?.r_star;
    let header = ["bin_lo", "bin_hi", "count"];
    for (name, values, lo, hi) in [
        ("histogram_D.csv", &d, d_lo, d_hi),
        ("histogram_eta.csv", &eta, e_lo, e_hi),
        ("histogram_rstar.csv", &rstars, r_lo, r_hi),
    ] {
        let bins = histogram(values, lo, hi, cfg.bins);
        w.csv(
            name,
            &header,
            bins.iter().map(|(a, b, c)| vec![f(*a), f(*b), c.to_string()]),
        )?;
    }
    println!("histograms over K = {} samples, {} bins", cfg.k_realizations, cfg.bins);
    Ok(())
}
