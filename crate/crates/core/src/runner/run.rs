use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::config::*;
use crate::css::{
    apply_jump_sequence, fock_span_search, four_cat_search, four_component_cat, nkf_squeezing_run, postselect_run, CssParams,
    Gate, NkfConfig, PostselectConfig,
};
use crate::engine::{worker_count, TimeGrid};
use crate::error::{Result, SimError};
use crate::fock::{wigner, DensityMatrix, StateVector, UniformGrid, UnitTag, C64};
use crate::photon::{
    decaying_exponential_target, gaussian_target, herald_ensemble, overdamping_scan, pulse_error, readout_model,
    rising_exponential_target, shaping_schedule, single_photon_emission, HeraldOutcome, HeraldParams, ReadoutParams,
    ScanOptions, ShapingOptions,
};
use crate::reduction::{elimination_ladder, omega_ladder, write_ladder_csv, zeta_ladder, LadderOptions, LadderPoint};
use crate::schedule::Schedule;

pub const MANIFEST: &str = "manifest.json";

/// Command-line overrides; the only two allowed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// One output file, held in memory until the whole run has succeeded.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    fn text(name: &str, s: String) -> Self {
        Self { name: name.into(), bytes: s.into_bytes() }
    }

    fn json(name: &str, v: &impl Serialize) -> Result<Self> {
        let mut s = serde_json::to_string_pretty(v)?;
        s.push('\n');
        Ok(Self::text(name, s))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub files: Vec<String>,
    pub wall_time_s: f64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    artifact: &'static str,
    version: &'static str,
    config: &'a ExperimentConfig,
    wall_time_s: f64,
    workers: usize,
    outputs: Vec<&'a str>,
}

/// Loads a config, applies overrides, runs it and writes the outputs.
/// Nothing is written unless the whole experiment succeeds.
pub fn run_config(path: &Path, overrides: &Overrides) -> Result<RunReport> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    if let Some(out) = &overrides.out {
        config.output_dir = Some(out.clone());
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let out_dir = match &config.output_dir {
        Some(d) if d.is_absolute() => d.clone(),
        Some(d) => base.join(d),
        None => return Err(SimError::Config("field `output_dir` missing and no --out given".into())),
    };
    let start = Instant::now();
    let artifacts = run_experiment(&config, base)?;
    let wall = start.elapsed().as_secs_f64();
    let manifest = Manifest {
        artifact: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: &config,
        wall_time_s: wall,
        workers: worker_count(),
        outputs: artifacts.iter().map(|a| a.name.as_str()).collect(),
    };
    let manifest = Artifact::json(MANIFEST, &manifest)?;
    std::fs::create_dir_all(&out_dir).map_err(|e| SimError::Io(format!("{}: {e}", out_dir.display())))?;
    let mut files = Vec::new();
    for a in artifacts.iter().chain(std::iter::once(&manifest)) {
        let p = out_dir.join(&a.name);
        std::fs::write(&p, &a.bytes).map_err(|e| SimError::Io(format!("{}: {e}", p.display())))?;
        files.push(a.name.clone());
    }
    Ok(RunReport { out_dir, files, wall_time_s: wall })
}

/// Runs a validated config and returns its outputs (without the manifest).
/// Relative input paths resolve against `base`.
pub fn run_experiment(config: &ExperimentConfig, base: &Path) -> Result<Vec<Artifact>> {
    config.validate()?;
    let kind = format!("{:?}", config.kind).to_lowercase();
    let out = match config.experiment()? {
        Experiment::Herald(h) => run_herald(config, &h),
        Experiment::Readout(r) => run_readout(config, &r, base),
        Experiment::Css(c) => run_css(config, &c),
        Experiment::Nkf(n) => run_nkf(config, &n),
        Experiment::Reduce(r) => run_reduce(config, &r),
    };
    out.map_err(|e| e.context(format!("{kind} experiment")))
}

fn run_herald(c: &ExperimentConfig, h: &HeraldConfig) -> Result<Vec<Artifact>> {
    let mut p = HeraldParams::new(h.lambda, h.g, h.kappa_sc)?;
    if let Some(t) = h.truncations {
        p.truncations = t;
    }
    let (summary, outcomes) = herald_ensemble(&p, c.horizon, c.dt, c.seed, h.attempts)?;
    let mut csv = String::from("stream,click_time[1/gamma],fidelity,p0,p1,p2,p3,p4,tail_flagged\n");
    for (i, o) in outcomes.iter().enumerate() {
        if let HeraldOutcome::Click(k) = o {
            let w: Vec<String> = k.weights.iter().map(|x| x.to_string()).collect();
            writeln!(csv, "{i},{},{},{},{}", k.time, k.fidelity, w.join(","), k.tail_flag.is_some()).unwrap();
        }
    }
    let mut out = vec![Artifact::json("herald_summary.json", &summary)?, Artifact::text("herald_clicks.csv", csv)];
    if let Some(scan) = &h.scan {
        let opts = ScanOptions {
            horizon: c.horizon,
            dt: c.dt,
            truncations: scan.truncations.unwrap_or(p.truncations),
            ..ScanOptions::default()
        };
        let rows = overdamping_scan(h.lambda, h.g, &scan.kappas, &opts)?;
        let mut csv = String::from("kappa_sc[gamma],damping,t_half_click[1/gamma],max_tail\n");
        for r in &rows {
            let damping = serde_json::to_value(r.damping)?;
            let t = r.t_half_click.map(|t| t.to_string()).unwrap_or_default();
            writeln!(csv, "{},{},{t},{}", r.kappa_sc, damping.as_str().unwrap_or_default(), r.max_tail).unwrap();
        }
        out.push(Artifact::text("overdamping_scan.csv", csv));
    }
    Ok(out)
}

fn readout_target(t: &TargetConfig, c: &ExperimentConfig, base: &Path) -> Result<Schedule> {
    match t {
        TargetConfig::Gaussian { center, sigma } => gaussian_target(*center, *sigma, c.dt, c.horizon),
        TargetConfig::RisingExponential { tau, cutoff } => rising_exponential_target(*tau, *cutoff, c.dt, c.horizon),
        TargetConfig::DecayingExponential { rate } => decaying_exponential_target(*rate, c.dt, c.horizon),
        TargetConfig::Csv { path } => {
            let s = Schedule::read_csv(&base.join(path), "xi", UnitTag::SqrtRate)?;
            if (s.dt - c.dt).abs() > 1e-9 * c.dt {
                return Err(SimError::Config(format!("target file step {} differs from field `dt` = {}", s.dt, c.dt)));
            }
            Ok(s)
        }
    }
}

#[derive(Serialize)]
struct ReadoutReport {
    max_rate: f64,
    clipped_points: usize,
    first_clip_time: Option<f64>,
    reduced: crate::photon::PulseError,
    #[serde(skip_serializing_if = "Option::is_none")]
    full: Option<crate::photon::PulseError>,
}

fn run_readout(c: &ExperimentConfig, r: &ReadoutConfig, base: &Path) -> Result<Vec<Artifact>> {
    let mut p = ReadoutParams::new(r.g, r.kappa_sc);
    p.rate_convention = r.rate_convention;
    p.phase_mode = r.phase_mode;
    let xi = readout_target(&r.target, c, base)?;
    let opts = ShapingOptions { max_detuning: r.max_detuning.unwrap_or(ShapingOptions::for_kappa(r.kappa_sc).max_detuning) };
    let shaping = shaping_schedule(&xi, &p, &opts)?;
    let steps = xi.len() - 1;
    let grid = TimeGrid::new(xi.t0, xi.dt, steps)?;
    let target: Vec<f64> = xi.values.iter().map(|v| v.norm_sqr()).collect();
    let reduced = single_photon_emission(&readout_model(&p, &shaping.delta, true)?, &grid)?;
    let full = if r.compare_full { Some(single_photon_emission(&readout_model(&p, &shaping.delta, false)?, &grid)?) } else { None };

    let mut csv = String::from("t[1/gamma],target,density");
    if full.is_some() {
        csv.push_str(",density_full");
    }
    csv.push_str(",demanded_rate[gamma],detuning[gamma],realized_rate[gamma]\n");
    for k in 0..xi.len() {
        write!(csv, "{},{},{}", xi.time(k), target[k], reduced[k]).unwrap();
        if let Some(f) = &full {
            write!(csv, ",{}", f[k]).unwrap();
        }
        writeln!(csv, ",{},{},{}", shaping.lambda.values[k].re, shaping.delta.values[k].re, shaping.realized.values[k].re).unwrap();
    }
    let report = ReadoutReport {
        max_rate: shaping.max_rate,
        clipped_points: shaping.clips.len(),
        first_clip_time: shaping.clips.first().map(|c| c.t),
        reduced: pulse_error(&target, &reduced, xi.dt),
        full: full.as_ref().map(|f| pulse_error(&target, f, xi.dt)),
    };
    Ok(vec![Artifact::text("pulse.csv", csv), Artifact::json("readout_report.json", &report)?])
}

fn wigner_artifacts(prefix: &str, psi: &StateVector, points: usize) -> Result<Vec<Artifact>> {
    let grid = UniformGrid { lo: -5.0, hi: 5.0, points };
    let rho: DensityMatrix = psi.to_density();
    let w = wigner(&rho, &grid, &grid)?;
    let mut wcsv = String::from("x,p,w\n");
    for (i, p) in grid.values().enumerate() {
        for (j, x) in grid.values().enumerate() {
            writeln!(wcsv, "{x},{p},{}", w[(i, j)]).unwrap();
        }
    }
    let mut fcsv = String::from("n,re,im,abs,arg\n");
    for (n, a) in psi.amplitudes().iter().enumerate() {
        writeln!(fcsv, "{n},{},{},{},{}", a.re, a.im, a.norm(), a.arg()).unwrap();
    }
    Ok(vec![Artifact::text(&format!("{prefix}_wigner.csv"), wcsv), Artifact::text(&format!("{prefix}_fock.csv"), fcsv)])
}

#[derive(Serialize)]
struct CssReport {
    ungated: crate::css::PostselectStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    gated: Option<crate::css::PostselectStats>,
}

fn run_css(c: &ExperimentConfig, s: &CssConfig) -> Result<Vec<Artifact>> {
    let cfg = PostselectConfig { n_target: s.n_target, trajectories: s.trajectories, horizon: c.horizon, dt: c.dt, seed: c.seed };
    let p = CssParams::new(s.lambda, s.kappa_h, s.dim.unwrap_or(cfg.default_dim()))?;
    let run = postselect_run(&p, &cfg)?;
    let gate = s.max_gap.map(|g| Gate::MaxGap { max_gap: g });
    let report = CssReport { ungated: run.stats(Gate::None), gated: gate.map(|g| run.stats(g)) };
    let mut survivors = Vec::new();
    run.write_csv(gate.unwrap_or(Gate::None), &mut survivors)?;
    let mut out = vec![
        Artifact::json("postselect_stats.json", &report)?,
        Artifact { name: "survivors.csv".into(), bytes: survivors },
    ];
    let best = run.survivors.iter().filter(|v| v.state.is_some()).max_by(|a, b| a.fidelity.total_cmp(&b.fidelity));
    if let Some(state) = best.and_then(|b| b.state.as_ref()) {
        out.extend(wigner_artifacts("best_survivor", state, s.wigner_points)?);
    }
    if let Some(search) = &s.search {
        let (json, state) = match search {
            SearchConfig::FourCat { alpha_abs, alpha_arg, length } => {
                let alpha = C64::from_polar(*alpha_abs, *alpha_arg);
                let r = four_cat_search(alpha, *length, &p)?;
                let target = four_component_cat(alpha, r.phases, p.dim)?;
                out.extend(wigner_artifacts("search_target", &target, s.wigner_points)?);
                (serde_json::to_value(&r)?, apply_jump_sequence(&r.result.sequence, &p)?)
            }
            SearchConfig::FockSpan { levels, length } => {
                let (r, _) = fock_span_search(levels, *length, &p)?;
                (serde_json::to_value(&r)?, apply_jump_sequence(&r.sequence, &p)?)
            }
        };
        out.push(Artifact::json("search.json", &json)?);
        out.extend(wigner_artifacts("search_state", &state, s.wigner_points)?);
    }
    Ok(out)
}

fn run_nkf(c: &ExperimentConfig, n: &NkfRunConfig) -> Result<Vec<Artifact>> {
    let p = CssParams::new(n.lambda, n.kappa_h, n.dim)?;
    let cfg = NkfConfig { trajectories: n.trajectories, horizon: c.horizon, dt: c.dt, seed: c.seed, sample_every: n.sample_every };
    let summary = nkf_squeezing_run(&p, &cfg)?;
    let mut csv = String::from("stream,min_ratio\n");
    for (i, m) in summary.min_ratios.iter().enumerate() {
        writeln!(csv, "{i},{m}").unwrap();
    }
    Ok(vec![Artifact::json("nkf_summary.json", &summary)?, Artifact::text("nkf_min_ratio.csv", csv)])
}

fn run_reduce(c: &ExperimentConfig, r: &ReduceConfig) -> Result<Vec<Artifact>> {
    let mut points = match &r.ladder {
        LadderChoice::Omega => omega_ladder(),
        LadderChoice::Zeta => zeta_ladder(),
        LadderChoice::Points(ps) => ps.iter().map(|q| LadderPoint::new(q.lambda, q.g, q.kappa_sc)).collect(),
    };
    if let Some(t) = r.truncations {
        points = points.into_iter().map(|q| q.with_truncations(t)).collect();
    }
    let rows = elimination_ladder(&points, &LadderOptions { horizon: c.horizon, dt: c.dt });
    let mut csv = Vec::new();
    write_ladder_csv(&rows, &mut csv)?;
    Ok(vec![Artifact { name: "ladder.csv".into(), bytes: csv }, Artifact::json("ladder.json", &rows)?])
}
