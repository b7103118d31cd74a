//! The `blowup` command line. Every command that writes files also writes
//! a JSON manifest holding its fully resolved arguments; `blowup replay`
//! re-runs a manifest and reproduces the files byte for byte.

use std::ffi::OsString;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use blowup_core::gridproj::{half_step_empirical, project, SampledField};
use blowup_core::km::{explicit_z2d, fourier_series_2d, project_z, Z2dFrame};
use blowup_core::moments::MomentSet;
use blowup_core::quadratic::{make_p_delta, sup_norm_ball, DeltaState, HarmonicQuadratic};
use blowup_core::renorm::{calibrate_c_gamma, check_monotonicity_with, half_step_at, iterate, MapConfig};
use blowup_core::sphere::McEstimate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::acceptance::{self, Ctx, VerifyConfig};
use crate::error::{LabError, LabResult};
use crate::formats::{self, KmJson, MapConfigJson, NoiseKind, ProjectionJson, QuadraticJson, StepJson, TrajectorySummary};
use crate::parallel;

/// Comma-separated list of reals; the empty string is the empty list.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Floats(pub Vec<f64>);

impl FromStr for Floats {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(Floats(Vec::new()));
        }
        s.split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()
            .map(Floats)
    }
}

impl fmt::Display for Floats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

#[derive(Debug, Parser)]
#[command(name = "blowup", version, about = "Sphere moments, Karp-Margulis projections and the half-scale map")]
pub struct Cli {
    /// Worker threads (overridden by BLOWUP_WORKERS; default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Indicator moments B, B_i, C, C_i for one or more δ.
    Moments(MomentsArgs),
    /// A single half step of the map.
    Map(MapArgs),
    /// Iterated half steps with trajectory classification.
    Iterate(IterateArgs),
    /// Basin table over a (τ0, |δ0|) grid.
    Sweep(SweepArgs),
    /// Fourier expansion and Karp-Margulis decomposition in two dimensions.
    Fourier2d(Fourier2dArgs),
    /// Harmonic-quadratic projection of a sampled field.
    ProjectGrid(ProjectGridArgs),
    /// Runs the acceptance suite.
    Verify(VerifyArgs),
    /// Re-runs the command recorded in a manifest.
    #[serde(skip)]
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MomentsArgs {
    #[arg(long)]
    pub n: usize,
    /// δ as a comma list of n-2 entries; repeat for several rows.
    #[arg(long, allow_hyphen_values = true)]
    pub delta: Vec<Floats>,
    #[arg(long, default_value_t = 64)]
    pub order: usize,
    /// Also estimate every moment by Monte Carlo with this many samples.
    #[arg(long)]
    pub mc_check: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = TableFormat::Csv)]
    pub format: TableFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MapOpts {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 64)]
    pub order: usize,
    #[arg(long, default_value_t = 0.1)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.2)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.0)]
    pub c_noise: f64,
    #[arg(long, value_enum, default_value_t = NoiseKind::Off)]
    pub noise: NoiseKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Threshold constant; calibrated on the canned sweep when omitted.
    #[arg(long)]
    pub c_gamma: Option<f64>,
    #[arg(long, default_value_t = 0.2)]
    pub kappa0: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub tol_conv: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub moment_tol: f64,
}

impl MapOpts {
    /// Validated configuration; fills in a calibrated `C_γ` when none was
    /// given and records it in `self`.
    fn resolve(&mut self) -> LabResult<MapConfig> {
        check_n(self.n)?;
        let mut cfg = MapConfig::new(self.n);
        cfg.order = self.order;
        cfg.gamma = self.gamma;
        cfg.alpha = self.alpha;
        cfg.c_noise = self.c_noise;
        cfg.noise = formats::noise_mode(self.noise, self.seed);
        cfg.kappa0 = self.kappa0;
        cfg.tol_conv = self.tol_conv;
        cfg.moment_tol = self.moment_tol;
        cfg.c_gamma = 0.0;
        cfg.validate()?;
        let c = match self.c_gamma {
            Some(c) => c,
            None => calibrate_c_gamma(&cfg)?,
        };
        self.c_gamma = Some(c);
        cfg.c_gamma = c;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MapArgs {
    #[command(flatten)]
    pub map: MapOpts,
    #[arg(long, default_value_t = 10.0)]
    pub tau: f64,
    /// Defaults to δ = 0.
    #[arg(long, allow_hyphen_values = true, default_value = "")]
    pub delta: Floats,
    /// Step index, which selects the random noise stream.
    #[arg(long, default_value_t = 1)]
    pub step: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct IterateArgs {
    #[command(flatten)]
    pub map: MapOpts,
    #[arg(long, default_value_t = 10.0)]
    pub tau0: f64,
    /// Defaults to δ0 = 0.
    #[arg(long, allow_hyphen_values = true, default_value = "")]
    pub delta0: Floats,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    /// Trajectory CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Classification summary JSON.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub map: MapOpts,
    /// τ0 values.
    #[arg(long, default_value = "10")]
    pub tau0: Floats,
    /// |δ0| values.
    #[arg(long, allow_hyphen_values = true, default_value = "0")]
    pub delta_mag: Floats,
    /// Direction of δ0 (normalized); defaults to e_1.
    #[arg(long, allow_hyphen_values = true)]
    pub direction: Option<Floats>,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct Fourier2dArgs {
    /// Row-major 2x2 trace-free symmetric matrix of p.
    #[arg(long, allow_hyphen_values = true, default_value = "1,0,0,-1")]
    pub p: Floats,
    #[arg(long, default_value_t = 40)]
    pub degree: u32,
    /// Scale of the reported projection q ln r.
    #[arg(long, default_value_t = 0.5)]
    pub r: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Synthetic {
    /// τ p0 with p0 = x_{n-1}^2 - x_n^2.
    Quadratic,
    /// The explicit two-dimensional Z̃ (axis frame).
    Z2d,
    /// τ (x1^2 - x2^2) + Z̃.
    #[value(name = "tau-p0-z")]
    TauP0Z,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ProjectGridArgs {
    /// Field file: `.csv`, otherwise the JSON-headed binary layout.
    #[arg(long, conflicts_with = "synthetic")]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub synthetic: Option<Synthetic>,
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long, default_value_t = 1.0 / 64.0)]
    pub h: f64,
    #[arg(long, default_value_t = 10.0)]
    pub tau: f64,
    #[arg(long, default_value_t = 1.0)]
    pub r: f64,
    /// Also project at r/2 and report the difference.
    #[arg(long)]
    pub half_step: bool,
    /// Writes the synthetic field to this path.
    #[arg(long)]
    pub export: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct VerifyArgs {
    /// Criterion ids or tags, comma separated (e.g. A3 or fourier2d).
    #[arg(long)]
    pub filter: Option<String>,
    /// Overrides every quadrature order in the suite.
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long, default_value_t = 1_000_000)]
    pub mc_samples: u64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Writes the outputs into this directory instead of the recorded paths.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    #[serde(flatten)]
    pub command: Command,
}

fn check_n(n: usize) -> LabResult<()> {
    if n < 2 {
        return Err(LabError::usage("n must be ≥ 2"));
    }
    Ok(())
}

fn check_delta(n: usize, d: &[f64], name: &str) -> LabResult<()> {
    if d.len() != n - 2 {
        return Err(LabError::usage(format!("{name} needs n-2 = {} entries, got {}", n - 2, d.len())));
    }
    Ok(())
}

fn manifest_path(explicit: &Option<PathBuf>, out: &Option<PathBuf>) -> Option<PathBuf> {
    explicit.clone().or_else(|| {
        out.as_ref().filter(|p| p.as_path() != Path::new("-")).map(|p| {
            let mut s = p.clone().into_os_string();
            s.push(".manifest.json");
            PathBuf::from(s)
        })
    })
}

fn write_manifest(path: Option<PathBuf>, command: Command) -> LabResult<()> {
    let Some(path) = path else { return Ok(()) };
    let m = Manifest {
        tool: "blowup".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command,
    };
    formats::write_json(formats::open_output(Some(&path))?, &m)
}

fn note(msg: impl AsRef<str>) {
    let _ = writeln!(std::io::stderr(), "{}", msg.as_ref());
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            note(format!("error: {e}"));
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> LabResult<i32> {
    let workers = parallel::worker_count(cli.workers)?;
    let pool = parallel::pool(workers)?;
    dispatch(cli.command, &pool)
}

fn dispatch(command: Command, pool: &rayon::ThreadPool) -> LabResult<i32> {
    match command {
        Command::Moments(a) => cmd_moments(a, pool),
        Command::Map(a) => cmd_map(a),
        Command::Iterate(a) => cmd_iterate(a),
        Command::Sweep(a) => cmd_sweep(a, pool),
        Command::Fourier2d(a) => cmd_fourier2d(a),
        Command::ProjectGrid(a) => cmd_project_grid(a),
        Command::Verify(a) => cmd_verify(a, pool),
        Command::Replay(a) => cmd_replay(a, pool),
    }
}

fn redirect(p: &mut Option<PathBuf>, dir: &Path) -> LabResult<()> {
    if let Some(old) = p.as_ref().filter(|p| p.as_path() != Path::new("-")) {
        let name = old
            .file_name()
            .ok_or_else(|| LabError::usage(format!("recorded path {} has no file name", old.display())))?;
        *p = Some(dir.join(name));
    }
    Ok(())
}

fn cmd_replay(a: ReplayArgs, pool: &rayon::ThreadPool) -> LabResult<i32> {
    let m: Manifest = formats::read_json(&a.manifest)?;
    let mut command = m.command;
    if let Some(dir) = &a.out_dir {
        let paths: Vec<&mut Option<PathBuf>> = match &mut command {
            Command::Moments(x) => vec![&mut x.out, &mut x.manifest],
            Command::Map(x) => vec![&mut x.out, &mut x.manifest],
            Command::Iterate(x) => vec![&mut x.out, &mut x.summary, &mut x.manifest],
            Command::Sweep(x) => vec![&mut x.out, &mut x.manifest],
            Command::Fourier2d(x) => vec![&mut x.out, &mut x.manifest],
            Command::ProjectGrid(x) => vec![&mut x.out, &mut x.export, &mut x.manifest],
            Command::Verify(_) | Command::Replay(_) => vec![],
        };
        for p in paths {
            redirect(p, dir)?;
        }
    }
    dispatch(command, pool)
}

fn cmd_moments(mut a: MomentsArgs, pool: &rayon::ThreadPool) -> LabResult<i32> {
    check_n(a.n)?;
    if a.delta.is_empty() {
        a.delta.push(Floats(vec![0.0; a.n - 2]));
    }
    for d in &a.delta {
        check_delta(a.n, &d.0, "delta")?;
    }
    let deltas: Vec<Vec<f64>> = a.delta.iter().map(|d| d.0.clone()).collect();
    let sets = parallel::moments_many(pool, a.n, &deltas, a.order)?;
    let mut rows: Vec<(MomentSet, Option<Vec<McEstimate>>)> = Vec::with_capacity(sets.len());
    let mut worst: f64 = 0.0;
    for m in sets {
        let mc = match a.mc_check {
            Some(samples) => {
                let mc = parallel::mc_moments(pool, a.n, &m.delta, samples, a.seed)?;
                worst = worst.max(formats::mc_max_sigma(&m, &mc));
                Some(mc)
            }
            None => None,
        };
        if m.warning {
            note(format!("warning: refinement gap {:.2e} for delta {:?}", m.refinement_gap, m.delta));
        }
        rows.push((m, mc));
    }
    let out = formats::open_output(a.out.as_deref())?;
    match a.format {
        TableFormat::Csv => formats::write_moments_csv(out, &rows)?,
        TableFormat::Json => {
            #[derive(Serialize)]
            struct Row {
                n: usize,
                delta: Vec<f64>,
                b: f64,
                b_i: Vec<f64>,
                c: f64,
                c_i: Vec<f64>,
                order: usize,
                refinement_gap: f64,
                mc: Option<Vec<(f64, f64)>>,
            }
            let json: Vec<Row> = rows
                .iter()
                .map(|(m, mc)| Row {
                    n: m.n,
                    delta: m.delta.clone(),
                    b: m.b,
                    b_i: m.b_i.clone(),
                    c: m.c,
                    c_i: m.c_i.clone(),
                    order: m.order,
                    refinement_gap: m.refinement_gap,
                    mc: mc.as_ref().map(|v| v.iter().map(|e| (e.value, e.std_error)).collect()),
                })
                .collect();
            formats::write_json(out, &json)?;
        }
    }
    write_manifest(manifest_path(&a.manifest, &a.out), Command::Moments(a.clone()))?;
    if a.mc_check.is_some() {
        if worst > acceptance::A10_SIGMA {
            note(format!("quadrature and Monte Carlo differ by {worst:.2} standard errors"));
            return Ok(1);
        }
        note(format!("quadrature and Monte Carlo agree within {worst:.2} standard errors"));
    }
    Ok(0)
}

fn cmd_map(mut a: MapArgs) -> LabResult<i32> {
    let cfg = a.map.resolve()?;
    if a.delta.0.is_empty() {
        a.delta.0 = vec![0.0; a.map.n - 2];
    }
    check_delta(a.map.n, &a.delta.0, "delta")?;
    let s = DeltaState::new(a.map.n, a.tau, a.delta.0.clone())?;
    let rep = half_step_at(&s, &cfg, a.step)?;
    let mono = check_monotonicity_with(&s, &rep.state, rep.sum_c, &cfg);
    #[derive(Serialize)]
    struct Out {
        config: MapConfigJson,
        step: StepJson,
    }
    let out = Out {
        config: (&cfg).into(),
        step: StepJson::new(&s, &rep, &mono),
    };
    formats::write_json(formats::open_output(a.out.as_deref())?, &out)?;
    write_manifest(manifest_path(&a.manifest, &a.out), Command::Map(a))?;
    Ok(0)
}

fn cmd_iterate(mut a: IterateArgs) -> LabResult<i32> {
    let cfg = a.map.resolve()?;
    if a.delta0.0.is_empty() {
        a.delta0.0 = vec![0.0; a.map.n - 2];
    }
    check_delta(a.map.n, &a.delta0.0, "delta0")?;
    let s0 = DeltaState::new(a.map.n, a.tau0, a.delta0.0.clone())?;
    let rec = iterate(&s0, &cfg, a.steps);
    formats::write_trajectory_csv(formats::open_output(a.out.as_deref())?, &rec)?;
    let summary = TrajectorySummary::from(&rec);
    if let Some(p) = &a.summary {
        #[derive(Serialize)]
        struct Out<'a> {
            config: MapConfigJson,
            tau0: f64,
            delta0: &'a [f64],
            summary: &'a TrajectorySummary,
        }
        let out = Out {
            config: (&cfg).into(),
            tau0: a.tau0,
            delta0: &a.delta0.0,
            summary: &summary,
        };
        formats::write_json(formats::open_output(Some(p))?, &out)?;
    }
    let detail = match (&summary.escaped_step, &summary.delta_inf, &summary.failure) {
        (Some(k), _, _) => format!(" at step {k}"),
        (_, Some(d), _) => format!(", delta_inf = {d:?}"),
        (_, _, Some(m)) => format!(": {m}"),
        _ => String::new(),
    };
    note(format!(
        "classification: {}{detail} (C_gamma = {:.3e}, {} steps)",
        summary.classification, cfg.c_gamma, summary.steps
    ));
    write_manifest(manifest_path(&a.manifest, &a.out), Command::Iterate(a))?;
    Ok(0)
}

fn cmd_sweep(mut a: SweepArgs, pool: &rayon::ThreadPool) -> LabResult<i32> {
    let cfg = a.map.resolve()?;
    let n = a.map.n;
    if n < 3 {
        return Err(LabError::usage("sweep needs n ≥ 3"));
    }
    let dir = match &a.direction {
        Some(d) => {
            check_delta(n, &d.0, "direction")?;
            let norm = d.0.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(LabError::usage("direction must be nonzero"));
            }
            d.0.iter().map(|v| v / norm).collect()
        }
        None => {
            let mut d = vec![0.0; n - 2];
            d[0] = 1.0;
            d
        }
    };
    let mut cells = Vec::new();
    for &t in &a.tau0.0 {
        for &m in &a.delta_mag.0 {
            cells.push((t, dir.iter().map(|v| m * v).collect::<Vec<f64>>()));
        }
    }
    let rows = parallel::sweep(pool, &cells, &cfg, a.steps)?;
    let (c, g) = (cfg.c_gamma, cfg.gamma);
    formats::write_sweep_csv(formats::open_output(a.out.as_deref())?, n, &rows, |t| c * t.powf(-g))?;
    write_manifest(manifest_path(&a.manifest, &a.out), Command::Sweep(a))?;
    Ok(0)
}

fn explicit_frame(p: &HarmonicQuadratic) -> Option<Z2dFrame> {
    let c = p.coeff();
    if c == [1.0, 0.0, 0.0, -1.0] {
        Some(Z2dFrame::Axis)
    } else if c == [0.0, 1.0, 1.0, 0.0] {
        Some(Z2dFrame::Rotated)
    } else {
        None
    }
}

fn cmd_fourier2d(a: Fourier2dArgs) -> LabResult<i32> {
    if a.p.0.len() != 4 {
        return Err(LabError::usage("p needs the 4 entries of a 2x2 matrix"));
    }
    let p = HarmonicQuadratic::from_row_major(2, a.p.0.clone())?;
    let dec = fourier_series_2d(&p, a.degree)?;
    let proj = project_z(&dec, a.r)?;
    let check = match explicit_frame(&p) {
        Some(frame) => {
            let mut worst: f64 = 0.0;
            for x in acceptance::a3_points() {
                worst = worst.max((dec.eval_2d(x)? - explicit_z2d(x, frame)).abs());
            }
            Some(worst)
        }
        None => None,
    };
    #[derive(Serialize)]
    struct Out {
        p: QuadraticJson,
        degree: u32,
        decomposition: KmJson,
        r: f64,
        projection: QuadraticJson,
        projection_sup: f64,
        explicit_max_error: Option<f64>,
    }
    let out = Out {
        p: (&p).into(),
        degree: a.degree,
        decomposition: (&dec).into(),
        r: a.r,
        projection: (&proj).into(),
        projection_sup: sup_norm_ball(&proj),
        explicit_max_error: check,
    };
    formats::write_json(formats::open_output(a.out.as_deref())?, &out)?;
    write_manifest(manifest_path(&a.manifest, &a.out), Command::Fourier2d(a))?;
    Ok(0)
}

fn synthetic_field(kind: Synthetic, n: usize, h: f64, tau: f64, radius: f64) -> LabResult<SampledField> {
    check_n(n)?;
    let p0 = make_p_delta(n, &vec![0.0; n - 2])?;
    let field = match kind {
        Synthetic::Quadratic => SampledField::sample(n, h, radius, &vec![0.0; n], |x| tau * p0.eval(x))?,
        Synthetic::Z2d | Synthetic::TauP0Z => {
            if n != 2 {
                return Err(LabError::usage("the Z̃ fields are two-dimensional; use --n 2"));
            }
            let t = if kind == Synthetic::Z2d { 0.0 } else { tau };
            SampledField::sample(2, h, radius, &[0.0, 0.0], |x| {
                t * (x[0] * x[0] - x[1] * x[1]) + explicit_z2d([x[0], x[1]], Z2dFrame::Axis)
            })?
        }
    };
    Ok(field)
}

fn cmd_project_grid(a: ProjectGridArgs) -> LabResult<i32> {
    let field = match (&a.input, a.synthetic) {
        (Some(p), _) => formats::read_field(p)?,
        (None, Some(kind)) => {
            if !(a.h > 0.0) {
                return Err(LabError::usage("h must be positive"));
            }
            synthetic_field(kind, a.n, a.h, a.tau, a.r + 3.0 * a.h)?
        }
        (None, None) => return Err(LabError::usage("give --input or --synthetic")),
    };
    if let Some(p) = &a.export {
        formats::write_field(p, &field)?;
    }
    #[derive(Serialize)]
    struct Out {
        n: usize,
        h: f64,
        radius: f64,
        projection: ProjectionJson,
        half: Option<ProjectionJson>,
        difference: Option<QuadraticJson>,
    }
    let out = if a.half_step {
        let (whole, half) = half_step_empirical(&field, a.r)?;
        let diff = half.raw.add(&whole.raw.scaled(-1.0))?;
        Out {
            n: field.dim(),
            h: field.spacing(),
            radius: field.radius(),
            projection: ProjectionJson::new(a.r, &whole),
            half: Some(ProjectionJson::new(0.5 * a.r, &half)),
            difference: Some((&diff).into()),
        }
    } else {
        Out {
            n: field.dim(),
            h: field.spacing(),
            radius: field.radius(),
            projection: ProjectionJson::new(a.r, &project(&field, a.r)?),
            half: None,
            difference: None,
        }
    };
    if out.projection.ill_conditioned {
        note("warning: projection norm is below 10x the finite-difference error estimate");
    }
    formats::write_json(formats::open_output(a.out.as_deref())?, &out)?;
    write_manifest(manifest_path(&a.manifest, &a.out), Command::ProjectGrid(a))?;
    Ok(0)
}

fn cmd_verify(a: VerifyArgs, pool: &rayon::ThreadPool) -> LabResult<i32> {
    if a.order.is_some_and(|o| o < 2) {
        return Err(LabError::usage("order must be ≥ 2"));
    }
    let cfg = VerifyConfig {
        order: a.order,
        filter: a.filter.clone(),
        mc_samples: a.mc_samples,
        seed: a.seed,
    };
    let ctx = Ctx { cfg: &cfg, pool };
    let outcomes = acceptance::run(&ctx, |o| {
        println!("{}", o.line());
        let _ = std::io::stdout().flush();
    });
    if outcomes.is_empty() {
        return Err(LabError::usage(format!("no criterion matches {:?}", a.filter.unwrap_or_default())));
    }
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    println!("{}/{} criteria passed", outcomes.len() - failed.len(), outcomes.len());
    if failed.is_empty() {
        Ok(0)
    } else {
        note(format!("failed: {}", failed.join(", ")));
        Ok(1)
    }
}
