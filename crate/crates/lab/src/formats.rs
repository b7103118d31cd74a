//! On-disk representations: JSON for single objects and manifests, CSV for
//! tables, and a JSON-headed binary (or CSV) layout for sampled fields.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use blowup_core::gridproj::{Projection, SampledField};
use blowup_core::km::{KMDecomposition, PhiTerm};
use blowup_core::moments::MomentSet;
use blowup_core::quadratic::{DeltaState, HarmonicQuadratic};
use blowup_core::renorm::{
    Classification, MapConfig, MonotonicityReport, NoiseMode, Regime, StepReport, SweepRow, TrajectoryRecord,
};
use blowup_core::sphere::McEstimate;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, LabResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticJson {
    pub n: usize,
    /// Row-major coefficient matrix.
    pub coeff: Vec<f64>,
}

impl From<&HarmonicQuadratic> for QuadraticJson {
    fn from(q: &HarmonicQuadratic) -> Self {
        QuadraticJson {
            n: q.dim(),
            coeff: q.coeff().to_vec(),
        }
    }
}

impl QuadraticJson {
    pub fn to_core(&self) -> LabResult<HarmonicQuadratic> {
        Ok(HarmonicQuadratic::from_row_major(self.n, self.coeff.clone())?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaStateJson {
    pub n: usize,
    pub tau: f64,
    pub delta: Vec<f64>,
    pub delta_tilde: f64,
    /// Row-major orthogonal frame.
    pub frame: Vec<f64>,
}

impl From<&DeltaState> for DeltaStateJson {
    fn from(s: &DeltaState) -> Self {
        DeltaStateJson {
            n: s.n,
            tau: s.tau,
            delta: s.delta.clone(),
            delta_tilde: s.delta_tilde(),
            frame: s.q.clone(),
        }
    }
}

impl DeltaStateJson {
    pub fn to_core(&self) -> LabResult<DeltaState> {
        let mut s = DeltaState::new(self.n, self.tau, self.delta.clone())?;
        if self.frame.len() != self.n * self.n {
            return Err(LabError::usage(format!("frame must have {} entries", self.n * self.n)));
        }
        s.q = self.frame.clone();
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiTermJson {
    pub degree: u32,
    pub cos_coef: f64,
    pub sin_coef: f64,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmJson {
    pub n: usize,
    pub q: QuadraticJson,
    pub phi_terms: Vec<PhiTermJson>,
    pub tail_bound: f64,
}

impl From<&KMDecomposition> for KmJson {
    fn from(d: &KMDecomposition) -> Self {
        KmJson {
            n: d.n,
            q: (&d.q).into(),
            phi_terms: d
                .phi_terms
                .iter()
                .map(|t| PhiTermJson {
                    degree: t.degree,
                    cos_coef: t.cos_coef,
                    sin_coef: t.sin_coef,
                    factor: t.factor,
                })
                .collect(),
            tail_bound: d.tail_bound,
        }
    }
}

impl KmJson {
    pub fn to_core(&self) -> LabResult<KMDecomposition> {
        Ok(KMDecomposition {
            n: self.n,
            q: self.q.to_core()?,
            phi_terms: self
                .phi_terms
                .iter()
                .map(|t| PhiTerm {
                    degree: t.degree,
                    cos_coef: t.cos_coef,
                    sin_coef: t.sin_coef,
                    factor: t.factor,
                })
                .collect(),
            tail_bound: self.tail_bound,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Off,
    Random,
    Adversarial,
}

pub fn noise_mode(kind: NoiseKind, seed: u64) -> NoiseMode {
    match kind {
        NoiseKind::Off => NoiseMode::Off,
        NoiseKind::Random => NoiseMode::Random { seed },
        NoiseKind::Adversarial => NoiseMode::Adversarial,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapConfigJson {
    pub n: usize,
    pub order: usize,
    pub gamma: f64,
    pub alpha: f64,
    pub c_noise: f64,
    pub noise: NoiseKind,
    pub seed: u64,
    pub c_gamma: f64,
    pub kappa0: f64,
    pub tol_conv: f64,
    pub moment_tol: f64,
}

impl From<&MapConfig> for MapConfigJson {
    fn from(c: &MapConfig) -> Self {
        let (noise, seed) = match c.noise {
            NoiseMode::Off => (NoiseKind::Off, 0),
            NoiseMode::Random { seed } => (NoiseKind::Random, seed),
            NoiseMode::Adversarial => (NoiseKind::Adversarial, 0),
        };
        MapConfigJson {
            n: c.n,
            order: c.order,
            gamma: c.gamma,
            alpha: c.alpha,
            c_noise: c.c_noise,
            noise,
            seed,
            c_gamma: c.c_gamma,
            kappa0: c.kappa0,
            tol_conv: c.tol_conv,
            moment_tol: c.moment_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityJson {
    pub regime: String,
    pub sum_c: f64,
    pub threshold: f64,
    pub exceeds: bool,
    pub ratio_claim: Option<bool>,
    pub opposite_claims: Vec<(usize, bool)>,
    pub holds: bool,
}

pub fn regime_label(r: Regime) -> &'static str {
    match r {
        Regime::Negative => "negative",
        Regime::Positive => "positive",
        Regime::Neutral => "neutral",
    }
}

impl From<&MonotonicityReport> for MonotonicityJson {
    fn from(m: &MonotonicityReport) -> Self {
        MonotonicityJson {
            regime: regime_label(m.regime).to_string(),
            sum_c: m.sum_c,
            threshold: m.threshold,
            exceeds: m.exceeds,
            ratio_claim: m.ratio_claim,
            opposite_claims: m.opposite_claims.clone(),
            holds: m.holds(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepJson {
    pub input: DeltaStateJson,
    pub output: DeltaStateJson,
    pub increment: QuadraticJson,
    pub noise: Vec<f64>,
    pub defect: f64,
    pub sum_c: f64,
    pub moment_warning: bool,
    pub monotonicity: MonotonicityJson,
}

impl StepJson {
    pub fn new(input: &DeltaState, rep: &StepReport, mono: &MonotonicityReport) -> Self {
        StepJson {
            input: input.into(),
            output: (&rep.state).into(),
            increment: (&rep.increment).into(),
            noise: rep.noise.clone(),
            defect: rep.defect,
            sum_c: rep.sum_c,
            moment_warning: rep.moment_warning,
            monotonicity: mono.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub classification: String,
    pub escaped_step: Option<usize>,
    pub failure: Option<String>,
    pub delta_inf: Option<Vec<f64>>,
    pub steps: usize,
    pub fitted_c: f64,
    pub dominated: bool,
    pub tail: f64,
    pub tau_increasing: bool,
    pub ratio_strictly_increasing: bool,
    pub monotonicity_holds: bool,
}

impl From<&TrajectoryRecord> for TrajectorySummary {
    fn from(r: &TrajectoryRecord) -> Self {
        let (escaped_step, failure, delta_inf) = match &r.classification {
            Classification::Escaped { step } => (Some(*step), None, None),
            Classification::Failed { message, .. } => (None, Some(message.clone()), None),
            Classification::Converged { delta_inf } => (None, None, Some(delta_inf.clone())),
            Classification::Exhausted => (None, None, None),
        };
        TrajectorySummary {
            classification: r.classification.label().to_string(),
            escaped_step,
            failure,
            delta_inf,
            steps: r.steps.len() - 1,
            fitted_c: r.fitted_c,
            dominated: r.dominated,
            tail: r.tail,
            tau_increasing: r.tau_increasing(),
            ratio_strictly_increasing: r.ratio_strictly_increasing(),
            monotonicity_holds: r.monotonicity.iter().all(|m| m.holds()),
        }
    }
}

/// Exact decimal text for an `f64`: shortest representation that parses
/// back to the same bits.
fn num(v: f64) -> String {
    format!("{v:?}")
}

fn csv_writer(out: Box<dyn Write>) -> csv::Writer<Box<dyn Write>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(out)
}

/// Opens `path` for writing, or stdout when `path` is `None` or `-`.
pub fn open_output(path: Option<&Path>) -> LabResult<Box<dyn Write>> {
    match path {
        Some(p) if p != Path::new("-") => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
            }
            let f = File::create(p).map_err(|e| LabError::io(p, e))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        _ => Ok(Box::new(std::io::stdout().lock())),
    }
}

pub fn moments_header(n: usize, mc: bool) -> Vec<String> {
    let mut h = vec!["n".to_string()];
    h.extend((1..=n.saturating_sub(2)).map(|i| format!("delta_{i}")));
    h.push("B".into());
    h.extend((1..=n).map(|i| format!("B_{i}")));
    h.push("C".into());
    h.extend((1..=n).map(|i| format!("C_{i}")));
    h.push("order".into());
    if mc {
        h.push("B_mc".into());
        h.push("B_mc_se".into());
        for i in 1..=n {
            h.push(format!("B_{i}_mc"));
            h.push(format!("B_{i}_mc_se"));
        }
        h.push("mc_max_sigma".into());
        h.push("mc_samples".into());
        h.push("mc_seed".into());
    }
    h
}

/// Largest `|quadrature - MC| / std_error` over `(B, B_1..B_n)`.
pub fn mc_max_sigma(m: &MomentSet, mc: &[McEstimate]) -> f64 {
    std::iter::once(m.b)
        .chain(m.b_i.iter().cloned())
        .zip(mc)
        .map(|(q, e)| if e.std_error > 0.0 { (q - e.value).abs() / e.std_error } else if q == e.value { 0.0 } else { f64::INFINITY })
        .fold(0.0, f64::max)
}

pub fn moments_row(m: &MomentSet, mc: Option<&[McEstimate]>) -> Vec<String> {
    let mut r = vec![m.n.to_string()];
    r.extend(m.delta.iter().map(|d| num(*d)));
    r.push(num(m.b));
    r.extend(m.b_i.iter().map(|v| num(*v)));
    r.push(num(m.c));
    r.extend(m.c_i.iter().map(|v| num(*v)));
    r.push(m.order.to_string());
    if let Some(mc) = mc {
        for e in mc {
            r.push(num(e.value));
            r.push(num(e.std_error));
        }
        r.push(num(mc_max_sigma(m, mc)));
        r.push(mc.first().map_or(0, |e| e.samples).to_string());
        r.push(mc.first().map_or(0, |e| e.seed).to_string());
    }
    r
}

pub fn write_moments_csv(out: Box<dyn Write>, rows: &[(MomentSet, Option<Vec<McEstimate>>)]) -> LabResult<()> {
    let Some((first, mc)) = rows.first() else {
        return Ok(());
    };
    let mut w = csv_writer(out);
    w.write_record(moments_header(first.n, mc.is_some()))?;
    for (m, mc) in rows {
        w.write_record(moments_row(m, mc.as_deref()))?;
    }
    w.flush().map_err(|e| LabError::io("<output>", e))?;
    Ok(())
}

pub fn trajectory_header(n: usize) -> Vec<String> {
    let mut h = vec!["k".to_string(), "tau".to_string()];
    h.extend((1..=n.saturating_sub(2)).map(|i| format!("delta_{i}")));
    h.extend(["ratio", "sum_abs_ddelta", "defect"].map(String::from));
    h
}

pub fn write_trajectory_csv(out: Box<dyn Write>, rec: &TrajectoryRecord) -> LabResult<()> {
    let mut w = csv_writer(out);
    w.write_record(trajectory_header(rec.config.n))?;
    for s in &rec.steps {
        let mut r = vec![s.k.to_string(), num(s.tau)];
        r.extend(s.delta.iter().map(|d| num(*d)));
        r.push(num(s.ratio));
        r.push(num(s.sum_abs_ddelta));
        r.push(num(s.defect));
        w.write_record(r)?;
    }
    w.flush().map_err(|e| LabError::io("<output>", e))?;
    Ok(())
}

pub fn write_sweep_csv(out: Box<dyn Write>, n: usize, rows: &[SweepRow], threshold: impl Fn(f64) -> f64) -> LabResult<()> {
    let mut w = csv_writer(out);
    let mut h = vec!["tau0".to_string()];
    h.extend((1..=n.saturating_sub(2)).map(|i| format!("delta0_{i}")));
    h.extend(
        ["delta0_norm", "threshold", "classification", "steps", "final_tau", "final_ratio", "final_norm"]
            .map(String::from),
    );
    w.write_record(h)?;
    for row in rows {
        let mut r = vec![num(row.tau0)];
        r.extend(row.delta0.iter().map(|d| num(*d)));
        r.push(num(row.delta0.iter().map(|d| d * d).sum::<f64>().sqrt()));
        r.push(num(threshold(row.tau0)));
        r.push(row.classification.label().to_string());
        r.push(row.steps.to_string());
        r.push(num(row.final_tau));
        r.push(num(row.final_ratio));
        r.push(num(row.final_norm));
        w.write_record(r)?;
    }
    w.flush().map_err(|e| LabError::io("<output>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionJson {
    pub r: f64,
    pub tau: f64,
    pub p: QuadraticJson,
    pub raw: QuadraticJson,
    pub fd_error: f64,
    pub points: usize,
    pub ill_conditioned: bool,
}

impl ProjectionJson {
    pub fn new(r: f64, p: &Projection) -> Self {
        ProjectionJson {
            r,
            tau: p.tau,
            p: (&p.p).into(),
            raw: (&p.raw).into(),
            fd_error: p.fd_error,
            points: p.points,
            ill_conditioned: p.ill_conditioned,
        }
    }
}

/// Header line of the binary field format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub format: String,
    pub n: usize,
    pub h: f64,
    /// Radius covered along each axis, `h * half_width`.
    #[serde(rename = "R")]
    pub radius: f64,
    pub half_width: usize,
    pub center: Vec<f64>,
    /// Always `"row-major"`: the last index varies fastest.
    pub order: String,
    pub dtype: String,
}

const FIELD_FORMAT: &str = "blowup-field-v1";

/// One JSON header line, then `(2 half_width + 1)^n` little-endian `f64`.
pub fn write_field_binary(path: &Path, field: &SampledField) -> LabResult<()> {
    let header = FieldHeader {
        format: FIELD_FORMAT.into(),
        n: field.dim(),
        h: field.spacing(),
        radius: field.radius(),
        half_width: field.half_width(),
        center: field.center().to_vec(),
        order: "row-major".into(),
        dtype: "f64-le".into(),
    };
    let mut w = open_output(Some(path))?;
    let io = |e| LabError::io(path, e);
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n").map_err(io)?;
    for v in field.values() {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

pub fn read_field_binary(path: &Path) -> LabResult<SampledField> {
    let f = File::open(path).map_err(|e| LabError::io(path, e))?;
    let mut r = BufReader::new(f);
    let mut line = String::new();
    r.read_line(&mut line).map_err(|e| LabError::io(path, e))?;
    let header: FieldHeader = serde_json::from_str(line.trim_end())?;
    if header.format != FIELD_FORMAT || header.order != "row-major" || header.dtype != "f64-le" {
        return Err(LabError::Field(format!(
            "unsupported header {} / {} / {}",
            header.format, header.order, header.dtype
        )));
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| LabError::io(path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(LabError::Field(format!("{} trailing bytes", bytes.len() % 8)));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(SampledField::from_values(header.n, header.h, header.half_width, header.center, values)?)
}

/// CSV with columns `x_1..x_n,u`, one row per lattice point in storage
/// order.
pub fn write_field_csv(path: &Path, field: &SampledField) -> LabResult<()> {
    let n = field.dim();
    let side = 2 * field.half_width() + 1;
    let mut w = csv_writer(open_output(Some(path))?);
    let mut h: Vec<String> = (1..=n).map(|i| format!("x_{i}")).collect();
    h.push("u".into());
    w.write_record(h)?;
    for (flat, v) in field.values().iter().enumerate() {
        let mut rest = flat;
        let mut x = vec![0.0; n];
        for k in (0..n).rev() {
            let i = (rest % side) as f64 - field.half_width() as f64;
            rest /= side;
            x[k] = field.center()[k] + field.spacing() * i;
        }
        let mut r: Vec<String> = x.iter().map(|v| num(*v)).collect();
        r.push(num(*v));
        w.write_record(r)?;
    }
    w.flush().map_err(|e| LabError::io(path, e))?;
    Ok(())
}

/// Reads the CSV layout back; rows may come in any order but must form a
/// full odd-sided lattice.
pub fn read_field_csv(path: &Path) -> LabResult<SampledField> {
    let mut r = csv::Reader::from_path(path)?;
    let n = r.headers()?.len().checked_sub(1).filter(|n| *n >= 1).ok_or_else(|| LabError::Field("need x_1..x_n,u columns".into()))?;
    let mut pts: Vec<(Vec<f64>, f64)> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|e| LabError::Field(format!("{s:?}: {e}"))))
            .collect::<LabResult<_>>()?;
        if vals.len() != n + 1 {
            return Err(LabError::Field("ragged row".into()));
        }
        pts.push((vals[..n].to_vec(), vals[n]));
    }
    let side = (pts.len() as f64).powf(1.0 / n as f64).round() as usize;
    if side.is_multiple_of(2) || side.pow(n as u32) != pts.len() || side < 3 {
        return Err(LabError::Field(format!("{} points do not form an odd-sided lattice", pts.len())));
    }
    let half_width = (side - 1) / 2;
    let lo: Vec<f64> = (0..n).map(|k| pts.iter().map(|p| p.0[k]).fold(f64::INFINITY, f64::min)).collect();
    let hi: Vec<f64> = (0..n).map(|k| pts.iter().map(|p| p.0[k]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let h = (hi[0] - lo[0]) / (side - 1) as f64;
    let center: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
    let mut values = vec![f64::NAN; pts.len()];
    for (x, u) in &pts {
        let mut flat = 0usize;
        for k in 0..n {
            let i = ((x[k] - lo[k]) / h).round();
            if !(0.0..side as f64).contains(&i) || ((x[k] - lo[k]) / h - i).abs() > 1e-6 {
                return Err(LabError::Field(format!("point {x:?} is off the lattice")));
            }
            flat = flat * side + i as usize;
        }
        values[flat] = *u;
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(LabError::Field("lattice has holes".into()));
    }
    Ok(SampledField::from_values(n, h, half_width, center, values)?)
}

pub fn read_field(path: &Path) -> LabResult<SampledField> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => read_field_csv(path),
        _ => read_field_binary(path),
    }
}

pub fn write_field(path: &Path, field: &SampledField) -> LabResult<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => write_field_csv(path, field),
        _ => write_field_binary(path, field),
    }
}

pub fn write_json<T: Serialize>(out: Box<dyn Write>, value: &T) -> LabResult<()> {
    let mut out = out;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n").map_err(|e| LabError::io("<output>", e))?;
    out.flush().map_err(|e| LabError::io("<output>", e))?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> LabResult<T> {
    let f = File::open(path).map_err(|e| LabError::io(path, e))?;
    Ok(serde_json::from_reader(BufReader::new(f))?)
}
