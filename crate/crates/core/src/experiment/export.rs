//! CSV/JSON exports and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use super::analysis;
use super::config::{ExperimentConfig, OutputFormat};
use super::fronts::LineFront;
use super::pipeline::{ExperimentOutput, FieldDiagnostics, SnapshotRecord};
use crate::bohmian::{TrajectoryRecord, TrajectoryStatus};
use crate::error::Result;
use crate::finsler::{ExtendedTrajectory, Termination};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    F(f64),
    U(usize),
    B(bool),
}

impl Cell {
    fn csv(self) -> String {
        match self {
            Cell::F(v) => v.to_string(),
            Cell::U(v) => v.to_string(),
            Cell::B(v) => u8::from(v).to_string(),
        }
    }

    fn json(self) -> Value {
        match self {
            Cell::F(v) if v.is_finite() => json!(v),
            Cell::F(_) => Value::Null,
            Cell::U(v) => json!(v),
            Cell::B(v) => json!(v),
        }
    }
}

/// A rectangular table with a fixed header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self { columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|c| c.csv()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// Array of row objects.
    pub fn to_json(&self) -> String {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let obj: Map<String, Value> =
                    self.columns.iter().zip(row).map(|(k, c)| (k.to_string(), c.json())).collect();
                Value::Object(obj)
            })
            .collect();
        serde_json::to_string_pretty(&rows).expect("table serializes")
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Json => self.to_json(),
        }
    }
}

pub fn psi_table(snap: &SnapshotRecord) -> Table {
    let mut t = Table::new(&["x", "re_psi", "im_psi", "abs_psi"]);
    for (i, p) in snap.psi.iter().enumerate() {
        t.push(vec![Cell::F(snap.grid.x(i)), Cell::F(p.re), Cell::F(p.im), Cell::F(p.norm())]);
    }
    t
}

pub fn polar_table(snap: &SnapshotRecord) -> Table {
    let mut t = Table::new(&["x", "A", "S", "Q", "node_mask"]);
    for i in 0..snap.grid.len() {
        t.push(vec![
            Cell::F(snap.grid.x(i)),
            Cell::F(snap.amplitude[i]),
            Cell::F(snap.action[i]),
            Cell::F(snap.q[i]),
            Cell::B(snap.node_mask[i]),
        ]);
    }
    t
}

fn on_stride(t: f64, every: f64) -> bool {
    if !(every > 0.0) {
        return true;
    }
    let k = (t / every).round();
    (t - k * every).abs() < 1e-9 * every.max(1.0)
}

/// Long-format trajectory rows at multiples of `every`, plus each final point.
pub fn trajectory_table(records: &[TrajectoryRecord], every: f64) -> Table {
    let mut t = Table::new(&["id", "t", "x", "v", "node_flag"]);
    for r in records {
        let n = r.points.len();
        for (i, p) in r.points.iter().enumerate() {
            if on_stride(p.t, every) || i + 1 == n {
                t.push(vec![Cell::U(r.id), Cell::F(p.t), Cell::F(p.x), Cell::F(p.v), Cell::B(p.node_flag)]);
            }
        }
    }
    t
}

/// Raw geodesic samples, keeping the first sample past each multiple of
/// `every` in `q⁰`, plus the endpoints.
pub fn geodesic_table(trajectories: &[ExtendedTrajectory], every: f64) -> Table {
    let mut t = Table::new(&["id", "s", "t", "q1", "qdot0", "qdot1", "lambda", "node_flag"]);
    for traj in trajectories {
        let n = traj.samples.len();
        let mut last_bin = f64::NEG_INFINITY;
        for (i, g) in traj.samples.iter().enumerate() {
            let bin = if every > 0.0 { (g.q[0] / every + 1e-9).floor() } else { i as f64 };
            if bin > last_bin || i + 1 == n {
                last_bin = bin;
                t.push(vec![
                    Cell::U(traj.id),
                    Cell::F(g.s),
                    Cell::F(g.q[0]),
                    Cell::F(g.q[1]),
                    Cell::F(g.qdot[0]),
                    Cell::F(g.qdot[1]),
                    Cell::F(g.lambda),
                    Cell::B(g.node_flag),
                ]);
            }
        }
    }
    t
}

pub fn curvature_table(rows: &[crate::curvature::CurvaturePoint]) -> Table {
    let mut t = Table::new(&["t", "id", "q1", "R", "trusted"]);
    for r in rows {
        t.push(vec![Cell::F(r.t), Cell::U(r.id), Cell::F(r.q1), Cell::F(r.r), Cell::B(r.trusted)]);
    }
    t
}

pub fn front_table(fronts: &[LineFront]) -> Option<Table> {
    let plane = fronts.first()?.plane;
    let mut t = Table::new(&[plane.label_name(), "id", "q1", plane.value_name(), "node_flag"]);
    for f in fronts {
        for p in &f.points {
            t.push(vec![Cell::F(f.label), Cell::U(p.id), Cell::F(p.q1), Cell::F(p.value), Cell::B(p.node_flag)]);
        }
    }
    Some(t)
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub kind: String,
    pub sha256: String,
    pub rows: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct LambdaStats {
    pub count: usize,
    pub max_drift: f64,
    pub mean_drift: f64,
    pub min_initial_lambda: f64,
    pub max_initial_lambda: f64,
    /// Factors that brought the initial data to `|Λ| = 1`.
    pub min_scale_factor: f64,
    pub max_scale_factor: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Counts {
    pub first_order: usize,
    pub second_order: usize,
    pub geodesics: usize,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Truncations {
    pub first_order_left_grid: usize,
    pub second_order_left_grid: usize,
    pub geodesic_singular: usize,
    pub geodesic_left_grid: usize,
    /// Earliest coordinate time at which any geodesic was truncated.
    pub earliest_geodesic_truncation: Option<f64>,
}

/// The JSON manifest written next to every export bundle.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub status: String,
    pub error: Option<String>,
    pub version: String,
    pub config: ExperimentConfig,
    pub config_text: String,
    pub field: Option<FieldDiagnostics>,
    pub lambda: Option<LambdaStats>,
    pub node_flags: Option<Counts>,
    pub truncations: Option<Truncations>,
    pub diagnostics: Option<Value>,
    pub wall_time_s: Option<f64>,
    pub files: Vec<FileEntry>,
}

impl Manifest {
    pub fn failed(config: &ExperimentConfig, err: &crate::Error) -> Self {
        Self {
            status: "failed".into(),
            error: Some(err.to_string()),
            version: env!("CARGO_PKG_VERSION").into(),
            config: config.clone(),
            config_text: config.to_text(),
            field: None,
            lambda: None,
            node_flags: None,
            truncations: None,
            diagnostics: None,
            wall_time_s: None,
            files: Vec::new(),
        }
    }
}

pub fn lambda_stats(trajectories: &[ExtendedTrajectory]) -> LambdaStats {
    if trajectories.is_empty() {
        return LambdaStats::default();
    }
    let drifts: Vec<f64> = trajectories.iter().map(|t| t.lambda_drift()).collect();
    let fold = |f: &dyn Fn(&ExtendedTrajectory) -> f64| {
        trajectories.iter().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let (lmin, lmax) = fold(&|t| t.initial_lambda);
    let (smin, smax) = fold(&|t| t.scale_factor);
    LambdaStats {
        count: trajectories.len(),
        max_drift: drifts.iter().cloned().fold(0.0, f64::max),
        mean_drift: drifts.iter().sum::<f64>() / drifts.len() as f64,
        min_initial_lambda: lmin,
        max_initial_lambda: lmax,
        min_scale_factor: smin,
        max_scale_factor: smax,
    }
}

pub fn truncations(out: &ExperimentOutput) -> Truncations {
    let left = |recs: &[TrajectoryRecord]| {
        recs.iter().filter(|r| matches!(r.status, TrajectoryStatus::LeftGrid { .. })).count()
    };
    let mut tr = Truncations {
        first_order_left_grid: left(&out.first_order),
        second_order_left_grid: left(&out.second_order),
        ..Default::default()
    };
    for g in &out.geodesics {
        let t = match g.termination {
            Termination::SingularMetric { t, .. } => {
                tr.geodesic_singular += 1;
                t
            }
            Termination::LeftGrid { t, .. } => {
                tr.geodesic_left_grid += 1;
                t
            }
            _ => continue,
        };
        tr.earliest_geodesic_truncation = Some(tr.earliest_geodesic_truncation.map_or(t, |e: f64| e.min(t)));
    }
    tr
}

/// Analysis summary stored in the manifest.
pub fn diagnostics(out: &ExperimentOutput) -> Value {
    let mut d = Map::new();
    if out.stages.bohmian {
        d.insert("equivariance".into(), json!(analysis::equivariance(out)));
        d.insert(
            "first_vs_second_order".into(),
            json!(analysis::first_vs_second_order(&out.first_order, &out.second_order)),
        );
        if out.stages.geodesics {
            d.insert(
                "geodesic_vs_second_order".into(),
                json!(analysis::geodesic_vs_second_order(&out.second_order, &out.geodesics)),
            );
        }
    }
    if out.stages.geodesics {
        let fronts = analysis::fronts_of(out);
        d.insert("front_spread".into(), json!(analysis::front_spread(&fronts.q1_qdot1)));
        d.insert("time_dilation".into(), json!(analysis::time_dilation(&fronts.q1_q0, 0.5 * out.config.t_final)));
    }
    if out.stages.curvature {
        let c = &out.config;
        d.insert("curvature_signs".into(), json!(analysis::curvature_signs(&out.curvature, c.q_p, 400.0, 2000.0)));
    }
    Value::Object(d)
}

struct Writer<'a> {
    dir: &'a Path,
    format: OutputFormat,
    files: Vec<FileEntry>,
}

impl Writer<'_> {
    fn raw(&mut self, name: &str, kind: &str, body: &str, rows: Option<usize>) -> Result<()> {
        fs::write(self.dir.join(name), body)?;
        self.files.push(FileEntry {
            path: name.to_string(),
            kind: kind.to_string(),
            sha256: hex::encode(Sha256::digest(body.as_bytes())),
            rows,
        });
        Ok(())
    }

    fn table(&mut self, stem: &str, kind: &str, table: &Table) -> Result<()> {
        let name = format!("{stem}.{}", self.format.extension());
        self.raw(&name, kind, &table.render(self.format), Some(table.rows.len()))
    }
}

fn time_tag(t: f64) -> String {
    format!("t{t}")
}

/// Writes every export present in `out` into `dir` and returns the manifest
/// (also written as `manifest.json`).
pub fn write_outputs(out: &ExperimentOutput, dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let cfg = &out.config;
    let mut w = Writer { dir, format: cfg.format, files: Vec::new() };
    for snap in &out.snapshots {
        let tag = time_tag(snap.time);
        w.table(&format!("psi_{tag}"), "psi", &psi_table(snap))?;
        let side = json!({
            "time": snap.time,
            "norm": snap.norm,
            "grid": { "n": snap.grid.len(), "x_min": snap.grid.x_min, "x_max": snap.grid.x(snap.grid.len() - 1), "dx": snap.grid.dx() },
            "parameters": {
                "beta": cfg.beta, "k": cfg.k, "q_c": cfg.q_c, "V0": cfg.v0, "a": cfg.a,
                "q_p": cfg.q_p, "mass": cfg.mass, "dt": cfg.dt,
            },
        });
        w.raw(&format!("psi_{tag}.json"), "psi_meta", &serde_json::to_string_pretty(&side).expect("json"), None)?;
        w.table(&format!("polar_{tag}"), "polar", &polar_table(snap))?;
    }
    if out.stages.bohmian {
        w.table("trajectories_first_order", "trajectories", &trajectory_table(&out.first_order, cfg.trajectory_every))?;
        w.table(
            "trajectories_second_order",
            "trajectories",
            &trajectory_table(&out.second_order, cfg.trajectory_every),
        )?;
    }
    if out.stages.geodesics {
        w.table("geodesics", "geodesics", &geodesic_table(&out.geodesics, cfg.trajectory_every))?;
        let fronts = analysis::fronts_of(out);
        for set in [&fronts.q1_qdot1, &fronts.q1_q0, &fronts.q1_tau] {
            if let Some(t) = front_table(set) {
                w.table(&format!("fronts_{}", set[0].plane.name()), "fronts", &t)?;
            }
        }
    }
    if out.stages.curvature {
        w.table("curvature", "curvature", &curvature_table(&out.curvature))?;
    }
    let counts = Counts {
        first_order: out.first_order.iter().flat_map(|r| &r.points).filter(|p| p.node_flag).count(),
        second_order: out.second_order.iter().flat_map(|r| &r.points).filter(|p| p.node_flag).count(),
        geodesics: out.geodesics.iter().map(|g| g.node_flag_count()).sum(),
    };
    let manifest = Manifest {
        status: "ok".into(),
        error: None,
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        config_text: cfg.to_text(),
        field: Some(out.field.clone()),
        lambda: out.stages.geodesics.then(|| lambda_stats(&out.geodesics)),
        node_flags: Some(counts),
        truncations: Some(truncations(out)),
        diagnostics: Some(diagnostics(out)),
        wall_time_s: Some(out.wall_time_s),
        files: w.files,
    };
    write_manifest(&manifest, dir)?;
    Ok(manifest)
}

pub fn write_manifest(manifest: &Manifest, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(manifest).expect("manifest serializes"))?;
    Ok(path)
}

/// Checks that every file listed in a manifest exists and hash-matches.
pub fn verify_manifest(dir: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(dir.join("manifest.json"))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| crate::Error::Io(e.to_string()))?;
    let mut bad = Vec::new();
    for f in v["files"].as_array().into_iter().flatten() {
        let name = f["path"].as_str().unwrap_or_default();
        match fs::read(dir.join(name)) {
            Ok(bytes) if hex::encode(Sha256::digest(&bytes)) == f["sha256"].as_str().unwrap_or_default() => {}
            _ => bad.push(name.to_string()),
        }
    }
    Ok(bad)
}
