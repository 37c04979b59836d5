//! Persistence of results: CSV tables, SVG log-log plots and a JSON run
//! manifest carrying SHA-256 checksums of every emitted file.

use std::fmt::Write as _;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::solver::{Kind, LifespanFit, LifespanRecord};

/// Row of a sweep file.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SweepRow {
    pub kind: Kind,
    pub p: f64,
    pub amplitude: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub blew_up: bool,
    pub refinement_gap: f64,
    pub contaminated: bool,
}

impl From<&LifespanRecord> for SweepRow {
    fn from(r: &LifespanRecord) -> Self {
        Self {
            kind: r.kind,
            p: r.p,
            amplitude: r.amplitude,
            t: r.t_measured,
            blew_up: r.blew_up,
            refinement_gap: r.refinement_gap,
            contaminated: r.boundary_contaminated,
        }
    }
}

impl SweepRow {
    /// Rebuild a record; the refinement pair is not stored in the file.
    pub fn to_record(&self, refinement_tol: f64) -> LifespanRecord {
        LifespanRecord {
            kind: self.kind,
            p: self.p,
            amplitude: self.amplitude,
            blew_up: self.blew_up,
            t_measured: self.t,
            refinement_pair: (f64::NAN, f64::NAN),
            refinement_gap: self.refinement_gap,
            boundary_contaminated: self.contaminated,
            usable: self.blew_up && !self.contaminated && self.refinement_gap <= refinement_tol,
        }
    }
}

/// Row of an audit file.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AuditRow {
    pub kind: String,
    pub p: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub constant: f64,
    pub margin: f64,
    pub h: f64,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut rd = csv::Reader::from_path(path)?;
    rd.deserialize()
        .map(|r| r.map_err(|e| Error::Malformed(format!("{}: {e}", path.display()))))
        .collect()
}

pub fn write_sweep_csv(path: &Path, records: &[LifespanRecord]) -> Result<()> {
    let rows: Vec<SweepRow> = records.iter().map(SweepRow::from).collect();
    write_csv(path, &rows)
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    read_csv(path)
}

/// `exp(c sigma^-(p-1))`, the lifespan bound in the critical hyperbolic case.
pub fn critical_hyperbolic_reference(sigma: f64, p: f64, c: f64) -> f64 {
    (c * sigma.powf(1.0 - p)).exp()
}

/// A labelled straight line in log-log coordinates.
#[derive(Clone, Debug)]
pub struct RefLine {
    pub label: String,
    pub slope: f64,
    /// Passes through `(x0, y0)`.
    pub x0: f64,
    pub y0: f64,
    pub color: &'static str,
    pub dashed: bool,
}

/// A log-log scatter plot with reference lines.
#[derive(Clone, Debug)]
pub struct LogLogPlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub points: Vec<(f64, f64)>,
    pub lines: Vec<RefLine>,
    pub notes: Vec<String>,
}

const W: f64 = 640.0;
const H: f64 = 480.0;
const ML: f64 = 80.0;
const MR: f64 = 30.0;
const MT: f64 = 50.0;
const MB: f64 = 110.0;

impl LogLogPlot {
    pub fn to_svg(&self) -> Result<String> {
        let pts: Vec<(f64, f64)> = self
            .points
            .iter()
            .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
            .map(|(x, y)| (x.log10(), y.log10()))
            .collect();
        if pts.is_empty() {
            return Err(Error::Malformed("nothing to plot".into()));
        }
        let (mut x0, mut x1) = min_max(pts.iter().map(|p| p.0));
        let (mut y0, mut y1) = min_max(pts.iter().map(|p| p.1));
        pad(&mut x0, &mut x1);
        pad(&mut y0, &mut y1);
        let sx = |x: f64| ML + (x - x0) / (x1 - x0) * (W - ML - MR);
        let sy = |y: f64| H - MB - (y - y0) / (y1 - y0) * (H - MT - MB);

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            W / 2.0,
            esc(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{ML}" y="{MT}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            W - ML - MR,
            H - MT - MB
        );
        for k in (x0.ceil() as i32)..=(x1.floor() as i32) {
            let x = sx(k as f64);
            let _ = writeln!(
                s,
                r##"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{MT}" stroke="#ddd"/><text x="{x:.2}" y="{}" text-anchor="middle">1e{k}</text>"##,
                H - MB,
                H - MB + 16.0
            );
        }
        for k in (y0.ceil() as i32)..=(y1.floor() as i32) {
            let y = sy(k as f64);
            let _ = writeln!(
                s,
                r##"<line x1="{ML}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/><text x="{}" y="{:.2}" text-anchor="end">1e{k}</text>"##,
                W - MR,
                ML - 6.0,
                y + 4.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            (ML + W - MR) / 2.0,
            H - MB + 36.0,
            esc(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
            (MT + H - MB) / 2.0,
            (MT + H - MB) / 2.0,
            esc(&self.y_label)
        );
        let _ = writeln!(
            s,
            r#"<clipPath id="plot"><rect x="{ML}" y="{MT}" width="{}" height="{}"/></clipPath>"#,
            W - ML - MR,
            H - MT - MB
        );
        let mut legend_y = H - MB + 56.0;
        for line in &self.lines {
            let at = |x: f64| line.y0.log10() + line.slope * (x - line.x0.log10());
            let dash = if line.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let _ = writeln!(
                s,
                r#"<line class="ref" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{}" stroke-width="1.5"{dash} clip-path="url(#plot)"/>"#,
                sx(x0),
                sy(at(x0)),
                sx(x1),
                sy(at(x1)),
                line.color
            );
            let _ = writeln!(
                s,
                r#"<line x1="{ML}" y1="{:.2}" x2="{}" y2="{:.2}" stroke="{}" stroke-width="1.5"{dash}/><text x="{}" y="{:.2}">{}</text>"#,
                legend_y - 4.0,
                ML + 30.0,
                legend_y - 4.0,
                line.color,
                ML + 36.0,
                legend_y,
                esc(&line.label)
            );
            legend_y += 16.0;
        }
        for note in &self.notes {
            let _ = writeln!(s, r#"<text x="{ML}" y="{legend_y:.2}">{}</text>"#, esc(note));
            legend_y += 16.0;
        }
        for (x, y) in &pts {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="black"/>"#,
                sx(*x),
                sy(*y)
            );
        }
        s.push_str("</svg>\n");
        Ok(s)
    }
}

fn min_max(it: impl Iterator<Item = f64>) -> (f64, f64) {
    it.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
}

fn pad(lo: &mut f64, hi: &mut f64) {
    let w = (*hi - *lo).max(0.2);
    let c = 0.5 * (*hi + *lo);
    *lo = c - 0.55 * w;
    *hi = c + 0.55 * w;
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Lifespan plot: measured points, the fitted line, and reference lines with
/// the sharp (`Q`) and curvature-dimension (`D`) slopes anchored at the
/// largest-amplitude point.
pub fn lifespan_plot(rows: &[SweepRow], fit: &LifespanFit, q: f64, big_d: f64) -> Result<LogLogPlot> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.blew_up)
        .map(|r| (r.amplitude, r.t))
        .collect();
    if pts.is_empty() {
        return Err(Error::Malformed("sweep has no blow-up records".into()));
    }
    let anchor = pts
        .iter()
        .cloned()
        .fold((0.0, 0.0), |a, b| if b.0 > a.0 { b } else { a });
    let kind = rows[0].kind;
    let p = rows[0].p;
    let mut lines = vec![RefLine {
        label: format!("fit: slope {:.4} (r^2 = {:.4})", fit.slope, fit.r2),
        slope: fit.slope,
        x0: 1.0,
        y0: fit.intercept.exp(),
        color: "black",
        dashed: false,
    }];
    let mut notes = Vec::new();
    for (name, dim, slope, color) in [
        ("Q", q, fit.theory_sharp, "#c0392b"),
        ("D", big_d, fit.theory_cd, "#2471a3"),
    ] {
        match slope {
            Some(sl) => lines.push(RefLine {
                label: format!("{name} = {dim}: slope {sl:.4}"),
                slope: sl,
                x0: anchor.0,
                y0: anchor.1,
                color,
                dashed: true,
            }),
            None => notes.push(format!("{name} = {dim}: p = {p} is not subcritical, no lifespan bound")),
        }
    }
    let amp = if kind == Kind::Parabolic { "epsilon" } else { "sigma" };
    Ok(LogLogPlot {
        title: format!("{} lifespan, p = {p}", kind.as_str()),
        x_label: amp.to_string(),
        y_label: "T".into(),
        points: pts,
        lines,
        notes,
    })
}

/// Measured constant against `R` for one audit, with a flat reference.
pub fn audit_plot(title: &str, rows: &[AuditRow]) -> Result<LogLogPlot> {
    if rows.is_empty() {
        return Err(Error::Malformed("empty audit".into()));
    }
    let first = &rows[0];
    Ok(LogLogPlot {
        title: title.to_string(),
        x_label: "R".into(),
        y_label: "constant".into(),
        points: rows.iter().map(|r| (r.r, r.constant)).collect(),
        lines: vec![RefLine {
            label: "R-independent".into(),
            slope: 0.0,
            x0: first.r,
            y0: first.constant,
            color: "#7f8c8d",
            dashed: true,
        }],
        notes: Vec::new(),
    })
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = fs::File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct OutputFile {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub passed: bool,
    pub failures: Vec<String>,
    pub outputs: Vec<OutputFile>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub threads: usize,
    pub config: serde_json::Value,
    pub stages: Vec<StageRecord>,
}

/// Collects output files of one stage under an output directory.
pub struct StageWriter {
    dir: PathBuf,
    record: StageRecord,
    started: std::time::Instant,
}

impl StageWriter {
    pub fn new(dir: &Path, name: &str) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            record: StageRecord {
                name: name.to_string(),
                passed: true,
                failures: Vec::new(),
                outputs: Vec::new(),
                seconds: 0.0,
            },
            started: std::time::Instant::now(),
        })
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.dir.join(file)
    }

    /// Register a file already written under the output directory.
    pub fn register(&mut self, file: &str) -> Result<()> {
        let sha256 = sha256_file(&self.path(file))?;
        self.record.outputs.push(OutputFile {
            path: file.to_string(),
            sha256,
        });
        Ok(())
    }

    pub fn write_text(&mut self, file: &str, text: &str) -> Result<()> {
        fs::write(self.path(file), text)?;
        self.register(file)
    }

    pub fn write_json<T: Serialize>(&mut self, file: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)?;
        self.write_text(file, &(text + "\n"))
    }

    pub fn write_csv<T: Serialize>(&mut self, file: &str, rows: &[T]) -> Result<()> {
        write_csv(&self.path(file), rows)?;
        self.register(file)
    }

    /// Record a failed check; the stage is then reported as failed.
    pub fn check(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.record.passed = false;
            self.record.failures.push(what.into());
        }
    }

    pub fn finish(mut self) -> StageRecord {
        self.record.seconds = self.started.elapsed().as_secs_f64();
        self.record
    }
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Malformed(format!("{}: {e}", path.display())))
    }

    pub fn passed(&self) -> bool {
        self.stages.iter().all(|s| s.passed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic() -> (Vec<SweepRow>, LifespanFit) {
        let rows: Vec<SweepRow> = [0.01, 0.03, 0.1, 0.3, 1.0]
            .iter()
            .map(|&a: &f64| SweepRow {
                kind: Kind::Parabolic,
                p: 1.1,
                amplitude: a,
                t: 2.0 * a.powf(-0.4),
                blew_up: true,
                refinement_gap: 0.01,
                contaminated: false,
            })
            .collect();
        let recs: Vec<LifespanRecord> = rows.iter().map(|r| r.to_record(0.05)).collect();
        let fit = crate::solver::fit_lifespan_exponent(&recs, Kind::Parabolic, 1.1, 4.0, 8.0).unwrap();
        (rows, fit)
    }

    #[test]
    fn plot_has_two_reference_lines() {
        let (rows, fit) = synthetic();
        let svg = lifespan_plot(&rows, &fit, 4.0, 8.0).unwrap().to_svg().unwrap();
        assert_eq!(svg.matches("class=\"ref\"").count(), 3);
        assert!(svg.contains(&format!("slope {:.4}", fit.slope)));
        assert!(svg.contains("Q = 4"));
        assert!(svg.contains("D = 8"));
        assert!(lifespan_plot(&[], &fit, 4.0, 8.0).is_err());
    }

    #[test]
    fn sweep_csv_round_trip_and_checksums() {
        let dir = tempfile::tempdir().unwrap();
        let (rows, _) = synthetic();
        let recs: Vec<LifespanRecord> = rows.iter().map(|r| r.to_record(0.05)).collect();
        let path = dir.path().join("sweep.csv");
        write_sweep_csv(&path, &recs).unwrap();
        assert_eq!(read_sweep_csv(&path).unwrap(), rows);
        let header = fs::read_to_string(&path).unwrap();
        assert!(header.starts_with("kind,p,amplitude,T,blew_up,refinement_gap,contaminated"));
        let a = sha256_file(&path).unwrap();
        write_sweep_csv(&path, &recs).unwrap();
        assert_eq!(a, sha256_file(&path).unwrap());
        fs::write(&path, "kind,p\nbogus,1\n").unwrap();
        assert!(matches!(read_sweep_csv(&path), Err(Error::Malformed(_))));
    }
}
