//! The `carnot-lab` command-line tool.
//!
//! Every subcommand reads a TOML configuration, runs one or more stages and
//! writes its artifacts plus `manifest.json` under the output directory.
//! Exit codes: 0 when every check passes, 1 when a check fails or a stage
//! errors (details in `failures.json`), 2 for usage and configuration
//! errors.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::checks::{
    algebra_suite, cd_check, cutoff_check, discretization_check, gradient_bound_check, haar_scaling,
    lifespan_check, testfn_check, SweepSetup,
};
use crate::error::{Error, Result};
use crate::group::{AlgebraConfig, StratifiedAlgebra};
use crate::regime::{classify, parse_exponent};
use crate::report::{
    audit_plot, lifespan_plot, read_sweep_csv, write_sweep_csv, AuditRow, LogLogPlot, RefLine, RunManifest,
    StageRecord, StageWriter,
};
use crate::semigroup::CutoffOptions;
use crate::solver::{lifespan_sweep, theoretical_slope, SolverOptions};
use crate::testfn::AuditGrid;

/// Environment variable giving the default worker-thread count.
pub const THREADS_ENV: &str = "CARNOT_LAB_THREADS";

#[derive(Parser, Debug)]
#[command(name = "carnot-lab", version, about = "Carnot-group numerical laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "carnot-out")]
    pub out: PathBuf,
    /// Overrides the `seed` key of the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long, env = THREADS_ENV)]
    pub threads: Option<usize>,
    /// Overrides the algebra of the configuration with a preset.
    #[arg(long)]
    pub preset: Option<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Group-law, Haar-measure, curvature-dimension and stencil checks.
    VerifyGeometry(CommonArgs),
    /// Cut-off constants across radii and the semigroup gradient bound.
    VerifyCutoffs(CommonArgs),
    /// Test-function audits and the integral inequality sweep.
    VerifyTestfns(CommonArgs),
    /// Lifespan sweeps over amplitudes.
    Sweep(CommonArgs),
    /// Fit lifespan exponents from sweep files in the output directory.
    Fit(CommonArgs),
    /// Run every stage into subdirectories and summarize.
    Report(CommonArgs),
    /// Critical-exponent table for the exponents in the configuration.
    Classify(CommonArgs),
}

/// An exponent written either as a number or as a fraction string.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Exponent {
    Number(f64),
    Text(String),
}

impl Exponent {
    pub fn value(&self) -> Result<f64> {
        match self {
            Exponent::Number(x) => Ok(*x),
            Exponent::Text(s) => parse_exponent(s).ok_or_else(|| Error::Config(format!("bad exponent `{s}`"))),
        }
    }
}

fn exponents(list: &[Exponent]) -> Result<Vec<f64>> {
    list.iter().map(Exponent::value).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub cases: usize,
    pub tolerance: f64,
    /// Further presets for the algebra and Haar checks.
    pub extra_presets: Vec<String>,
    /// `[d, m]` of a random step-2 group added to the algebra check.
    pub random_group: Option<[usize; 2]>,
    pub haar_samples: u64,
    pub haar_radii: Vec<f64>,
    /// Allowed deviation in standard errors.
    pub haar_max_z: f64,
    pub cd_samples: usize,
    pub cd_tolerance: f64,
    pub fd_ratio: [f64; 2],
    pub symmetry_tolerance: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            cases: 1000,
            tolerance: 1e-12,
            extra_presets: vec!["heisenberg-2".into()],
            random_group: Some([3, 2]),
            haar_samples: 1_000_000,
            haar_radii: vec![1.0, 2.0],
            haar_max_z: 3.0,
            cd_samples: 2000,
            cd_tolerance: 1e-9,
            fd_ratio: [3.5, 4.5],
            symmetry_tolerance: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CutoffConfig {
    pub radii: Vec<f64>,
    /// Reference grid (half-widths and spacing) dilated by each radius.
    pub horizontal: f64,
    pub vertical: f64,
    pub h: f64,
    pub gamma: f64,
    pub max_variation: f64,
    /// Horizontal node counts per unit length of the periodic gradient-bound
    /// grids; empty to skip.
    pub gradient_resolutions: Vec<usize>,
    pub gradient_tolerance: f64,
}

impl Default for CutoffConfig {
    fn default() -> Self {
        Self {
            radii: vec![4.0, 8.0, 16.0],
            horizontal: 2.7,
            vertical: 5.3,
            h: 0.12,
            gamma: 2.0,
            max_variation: 0.5,
            gradient_resolutions: vec![16, 32],
            gradient_tolerance: 1e-4,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TestFnConfig {
    pub p: Vec<Exponent>,
    pub radii: Vec<f64>,
    pub horizontal: f64,
    pub vertical: f64,
    pub h: f64,
    pub audit_h: f64,
    pub max_graded_ratio: f64,
    pub max_product_ratio: f64,
    pub inequality_tolerance: f64,
}

impl Default for TestFnConfig {
    fn default() -> Self {
        Self {
            p: vec![Exponent::Number(1.5), Exponent::Text("5/3".into())],
            radii: vec![4.0, 8.0, 16.0],
            horizontal: 2.7,
            vertical: 5.3,
            h: 0.12,
            audit_h: 1.0 / 16.0,
            max_graded_ratio: 1.3,
            max_product_ratio: 1.5,
            inequality_tolerance: 1e-9,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    /// Relative slope tolerance.
    pub slope_tolerance: f64,
    pub refinement_tol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            slope_tolerance: 0.2,
            refinement_tol: SolverOptions::default().refinement_tol,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifyConfig {
    pub p: Vec<Exponent>,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            p: ["5/4", "9/7", "4/3", "3/2", "5/3", "2"]
                .iter()
                .map(|s| Exponent::Text(s.to_string()))
                .collect(),
        }
    }
}

/// Configuration file. Every missing key takes its default, and the
/// resolved configuration is recorded in the manifest.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    /// Shorthand for `[algebra] preset = ...`.
    pub preset: Option<String>,
    pub algebra: Option<AlgebraConfig>,
    pub seed: u64,
    pub geometry: GeometryConfig,
    pub cutoffs: CutoffConfig,
    pub testfns: TestFnConfig,
    pub sweep: Vec<SweepSetup>,
    pub fit: FitConfig,
    pub classify: ClassifyConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            preset: None,
            algebra: None,
            seed: 0,
            geometry: GeometryConfig::default(),
            cutoffs: CutoffConfig::default(),
            testfns: TestFnConfig::default(),
            sweep: vec![SweepSetup::parabolic(), SweepSetup::hyperbolic()],
            fit: FitConfig::default(),
            classify: ClassifyConfig::default(),
        }
    }
}

impl Config {
    /// Parse a configuration; an empty document is rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if table.is_empty() {
            return Err(Error::Config("configuration is empty".into()));
        }
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Apply command-line overrides and fill in the algebra.
    fn resolve(mut self, args: &CommonArgs) -> Result<(Self, StratifiedAlgebra)> {
        if let Some(seed) = args.seed {
            self.seed = seed;
        }
        let algebra = match (&args.preset, &self.algebra, &self.preset) {
            (Some(p), _, _) => AlgebraConfig {
                preset: Some(p.clone()),
                ..AlgebraConfig::default()
            },
            (None, Some(_), Some(_)) => {
                return Err(Error::Config("give either `preset` or `[algebra]`, not both".into()))
            }
            (None, Some(a), None) => a.clone(),
            (None, None, p) => AlgebraConfig {
                preset: Some(p.clone().unwrap_or_else(|| "heisenberg-1".into())),
                ..AlgebraConfig::default()
            },
        };
        let alg = algebra.build()?;
        self.preset = None;
        self.algebra = Some(algebra);
        Ok((self, alg))
    }
}

struct Context {
    alg: StratifiedAlgebra,
    config: Config,
}

type StageFn = fn(&Context, &Path) -> Result<StageRecord>;

/// Run a stage, turning an error into a failed record.
fn run_stage(name: &str, f: StageFn, ctx: &Context, dir: &Path) -> StageRecord {
    let started = std::time::Instant::now();
    f(ctx, dir).unwrap_or_else(|e| StageRecord {
        name: name.to_string(),
        passed: false,
        failures: vec![format!("error: {e}")],
        outputs: Vec::new(),
        seconds: started.elapsed().as_secs_f64(),
    })
}

fn geometry_stage(ctx: &Context, dir: &Path) -> Result<StageRecord> {
    let cfg = &ctx.config.geometry;
    let seed = ctx.config.seed;
    let mut w = StageWriter::new(dir, "verify-geometry")?;

    let mut groups = vec![ctx.alg.clone()];
    for name in &cfg.extra_presets {
        groups.push(StratifiedAlgebra::preset(name)?);
    }
    let haar_groups = groups.len();
    if let Some([d, m]) = cfg.random_group {
        groups.push(StratifiedAlgebra::random_step2(d, m, seed)?);
    }

    let mut suites = Vec::new();
    for (i, g) in groups.iter().enumerate() {
        let s = algebra_suite(g, cfg.cases, seed.wrapping_add(i as u64))?;
        w.check(
            s.worst() <= cfg.tolerance,
            format!("algebra {}: worst relative error {:e} > {:e}", g.name(), s.worst(), cfg.tolerance),
        );
        suites.push(s);
    }

    let mut haar = Vec::new();
    for (i, g) in groups.iter().take(haar_groups).enumerate() {
        for (j, &r) in cfg.haar_radii.iter().enumerate() {
            let hs = seed.wrapping_mul(1000).wrapping_add(100 + 10 * i as u64 + 2 * j as u64);
            let h = haar_scaling(g, r, cfg.haar_samples, hs)?;
            w.check(
                h.z <= cfg.haar_max_z,
                format!("haar {} R={r}: ratio {} vs {} ({:.2} standard errors)", g.name(), h.ratio, h.expected, h.z),
            );
            haar.push(h);
        }
    }

    let cd = cd_check(&ctx.alg, cfg.cd_samples, seed)?;
    w.check(
        cd.max_diff <= cfg.cd_tolerance,
        format!("cd parameters: sweep differs by {:e}", cd.max_diff),
    );

    let disc = discretization_check(&ctx.alg)?;
    w.check(
        disc.ratio >= cfg.fd_ratio[0] && disc.ratio <= cfg.fd_ratio[1],
        format!("stencil convergence ratio {} outside {:?}", disc.ratio, cfg.fd_ratio),
    );
    w.check(
        disc.symmetry <= cfg.symmetry_tolerance,
        format!("stencil symmetry residual {:e}", disc.symmetry),
    );

    w.write_json(
        "geometry.json",
        &serde_json::json!({
            "algebra": suites,
            "haar": haar,
            "cd": cd,
            "discretization": disc,
        }),
    )?;
    w.write_csv("haar.csv", &haar)?;
    w.write_csv("fd_convergence.csv", &disc.rows)?;
    let first = &disc.rows[0];
    let plot = LogLogPlot {
        title: format!("sub-Laplacian stencil error, {}", ctx.alg.name()),
        x_label: "h".into(),
        y_label: "error".into(),
        points: disc.rows.iter().map(|r| (r.h, r.error)).collect(),
        lines: vec![RefLine {
            label: "slope 2".into(),
            slope: 2.0,
            x0: first.h,
            y0: first.error,
            color: "#7f8c8d",
            dashed: true,
        }],
        notes: vec![format!("ratio {:.4}", disc.ratio)],
    };
    w.write_text("fd_convergence.svg", &plot.to_svg()?)?;
    Ok(w.finish())
}

fn cutoff_stage(ctx: &Context, dir: &Path) -> Result<StageRecord> {
    let cfg = &ctx.config.cutoffs;
    let mut w = StageWriter::new(dir, "verify-cutoffs")?;
    let opts = CutoffOptions {
        gamma: cfg.gamma,
        ..CutoffOptions::default()
    };
    let check = cutoff_check(&ctx.alg, &cfg.radii, (cfg.horizontal, cfg.vertical, cfg.h), &opts)?;
    w.check(
        check.lap_variation <= cfg.max_variation,
        format!("Laplacian constant varies by {:.3} across radii", check.lap_variation),
    );
    w.check(
        check.grad_variation <= cfg.max_variation,
        format!("gradient constant varies by {:.3} across radii", check.grad_variation),
    );
    let mut rows = Vec::new();
    for c in &check.cutoffs {
        w.check(c.sponge_clean, format!("cut-off R={} reaches the sponge layer", c.r));
        w.check(c.min_on_ball >= 0.75, format!("cut-off R={} drops to {} on the ball", c.r, c.min_on_ball));
        for (kind, constant) in [("cutoff_laplacian", c.lap_const), ("cutoff_gradient", c.grad_const)] {
            rows.push(AuditRow {
                kind: kind.into(),
                p: f64::NAN,
                r: c.r,
                constant,
                margin: c.min_on_ball - 0.75,
                h: c.h,
            });
        }
        let name = format!("cutoff_R{}.grid", c.r);
        c.field.write_to(fs::File::create(w.path(&name))?)?;
        w.register(&name)?;
    }
    let lap: Vec<AuditRow> = rows.iter().filter(|r| r.kind == "cutoff_laplacian").cloned().collect();
    w.write_text("cutoffs.svg", &audit_plot("sup |L phi_R| R^2", &lap)?.to_svg()?)?;

    let mut bounds = Vec::new();
    if !cfg.gradient_resolutions.is_empty() {
        bounds = gradient_bound_check(&ctx.alg, &cfg.gradient_resolutions)?;
        let finest = bounds.iter().min_by(|a, b| a.h.total_cmp(&b.h)).expect("non-empty");
        w.check(
            finest.margin >= -cfg.gradient_tolerance,
            format!("gradient bound margin {} at h={}", finest.margin, finest.h),
        );
        let mut by_h: Vec<_> = bounds.iter().collect();
        by_h.sort_by(|a, b| b.h.total_cmp(&a.h));
        w.check(
            by_h.windows(2).all(|p| p[1].margin >= p[0].margin),
            "gradient bound margin decreases under refinement",
        );
        for b in &bounds {
            rows.push(AuditRow {
                kind: "gradient_bound".into(),
                p: f64::NAN,
                r: f64::NAN,
                constant: b.rhs_max,
                margin: b.margin,
                h: b.h,
            });
        }
    }
    w.write_csv("cutoffs.csv", &rows)?;
    w.write_json("cutoffs.json", &serde_json::json!({ "cutoffs": check, "gradient_bound": bounds }))?;
    Ok(w.finish())
}

fn testfn_stage(ctx: &Context, dir: &Path) -> Result<StageRecord> {
    let cfg = &ctx.config.testfns;
    let mut w = StageWriter::new(dir, "verify-testfns")?;
    let ps = exponents(&cfg.p)?;
    let grid = AuditGrid {
        h: cfg.audit_h,
        ..AuditGrid::default()
    };
    let c = testfn_check(
        &ctx.alg,
        &ps,
        &cfg.radii,
        (cfg.horizontal, cfg.vertical, cfg.h),
        &grid,
        &CutoffOptions::default(),
    )?;
    let mut rows = Vec::new();
    for g in &c.graded {
        w.check(
            g.ratio <= cfg.max_graded_ratio,
            format!("graded audit p={}: ratio {}", g.p, g.ratio),
        );
        for r in &g.rows {
            rows.push(AuditRow {
                kind: "graded".into(),
                p: g.p,
                r: r.r,
                constant: r.k,
                margin: f64::NAN,
                h: r.h,
            });
        }
    }
    for a in &c.products {
        let kind = match a.kind {
            crate::testfn::TestFnKind::Parabolic => "parabolic",
            _ => "hyperbolic",
        };
        w.check(
            a.spatial_ratio <= cfg.max_product_ratio && a.temporal_ratio <= cfg.max_product_ratio,
            format!(
                "{kind} product audit p={}: ratios {} / {}",
                a.p, a.spatial_ratio, a.temporal_ratio
            ),
        );
        for r in &a.rows {
            w.check(r.support_ok, format!("{kind} product audit p={} R={}: support", a.p, r.r));
            for (part, constant) in [("spatial", r.spatial_const), ("temporal", r.temporal_const)] {
                rows.push(AuditRow {
                    kind: format!("{kind}_{part}"),
                    p: a.p,
                    r: r.r,
                    constant,
                    margin: f64::NAN,
                    h: r.h,
                });
            }
        }
    }
    w.check(
        c.lemma_min_margin >= -cfg.inequality_tolerance,
        format!("integral inequality margin {:e}", c.lemma_min_margin),
    );
    for (p, list) in &c.lemma {
        for l in list {
            rows.push(AuditRow {
                kind: "integral_inequality".into(),
                p: *p,
                r: l.r,
                constant: l.a,
                margin: l.margin,
                h: l.h,
            });
        }
    }
    w.write_csv("testfns.csv", &rows)?;
    let graded: Vec<AuditRow> = rows
        .iter()
        .filter(|r| r.kind == "graded" && r.p == ps[0])
        .cloned()
        .collect();
    w.write_text(
        "graded.svg",
        &audit_plot(&format!("graded wave-estimate constant, p = {}", ps[0]), &graded)?.to_svg()?,
    )?;
    w.write_json(
        "testfns.json",
        &serde_json::json!({
            "graded": c.graded,
            "products": c.products,
            "integral_inequality_min_margin": c.lemma_min_margin,
        }),
    )?;
    Ok(w.finish())
}

/// File stem of a sweep, e.g. `parabolic_p1.3`.
pub fn sweep_stem(s: &SweepSetup) -> String {
    format!("{}_p{}", s.kind.as_str(), s.p)
}

fn sweep_stage(ctx: &Context, dir: &Path) -> Result<StageRecord> {
    let mut w = StageWriter::new(dir, "sweep")?;
    if ctx.config.sweep.is_empty() {
        return Err(Error::Config("no sweeps configured".into()));
    }
    for setup in &ctx.config.sweep {
        let stem = sweep_stem(setup);
        let template = setup.problem(&ctx.alg)?;
        let sweep = lifespan_sweep(&ctx.alg, &template, &setup.amplitudes)?;
        w.check(sweep.monotone, format!("{stem}: lifespan not monotone in the amplitude"));
        for r in &sweep.records {
            w.check(
                r.usable,
                format!(
                    "{stem}: amplitude {} unusable (blew_up {}, gap {:.3}, contaminated {})",
                    r.amplitude, r.blew_up, r.refinement_gap, r.boundary_contaminated
                ),
            );
        }
        let csv = format!("{stem}.csv");
        write_sweep_csv(&w.path(&csv), &sweep.records)?;
        w.register(&csv)?;
        let data = format!("{stem}_data.grid");
        let field = template.u1.as_ref().unwrap_or(&template.u0);
        field.write_to(fs::File::create(w.path(&data))?)?;
        w.register(&data)?;
        w.write_json(&format!("{stem}.json"), &sweep)?;
    }
    Ok(w.finish())
}

/// Fit each configured sweep found in `input`, writing to `dir`.
fn fit_from(ctx: &Context, input: &Path, dir: &Path) -> Result<StageRecord> {
    let cfg = &ctx.config.fit;
    let mut w = StageWriter::new(dir, "fit")?;
    let q = ctx.alg.hom_dim() as f64;
    let big_d = ctx.alg.cd_parameters()?.big_d;
    let mut fits = Vec::new();
    for setup in &ctx.config.sweep {
        let stem = sweep_stem(setup);
        let rows = match read_sweep_csv(&input.join(format!("{stem}.csv"))) {
            Ok(r) => r,
            Err(e) => {
                w.check(false, format!("{stem}.csv: {e}"));
                continue;
            }
        };
        let records: Vec<_> = rows.iter().map(|r| r.to_record(cfg.refinement_tol)).collect();
        let Some(target) = theoretical_slope(setup.kind, setup.p, q) else {
            w.check(false, format!("{stem}: p is not subcritical, no power-law target"));
            continue;
        };
        let check = match lifespan_check(&records, q, big_d, target) {
            Ok(c) => c,
            Err(e) => {
                w.check(false, format!("{stem}: {e}"));
                continue;
            }
        };
        let slope_ok = (check.fit.slope - target).abs() <= cfg.slope_tolerance * target.abs();
        w.check(
            slope_ok,
            format!("{stem}: fitted slope {:.4} outside {target:.4} +/- {}%", check.fit.slope, cfg.slope_tolerance * 100.0),
        );
        w.check(check.dominated, format!("{stem}: a lifespan exceeds C_fit a^{target:.4}"));
        let mut plot = lifespan_plot(&rows, &check.fit, q, big_d)?;
        plot.notes.push(format!("C_fit = {:.4}", check.c_fit));
        w.write_text(&format!("{stem}.svg"), &plot.to_svg()?)?;
        fits.push(serde_json::json!({ "sweep": stem, "check": check, "slope_ok": slope_ok }));
    }
    w.write_json("fit.json", &fits)?;
    Ok(w.finish())
}

fn fit_stage(ctx: &Context, dir: &Path) -> Result<StageRecord> {
    fit_from(ctx, dir, dir)
}

fn classify_stage(ctx: &Context, dir: &Path) -> Result<StageRecord> {
    let mut w = StageWriter::new(dir, "classify")?;
    #[derive(Serialize)]
    struct Row {
        p: f64,
        problem: &'static str,
        variant: &'static str,
        threshold: Option<f64>,
        exact: Option<String>,
        regime: &'static str,
    }
    let mut tables = Vec::new();
    let mut rows = Vec::new();
    for p in exponents(&ctx.config.classify.p)? {
        let t = classify(&ctx.alg, p)?;
        for c in t.cells() {
            rows.push(Row {
                p,
                problem: c.problem,
                variant: c.variant,
                threshold: c.cell.threshold,
                exact: c.cell.exact.map(|r| r.to_string()),
                regime: c.cell.regime.as_str(),
            });
        }
        tables.push(t);
    }
    w.write_csv("regimes.csv", &rows)?;
    w.write_json("regimes.json", &tables)?;
    Ok(w.finish())
}

fn report_stage(ctx: &Context, dir: &Path) -> Vec<StageRecord> {
    let stages: [(&str, StageFn); 4] = [
        ("verify-geometry", geometry_stage),
        ("verify-cutoffs", cutoff_stage),
        ("verify-testfns", testfn_stage),
        ("sweep", sweep_stage),
    ];
    let mut records = Vec::new();
    for (name, f) in stages {
        records.push(prefixed(run_stage(name, f, ctx, &dir.join(name)), name));
    }
    let sweep_dir = dir.join("sweep");
    let fit = fit_from(ctx, &sweep_dir, &dir.join("fit")).unwrap_or_else(|e| StageRecord {
        name: "fit".into(),
        passed: false,
        failures: vec![format!("error: {e}")],
        outputs: Vec::new(),
        seconds: 0.0,
    });
    records.push(prefixed(fit, "fit"));
    records.push(prefixed(run_stage("classify", classify_stage, ctx, &dir.join("classify")), "classify"));
    records
}

fn prefixed(mut rec: StageRecord, sub: &str) -> StageRecord {
    for o in &mut rec.outputs {
        o.path = format!("{sub}/{}", o.path);
    }
    rec
}

fn summary_markdown(manifest: &RunManifest) -> String {
    let mut s = format!(
        "# carnot-lab report\n\nalgebra: {}\nseed: {}\n\n| stage | result | seconds |\n|---|---|---|\n",
        manifest.config["algebra"]["preset"].as_str().unwrap_or("custom"),
        manifest.seed
    );
    for st in &manifest.stages {
        s += &format!(
            "| {} | {} | {:.1} |\n",
            st.name,
            if st.passed { "pass" } else { "FAIL" },
            st.seconds
        );
    }
    for st in manifest.stages.iter().filter(|s| !s.passed) {
        s += &format!("\n## {} failures\n\n", st.name);
        for f in &st.failures {
            s += &format!("- {f}\n");
        }
    }
    s
}

#[derive(Serialize)]
struct Failure<'a> {
    stage: &'a str,
    message: &'a str,
}

fn write_failures(dir: &Path, stages: &[StageRecord]) -> Result<()> {
    let list: Vec<Failure> = stages
        .iter()
        .flat_map(|s| {
            s.failures.iter().map(move |m| Failure {
                stage: &s.name,
                message: m,
            })
        })
        .collect();
    fs::write(dir.join("failures.json"), serde_json::to_string_pretty(&list)? + "\n")?;
    Ok(())
}

/// Stages recorded by earlier invocations in the same directory with the
/// same configuration, seed and version.
fn earlier_stages(dir: &Path, current: &RunManifest) -> Vec<StageRecord> {
    match RunManifest::read(&dir.join("manifest.json")) {
        Ok(m) if m.config == current.config && m.seed == current.seed && m.version == current.version => m.stages,
        _ => Vec::new(),
    }
}

fn configure_threads(threads: Option<usize>) {
    if let Some(n) = threads.filter(|&n| n > 0) {
        // Fails only if the pool was already built, e.g. on a second call
        // in the same process; the existing pool is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn usage_error(msg: impl std::fmt::Display) -> i32 {
    eprintln!("carnot-lab: {msg}");
    2
}

/// Parse arguments and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let (common, name, stage): (&CommonArgs, &str, Option<StageFn>) = match &cli.command {
        Command::VerifyGeometry(a) => (a, "verify-geometry", Some(geometry_stage)),
        Command::VerifyCutoffs(a) => (a, "verify-cutoffs", Some(cutoff_stage)),
        Command::VerifyTestfns(a) => (a, "verify-testfns", Some(testfn_stage)),
        Command::Sweep(a) => (a, "sweep", Some(sweep_stage)),
        Command::Fit(a) => (a, "fit", Some(fit_stage)),
        Command::Classify(a) => (a, "classify", Some(classify_stage)),
        Command::Report(a) => (a, "report", None),
    };
    let text = match fs::read_to_string(&common.config) {
        Ok(t) => t,
        Err(e) => return usage_error(format!("{}: {e}", common.config.display())),
    };
    let (config, alg) = match Config::parse(&text).and_then(|c| c.resolve(common)) {
        Ok(x) => x,
        Err(e) => return usage_error(e),
    };
    configure_threads(common.threads);
    if let Err(e) = fs::create_dir_all(&common.out) {
        return usage_error(format!("{}: {e}", common.out.display()));
    }
    let ctx = Context { alg, config };
    let stages = match stage {
        Some(f) => vec![run_stage(name, f, &ctx, &common.out)],
        None => report_stage(&ctx, &common.out),
    };
    let mut manifest = RunManifest {
        tool: "carnot-lab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: ctx.config.seed,
        threads: rayon::current_num_threads(),
        config: serde_json::to_value(&ctx.config).unwrap_or(serde_json::Value::Null),
        stages: Vec::new(),
    };
    if stage.is_some() {
        manifest.stages = earlier_stages(&common.out, &manifest);
    }
    for st in stages {
        manifest.stages.retain(|s| s.name != st.name);
        manifest.stages.push(st);
    }
    let finish = || -> Result<()> {
        manifest.write(&common.out)?;
        if stage.is_none() {
            fs::write(common.out.join("report.md"), summary_markdown(&manifest))?;
        }
        let failures = common.out.join("failures.json");
        if manifest.passed() {
            if failures.exists() {
                fs::remove_file(failures)?;
            }
        } else {
            write_failures(&common.out, &manifest.stages)?;
        }
        Ok(())
    };
    if let Err(e) = finish() {
        eprintln!("carnot-lab: writing results: {e}");
        return 1;
    }
    for st in &manifest.stages {
        eprintln!("{}: {}", st.name, if st.passed { "pass" } else { "FAIL" });
        for f in &st.failures {
            eprintln!("  {f}");
        }
    }
    if manifest.passed() {
        0
    } else {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::Kind;

    #[test]
    fn config_defaults_and_rejections() {
        assert!(matches!(Config::parse(""), Err(Error::Config(_))));
        assert!(matches!(Config::parse("# only a comment\n"), Err(Error::Config(_))));
        assert!(Config::parse("nonsense = 1").is_err());
        let c = Config::parse("seed = 7\n[classify]\np = [1.5, \"5/3\"]\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(exponents(&c.classify.p).unwrap(), vec![1.5, 5.0 / 3.0]);
        assert_eq!(c.sweep.len(), 2);
        let c = Config::parse("[[sweep]]\nkind = \"hyperbolic\"\np = 1.4\n").unwrap();
        assert_eq!(c.sweep.len(), 1);
        assert_eq!(c.sweep[0].kind, Kind::Hyperbolic);
        assert_eq!(c.sweep[0].horizontal, SweepSetup::hyperbolic().horizontal);
    }
}
