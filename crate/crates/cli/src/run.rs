//! Execution of one experiment: reports, artifacts and checks.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use nlab_core::design::{
    fibonacci_points, measure_heat_smear, nodal_map_svg, proposition_csv, proposition_sweep,
};
use nlab_core::domain::{Domain, Grid, ScalarField};
use nlab_core::harness::{
    bump_field, exponent_scan, proof_chain_check, sine_field, sweep_csv, theorem1_for_field,
    theorem1_report, theorem2_report, FieldDescriptor, InequalityReport, ProofChainReport,
    ScanPoint,
};
use nlab_core::lemma::{lemma_csv, lemma_sweep, standard_suite};
use nlab_core::nodal::{nodal_length, NodalSet, DEFAULT_TOL};
use nlab_core::par;
use nlab_core::report::{loglog_plot, write_json, Csv, Series};
use nlab_core::spectral::{explicit_basis, random_high_frequency, SpectralBasis};
use nlab_core::transport::selftest::selftest;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::config::{
    ExperimentConfig, Family, FieldSet, LemmaConfig, ProofChainConfig, PropositionSweepConfig,
    SelftestConfig, Theorem1Config, Theorem2Config,
};

/// Default output directory.
pub const DEFAULT_OUT: &str = "nlab-out";

/// One acceptance assertion of a run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    /// Measured value (worst case over the run).
    pub value: f64,
    /// Human-readable admissible range.
    pub expected: String,
    pub passed: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, limit: f64) -> Check {
        Check {
            name: name.into(),
            value,
            expected: format!("<= {limit:?}"),
            passed: value <= limit,
        }
    }

    fn at_least(name: &str, value: f64, limit: f64) -> Check {
        Check {
            name: name.into(),
            value,
            expected: format!(">= {limit:?}"),
            passed: value >= limit,
        }
    }

    fn near(name: &str, value: f64, target: f64, tol: f64) -> Check {
        Check {
            name: name.into(),
            value,
            expected: format!("{target:?} +- {tol:?}"),
            passed: (value - target).abs() <= tol,
        }
    }
}

/// Result of a finished run.
#[derive(Clone, Debug, Serialize)]
pub struct Outcome {
    pub command: String,
    pub checks: Vec<Check>,
    pub artifacts: Vec<PathBuf>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Runs an experiment and writes its artifacts to the configured directory.
pub fn run(config: &ExperimentConfig) -> Result<Outcome> {
    config.validate()?;
    let out = config
        .out()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    std::fs::create_dir_all(&out)
        .with_context(|| format!("cannot create output directory {}", out.display()))?;
    let mut sink = Sink {
        dir: out,
        artifacts: Vec::new(),
    };
    let checks = match config {
        ExperimentConfig::Theorem2(c) => theorem2(c, &mut sink),
        ExperimentConfig::Theorem1(c) => theorem1(c, &mut sink),
        ExperimentConfig::ProofChain(c) => proof_chain(c, &mut sink),
        ExperimentConfig::Lemma(c) => lemma(c, &mut sink),
        ExperimentConfig::Proposition(c) => proposition(c, &mut sink),
        ExperimentConfig::TransportSelftest(c) => transport_selftest(c, &mut sink),
    }
    .with_context(|| format!("{} run failed", config.command()))?;
    let outcome = Outcome {
        command: config.command().into(),
        checks,
        artifacts: sink.artifacts,
    };
    Ok(outcome)
}

/// Heatmap of `field` with its nodal set drawn on top.
pub fn render_nodal_svg(
    field: &ScalarField,
    nodal: &NodalSet,
    title: &str,
    path: &Path,
) -> nlab_core::Result<()> {
    if field.domain() != nodal.domain() {
        return Err(nlab_core::Error::GridMismatch(format!(
            "field on {} but nodal set on {}",
            field.domain(),
            nodal.domain()
        )));
    }
    nodal.to_svg(title, Some(field)).save(path)
}

struct Sink {
    dir: PathBuf,
    artifacts: Vec<PathBuf>,
}

impl Sink {
    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.artifacts.push(p.clone());
        p
    }

    fn csv(&mut self, name: &str, csv: &Csv) -> Result<()> {
        let p = self.path(name);
        csv.save(&p)
            .with_context(|| format!("writing {}", p.display()))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let p = self.path(name);
        write_json(&p, value).with_context(|| format!("writing {}", p.display()))
    }
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// A sampled test field.
struct Sample {
    field: ScalarField,
    desc: FieldDescriptor,
    label: String,
}

fn domain_side(d: Domain) -> f64 {
    match d {
        Domain::Torus { side } => side,
        _ => 1.0,
    }
}

fn random_basis(fs: &FieldSet, grid: &Arc<Grid>) -> Result<SpectralBasis> {
    let top = fs.n.iter().max().copied().unwrap_or(0) + fs.bandwidth;
    explicit_basis(grid, top).with_context(|| format!("building {top} modes"))
}

fn sample_fields(fs: &FieldSet) -> Result<Vec<Sample>> {
    let grid = fs.domain.grid(fs.resolution)?;
    let mut out = Vec::new();
    for family in &fs.families {
        match family {
            Family::Sine => {
                for &m in &fs.m {
                    let field = sine_field(&grid, m)?;
                    let mut desc = FieldDescriptor::for_field("sine", &field);
                    desc.m = Some(m);
                    out.push(Sample {
                        field,
                        desc,
                        label: format!("sine_m{m}"),
                    });
                }
            }
            Family::Random => {
                let basis = random_basis(fs, &grid)?;
                for &n in &fs.n {
                    for k in 0..fs.count {
                        let seed = fs.seed.wrapping_add(k as u64);
                        let field = random_high_frequency(&basis, n, fs.bandwidth, seed)?;
                        let mut desc = FieldDescriptor::for_field("random", &field);
                        desc.seed = Some(seed);
                        desc.n = Some(n);
                        desc.bandwidth = Some(fs.bandwidth);
                        out.push(Sample {
                            field,
                            desc,
                            label: format!("random_n{n}_s{seed}"),
                        });
                    }
                }
            }
            Family::Bump => {
                let side = domain_side(grid.domain());
                for k in 0..fs.count {
                    let seed = fs.seed.wrapping_add(k as u64);
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let centre = (side * rng.gen::<f64>(), side * rng.gen::<f64>());
                    let field = bump_field(&grid, centre, fs.bump_width * side)?;
                    let mut desc = FieldDescriptor::for_field("bump", &field);
                    desc.seed = Some(seed);
                    out.push(Sample {
                        field,
                        desc,
                        label: format!("bump_s{seed}"),
                    });
                }
            }
        }
    }
    Ok(out)
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Largest value, at least 0; NaN if any value is NaN.
fn worst(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, |a, b| {
        if a.is_nan() || b.is_nan() {
            f64::NAN
        } else {
            a.max(b)
        }
    })
}

fn theorem2(c: &Theorem2Config, sink: &mut Sink) -> Result<Vec<Check>> {
    let samples = sample_fields(&c.fields)?;
    let jobs: Vec<(usize, f64)> = (0..samples.len())
        .flat_map(|i| c.p.iter().map(move |&p| (i, p)))
        .collect();
    let reports: Vec<InequalityReport> = par::map_slice(&jobs, |&(i, p)| {
        let s = &samples[i];
        theorem2_report(&s.field, p, &c.solver, s.desc.clone())
            .with_context(|| format!("field {} at p = {p}", s.label))
    })
    .into_iter()
    .collect::<Result<_>>()?;

    sink.csv("theorem2.csv", &sweep_csv(&reports))?;
    if c.svg {
        for s in &samples {
            let nodal = nodal_length(&s.field, DEFAULT_TOL)?;
            let path = sink.path(&format!("nodal_{}.svg", s.label));
            render_nodal_svg(&s.field, &nodal, &s.label, &path)?;
        }
    }

    let ck = &c.checks;
    let mut checks = Vec::new();
    let sine: Vec<&InequalityReport> = reports
        .iter()
        .filter(|r| r.field.family == "sine" && r.p == Some(1.0))
        .collect();
    if !sine.is_empty() {
        let m = |r: &InequalityReport| r.field.m.unwrap_or(f64::NAN);
        if let Some(target) = ck.sine_ratio {
            let dev = worst(sine.iter().map(|r| relative(r.ratio, target)));
            checks.push(Check::at_most(
                "sine ratio relative error",
                dev,
                ck.sine_ratio_tol,
            ));
        }
        if let Some(tol) = ck.sine_spread {
            let ratios: Vec<f64> = sine.iter().map(|r| r.ratio).collect();
            let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = ratios.iter().copied().fold(0.0, f64::max);
            let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
            checks.push(Check::at_most("sine ratio spread", (hi - lo) / mean, tol));
        }
        if let Some(tol) = ck.sine_w1_tol {
            let dev = worst(
                sine.iter()
                    .map(|r| relative(r.values["w1"], 8.0 * PI / m(r))),
            );
            checks.push(Check::at_most("sine W1 relative error vs 8pi/m", dev, tol));
        }
        if let Some(tol) = ck.sine_h1_tol {
            let dev = worst(
                sine.iter()
                    .map(|r| relative(r.values["h1"], 4.0 * PI * m(r))),
            );
            checks.push(Check::at_most("sine H1 relative error vs 4pi m", dev, tol));
        }
        if let Some(tol) = ck.sine_dual_gap {
            let gaps: Option<Vec<f64>> = sine
                .iter()
                .map(|r| r.value("w1_dual").map(|d| 1.0 - d / r.values["w1"]))
                .collect();
            match gaps {
                Some(g) => checks.push(Check::at_most("sine dual gap", worst(g), tol)),
                None => checks.push(Check {
                    name: "sine dual gap".into(),
                    value: f64::NAN,
                    expected: "dual bound enabled in solver".into(),
                    passed: false,
                }),
            }
        }
    }
    if let Some(floor) = ck.ratio_floor {
        let lo = reports
            .iter()
            .map(|r| r.ratio)
            .fold(f64::INFINITY, f64::min);
        checks.push(Check::at_least("smallest ratio", lo, floor));
    }
    if ck.dual_below_primal {
        let excess = worst(
            reports
                .iter()
                .filter_map(|r| Some(r.value("w1_dual")? / r.value("w1")? - 1.0)),
        );
        checks.push(Check::at_most("dual excess over primal", excess, 1e-9));
    }
    sink.json(
        "theorem2.json",
        &json!({ "config": c, "reports": reports, "checks": checks }),
    )?;
    Ok(checks)
}

fn theorem1(c: &Theorem1Config, sink: &mut Sink) -> Result<Vec<Check>> {
    let fs = &c.fields;
    let grid = fs.domain.grid(fs.resolution)?;
    let ck = &c.checks;
    let mut checks = Vec::new();
    let mut reports: Vec<InequalityReport> = Vec::new();
    let mut fit = None;

    if fs.families.contains(&Family::Sine) {
        let sine: Vec<InequalityReport> = par::map_slice(&fs.m, |&m| {
            let f = sine_field(&grid, m)?;
            let n = (m * m) as usize;
            let mut desc = FieldDescriptor::for_field("sine", &f);
            desc.m = Some(m);
            desc.n = Some(n);
            theorem1_for_field(&f, n, m * m, &c.solver, false, desc)
                .with_context(|| format!("sine field m = {m}"))
        })
        .into_iter()
        .collect::<Result<_>>()?;
        let points: Vec<ScanPoint> = sine.iter().filter_map(ScanPoint::from_report).collect();
        let scan = exponent_scan(&points).context("fitting the sine family");
        if let Some(target) = ck.sine_alpha {
            let alpha = scan.as_ref().ok().and_then(|f| f.alpha).unwrap_or(f64::NAN);
            checks.push(Check::near("sine alpha", alpha, target, ck.sine_alpha_tol));
        }
        fit = Some(scan.map_err(|e| format!("{e:#}")));
        reports.extend(sine);
    }

    if fs.families.contains(&Family::Random) {
        let basis = random_basis(fs, &grid)?;
        let jobs: Vec<(usize, u64)> =
            fs.n.iter()
                .flat_map(|&n| (0..fs.count).map(move |k| (n, fs.seed.wrapping_add(k as u64))))
                .collect();
        let random: Vec<InequalityReport> = par::map_slice(&jobs, |&(n, seed)| {
            let r = if c.heat_check {
                theorem1_report(&basis, seed, n, fs.bandwidth, &c.solver)
            } else {
                random_high_frequency(&basis, n, fs.bandwidth, seed).and_then(|f| {
                    let mut desc = FieldDescriptor::for_field("random", &f);
                    desc.seed = Some(seed);
                    desc.n = Some(n);
                    desc.bandwidth = Some(fs.bandwidth);
                    theorem1_for_field(&f, n, basis.eigenvalue(n), &c.solver, false, desc)
                })
            };
            r.with_context(|| format!("random field n = {n}, seed = {seed}"))
        })
        .into_iter()
        .collect::<Result<_>>()?;
        if let Some(floor) = ck.random_ratio_floor {
            let lo = random.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
            checks.push(Check::at_least("smallest random ratio", lo, floor));
        }
        if c.heat_check {
            let cfit = |r: &InequalityReport| r.values["c_fit"];
            if let Some(max) = ck.c_fit_max {
                let hi = worst(random.iter().map(cfit));
                checks.push(Check::at_most("largest W1 / heat bound", hi, max));
            }
            if let Some(tol) = ck.c_fit_stability {
                let means: Vec<f64> =
                    fs.n.iter()
                        .map(|&n| {
                            let v: Vec<f64> = random
                                .iter()
                                .filter(|r| r.field.n == Some(n))
                                .map(cfit)
                                .collect();
                            v.iter().sum::<f64>() / v.len() as f64
                        })
                        .collect();
                let all = means.iter().sum::<f64>() / means.len() as f64;
                let dev = worst(means.iter().map(|m| relative(*m, all)));
                checks.push(Check::at_most("c_fit spread across n", dev, tol));
            }
        }
        reports.extend(random);
    }

    sink.csv("theorem1.csv", &sweep_csv(&reports))?;
    let fit = match fit {
        Some(Ok(f)) => json!(f),
        Some(Err(e)) => json!({ "error": e }),
        None => serde_json::Value::Null,
    };
    sink.json(
        "theorem1.json",
        &json!({ "config": c, "fit": fit, "reports": reports, "checks": checks }),
    )?;
    Ok(checks)
}

fn proof_chain_table(rows: &[ProofChainReport]) -> Csv {
    let mut csv = Csv::new(&[
        "family",
        "seed",
        "m",
        "n",
        "p",
        "wp",
        "h1",
        "l1",
        "linf",
        "proof_sum",
        "kappa",
        "holder_lhs",
        "holder_rhs",
        "max_depth_constant",
        "passed",
    ]);
    for r in rows {
        csv.row([
            r.field.family.clone(),
            fmt_opt(r.field.seed),
            fmt_opt(r.field.m),
            fmt_opt(r.field.n),
            r.p.to_string(),
            r.wp.to_string(),
            r.h1.to_string(),
            r.l1.to_string(),
            r.linf.to_string(),
            r.proof_sum.to_string(),
            r.kappa.to_string(),
            r.holder_lhs.to_string(),
            r.holder_rhs.to_string(),
            r.max_depth_constant.to_string(),
            r.passed().to_string(),
        ]);
    }
    csv
}

fn proof_chain(c: &ProofChainConfig, sink: &mut Sink) -> Result<Vec<Check>> {
    let samples = sample_fields(&c.fields)?;
    let jobs: Vec<(usize, f64)> = (0..samples.len())
        .flat_map(|i| c.p.iter().map(move |&p| (i, p)))
        .collect();
    let rows: Vec<ProofChainReport> = par::map_slice(&jobs, |&(i, p)| {
        let s = &samples[i];
        proof_chain_check(&s.field, p, &c.solver, s.desc.clone())
            .with_context(|| format!("field {} at p = {p}", s.label))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    sink.csv("proof_chain.csv", &proof_chain_table(&rows))?;

    let ck = &c.checks;
    let mut checks = Vec::new();
    if ck.holder {
        let failures = rows.iter().filter(|r| !r.holder_ok).count();
        checks.push(Check::at_most("Holder step failures", failures as f64, 0.0));
    }
    if let Some(tol) = ck.sine_equality_tol {
        let sine: Vec<f64> = rows
            .iter()
            .filter(|r| r.field.family == "sine" && r.p == 1.0)
            .map(|r| relative(r.holder_lhs, r.holder_rhs))
            .collect();
        if !sine.is_empty() {
            checks.push(Check::at_most("sine Holder equality gap", worst(sine), tol));
        }
    }
    if ck.depth {
        let failures = rows.iter().filter(|r| !r.depth_ok).count();
        checks.push(Check::at_most("depth bound failures", failures as f64, 0.0));
    }
    sink.json(
        "proof_chain.json",
        &json!({ "config": c, "reports": rows, "checks": checks }),
    )?;
    Ok(checks)
}

fn lemma(c: &LemmaConfig, sink: &mut Sink) -> Result<Vec<Check>> {
    let shapes: Vec<_> = standard_suite()
        .into_iter()
        .filter(|s| c.shapes.iter().any(|n| n == s.name()))
        .collect();
    let rows = lemma_sweep(&shapes, c.levels)?;
    sink.csv("lemma.csv", &lemma_csv(&rows))?;
    let mut checks = Vec::new();
    if let Some(max) = c.checks.max_ratio {
        let hi = worst(rows.iter().filter(|r| r.precondition_ok).map(|r| r.ratio));
        checks.push(Check::at_most("largest lemma ratio", hi, max));
    }
    if let Some(tol) = c.checks.disk_limit_tol {
        let disk = rows
            .iter()
            .filter(|r| r.shape == "disk")
            .min_by(|a, b| a.eps.total_cmp(&b.eps));
        if let Some(r) = disk {
            checks.push(Check::near("disk ratio at smallest eps", r.ratio, 1.0, tol));
        }
    }
    sink.json(
        "lemma.json",
        &json!({ "config": c, "rows": rows, "checks": checks }),
    )?;
    Ok(checks)
}

fn proposition(c: &PropositionSweepConfig, sink: &mut Sink) -> Result<Vec<Check>> {
    let pts = fibonacci_points(c.n)?;
    let times = c.times();
    let report = proposition_sweep(&pts, &times, &c.measure)?;
    sink.csv("proposition.csv", &proposition_csv(&report.rows))?;
    let col = |f: fn(&nlab_core::design::PropositionRow) -> f64| -> Vec<(f64, f64)> {
        report.rows.iter().map(|r| (r.t, f(r))).collect()
    };
    let plot = loglog_plot(
        &format!("heat-smeared design, n = {}", c.n),
        "t",
        "value",
        &[
            Series::new("nodal length", col(|r| r.h1_length), "black"),
            Series::new("L1 norm", col(|r| r.l1), "steelblue"),
            Series::new("sup norm", col(|r| r.linf), "firebrick"),
        ],
    );
    let path = sink.path("proposition_scaling.svg");
    plot.save(&path)?;
    if c.svg {
        let (_, segments) = measure_heat_smear(&pts, times[0], &c.measure)?;
        let map = nodal_map_svg(
            &format!("nodal set, n = {}, t = {}", c.n, times[0]),
            &pts,
            &segments,
        );
        let path = sink.path("proposition_nodal_map.svg");
        map.save(&path)?;
    }

    let ck = &c.checks;
    let mut checks = Vec::new();
    if let Some(s) = ck.h1_slope {
        checks.push(Check::near(
            "H1 slope in t",
            report.h1_slope,
            s,
            ck.h1_slope_tol,
        ));
    }
    if let Some(s) = ck.linf_slope {
        checks.push(Check::near(
            "sup-norm slope in t",
            report.linf_slope,
            s,
            ck.linf_slope_tol,
        ));
    }
    if let Some(tol) = ck.integral_tol {
        let hi = worst(report.rows.iter().map(|r| r.relative_integral));
        checks.push(Check::at_most("relative integral", hi, tol));
    }
    sink.json(
        "proposition.json",
        &json!({ "config": c, "report": report, "checks": checks }),
    )?;
    Ok(checks)
}

fn transport_selftest(c: &SelftestConfig, sink: &mut Sink) -> Result<Vec<Check>> {
    let rows = selftest(c.seed, c.instances, c.max_side)?;
    let mut csv = Csv::new(&[
        "instance",
        "sources",
        "targets",
        "p",
        "exact",
        "oracle",
        "abs_error",
        "w1_dual",
    ]);
    for r in &rows {
        csv.row([
            r.instance.to_string(),
            r.sources.to_string(),
            r.targets.to_string(),
            r.p.to_string(),
            r.exact.to_string(),
            r.oracle.to_string(),
            r.abs_error.to_string(),
            fmt_opt(r.w1_dual),
        ]);
    }
    sink.csv("transport_selftest.csv", &csv)?;
    let mut checks = Vec::new();
    if let Some(tol) = c.checks.max_error {
        let hi = worst(rows.iter().map(|r| r.abs_error));
        checks.push(Check::at_most("largest error vs enumeration", hi, tol));
    }
    if c.checks.dual_below_primal {
        let excess = worst(rows.iter().filter_map(|r| Some(r.w1_dual? / r.exact - 1.0)));
        checks.push(Check::at_most("dual excess over primal", excess, 1e-9));
    }
    sink.json(
        "transport_selftest.json",
        &json!({ "config": c, "rows": rows, "checks": checks }),
    )?;
    Ok(checks)
}
