//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nlab::config::{
    ExperimentConfig, Family, LemmaConfig, ProofChainConfig, PropositionSweepConfig,
    SelftestConfig, Theorem1Checks, Theorem1Config, Theorem2Config,
};
use nlab::Outcome;
use nlab_core::domain::{BoundaryCondition, Domain, Grid, ScalarField};
use nlab_core::spectral::{assemble_operator, heat_flow, lowest_eigenpairs};

struct Verdict {
    passed: bool,
    detail: String,
}

struct Ctx {
    root: tempfile::TempDir,
    outcomes: HashMap<&'static str, Outcome>,
}

impl Ctx {
    fn dir(&self, name: &str) -> PathBuf {
        self.root.path().join(name)
    }

    fn run(&mut self, key: &'static str, mut cfg: ExperimentConfig) -> (Outcome, Duration) {
        cfg.set_out(self.dir(key));
        let t = Instant::now();
        let out = nlab::run(&cfg).unwrap_or_else(|e| panic!("{key}: {e:#}"));
        let dt = t.elapsed();
        self.outcomes.insert(key, out.clone());
        (out, dt)
    }
}

fn summary(out: &Outcome, extra: &[(bool, String)]) -> Verdict {
    let mut passed = out.passed();
    let mut parts: Vec<String> = out
        .checks
        .iter()
        .map(|c| {
            let tag = if c.passed { "" } else { "!" };
            format!("{tag}{} = {:.4e}", c.name, c.value)
        })
        .collect();
    for (ok, msg) in extra {
        passed &= ok;
        parts.push(if *ok { msg.clone() } else { format!("!{msg}") });
    }
    Verdict {
        passed,
        detail: parts.join("; "),
    }
}

fn within(dt: Duration, secs: u64) -> (bool, String) {
    (
        dt <= Duration::from_secs(secs),
        format!("runtime {:.1}s (limit {secs}s)", dt.as_secs_f64()),
    )
}

fn transport_oracle(ctx: &mut Ctx) -> Verdict {
    let cfg = SelftestConfig {
        instances: 50,
        max_side: 6,
        ..Default::default()
    };
    let (out, dt) = ctx.run("selftest", ExperimentConfig::TransportSelftest(cfg));
    summary(&out, &[within(dt, 10)])
}

fn theorem2_sines(ctx: &mut Ctx) -> Verdict {
    let cfg = Theorem2Config::default();
    assert_eq!(cfg.fields.resolution, 256);
    assert_eq!(cfg.fields.m, vec![2.0, 4.0, 8.0]);
    assert_eq!(cfg.p, vec![1.0]);
    let (out, dt) = ctx.run("theorem2", ExperimentConfig::Theorem2(cfg));
    summary(&out, &[within(dt, 120)])
}

fn holder_chain(ctx: &mut Ctx) -> Verdict {
    let cfg = ProofChainConfig::default();
    assert_eq!(cfg.fields.families, vec![Family::Sine, Family::Random]);
    assert_eq!(cfg.fields.count, 20);
    assert_eq!(cfg.p, vec![1.0, 2.0]);
    let (out, _) = ctx.run("proof-chain", ExperimentConfig::ProofChain(cfg));
    summary(&out, &[])
}

fn lemma(ctx: &mut Ctx) -> Verdict {
    let (out, dt) = ctx.run("lemma", ExperimentConfig::Lemma(LemmaConfig::default()));
    summary(&out, &[within(dt, 60)])
}

fn heat_bound(ctx: &mut Ctx) -> Verdict {
    let mut cfg = Theorem1Config::default();
    cfg.fields.families = vec![Family::Random];
    cfg.fields.n = vec![64, 256];
    cfg.fields.count = 20;
    cfg.checks = Theorem1Checks {
        sine_alpha: None,
        random_ratio_floor: None,
        ..Default::default()
    };
    let (out, _) = ctx.run("heat-bound", ExperimentConfig::Theorem1(cfg));
    summary(&out, &[])
}

fn theorem1_scaling(ctx: &mut Ctx) -> Verdict {
    let mut cfg = Theorem1Config::default();
    cfg.fields.n = vec![16, 64, 256];
    cfg.heat_check = false;
    let (out, dt) = ctx.run("theorem1", ExperimentConfig::Theorem1(cfg));
    summary(&out, &[within(dt, 300)])
}

fn proposition(ctx: &mut Ctx) -> Verdict {
    let cfg = PropositionSweepConfig::default();
    assert_eq!(cfg.n, 200);
    assert!(cfg.t_max <= 1.0 / (4.0 * 200.0) && cfg.t_max / cfg.t_min >= 10.0 - 1e-9);
    let (out, dt) = ctx.run("proposition", ExperimentConfig::Proposition(cfg));
    summary(&out, &[within(dt, 300)])
}

fn duality(ctx: &mut Ctx) -> Verdict {
    let mut found = Vec::new();
    for (key, name) in [
        ("selftest", "dual excess over primal"),
        ("theorem2", "dual excess over primal"),
        ("theorem2", "sine dual gap"),
    ] {
        let c = ctx
            .outcomes
            .get(key)
            .and_then(|o| o.checks.iter().find(|c| c.name == name).cloned());
        match c {
            Some(c) => found.push((c.passed, format!("{key}: {} = {:.4e}", c.name, c.value))),
            None => found.push((false, format!("{key}: {name} missing"))),
        }
    }
    Verdict {
        passed: found.iter().all(|f| f.0),
        detail: found
            .into_iter()
            .map(|f| f.1)
            .collect::<Vec<_>>()
            .join("; "),
    }
}

fn eigensolver(_: &mut Ctx) -> Verdict {
    let g = Grid::lattice(Domain::square(BoundaryCondition::Dirichlet), 128).unwrap();
    let op = assemble_operator(&ScalarField::constant(&g, 1.0)).unwrap();
    let basis = lowest_eigenpairs(&op, 10, 1e-8).unwrap();
    let mut exact: Vec<f64> = (1..=4)
        .flat_map(|a| (1..=4).map(move |b| PI * PI * (a * a + b * b) as f64))
        .collect();
    exact.sort_by(f64::total_cmp);
    let eig_err = basis
        .eigenvalues()
        .iter()
        .zip(&exact)
        .map(|(a, b)| (a - b).abs() / b)
        .fold(0.0, f64::max);

    let f = ScalarField::from_fn(&g, |p| (PI * p.x()).sin() * (PI * p.y()).sin()).unwrap();
    let t = 0.05;
    let h = heat_flow(&f, &basis, t).unwrap();
    let decay = h.field.l2() / f.l2();
    let want = (-2.0 * PI * PI * t).exp();
    let heat_err = (decay - want).abs() / want;
    Verdict {
        passed: eig_err <= 0.02 && heat_err <= 0.005,
        detail: format!(
            "eigenvalue error {eig_err:.4e} (limit 2e-2); heat decay error {heat_err:.4e} (limit 5e-3)"
        ),
    }
}

fn read(dir: &Path, file: &str) -> Vec<u8> {
    std::fs::read(dir.join(file)).unwrap_or_default()
}

fn determinism(ctx: &mut Ctx) -> Verdict {
    let mut parts = Vec::new();
    let mut passed = true;
    let reruns: [(&'static str, &str, ExperimentConfig); 3] = [
        (
            "theorem2",
            "theorem2.csv",
            ExperimentConfig::Theorem2(Theorem2Config {
                svg: false,
                ..Default::default()
            }),
        ),
        ("theorem1", "theorem1.csv", {
            let mut c = Theorem1Config::default();
            c.fields.n = vec![16, 64, 256];
            c.heat_check = false;
            ExperimentConfig::Theorem1(c)
        }),
        (
            "proposition",
            "proposition.csv",
            ExperimentConfig::Proposition(PropositionSweepConfig {
                svg: false,
                ..Default::default()
            }),
        ),
    ];
    for (key, file, mut cfg) in reruns {
        let first = read(&ctx.dir(key), file);
        let again = ctx.dir(&format!("{key}-again"));
        cfg.set_out(again.clone());
        nlab::run(&cfg).unwrap_or_else(|e| panic!("{key} rerun: {e:#}"));
        let same = !first.is_empty() && first == read(&again, file);
        passed &= same;
        parts.push(format!(
            "{file} {}",
            if same { "identical" } else { "DIFFERS" }
        ));
    }
    Verdict {
        passed,
        detail: parts.join("; "),
    }
}

type Criterion = fn(&mut Ctx) -> Verdict;

fn main() {
    let criteria: [(&str, Criterion); 10] = [
        ("1 transport oracle equivalence", transport_oracle),
        ("2 sine-family sharpness", theorem2_sines),
        ("3 Holder proof chain", holder_chain),
        ("4 enlargement lemma", lemma),
        ("5 heat-flow bound", heat_bound),
        ("6 nodal-length scaling", theorem1_scaling),
        ("7 heat-smeared design on the sphere", proposition),
        ("8 duality certificate", duality),
        ("9 eigensolver cross-check", eigensolver),
        ("10 determinism", determinism),
    ];
    let mut ctx = Ctx {
        root: tempfile::tempdir().expect("temporary directory"),
        outcomes: HashMap::new(),
    };
    let mut failures = 0;
    for (name, f) in criteria {
        let t = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(|| f(&mut ctx))).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Verdict {
                passed: false,
                detail: msg,
            }
        });
        if !v.passed {
            failures += 1;
        }
        println!(
            "{} criterion {name} [{:.1}s]: {}",
            if v.passed { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            v.detail
        );
    }
    println!("acceptance: {} of 10 criteria passed", 10 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
