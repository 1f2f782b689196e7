use std::path::Path;
use std::process::{Command, Output};

use nlab::config::{ExperimentConfig, Family, COMMANDS};
use nlab::render_nodal_svg;
use nlab_core::domain::{BoundaryCondition, Domain, Grid, ScalarField};
use nlab_core::nodal::{nodal_length, DEFAULT_TOL};

fn nlab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlab"))
        .args(args)
        .current_dir(dir)
        .env_remove("NLAB_JOBS")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn default_configs_round_trip() {
    for cmd in COMMANDS {
        let cfg = ExperimentConfig::default_for(cmd).unwrap();
        assert_eq!(cfg.command(), cmd);
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
    }
}

#[test]
fn edited_config_round_trips() {
    let text = r#"{"command": "proof-chain", "fields": {"families": ["bump"], "count": 3,
        "domain": "square-neumann", "resolution": 48}, "p": [1.5], "out": "x"}"#;
    let cfg = ExperimentConfig::from_json(text).unwrap();
    let ExperimentConfig::ProofChain(c) = &cfg else {
        panic!("wrong variant")
    };
    assert_eq!(c.fields.families, vec![Family::Bump]);
    assert_eq!(c.p, vec![1.5]);
    assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg);
}

#[test]
fn invalid_configs_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("empty.json", "", "empty"),
        ("bare.json", "{}", "command"),
        ("typo.json", r#"{"command": "lemma", "levls": 3}"#, "levls"),
        (
            "shape.json",
            r#"{"command": "lemma", "shapes": ["blob"]}"#,
            "blob",
        ),
        ("p.json", r#"{"command": "theorem2", "p": [0.5]}"#, "p"),
        (
            "sine.json",
            r#"{"command": "theorem2", "fields": {"domain": "square-dirichlet"}}"#,
            "torus",
        ),
    ];
    for (name, body, needle) in cases {
        std::fs::write(dir.path().join(name), body).unwrap();
        let cmd = if body.contains("theorem2") {
            "theorem2"
        } else {
            "lemma"
        };
        let o = nlab(&[cmd, "--config", name], dir.path());
        assert_eq!(o.status.code(), Some(2), "{name}: {}", stderr(&o));
        assert!(stderr(&o).contains(needle), "{name}: {}", stderr(&o));
    }
}

#[test]
fn flag_and_command_mismatches_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("l.json"), r#"{"command": "lemma"}"#).unwrap();
    for args in [
        vec!["theorem2", "--config", "l.json"],
        vec!["lemma", "--seed", "3"],
        vec!["lemma", "--m", "2"],
        vec!["fourier"],
        vec!["lemma", "--jobs", "0"],
        vec!["theorem2", "--family", "wavelet"],
    ] {
        let o = nlab(&args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn print_config_reflects_flags() {
    let dir = tempfile::tempdir().unwrap();
    let o = nlab(
        &[
            "theorem2",
            "--m",
            "3,5",
            "--p",
            "1,2",
            "--seed",
            "9",
            "--print-config",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let cfg = ExperimentConfig::from_json(&String::from_utf8_lossy(&o.stdout)).unwrap();
    let ExperimentConfig::Theorem2(c) = cfg else {
        panic!("wrong variant")
    };
    assert_eq!(c.fields.m, vec![3.0, 5.0]);
    assert_eq!(c.p, vec![1.0, 2.0]);
    assert_eq!(c.fields.seed, 9);
}

#[test]
fn lemma_default_suite() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_nlab"))
        .args(["lemma", "--out", "res"])
        .current_dir(dir.path())
        .env("NLAB_JOBS", "1")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("res/lemma.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("shape,eps,enlargement_area,perimeter,ratio,precondition_ok")
    );
    let ratios: Vec<f64> = lines
        .map(|l| l.split(',').nth(4).unwrap().parse().unwrap())
        .collect();
    assert_eq!(ratios.len(), 36);
    assert!(ratios.iter().all(|&r| r <= 2.0));
    assert!(dir.path().join("res/lemma.json").exists());
}

#[test]
fn theorem2_sine_example() {
    let dir = tempfile::tempdir().unwrap();
    let o = nlab(
        &[
            "theorem2", "--family", "sine", "--m", "2,4,8", "--p", "1", "--out", "t2",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("t2/theorem2.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for r in rows {
        let ratio: f64 = r.split(',').nth(5).unwrap().parse().unwrap();
        assert!((ratio - 0.5).abs() <= 0.05, "{ratio}");
    }
    for m in [2, 4, 8] {
        assert!(dir.path().join(format!("t2/nodal_sine_m{m}.svg")).exists());
    }
}

#[test]
fn failed_check_gives_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"command": "theorem2", "fields": {"resolution": 64, "m": [2, 4]},
        "checks": {"sine_ratio": 0.9, "sine_w1_tol": null, "sine_h1_tol": null},
        "svg": false}"#;
    std::fs::write(dir.path().join("c.json"), cfg).unwrap();
    let o = nlab(&["theorem2", "--config", "c.json"], dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("FAIL sine ratio relative error"), "{out}");
    assert!(dir.path().join("nlab-out/theorem2.csv").exists());
}

#[test]
fn selftest_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = nlab(
            &["transport-selftest", "--seed", "5", "--out", out],
            dir.path(),
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = std::fs::read(dir.path().join("a/transport_selftest.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/transport_selftest.csv")).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("instance,sources,targets,p,exact,oracle,abs_error,w1_dual\n"));
    assert_eq!(text.lines().count(), 51);
}

#[test]
fn bump_and_random_fields_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"command": "proof-chain", "fields": {"families": ["bump", "random"],
        "domain": "square-neumann", "resolution": 48, "n": [10], "bandwidth": 20,
        "count": 2}, "p": [1]}"#;
    std::fs::write(dir.path().join("c.json"), cfg).unwrap();
    let o = nlab(
        &["proof-chain", "--config", "c.json", "--out", "pc"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("pc/proof_chain.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn nodal_svg_shows_vertical_lines_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let g = Grid::lattice(Domain::torus(), 64).unwrap();
    let f = ScalarField::from_fn(&g, |p| (4.0 * p.x()).sin()).unwrap();
    let nodal = nodal_length(&f, DEFAULT_TOL).unwrap();
    let (a, b) = (dir.path().join("a.svg"), dir.path().join("b.svg"));
    render_nodal_svg(&f, &nodal, "sin 4x", &a).unwrap();
    render_nodal_svg(&f, &nodal, "sin 4x", &b).unwrap();
    let sa = std::fs::read_to_string(&a).unwrap();
    assert_eq!(sa, std::fs::read_to_string(&b).unwrap());
    // every black segment is vertical, at one of 8 abscissae
    let mut xs: Vec<String> = sa
        .lines()
        .filter(|l| l.starts_with("<line") && l.contains("stroke=\"black\""))
        .map(|l| {
            let attr = |k: &str| {
                l.split(&format!("{k}=\""))
                    .nth(1)
                    .unwrap()
                    .split('"')
                    .next()
                    .unwrap()
                    .to_string()
            };
            assert_eq!(attr("x1"), attr("x2"), "{l}");
            attr("x1")
        })
        .collect();
    xs.sort();
    xs.dedup();
    assert_eq!(xs.len(), 8, "{xs:?}");
}

#[test]
fn nodal_svg_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let g = Grid::lattice(Domain::torus(), 32).unwrap();
    let c = ScalarField::constant(&g, 1.0);
    let empty = nodal_length(&c, DEFAULT_TOL).unwrap();
    assert!(empty.segments().is_empty());
    let p = dir.path().join("c.svg");
    render_nodal_svg(&c, &empty, "constant", &p).unwrap();
    let s = std::fs::read_to_string(&p).unwrap();
    assert!(s.contains("<rect") && !s.contains("stroke=\"black\""));

    let sq = Grid::lattice(Domain::square(BoundaryCondition::Neumann), 32).unwrap();
    let other = ScalarField::constant(&sq, 1.0);
    assert!(render_nodal_svg(&other, &empty, "mismatch", &p).is_err());

    let sphere = Grid::icosphere(3).unwrap();
    let z = ScalarField::from_fn(&sphere, |p| p.0[2]).unwrap();
    let eq = nodal_length(&z, DEFAULT_TOL).unwrap();
    let p = dir.path().join("s.svg");
    render_nodal_svg(&z, &eq, "equator", &p).unwrap();
    let s = std::fs::read_to_string(&p).unwrap();
    assert!(s.contains("#cccccc") && s.contains("<circle"));
    // parent is a regular file
    assert!(render_nodal_svg(&z, &eq, "x", &p.join("x.svg")).is_err());
}
