use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use emdq::io::{format_matches, load_labels};
use emdq::synth::{generate, SynthSpec};
use emdq::{Dim, MatchSet, Point};
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_emdq");

fn emdq(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_scene(dir: &TempDir, name: &str, spec: &SynthSpec) -> PathBuf {
    let (m, gt) = generate(spec).unwrap();
    let p = path(dir, name);
    fs::write(&p, format_matches(&m, Some(&gt), "px")).unwrap();
    p
}

#[test]
fn clean_rigid_file_is_all_inliers() {
    let dir = TempDir::new().unwrap();
    let (c, sn) = (0.3f64.cos(), 0.3f64.sin());
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..20 {
        for j in 0..15 {
            let p = Point::new(40.0 * i as f64 + 3.0 * (j % 3) as f64, 40.0 * j as f64, 0.0);
            x.push(p);
            y.push(Point::new(c * p.x - sn * p.y + 25.0, sn * p.x + c * p.y - 10.0, 0.0));
        }
    }
    let m = MatchSet::new(Dim::Two, x, y).unwrap();
    let input = path(&dir, "rigid.csv");
    fs::write(&input, format_matches(&m, None, "px")).unwrap();
    let out = path(&dir, "labels.csv");
    let o = emdq(&["filter", "-i", s(&input), "-o", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let labels = load_labels(&out).unwrap();
    assert_eq!(labels.inlier.len(), 300);
    assert!(labels.inlier.iter().all(|&b| b));
}

#[test]
fn sparse_agrees_with_dense_on_large_input() {
    let dir = TempDir::new().unwrap();
    let input = write_scene(&dir, "big.csv", &SynthSpec::planar(2000, 0.5, 11));
    let dense = path(&dir, "dense.csv");
    let sparse = path(&dir, "sparse.csv");
    assert_eq!(code(&emdq(&["filter", "-i", s(&input), "-o", s(&dense)])), 0);
    assert_eq!(code(&emdq(&["filter", "-i", s(&input), "-o", s(&sparse), "--sparse"])), 0);
    let a = load_labels(&dense).unwrap().inlier;
    let b = load_labels(&sparse).unwrap().inlier;
    let differ = a.iter().zip(&b).filter(|(p, q)| p != q).count();
    assert!(differ <= 20, "{differ} labels differ");
}

#[test]
fn malformed_input_exits_2() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "labels.csv");
    for (name, text) in [
        ("empty.csv", ""),
        ("header.csv", "two,3,px\n"),
        ("short.csv", "2,3,px\n0,0,1,1\n1,1,2,2\n"),
        ("nan.csv", "2,1,px\n0,NaN,1,1\n"),
        ("width.csv", "2,1,px\n0,0,1\n"),
    ] {
        let p = path(&dir, name);
        fs::write(&p, text).unwrap();
        let o = emdq(&["filter", "-i", s(&p), "-o", s(&out)]);
        assert_eq!(code(&o), 2, "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let ok = write_scene(&dir, "ok.csv", &SynthSpec::planar(100, 0.3, 1));
    assert_eq!(code(&emdq(&["filter", "-i", s(&ok), "-o", s(&out), "--H=-1"])), 2);
    assert_eq!(code(&emdq(&["filter", "-i", s(&ok), "-o", s(&out), "--dim", "3"])), 2);
    assert_eq!(code(&emdq(&["filter", "--bogus"])), 2);
}

#[test]
fn degenerate_input_exits_3() {
    let dir = TempDir::new().unwrap();
    let p = path(&dir, "same.csv");
    fs::write(&p, "2,4,px\n5,5,1,1\n5,5,2,2\n5,5,3,3\n5,5,4,4\n").unwrap();
    let o = emdq(&["filter", "-i", s(&p), "-o", s(&path(&dir, "l.csv"))]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn missing_file_exits_1() {
    let dir = TempDir::new().unwrap();
    let o = emdq(&["filter", "-i", s(&path(&dir, "absent.csv")), "-o", s(&path(&dir, "l.csv"))]);
    assert_eq!(code(&o), 1);
}

#[test]
fn outputs_are_identical_across_runs_and_threads() {
    let dir = TempDir::new().unwrap();
    let input = write_scene(&dir, "in.csv", &SynthSpec::planar(800, 0.5, 5));
    let mut seen: Option<(Vec<u8>, Vec<u8>)> = None;
    for (k, threads) in ["1", "1", "4", "8"].iter().enumerate() {
        let labels = path(&dir, &format!("l{k}.csv"));
        let field = path(&dir, &format!("f{k}.csv"));
        let o = emdq(&[
            "field", "-i", s(&input), "-o", s(&field), "--labels", s(&labels), "--seed", "4", "--threads", threads,
        ]);
        assert_eq!(code(&o), 0);
        let now = (fs::read(&labels).unwrap(), fs::read(&field).unwrap());
        if let Some(first) = &seen {
            assert!(first == &now, "output changed with --threads {threads}");
        } else {
            seen = Some(now);
        }
    }
}

#[test]
fn field_lattice_shape() {
    let dir = TempDir::new().unwrap();
    let input = write_scene(&dir, "in.csv", &SynthSpec::planar(500, 0.3, 2));
    let field = path(&dir, "field.csv");
    let svg = path(&dir, "field.svg");
    let o = emdq(&[
        "field", "-i", s(&input), "-o", s(&field), "--bounds", "0,0,800,600", "--grid-step", "50", "--svg", s(&svg),
    ]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("grid 17x13"));
    let text = fs::read_to_string(&field).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("qx,qy,dx,dy,support,valid"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 17 * 13);
    assert_eq!(&rows[1][..2], &[50.0, 0.0]);
    assert_eq!(&rows[17][..2], &[0.0, 50.0]);
    assert_eq!(&rows[220][..2], &[800.0, 600.0]);
    assert!(fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}

#[test]
fn eval_of_ground_truth_labels_is_perfect() {
    let dir = TempDir::new().unwrap();
    let (m, gt) = generate(&SynthSpec::planar(200, 0.4, 8)).unwrap();
    let input = path(&dir, "in.csv");
    fs::write(&input, format_matches(&m, Some(&gt), "px")).unwrap();
    let mut labels = String::from("index,inlier,posterior,residual\n");
    for (i, &g) in gt.iter().enumerate() {
        labels.push_str(&format!("{i},{},{},0\n", u8::from(g), u8::from(g)));
    }
    let lp = path(&dir, "labels.csv");
    fs::write(&lp, labels).unwrap();
    let o = emdq(&["eval", "-i", s(&input), "--labels", s(&lp)]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert!(out.contains("n_errors 0"), "{out}");
    assert!(out.contains("fscore 1.000000"), "{out}");
}

#[test]
fn synth_then_filter_scores_well() {
    let dir = TempDir::new().unwrap();
    let input = path(&dir, "in.csv");
    let labels = path(&dir, "labels.csv");
    let svg = path(&dir, "m.svg");
    assert_eq!(code(&emdq(&["synth", "-o", s(&input), "-n", "600", "--outlier-ratio", "0.5", "--seed", "3"])), 0);
    let o = emdq(&["filter", "-i", s(&input), "-o", s(&labels), "--svg", s(&svg)]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("gamma"));
    let ev = stdout(&emdq(&["eval", "-i", s(&input), "--labels", s(&labels)]));
    let f: f64 = ev.lines().find_map(|l| l.strip_prefix("fscore ")).unwrap().parse().unwrap();
    assert!(f > 0.95, "{ev}");
}

#[test]
fn bench_prints_one_row_per_ratio() {
    let o = emdq(&["bench", "-n", "300", "--seeds", "1", "--no-timing"]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 5, "{out}");
}

#[test]
fn help_lists_flags() {
    let o = emdq(&["filter", "--help"]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    for flag in [
        "--input", "--output", "--dim", "--sparse", "--seed", "--svg", "--config", "--H", "--r", "--a", "--p-min",
        "--theta", "--t-min", "--n-neighbor", "--threads",
    ] {
        assert!(out.contains(flag), "missing {flag}");
    }
    let field = stdout(&emdq(&["field", "--help"]));
    assert!(field.contains("--grid-step") && field.contains("--bounds"));
}

#[test]
fn config_file_overrides_defaults() {
    let dir = TempDir::new().unwrap();
    let input = write_scene(&dir, "in.csv", &SynthSpec::planar(300, 0.3, 4));
    let cfg = path(&dir, "cfg.txt");
    fs::write(&cfg, "# strict\np_min = 0.999999\n").unwrap();
    let loose = path(&dir, "a.csv");
    let strict = path(&dir, "b.csv");
    assert_eq!(code(&emdq(&["filter", "-i", s(&input), "-o", s(&loose)])), 0);
    assert_eq!(code(&emdq(&["filter", "-i", s(&input), "-o", s(&strict), "--config", s(&cfg)])), 0);
    let n = |p: &Path| load_labels(p).unwrap().inlier.iter().filter(|&&b| b).count();
    assert!(n(&strict) <= n(&loose));
    fs::write(&cfg, "nonsense = 1\n").unwrap();
    assert_eq!(code(&emdq(&["filter", "-i", s(&input), "-o", s(&strict), "--config", s(&cfg)])), 2);
}
