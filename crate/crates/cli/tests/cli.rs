use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hklin(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hklin"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn hklin")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Value of `column` in the first data row of a CSV with `#` comments.
fn field(csv: &str, column: &str) -> String {
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header
        .iter()
        .position(|h| *h == column)
        .unwrap_or_else(|| panic!("no column {column}"));
    row[k].to_string()
}

fn points(dir: &Path, name: &str, rows: &[(f64, f64, f64)]) {
    let mut s = String::from("x,y,mass\n");
    for (x, y, m) in rows {
        s.push_str(&format!("{x},{y},{m}\n"));
    }
    fs::write(dir.join(name), s).unwrap();
}

#[test]
fn distance_between_unit_diracs() {
    let dir = tempfile::tempdir().unwrap();
    points(dir.path(), "a.csv", &[(0.0, 0.0, 1.0)]);
    points(dir.path(), "b.csv", &[(0.5, 0.0, 1.0)]);
    let out = hklin(&["distance", "a.csv", "b.csv"], dir.path());
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.starts_with("# hklin distance"));
    let d: f64 = field(&text, "distance").parse().unwrap();
    let exact = (2.0 - 2.0 * 0.5f64.cos()).sqrt();
    assert!((d - exact).abs() < 1e-3, "{d} vs {exact}");
}

#[test]
fn identical_measures_are_close() {
    let dir = tempfile::tempdir().unwrap();
    let rows = [(0.0, 0.0, 0.3), (1.0, 0.0, 0.5), (0.0, 1.0, 0.2)];
    points(dir.path(), "a.csv", &rows);
    points(dir.path(), "b.csv", &rows);
    let out = hklin(&["distance", "a.csv", "b.csv"], dir.path());
    assert_eq!(code(&out), 0);
    let d: f64 = field(&stdout(&out), "distance").parse().unwrap();
    assert!(d <= 1e-2, "{d}");
}

#[test]
fn kappa_scales_distance() {
    let dir = tempfile::tempdir().unwrap();
    points(dir.path(), "a.csv", &[(0.0, 0.0, 1.0)]);
    points(dir.path(), "b.csv", &[(1.0, 0.0, 1.0)]);
    let out = hklin(&["distance", "a.csv", "b.csv", "--kappa", "2"], dir.path());
    let d: f64 = field(&stdout(&out), "distance").parse().unwrap();
    let exact = 2.0 * (2.0 - 2.0 * 0.5f64.cos()).sqrt();
    assert!((d - exact).abs() < 2e-3, "{d} vs {exact}");
}

#[test]
fn w2_rejects_unequal_mass() {
    let dir = tempfile::tempdir().unwrap();
    points(dir.path(), "a.csv", &[(0.0, 0.0, 1.0)]);
    points(dir.path(), "b.csv", &[(1.0, 0.0, 2.0)]);
    let out = hklin(
        &["distance", "a.csv", "b.csv", "--metric", "w2"],
        dir.path(),
    );
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("normalize"), "{}", stderr(&out));
}

#[test]
fn w2_between_diracs() {
    let dir = tempfile::tempdir().unwrap();
    points(dir.path(), "a.csv", &[(0.0, 0.0, 1.0)]);
    points(dir.path(), "b.csv", &[(3.0, 4.0, 1.0)]);
    let out = hklin(
        &["distance", "a.csv", "b.csv", "--metric", "w2"],
        dir.path(),
    );
    assert_eq!(code(&out), 0);
    let d: f64 = field(&stdout(&out), "distance").parse().unwrap();
    assert!((d - 5.0).abs() < 1e-12, "{d}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    points(dir.path(), "a.csv", &[(0.0, 0.0, 1.0)]);
    assert_eq!(code(&hklin(&["distance", "a.csv"], dir.path())), 1);
    assert_eq!(code(&hklin(&["no-such-command"], dir.path())), 1);
    assert_eq!(
        code(&hklin(&["distance", "a.csv", "missing.csv"], dir.path())),
        3
    );
    fs::write(dir.path().join("bad.csv"), "x,y,mass\n0,zero,1\n").unwrap();
    let out = hklin(&["distance", "a.csv", "bad.csv"], dir.path());
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("bad.csv"));
    fs::write(
        dir.path().join("cfg.txt"),
        "max_iters_per_eps = 1\ntol_marginal = 1e-15\n",
    )
    .unwrap();
    points(dir.path(), "b.csv", &[(0.3, 0.0, 1.0), (0.0, 0.4, 2.0)]);
    let out = hklin(
        &["distance", "a.csv", "b.csv", "--config", "cfg.txt"],
        dir.path(),
    );
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert_eq!(
        code(&hklin(
            &["distance", "a.csv", "b.csv", "--kappa", "-1"],
            dir.path()
        )),
        1
    );
}

#[test]
fn distance_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    points(dir.path(), "a.csv", &[(0.0, 0.0, 0.4), (1.0, 1.0, 0.6)]);
    points(dir.path(), "b.csv", &[(0.5, 0.0, 0.7), (0.0, 1.0, 0.5)]);
    let one = hklin(
        &["distance", "a.csv", "b.csv", "--out", "one.csv"],
        dir.path(),
    );
    let two = hklin(
        &[
            "--workers",
            "1",
            "distance",
            "a.csv",
            "b.csv",
            "--out",
            "two.csv",
        ],
        dir.path(),
    );
    assert_eq!(code(&one), 0);
    assert_eq!(code(&two), 0);
    assert_eq!(
        fs::read(dir.path().join("one.csv")).unwrap(),
        fs::read(dir.path().join("two.csv")).unwrap()
    );
}

#[test]
fn ellipse_dataset_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = hklin(
        &[
            "gen-ellipses",
            "--out",
            "data",
            "--resolution",
            "16",
            "--levels",
            "3",
        ],
        d,
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let manifest = fs::read_to_string(d.join("data/manifest.csv")).unwrap();
    assert!(manifest.starts_with("# hklin gen-ellipses"));
    assert_eq!(
        manifest
            .lines()
            .filter(|l| l.starts_with("ellipse_"))
            .count(),
        9
    );
    assert!(manifest.contains("ellipse_00_02.csv,-1,1,1"));
    assert!(manifest.contains("ellipse_00_01.csv,-1,0,0"));

    let out = hklin(
        &[
            "embed",
            "data/manifest.csv",
            "--kappa",
            "5",
            "--out",
            "emb.csv",
        ],
        d,
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let emb = fs::read_to_string(d.join("emb.csv")).unwrap();
    assert!(emb.contains("#embedding metric=hk kappa=5"));
    assert!(d.join("emb.reference.csv").exists());

    let out = hklin(
        &["pca", "emb.csv", "--out", "pca", "--grid", "16x16", "--pgm"],
        d,
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in [
        "eigen.csv",
        "modes.csv",
        "sweep_masses.csv",
        "mode1_00.csv",
        "mode2_04.pgm",
    ] {
        assert!(d.join("pca").join(f).exists(), "{f}");
    }
    let pgm = fs::read(d.join("pca/mode1_00.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n16 16\n255\n"));
    assert_eq!(pgm.len(), b"P5\n16 16\n255\n".len() + 256);

    for algo in ["knn", "lda"] {
        let out = hklin(&["classify", "emb.csv", "--algo", algo], d);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let acc: f64 = field(&stdout(&out), "accuracy").parse().unwrap();
        assert!((0.0..=1.0).contains(&acc));
    }

    let out = hklin(
        &[
            "kappa-sweep",
            "data/manifest.csv",
            "--kappas",
            "1,5",
            "--out",
            "sweep.csv",
        ],
        d,
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let sweep = fs::read_to_string(d.join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().filter(|l| !l.starts_with('#')).count(), 3);
}

#[test]
fn geodesic_frames() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    points(d, "a.csv", &[(2.0, 2.0, 1.0)]);
    points(d, "b.csv", &[(2.5, 2.0, 1.0)]);
    let out = hklin(
        &[
            "geodesic", "a.csv", "b.csv", "--frames", "5", "--grid", "8x8", "--out", "geo",
        ],
        d,
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let frames = fs::read_to_string(d.join("geo/frames.csv")).unwrap();
    let masses: Vec<f64> = frames
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(masses.len(), 5);
    assert!((masses[0] - 1.0).abs() < 1e-6 && (masses[4] - 1.0).abs() < 1e-6);
    // mass dips in the middle of a transport geodesic between unit Diracs
    assert!(masses[2] < 0.99, "{masses:?}");
    assert!(d.join("geo/frame_004.csv").exists());
    assert_eq!(
        code(&hklin(
            &["geodesic", "a.csv", "b.csv", "--frames", "1", "--out", "g"],
            d
        )),
        1
    );
}
