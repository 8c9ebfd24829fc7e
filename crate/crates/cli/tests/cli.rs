use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sidco::frame::make_simplex_etf;
use sidco::io::{read_csv, read_frame, write_frame, FrameHeader};
use tempfile::tempdir;

fn sidco(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sidco")).args(args).current_dir(dir).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn etf_file(dir: &Path, m: usize) -> String {
    let f = make_simplex_etf(m).unwrap();
    let p = dir.join(format!("etf{m}.frame"));
    write_frame(&p, &f, &FrameHeader::describe(&f, "test", None).unwrap()).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn square_design_is_orthonormal() {
    let d = tempdir().unwrap();
    let o = sidco(&["design", "--m", "5", "--N", "5", "--K", "5"], d.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (f, h) = read_frame(&d.path().join("frame_m5_N5_seed1.frame")).unwrap();
    assert!(h.coherence < 1e-12);
    assert_eq!(f.n(), 5);
    assert!(d.path().join("manifest_m5_N5_seed1.json").exists());
    let t = read_csv(&d.path().join("design_m5_N5.csv")).unwrap();
    assert_eq!(t.rows.len(), 1);
}

#[test]
fn design_writes_one_row_per_seed() {
    let d = tempdir().unwrap();
    let o = sidco(&["design", "--m", "4", "--N", "8", "--K", "10", "--seeds", "2,5"], d.path());
    assert_eq!(code(&o), 0);
    let t = read_csv(&d.path().join("design_m4_N8.csv")).unwrap();
    assert_eq!(t.rows.len(), 2);
    assert_eq!(t.rows[0][0], "2");
    assert_eq!(t.rows[1][0], "5");
    for name in ["frame_m4_N8_seed2.frame", "frame_m4_N8_seed5.frame", "design_m4_N8_trace.svg"] {
        assert!(d.path().join(name).exists(), "{name}");
    }
}

#[test]
fn analyze_certifies_simplex() {
    let d = tempdir().unwrap();
    let f = etf_file(d.path(), 4);
    let o = sidco(&["analyze", &f, "--csv", "corr.csv"], d.path());
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert!(out.contains("ETF            true"), "{out}");
    assert!(out.contains("above 0.99 mu  100.00%"), "{out}");
    let t = read_csv(&d.path().join("corr.csv")).unwrap();
    assert_eq!(t.rows.len(), 10);
}

#[test]
fn usage_errors_exit_two() {
    let d = tempdir().unwrap();
    assert_eq!(code(&sidco(&["design", "--m", "6", "--N", "3"], d.path())), 2);
    assert_eq!(code(&sidco(&["design", "--m", "6"], d.path())), 2);
    assert_eq!(code(&sidco(&["design", "--m", "3", "--N", "6", "--seeds", "5..1"], d.path())), 2);
    assert_eq!(code(&sidco(&["cs-bench", "--sources", "bogus", "--trials", "1"], d.path())), 2);
    let f = etf_file(d.path(), 3);
    assert_eq!(code(&sidco(&["adapt", "--frame", &f], d.path())), 2);
    assert_eq!(code(&sidco(&["--help"], d.path())), 0);
}

#[test]
fn io_errors_exit_three_and_name_the_file() {
    let d = tempdir().unwrap();
    let o = sidco(&["analyze", "missing.frame"], d.path());
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.frame"));
    fs::write(d.path().join("bad.frame"), "not a frame\n").unwrap();
    assert_eq!(code(&sidco(&["analyze", "bad.frame"], d.path())), 3);
}

#[test]
fn cs_bench_smoke() {
    let d = tempdir().unwrap();
    let o =
        sidco(&["cs-bench", "--N", "20", "--M", "30", "--s", "2", "--m", "8", "--trials", "1", "--K", "5"], d.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let t = read_csv(&d.path().join("cs_bench.csv")).unwrap();
    assert_eq!(t.rows.len(), 2);
    assert_eq!(t.rows[1][2], "NA");
    assert!(d.path().join("cs_bench.svg").exists());
}

#[test]
fn adapt_with_zero_iterations_keeps_the_frame() {
    let d = tempdir().unwrap();
    let f = etf_file(d.path(), 5);
    let o = sidco(&["adapt", "--frame", &f, "--synthetic", "--K", "0", "--samples", "50", "--s", "2"], d.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (a, _) = read_frame(&d.path().join("adapted.frame")).unwrap();
    let (b, _) = read_frame(Path::new(&f)).unwrap();
    assert_eq!(a.vectors(), b.vectors());
}

#[test]
fn config_file_fills_missing_flags() {
    let d = tempdir().unwrap();
    fs::write(d.path().join("run.toml"), "m = 3\nN = 6\nK = 5\nseeds = \"4\"\nout = \"res\"\n").unwrap();
    let o = sidco(&["design", "--config", "run.toml", "--K", "3"], d.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let t = read_csv(&d.path().join("res/design_m3_N6.csv")).unwrap();
    assert!(t.echo.iter().any(|(k, v)| k == "K" && v == "3"));
    assert_eq!(t.rows[0][0], "4");
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempdir().unwrap(), tempdir().unwrap());
    let args = ["design", "--m", "6", "--N", "14", "--K", "15", "--seeds", "1..2"];
    assert_eq!(code(&sidco(&args, a.path())), 0);
    assert_eq!(code(&sidco(&args, b.path())), 0);
    for name in ["design_m6_N14.csv", "frame_m6_N14_seed1.frame", "frame_m6_N14_seed2.frame"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}
