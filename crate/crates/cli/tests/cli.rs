use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::Command;

use aircomp_cli::commands::{LatencyRow, MseRow, TrainRow};
use aircomp_cli::{latency_sweep, mse_sweep, train, validate, write_csv, ExperimentSpec};

fn spec(text: &str) -> ExperimentSpec {
    ExperimentSpec::from_toml_str(text).unwrap()
}

fn csv_bytes<T: serde::Serialize>(rows: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    write_csv(rows, &mut out).unwrap();
    out
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_aircomp"))
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn mean(rows: &[&MseRow], scheme: &str, value: f64) -> f64 {
    rows.iter().find(|r| r.scheme == scheme && r.value == value).and_then(|r| r.mse_mean).unwrap()
}

#[test]
fn shipped_configs_parse() {
    let mut n = 0;
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        let s = ExperimentSpec::from_file(&path).unwrap_or_else(|e| panic!("{}: {e:#}", path.display()));
        s.check().unwrap();
        s.system_config().unwrap();
        n += 1;
    }
    assert!(n >= 5);
}

#[test]
fn sweep_csv_is_reproducible_and_tagged() {
    let s = spec(
        r#"
        seed = 9
        trials = 5
        system.K = 4
        system.Nt = 4
        system.P0_watt = 1.0
        system.sigma2 = 0.1
        sweep.param = "snr_db"
        sweep.values = [0, 10]
        "#,
    );
    let a = csv_bytes(&mse_sweep(&s).unwrap());
    let b = csv_bytes(&mse_sweep(&s).unwrap());
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "sweep_var,value,scheme,mse_mean,mse_stderr,trials,skipped,seed,config_hash"
    );
    let hash = s.config_hash();
    for line in lines {
        assert!(line.ends_with(&format!(",9,{hash}")), "{line}");
    }
    let other = spec(&format!("seed = 10\n{}", "trials = 5\nsweep.param = \"snr_db\"\nsweep.values = [0]"));
    assert_ne!(other.config_hash(), hash);
}

#[test]
fn binary_output_is_byte_identical() {
    let cfg = configs().join("antenna_sweep.toml");
    let run = || {
        let out = bin()
            .args(["mse-sweep", "--config", cfg.to_str().unwrap(), "--trials", "3", "--seed", "4"])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out.stdout
    };
    let a = run();
    assert_eq!(a, run());
    assert!(String::from_utf8(a).unwrap().lines().count() == 1 + 6 * 2);
}

#[test]
fn wrong_kind_is_an_error() {
    let cfg = configs().join("latency.toml");
    let out = bin().args(["train", "--config", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn zf_error_falls_with_snr_on_one_draw() {
    let s = spec(
        r#"
        trials = 1
        schemes = ["zf"]
        system.K = 5
        system.Nt = 6
        system.P0_watt = 1.0
        system.sigma2 = 0.1
        sweep.param = "snr_db"
        sweep.values = [-10, 0, 10, 20, 30, 40]
        "#,
    );
    let rows = mse_sweep(&s).unwrap();
    for w in rows.windows(2) {
        assert!(w[1].mse_mean.unwrap() < w[0].mse_mean.unwrap());
    }
}

#[test]
fn infeasible_points_are_flagged() {
    let s = spec(
        r#"
        trials = 2
        schemes = ["zf", "mmse"]
        system.K = 5
        system.Nt = 4
        system.P0_watt = 1.0
        system.sigma2 = 0.1
        sweep.param = "Nt"
        sweep.values = [2, 4]
        "#,
    );
    let rows = mse_sweep(&s).unwrap();
    for r in &rows {
        assert_eq!(r.skipped, r.value == 2.0);
        assert_eq!(r.mse_mean.is_none(), r.skipped);
    }
    let text = String::from_utf8(csv_bytes(&rows)).unwrap();
    assert!(text.contains("Nt,2.0,zf,,,2,true"));
}

#[test]
fn distributed_error_exceeds_single_aggregation() {
    // the ratio grows with SNR: single aggregation is noise limited while
    // the distributed design keeps a misalignment floor
    let s = spec(
        r#"
        trials = 100
        schemes = ["mmse", "single_agg"]
        system.K = 5
        system.Nt = 4
        system.P0_watt = 1.0
        system.sigma2 = 0.1
        sweep.param = "snr_db"
        sweep.values = [0, 10, 20, 30]
        "#,
    );
    let rows = mse_sweep(&s).unwrap();
    let refs: Vec<&MseRow> = rows.iter().collect();
    for v in [0.0, 10.0, 20.0, 30.0] {
        assert!(mean(&refs, "mmse", v) >= mean(&refs, "single_agg", v));
    }
    let ratio = mean(&refs, "mmse", 10.0) / mean(&refs, "single_agg", 10.0);
    assert!((5.0..=15.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn mmse_error_does_not_grow_with_antennas() {
    let s = spec(
        r#"
        trials = 1000
        schemes = ["mmse"]
        system.K = 5
        system.Nt = 4
        system.P0_watt = 1.0
        system.sigma2 = 0.1
        sweep.param = "Nt"
        sweep.values = [4, 8, 12]
        "#,
    );
    let rows = mse_sweep(&s).unwrap();
    for w in rows.windows(2) {
        assert!(w[1].mse_mean.unwrap() <= w[0].mse_mean.unwrap());
    }
}

#[test]
fn latency_sweep_shapes() {
    let s = ExperimentSpec::from_file(&configs().join("latency.toml")).unwrap();
    let rows = latency_sweep(&s).unwrap();
    let get = |k: usize, name: &str| -> &LatencyRow { rows.iter().find(|r| r.devices == k && r.scheme == name).unwrap() };
    let air = get(5, "aircomp").latency_mean_s;
    for k in [5, 10, 20, 50] {
        assert_eq!(get(k, "aircomp").latency_mean_s, air);
        assert_eq!(get(k, "single_agg").latency_mean_s, k as f64 * air);
        assert!(get(k, "digital").latency_mean_s > get(k, "single_agg").latency_mean_s);
    }
    assert!(get(50, "digital").latency_mean_s / air >= 50.0);
    let text = String::from_utf8(csv_bytes(&rows)).unwrap();
    assert!(text.starts_with("K,scheme,latency_mean_s,latency_stderr,trials,seed,config_hash\n"));
}

fn final_gaps(rows: &[TrainRow]) -> BTreeMap<(String, u64), f64> {
    let last = rows.iter().map(|r| r.round).max().unwrap();
    let mut acc: BTreeMap<(String, u64), (f64, usize)> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.round == last) {
        let e = acc.entry((r.scheme.clone(), r.seed)).or_default();
        e.0 += r.gap;
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

fn scheme_mean(gaps: &BTreeMap<(String, u64), f64>, scheme: &str) -> f64 {
    let v: Vec<f64> = gaps.iter().filter(|(k, _)| k.0 == scheme).map(|(_, g)| *g).collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn ten_device_training() -> Vec<TrainRow> {
    train(&spec(
        r#"
        schemes = ["ideal", "aircomp_zf", "digital"]
        system.K = 10
        system.Nt = 18
        system.D = 10
        system.P0_watt = 1.0
        system.sigma2 = 0.01
        train.rounds = 500
        train.seeds = 4
        "#,
    ))
    .unwrap()
}

#[test]
fn zf_at_20db_tracks_noiseless_training() {
    let rows = ten_device_training();
    let gaps = final_gaps(&rows);
    let (ideal, zf) = (scheme_mean(&gaps, "ideal"), scheme_mean(&gaps, "aircomp_zf"));
    assert!((zf - ideal).abs() <= 0.1 * ideal, "{zf} vs {ideal}");
}

#[test]
fn aircomp_reaches_gap_thresholds_sooner_than_digital() {
    let rows = ten_device_training();
    // seed-averaged gap and latency per recorded round
    let curve = |scheme: &str| -> Vec<(f64, f64)> {
        let mut acc: BTreeMap<usize, (f64, f64, usize)> = BTreeMap::new();
        for r in rows.iter().filter(|r| r.scheme == scheme) {
            let e = acc.entry(r.round).or_default();
            e.0 += r.gap;
            e.1 += r.latency_s;
            e.2 += 1;
        }
        acc.values().map(|(g, l, n)| (g / *n as f64, l / *n as f64)).collect()
    };
    let first = |c: &[(f64, f64)], thr: f64| c.iter().find(|p| p.0 <= thr).map(|p| p.1);
    let (air, dig) = (curve("aircomp_zf"), curve("digital"));
    for thr in [2.5, 2.0, 1.5] {
        let (a, d) = (first(&air, thr).unwrap(), first(&dig, thr).unwrap());
        assert!(d >= 10.0 * a, "threshold {thr}: aircomp {a} s, digital {d} s");
    }
}

#[test]
fn mmse_training_loses_to_zf_at_10db() {
    let rows = train(&spec(
        r#"
        schemes = ["aircomp_zf", "aircomp_mmse"]
        system.K = 5
        system.Nt = 8
        system.D = 10
        system.P0_watt = 1.0
        system.sigma2 = 0.1
        train.rounds = 200
        train.record_every = 200
        train.seeds = 6
        "#,
    ))
    .unwrap();
    let gaps = final_gaps(&rows);
    let diffs: Vec<f64> = (0..6u64)
        .map(|s| gaps[&("aircomp_mmse".to_string(), s)] - gaps[&("aircomp_zf".to_string(), s)])
        .collect();
    let (m, se) = aircomp::signal::mean_and_se(&diffs);
    assert!(m > 3.0 * se, "difference {m}, s.e. {se}");
}

#[test]
fn train_rows_are_tagged() {
    let s = spec("schemes = [\"ideal\"]\nseed = 3\ntrain.rounds = 20\ntrain.record_every = 5");
    let rows = train(&s).unwrap();
    assert_eq!(rows.iter().map(|r| r.round).max(), Some(20));
    assert!(rows.iter().all(|r| r.seed == 3 && r.config_hash == s.config_hash()));
    assert_eq!(csv_bytes(&rows), csv_bytes(&train(&s).unwrap()));
}

#[test]
fn validate_is_deterministic_and_catches_injection() {
    let s = ExperimentSpec::default();
    let a = validate(&s).unwrap();
    assert!(a.passed(), "{}", a.render());
    assert_eq!(a.render(), validate(&s).unwrap().render());

    let out = bin().args(["validate", "--seed", "0", "--inject-eta-scale", "1.1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("FAIL eq6_consistency_zf")), "{text}");
    assert!(text.lines().any(|l| l.starts_with("FAIL eq6_consistency_mmse")), "{text}");
}
