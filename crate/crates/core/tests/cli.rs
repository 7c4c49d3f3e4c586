use std::process::Command;

fn imac(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_imac")).args(args).output().unwrap()
}

#[test]
fn solve_prints_one_row() {
    let out = imac(&["solve", "--scenario", "builtin:mi", "--antennas", "1", "--mode", "pgs", "--demand", "2.0"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "scenario,M,mode,N,demand_bits_per_cu,sum_power,status,outer_iters,min_rate_margin,max_properness_defect,ranks"
    );
    let fields: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&fields[..5], &["builtin:mi", "1", "pgs", "1", "2.00000000000"]);
    assert_eq!(fields[6], "converged");
    let power: f64 = fields[5].parse().unwrap();
    assert!((power - 2.8267).abs() < 1e-3, "{power}");
    assert!(lines.next().is_none());
}

#[test]
fn sweep_writes_file_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    let out = imac(&[
        "sweep",
        "--scenario",
        "builtin:si",
        "--antennas",
        "1",
        "--modes",
        "pgs:1,igs:2",
        "--demands",
        "0.1:0.1:0.3",
        "--rate-convention",
        "complex",
        "--epsilon",
        "1e-6",
        "--out",
        path.to_str().unwrap(),
        "--trace",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(&path).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 6);
    let order: Vec<(&str, &str, &str)> = rows.iter().map(|r| (r[2], r[3], r[4])).collect();
    assert_eq!(order[0], ("pgs", "1", "0.100000000000"));
    assert_eq!(order[3], ("igs", "2", "0.100000000000"));
    assert!(rows.iter().all(|r| r[6] == "converged"));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.lines().any(|l| l.starts_with("# igs N=2")));
    assert!(stderr.lines().any(|l| l.starts_with("1\t")));
}

#[test]
fn scenario_file_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.json");
    std::fs::write(
        &path,
        r#"{"K":1,"users_per_cell":[1],"M":1,"noise_variance":1.0,
            "channels":[{"rx_cell":1,"user":1,"tx_cell":1,"entries":[{"mag":1.0,"phase":0.0}]}]}"#,
    )
    .unwrap();
    let out = imac(&["solve", "--scenario", path.to_str().unwrap(), "--demand", "1"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains(",igs,1,1.00000000000,0.41421356"), "{text}");
}

#[test]
fn bad_input_exits_with_code_two() {
    for args in [
        vec!["solve", "--scenario", "builtin:nope", "--demand", "1"],
        vec!["solve", "--scenario", "builtin:mi", "--antennas", "3", "--demand", "1"],
        vec!["solve", "--scenario", "/nonexistent/file.json", "--demand", "1"],
        vec!["sweep", "--scenario", "builtin:mi", "--demands", "1:0:2"],
        vec!["sweep", "--scenario", "builtin:mi", "--demands", "0.1", "--modes", "xgs:1"],
    ] {
        let out = imac(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!out.stderr.is_empty());
    }
}
