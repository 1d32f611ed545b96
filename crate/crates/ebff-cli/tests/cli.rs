use std::process::{Command, Output};

fn ebff(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ebff")).args(args).output().expect("binary runs")
}

fn lines(out: &Output) -> Vec<serde_json::Value> {
    String::from_utf8_lossy(&out.stdout).lines().map(|l| serde_json::from_str(l).expect("json line")).collect()
}

#[test]
fn vertex_face_check_passes() {
    let out = ebff(&["check", "vertex-face"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let recs = lines(&out);
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0]["check"], "vertex-face");
    assert_eq!(recs[0]["pass"], true);
    assert!(recs[0].get("wall_time_s").is_none());
}

#[test]
fn unknown_check_exits_2() {
    let out = ebff(&["check", "unknown"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
}

#[test]
fn bad_flags_exit_2() {
    assert_eq!(ebff(&["check"]).status.code(), Some(2));
    assert_eq!(ebff(&["ff", "--op", "sy", "--m", "1"]).status.code(), Some(2));
    assert_eq!(ebff(&["ff", "--op", "sz", "--m", "1", "--grid", "u1=0:1"]).status.code(), Some(2));
    assert_eq!(ebff(&["kernel", "nope", "--at", "0.1"]).status.code(), Some(2));
}

#[test]
fn missing_config_exits_2() {
    assert_eq!(ebff(&["check", "ybe", "--config", "/no/such/config"]).status.code(), Some(2));
}

#[test]
fn all_is_sorted_and_fails_when_any_check_fails() {
    let out = ebff(&["check", "all"]);
    let recs = lines(&out);
    let names: Vec<&str> = recs.iter().map(|r| r["check"].as_str().unwrap()).collect();
    assert_eq!(names, ebff_cli::CHECKS.to_vec());
    let any_fail = recs.iter().any(|r| r["pass"] == false);
    assert_eq!(out.status.code(), Some(if any_fail { 1 } else { 0 }));
}

#[test]
fn threshold_from_config_controls_pass() {
    let dir = std::env::temp_dir().join(format!("ebff-cli-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("strict.conf");
    std::fs::write(&cfg, "# impossible tolerance\nthreshold.ybe = 0\n").unwrap();
    let out = ebff(&["check", "ybe", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(lines(&out)[0]["threshold"], 0.0);
}

#[test]
fn output_is_byte_identical_across_runs() {
    let a = ebff(&["check", "all", "--seed", "11"]);
    let b = ebff(&["check", "all", "--seed", "11"]);
    assert!(!a.stdout.is_empty());
    assert_eq!(a.stdout, b.stdout);
    let c = ebff(&["check", "theta-oracle", "--seed", "12"]);
    let a_theta = lines(&a).into_iter().find(|r| r["check"] == "theta-oracle").unwrap();
    assert_ne!(a_theta["residual"], lines(&c)[0]["residual"]);
}

#[test]
fn timing_only_when_enabled() {
    let dir = std::env::temp_dir().join(format!("ebff-cli-timing-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("t.conf");
    std::fs::write(&cfg, "timing = true\n").unwrap();
    let out = ebff(&["check", "ksum", "--config", cfg.to_str().unwrap()]);
    assert!(lines(&out)[0]["wall_time_s"].is_f64());
}

#[test]
fn sz_grid_gives_nine_records() {
    let out = ebff(&["ff", "--op", "sz", "--m", "1", "--u-list", "0.2,0.5", "--grid", "u1=0.1:0.3:3,u2=0.5:0.7:3"]);
    assert_eq!(out.status.code(), Some(0));
    let recs = lines(&out);
    assert_eq!(recs.len(), 9);
    for rec in &recs {
        let comps = rec["components"].as_array().unwrap();
        assert_eq!(comps.len(), 4);
        let zeros = comps.iter().filter(|c| c["selection_zero"] == true).count();
        assert_eq!(zeros, 2);
        assert!(rec["provenance"]["neg_pow_branch"].is_string());
    }
}

#[test]
fn csv_sweep_has_header_and_rows() {
    let out = ebff(&["ff", "--op", "sx", "--m", "1", "--grid", "u1=0.1:0.2:2,u2=0.5:0.6:2", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "index,us,nus,re,im,quad_error,selection_zero");
    assert_eq!(rows.len(), 1 + 4 * 4);
}

#[test]
fn empty_annulus_exits_3() {
    let out = ebff(&["ff", "--op", "sz", "--m", "2", "--u-list", "0,0.1,0.2,2"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("annulus"));
}

#[test]
fn m2_face_value_reports_quadrature_error() {
    let out = ebff(&["ff", "--op", "sz", "--m", "2", "--u-list", "0.1,0.3,0.45,0.6"]);
    assert_eq!(out.status.code(), Some(0));
    let rec = &lines(&out)[0];
    let v = rec["value"].as_array().unwrap();
    let modulus = v[0].as_f64().unwrap().hypot(v[1].as_f64().unwrap());
    assert!(modulus > 0.0);
    assert!(rec["quad_error"].as_f64().unwrap() < 1e-8 * modulus);
}

#[test]
fn kernel_command_emits_one_record() {
    let out = ebff(&["kernel", "chi", "--at", "0.1,-0.05", "--j", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let recs = lines(&out);
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0]["function"], "chi");
    assert_eq!(recs[0]["at"][1], -0.05);
}

#[test]
fn out_flag_writes_file() {
    let path = std::env::temp_dir().join(format!("ebff-cli-out-{}.jsonl", std::process::id()));
    let out = ebff(&["check", "nilpotency", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    assert!(std::fs::read_to_string(&path).unwrap().contains("\"nilpotency\""));
}
