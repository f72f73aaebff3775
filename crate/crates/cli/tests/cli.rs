use std::process::{Command, Output};

fn ftl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ftl")).args(args).env_remove("FTL_SEED").output().expect("spawn ftl")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).expect("json output")
}

#[test]
fn json_output_has_the_wrapper() {
    let o = ftl(&["weights", "--domain", "siegel", "--delta", "1e-3", "--seed", "11"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&o);
    assert_eq!(v["schema"], 1);
    assert_eq!(v["command"], "weights");
    assert_eq!(v["domain"], "siegel");
    assert_eq!(v["seed"], 11);
    let rows = v["result"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    let f = rows[0]["value"].as_f64().unwrap();
    assert!((f - 2e3).abs() < 1e-9 * 2e3, "Siegel weight {f}");
}

#[test]
fn weights_csv_columns_and_precision() {
    let o = ftl(&["weights", "--domain", "herbort", "--dir", "e2+e3", "--delta", "1e-4", "--certify", "--format", "csv"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "domain,p,delta,direction,F_value,dominant_list,K_est_EB1,K_est_EB2,alpha_est"
    );
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let rec = r.records().next().unwrap().unwrap();
    assert_eq!(&rec[3], "e2+e3");
    let f: f64 = rec[4].parse().unwrap();
    assert!(f > 0.0);
    // 17 significant digits
    assert_eq!(rec[4].split('e').next().unwrap().replace(['.', '-'], "").len(), 17);
    assert!(!rec[6].is_empty() && !rec[7].is_empty() && !rec[8].is_empty());
}

#[test]
fn same_seed_same_output() {
    let args = ["ball", "--domain", "decoupled", "--delta", "1e-3", "--samples", "64", "--mc", "2000", "--format", "csv"];
    let a = ftl(&[&args[..], &["--seed", "3"]].concat());
    let b = ftl(&[&args[..], &["--seed", "3"]].concat());
    assert_eq!(a.stdout, b.stdout);
    let env = Command::new(env!("CARGO_BIN_EXE_ftl")).args(args).env("FTL_SEED", "3").output().unwrap();
    assert_eq!(a.stdout, env.stdout);
}

#[test]
fn thread_count_does_not_change_results() {
    let args = ["star-volume", "--domain", "herbort", "--samples", "3000", "--format", "csv"];
    let a = ftl(&[&args[..], &["--jobs", "1"]].concat());
    let b = ftl(&[&args[..], &["--jobs", "4"]].concat());
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn certification_failure_exits_2() {
    let o = ftl(&["eb-check", "--domain", "siegel", "--delta", "1e-3", "--kind", "eb1", "--max-k", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
    // output is still written
    assert_eq!(json(&o)["command"], "eb-check");
    let ok = ftl(&["eb-check", "--domain", "siegel", "--delta", "1e-3", "--kind", "eb1", "--max-k", "10"]);
    assert_eq!(ok.status.code(), Some(0));
}

#[test]
fn separation_verdicts() {
    let h = ftl(&["herbort-cert", "--domain", "herbort", "--assert-separable"]);
    assert_eq!(h.status.code(), Some(2));
    assert_eq!(json(&h)["result"]["verdict"], "NotSeparable");
    let s = ftl(&["herbort-cert", "--domain", "siegel", "--assert-separable"]);
    assert_eq!(s.status.code(), Some(0));
    let rows = json(&s)["result"]["rows"].as_array().unwrap().clone();
    assert!(rows.iter().all(|r| r["f_first"].is_f64()), "weights must stay finite on the deep grid");
}

#[test]
fn input_errors_exit_1() {
    for args in [
        vec!["weights", "--domain", "nowhere"],
        vec!["weights", "--domain", "siegel", "--delta", "1e-2:1e-6:3"],
        vec!["weights", "--domain", "siegel", "--point", "1,2"],
        vec!["weights", "--domain", "siegel", "--point", "1,x,0"],
        vec!["weights", "--domain", "herbort", "--dir", "e1"],
        vec!["ball", "--domain", "siegel", "--kind", "cube"],
    ] {
        let o = ftl(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"), "{args:?}");
    }
}

#[test]
fn bad_flags_are_rejected_by_the_parser() {
    let o = ftl(&["weights"]);
    assert!(!o.status.success());
    let o = ftl(&["bergman", "--domain", "siegel", "--sweep", "--reading"]);
    assert!(!o.status.success());
}

#[test]
fn domain_file_matches_catalog() {
    let dir = env!("CARGO_TARGET_TMPDIR");
    let path = format!("{dir}/herbort_copy.json");
    std::fs::write(
        &path,
        r#"{"name":"herbort_copy","n":3,"normal_slot":1,"P":"|z2|^6 + |z3|^6 + |z2|^2*|z3|^2","M":6}"#,
    )
    .unwrap();
    let a = ftl(&["weights", "--domain", &path, "--delta", "1e-4", "--dir", "e2+e3", "--point", "0,0.1,0.05i"]);
    let b = ftl(&["weights", "--domain", "herbort", "--delta", "1e-4", "--dir", "e2+e3", "--point", "0,0.1,0.05i"]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let fa = json(&a)["result"]["rows"][0]["value"].as_f64().unwrap();
    let fb = json(&b)["result"]["rows"][0]["value"].as_f64().unwrap();
    assert!((fa - fb).abs() <= 1e-12 * fb);
}

#[test]
fn out_flag_writes_a_file() {
    let path = format!("{}/gamma.json", env!("CARGO_TARGET_TMPDIR"));
    let _ = std::fs::remove_file(&path);
    let o = ftl(&["gamma", "--domain", "siegel", "--q", "0.1,0,0", "--out", &path]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let g = v["result"]["gamma"]["value"].as_f64().unwrap();
    assert!(g > 0.0 && g < 1.0);
}

#[test]
fn isotropic_star_volume_is_a_euclidean_ball() {
    // radius c/√F₀ in C³: π³r⁶/6
    let o = ftl(&["star-volume", "--domain", "siegel", "--isotropic", "2", "--c", "0.5", "--samples", "100"]);
    let v = json(&o)["result"]["volume"]["value"].as_f64().unwrap();
    let r2: f64 = 0.25 / 2.0;
    let exact = std::f64::consts::PI.powi(3) * r2.powi(3) / 6.0;
    assert!((v - exact).abs() < 1e-12 * exact, "{v} vs {exact}");
}

#[test]
fn appendix_corpus_has_no_violations() {
    let o = ftl(&["appendix", "--count", "40", "--examples"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    assert_eq!(v["domain"], "none");
    assert!(v["result"]["corpus"]["violations"].as_array().unwrap().is_empty());
    assert!(!v["result"]["examples"].as_array().unwrap().is_empty());
}

#[test]
fn herbort_reading_prefers_the_inverse_law() {
    let o = ftl(&["bergman", "--domain", "herbort", "--reading", "--delta", "1e-6:1e-3:5"]);
    assert!(o.status.success());
    assert_eq!(json(&o)["result"]["winner"], "Inverse");
}
