use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const DESK: &str = r#"
h_list = [0.5, 0.4]
dt = 0.001
n_per_cell = 40
n_reactive_target = 10
seed = 7
t_max = 1000.0
n_starts = 4
hist_bins = 8
fine_dt = 0.002
fine_h_list = [0.5]
"#;

fn tpt(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tpt"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    for var in [
        "TPT_CONFIG",
        "TPT_SEED",
        "TPT_H",
        "TPT_DT",
        "TPT_THREADS",
        "TPT_OUT",
    ] {
        if !envs.iter().any(|(k, _)| *k == var) {
            cmd.env_remove(var);
        }
    }
    cmd.output().expect("binary runs")
}

fn config(dir: &TempDir, extra: &str) -> PathBuf {
    let path = dir.path().join("config.toml");
    fs::write(&path, format!("{extra}\n{DESK}")).unwrap();
    path
}

fn run(config: &Path, out: &Path, args: &[&str]) -> Output {
    let mut all = vec![
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    all.extend_from_slice(args);
    tpt(&all, &[])
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn header(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("{}: {e}", path.display()))
        .lines()
        .next()
        .unwrap_or_default()
        .to_string()
}

#[test]
fn zero_samples_per_cell_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&dir, "n_per_cell = 0");
    let o = run(&cfg, &dir.path().join("out"), &["committor"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("n_per_cell"));
}

#[test]
fn zero_reactive_target_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&dir, "n_reactive_target = 0");
    let o = run(&cfg, &dir.path().join("out"), &["current"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("n_reactive_target"));
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&dir, "betta = 2.0");
    let o = run(&cfg, &dir.path().join("out"), &["tessellate"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn empty_reactant_region_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        &dir,
        "[regions]\nkind = \"sublevel_split\"\nlevel = -10.0\n",
    );
    // tables must follow the top-level keys
    let text = fs::read_to_string(&cfg).unwrap();
    let (table, rest) = text.split_at(text.find("\nh_list").unwrap());
    fs::write(&cfg, format!("{rest}\n{table}")).unwrap();
    let o = run(&cfg, &dir.path().join("out"), &["committor"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn exhausted_step_ceiling_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&dir, "max_sampling_steps = 10");
    let o = run(&cfg, &dir.path().join("out"), &["current"]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn missing_field_file_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&dir, "");
    let out = dir.path().join("out");
    let o = run(&cfg, &out, &["streamlines", "--field", "approximate"]);
    assert_eq!(code(&o), 5, "{}", stderr(&o));
    let o = run(&cfg, &out, &["streamlines", "--field", "reference"]);
    assert_eq!(code(&o), 5, "{}", stderr(&o));
}

#[test]
fn unwritable_output_dir_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&dir, "");
    let blocker = dir.path().join("file");
    fs::write(&blocker, "not a directory").unwrap();
    let o = run(&cfg, &blocker.join("out"), &["tessellate"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn fixed_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&dir, "");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&cfg, out, &["committor", "--h", "0.5"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    for file in ["h0.5/committor.csv", "errors.csv"] {
        assert_eq!(
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn command_line_beats_environment_and_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&dir, "");
    let env_out = dir.path().join("env_out");
    let o = tpt(
        &["tessellate", "--h", "0.5"],
        &[
            ("TPT_CONFIG", cfg.to_str().unwrap()),
            ("TPT_OUT", env_out.to_str().unwrap()),
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(env_out.join("h0.5/cells.csv").exists());
    assert!(!env_out.join("h0.4").exists());
}

#[test]
fn zero_current_file_stalls_every_streamline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&dir, "");
    let out = dir.path().join("out");
    let o = run(&cfg, &out, &["tessellate", "--h", "0.5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let cells = fs::read_to_string(out.join("h0.5/cells.csv")).unwrap();
    let mut current = String::from("cell_id,gx,gy,jx,jy,residual\n");
    for line in cells.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        current += &format!("{},{},{},0,0,0\n", f[0], f[1], f[2]);
    }
    fs::write(out.join("h0.5/current.csv"), current).unwrap();
    let o = run(&cfg, &out, &["streamlines", "--h", "0.5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(out.join("h0.5/streamlines.csv")).unwrap();
    let statuses: Vec<&str> = text
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap())
        .collect();
    assert!(!statuses.is_empty());
    assert!(statuses.iter().all(|s| *s == "stalled"), "{statuses:?}");
}

#[test]
fn desk_scale_reproduce_writes_every_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&dir, "");
    let out = dir.path().join("nested/out");
    let o = run(&cfg, &out, &["reproduce", "--threads", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let expect = [
        ("cells.csv", "cell_id,gx,gy,mu,in_J,in_K"),
        ("facets.csv", "i,k,nx,ny,sigma"),
        (
            "committor.csv",
            "cell_id,gx,gy,q_tilde,n_samples,n_censored",
        ),
        ("reference.csv", "node_id,gx,gy,q_ref,jx_ref,jy_ref"),
        ("current.csv", "cell_id,gx,gy,jx,jy,residual"),
        ("ledger.csv", "i,k,net,alpha_hat"),
        ("dr_report.csv", "cell_id,D,R,masked"),
        ("histograms.csv", "metric,bin_lo,bin_hi,count"),
        ("streamlines.csv", "streamline_id,t,x1,x2,status"),
        ("reference_streamlines.csv", "streamline_id,t,x1,x2,status"),
    ];
    for h in ["h0.5", "h0.4"] {
        for (file, cols) in expect {
            assert_eq!(header(&out.join(h).join(file)), cols, "{h}/{file}");
        }
    }
    assert_eq!(header(&out.join("errors.csv")), "rho,h,dt,l2_mu_q,l2_mu_j");
    assert_eq!(
        header(&out.join("dt0.002/h0.5/current.csv")),
        "cell_id,gx,gy,jx,jy,residual"
    );

    let errors = fs::read_to_string(out.join("errors.csv")).unwrap();
    // two widths at the base step, one at the extra step
    assert_eq!(errors.lines().count(), 4, "{errors}");

    let level: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("h0.5/summary.json")).unwrap()).unwrap();
    for key in ["T", "s", "n_segments", "nonadjacent_jumps"] {
        assert!(level.get(key).is_some(), "{key}");
    }
    assert!(level["n_segments"].as_u64().unwrap() >= 10);

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["config"]["seed"], 7);
    assert_eq!(summary["config"]["n_per_cell"], 40);
    assert_eq!(summary["config"]["h_list"], serde_json::json!([0.5, 0.4]));
    assert_eq!(summary["committor"]["levels"].as_array().unwrap().len(), 2);
    assert!(summary["committor"]["slope"].is_number());
    assert_eq!(
        summary["fine_current"]["levels"].as_array().unwrap().len(),
        1
    );
    assert_eq!(summary["streamlines"]["reference"][0]["n"], 4);
}
