use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn lacuna(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lacuna")).args(args).output().expect("binary runs")
}

/// Writes `body` plus an `out` entry pointing into `dir`.
fn config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let out = dir.join(format!("{name}-out"));
    let path = dir.join(format!("{name}.toml"));
    fs::write(&path, format!("schema_version = 1\nout = {:?}\n{body}", out.to_str().unwrap())).unwrap();
    path
}

fn run(cmd: &str, cfg: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", cfg.to_str().unwrap()];
    args.extend_from_slice(extra);
    lacuna(&args)
}

fn report(cfg: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out_dir(cfg).join("report.json")).unwrap()).unwrap()
}

fn out_dir(cfg: &Path) -> PathBuf {
    cfg.with_file_name(format!("{}-out", cfg.file_stem().unwrap().to_str().unwrap()))
}

const GEOMETRIC: &str = "[sequence]\nkind = \"scalar_geometric\"\ntheta = 2\n";
const MERSENNE: &str = "[sequence]\nkind = \"scalar_shifted_power\"\nbase = 2\nshift = -1\n";

#[test]
fn sigma2_of_cosine_on_powers_of_two() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "s", &format!("{GEOMETRIC}[function]\nkind = \"cosine\"\n[params]\nn = 100\n"));
    let o = run("sigma2", &cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&cfg);
    assert_eq!(r["result"]["sigma2"].as_f64(), Some(50.0));
    assert!(fs::read_to_string(out_dir(&cfg).join("report.json")).unwrap().contains("50.0"));
    let table = fs::read_to_string(out_dir(&cfg).join("table.csv")).unwrap();
    assert_eq!(table.lines().count(), 101);
    assert!(table.lines().last().unwrap().starts_with("100,50.0,"));
    assert!(!table.contains('\r'));
}

#[test]
fn dio_counts_ordered_pairs_at_minus_one() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "d", &format!("{MERSENNE}[params]\nn = 50\ng = 2\nnu = [-1]\n"));
    let o = run("dio", &cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&cfg);
    // (n, n+1) and (n+1, n) for n < 50, plus (1, 1)
    assert_eq!(r["result"]["count_at_nu"].as_u64(), Some(99));
    assert_eq!(r["result"]["summary"]["lstar0"].as_u64(), Some(0));
    let table = fs::read_to_string(out_dir(&cfg).join("table.csv")).unwrap();
    assert!(table.lines().any(|l| l == "-1,99"));
}

#[test]
fn clt_without_samples_is_an_error() {
    let dir = TempDir::new().unwrap();
    let body = format!("{GEOMETRIC}[function]\nkind = \"cosine\"\n[params]\nn_list = [16]\nsamples = 0\n");
    let cfg = config(dir.path(), "c", &body);
    let o = run("clt", &cfg, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("samples"));
    assert!(!out_dir(&cfg).join("report.json").exists());
}

#[test]
fn gap_check_exit_codes() {
    let dir = TempDir::new().unwrap();
    let pass = config(dir.path(), "pass", &format!("{GEOMETRIC}[params]\nq = \"2\"\nn = 30\nj_max = 2\nk_max = 3\n"));
    assert_eq!(run("gap-check", &pass, &[]).status.code(), Some(0));
    assert_eq!(report(&pass)["result"]["verdict"], "pass");

    let values: Vec<String> = (1..=40).map(|v| v.to_string()).collect();
    let body = format!(
        "[sequence]\nkind = \"scalar_explicit\"\nvalues = [{}]\n[params]\nq = \"2\"\nn = 30\n",
        values.join(", ")
    );
    let fail = config(dir.path(), "fail", &body);
    assert_eq!(run("gap-check", &fail, &[]).status.code(), Some(2));
    let r = report(&fail);
    assert_eq!(r["status"], "fail");
    assert!(r["result"]["first_violation"].is_object());

    let broken = dir.path().join("broken.toml");
    fs::write(&broken, "schema_version = 1\nout = \"x\"\n[sequence\n").unwrap();
    let o = run("gap-check", &broken, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));

    let unknown = config(dir.path(), "unknown", &format!("{GEOMETRIC}[params]\nq = \"2\"\nn = 30\nbogus = 1\n"));
    assert_eq!(run("gap-check", &unknown, &[]).status.code(), Some(1));
    let foreign = config(dir.path(), "foreign", &format!("{GEOMETRIC}[params]\nq = \"2\"\nn = 30\nsamples = 4\n"));
    assert_eq!(run("gap-check", &foreign, &[]).status.code(), Some(1));
    assert_eq!(run("gap-check", &dir.path().join("missing.toml"), &[]).status.code(), Some(1));
    assert_eq!(lacuna(&["gap-check"]).status.code(), Some(1));
    assert_eq!(lacuna(&["--help"]).status.code(), Some(0));
}

#[test]
fn overrides_apply_and_wrong_command_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "o", &format!("{GEOMETRIC}[function]\nkind = \"cosine\"\n[params]\nn = 10\n"));
    let o = run("sigma2", &cfg, &["--set", "params.n=64", "--set", "function.kind=cosine_pair"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&cfg);
    assert_eq!(r["result"]["sigma2"].as_f64(), Some(127.0));
    assert_eq!(r["config"]["params"]["n"], 64);
    assert_eq!(run("sigma2", &cfg, &["--set", "command=dio"]).status.code(), Some(1));
    assert_eq!(run("sigma2", &cfg, &["--set", "schema_version=2"]).status.code(), Some(1));
}

#[test]
fn echoed_config_reruns_byte_identically() {
    let dir = TempDir::new().unwrap();
    let body = format!(
        "{MERSENNE}[function]\nkind = \"cosine_pair\"\n[params]\nn_list = [32, 128]\nsamples = 300\nseed = 5\n\
         normalization = \"sqrt_n\"\nlaws = [{{ kind = \"standard_normal\" }}, {{ kind = \"erdos_fortet_mixture\" }}]\n"
    );
    let cfg = config(dir.path(), "rt", &body);
    assert_eq!(run("clt", &cfg, &[]).status.code(), Some(0));
    let first = fs::read(out_dir(&cfg).join("report.json")).unwrap();
    let first_table = fs::read(out_dir(&cfg).join("table.csv")).unwrap();
    let echoed: Value = serde_json::from_slice::<Value>(&first).unwrap()["config"].clone();
    let again = dir.path().join("echo.json");
    fs::write(&again, serde_json::to_string(&echoed).unwrap()).unwrap();
    fs::remove_dir_all(out_dir(&cfg)).unwrap();
    assert_eq!(run("clt", &again, &[]).status.code(), Some(0));
    assert_eq!(fs::read(out_dir(&cfg).join("report.json")).unwrap(), first);
    assert_eq!(fs::read(out_dir(&cfg).join("table.csv")).unwrap(), first_table);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let dir = TempDir::new().unwrap();
    let body = format!("{GEOMETRIC}[function]\nkind = \"cosine\"\n[params]\nn_min = 16\nn_max = 4096\nsamples = 40\nseed = 2\n");
    let cfg = config(dir.path(), "t", &body);
    assert_eq!(run("lil", &cfg, &["--set", "threads=1"]).status.code(), Some(0));
    let one = report(&cfg)["result"].clone();
    let table_one = fs::read(out_dir(&cfg).join("table.csv")).unwrap();
    assert_eq!(run("lil", &cfg, &["--set", "threads=3"]).status.code(), Some(0));
    assert_eq!(report(&cfg)["result"], one);
    assert_eq!(fs::read(out_dir(&cfg).join("table.csv")).unwrap(), table_one);
    assert_eq!(run("lil", &cfg, &["--set", "threads=0"]).status.code(), Some(1));
}

#[test]
fn disc_and_kh_on_a_point_file() {
    let dir = TempDir::new().unwrap();
    let pts = dir.path().join("pts.csv");
    fs::write(&pts, "# midpoints\n1/2^3\n3/2^3\n5/2^3\n7/2^3\n").unwrap();
    let p = pts.to_str().unwrap();
    let cfg = config(dir.path(), "disc", &format!("[params]\npoints = {p:?}\n"));
    let o = run("disc", &cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&cfg);
    assert!((r["result"]["star"]["value"].as_f64().unwrap() - 0.125).abs() < 1e-12);
    assert!((r["result"]["extreme"]["value"].as_f64().unwrap() - 0.25).abs() < 1e-12);

    let cfg = config(dir.path(), "kh", &format!("[function]\nkind = \"box_indicator\"\nbeta = [0.3]\n[params]\npoints = {p:?}\n"));
    let o = run("kh", &cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&cfg);
    assert_eq!(r["result"]["variation_exact"], true);
    assert_eq!(r["result"]["check"]["holds"], true);
}

#[test]
fn orbit_discrepancy_and_lil_disc() {
    let dir = TempDir::new().unwrap();
    let cfg = config(dir.path(), "orbit", &format!("{GEOMETRIC}[params]\nn = 64\nseed = 1\n"));
    assert_eq!(run("disc", &cfg, &[]).status.code(), Some(0));
    let v = report(&cfg)["result"]["star"]["value"].as_f64().unwrap();
    assert!(v > 0.0 && v < 1.0);

    let body = format!("{GEOMETRIC}[params]\nn_min = 16\nn_max = 1024\nsamples = 10\nseed = 4\nmode = \"iid\"\n");
    let cfg = config(dir.path(), "ld", &body);
    assert_eq!(run("lil-disc", &cfg, &[]).status.code(), Some(0));
    let r = report(&cfg);
    assert_eq!(r["result"]["path_max"].as_array().unwrap().len(), 10);
    let with_f = config(dir.path(), "ldf", &format!("{body}[function]\nkind = \"cosine\"\n"));
    assert_eq!(run("lil-disc", &with_f, &[]).status.code(), Some(1));
}

#[test]
fn martingale_schedule_and_increments() {
    let dir = TempDir::new().unwrap();
    let body = format!(
        "{GEOMETRIC}[function]\nkind = \"cosine\"\nfejer = 4\n[params]\nq = \"2\"\ng = 4\neta = 0.6\nk_max = 2\nsamples = 16\nseed = 9\n"
    );
    let cfg = config(dir.path(), "m", &body);
    let o = run("martingale", &cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&cfg);
    let s = &r["result"]["schedule"];
    assert!((s["c_prime"].as_f64().unwrap() - 29.94).abs() < 0.01);
    assert_eq!(s["blocks"].as_array().unwrap().len(), 2);
    assert_eq!(s["truncated"], false);
    assert_eq!(r["result"]["increments"]["blocks"], 2);
    let table = fs::read_to_string(out_dir(&cfg).join("table.csv")).unwrap();
    assert!(table.starts_with("k,gap_start,gap_end,main_start,main_end,level,"));
    assert!(table.lines().nth(1).unwrap().starts_with("1,1,71,71,17641,17670,"));
    assert_eq!(run("martingale", &cfg, &["--set", "params.n=100"]).status.code(), Some(1));
}
