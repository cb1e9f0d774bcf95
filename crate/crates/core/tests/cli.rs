use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bitgear::training::checkpoint::{round_to_f32, teacher_from_bytes};
use bitgear::training::{init_base, teacher_cache, TeacherCache, TrainingConfig};
use bitgear::{load_edge_list, BinarizedTable, EdgeLayout};
use tempfile::TempDir;

const CONFIG: &str = "dim = 8\nlayers = 2\nbatch_size = 32\nlr = 0.01\ntop_r = 4\nepochs_teacher = 3\nepochs_student = 2\nseed = 5\n";

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        let mut train = String::from("# toy interactions\n");
        let mut test = String::new();
        for u in 0..12 {
            for i in 0..15 {
                let h = (u * 7 + i * 13) % 10;
                if h < 3 {
                    train.push_str(&format!("user{u} item{i}\n"));
                } else if h == 3 {
                    test.push_str(&format!("user{u} item{i}\n"));
                }
            }
        }
        fs::write(dir.path().join("train.txt"), train).unwrap();
        fs::write(dir.path().join("test.txt"), test).unwrap();
        fs::write(dir.path().join("cfg.txt"), CONFIG).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn p(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }

    fn data_args(&self) -> Vec<String> {
        vec![
            "--train".into(),
            self.p("train.txt"),
            "--test".into(),
            self.p("test.txt"),
            "--config".into(),
            self.p("cfg.txt"),
        ]
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_bitgear"))
            .args(args)
            .env_remove("BITGEAR_THREADS")
            .output()
            .unwrap()
    }

    fn run_with_data(&self, cmd: &str, extra: &[&str]) -> Output {
        let mut args: Vec<String> = vec![cmd.into()];
        args.extend(self.data_args());
        args.extend(extra.iter().map(|s| s.to_string()));
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        self.run(&refs)
    }

    fn ok(&self, cmd: &str, extra: &[&str]) -> Output {
        let out = self.run_with_data(cmd, extra);
        assert!(out.status.success(), "{cmd} failed: {}", String::from_utf8_lossy(&out.stderr));
        out
    }

    fn pipeline(&self) {
        self.ok("pretrain", &["--out", &self.p("t.bgt")]);
        self.ok("cache", &["--teacher", &self.p("t.bgt"), "--out", &self.p("c.bgc")]);
        self.ok(
            "train",
            &["--teacher", &self.p("t.bgt"), "--cache", &self.p("c.bgc"), "--out", &self.p("s.bgr")],
        );
    }

    fn loaded(&self) -> bitgear::LoadedData {
        let train = fs::read_to_string(self.path("train.txt")).unwrap();
        let test = fs::read_to_string(self.path("test.txt")).unwrap();
        load_edge_list(&train, Some(&test), EdgeLayout::Auto).unwrap()
    }
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn config() -> TrainingConfig {
    TrainingConfig::from_text(CONFIG).unwrap()
}

#[test]
fn missing_train_file_is_a_usage_error() {
    let f = Fixture::new();
    let out = f.run(&["pretrain", "--train", &f.p("nope.txt"), "--out", &f.p("t.bgt")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nope.txt"));
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let f = Fixture::new();
    fs::write(f.path("cfg.txt"), "dim = 8\nbogus = 1\n").unwrap();
    let out = f.run_with_data("pretrain", &["--out", &f.p("t.bgt")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 2"));
}

#[test]
fn pretrain_writes_checkpoint_manifest_and_ids() {
    let f = Fixture::new();
    let out = f.ok("pretrain", &["--out", &f.p("t.bgt"), "--log", &f.p("t.log")]);
    let err = stderr(&out);
    assert!(err.contains("users=12") && err.contains("orphan_test_nodes="));
    assert_eq!(err.lines().filter(|l| l.starts_with("epoch=")).count(), 3);
    assert_eq!(fs::read_to_string(f.path("t.log")).unwrap().lines().count(), 3);

    let loaded = f.loaded();
    let base = teacher_from_bytes(&fs::read(f.path("t.bgt")).unwrap()).unwrap();
    assert_eq!((base.rows(), base.dim()), (loaded.graph.num_nodes(), 8));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(f.path("t.bgt.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "pretrain");
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    let ids = fs::read_to_string(f.path("t.bgt.ids.tsv")).unwrap();
    assert!(ids.starts_with("user\t0\tuser0\n"));
}

#[test]
fn zero_epochs_checkpoints_the_initializer() {
    let f = Fixture::new();
    f.ok("pretrain", &["--epochs", "0", "--out", &f.p("t.bgt")]);
    let base = teacher_from_bytes(&fs::read(f.path("t.bgt")).unwrap()).unwrap();
    assert_eq!(base, round_to_f32(&init_base(&f.loaded().graph, &config())));
}

#[test]
fn cache_matches_in_memory_build_and_clamps_r() {
    let f = Fixture::new();
    f.ok("pretrain", &["--out", &f.p("t.bgt")]);
    f.ok("cache", &["--teacher", &f.p("t.bgt"), "--r", "1", "--out", &f.p("c1.bgc")]);
    let base = teacher_from_bytes(&fs::read(f.path("t.bgt")).unwrap()).unwrap();
    let cfg = TrainingConfig { top_r: 1, ..config() };
    let expect = teacher_cache(&f.loaded().graph, &base, &cfg).unwrap();
    let got = TeacherCache::from_bytes(&fs::read(f.path("c1.bgc")).unwrap()).unwrap();
    assert_eq!(got, expect);
    assert_eq!(got.r(), 1);

    let out = f.ok("cache", &["--teacher", &f.p("t.bgt"), "--r", "500", "--out", &f.p("cbig.bgc")]);
    assert!(stderr(&out).to_lowercase().contains("clamp"));
    let big = TeacherCache::from_bytes(&fs::read(f.path("cbig.bgc")).unwrap()).unwrap();
    assert_eq!(big.r(), f.loaded().graph.num_items());
}

#[test]
fn train_is_byte_identical_across_runs() {
    let f = Fixture::new();
    f.pipeline();
    let first = fs::read(f.path("s.bgr")).unwrap();
    f.ok(
        "train",
        &["--threads", "1", "--teacher", &f.p("t.bgt"), "--cache", &f.p("c.bgc"), "--out", &f.p("s2.bgr")],
    );
    assert_eq!(fs::read(f.path("s2.bgr")).unwrap(), first);
    assert!(BinarizedTable::from_bytes(&first).is_ok());
}

#[test]
fn replaying_a_manifest_reproduces_the_model() {
    let f = Fixture::new();
    f.pipeline();
    let before = fs::read(f.path("s.bgr")).unwrap();
    fs::remove_file(f.path("s.bgr")).unwrap();
    let out = f.run(&["replay", &f.p("s.bgr.manifest.json")]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(fs::read(f.path("s.bgr")).unwrap(), before);

    // A changed input is refused.
    fs::write(f.path("c.bgc"), b"garbage").unwrap();
    assert_eq!(f.run(&["replay", &f.p("s.bgr.manifest.json")]).status.code(), Some(2));
}

#[test]
fn mismatched_layer_count_is_rejected() {
    let f = Fixture::new();
    f.ok("pretrain", &["--out", &f.p("t.bgt")]);
    f.ok("cache", &["--teacher", &f.p("t.bgt"), "--set", "layers=1", "--out", &f.p("c.bgc")]);
    let out = f.run_with_data(
        "train",
        &["--teacher", &f.p("t.bgt"), "--cache", &f.p("c.bgc"), "--out", &f.p("s.bgr")],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("layers"));
    assert!(!f.path("s.bgr").exists());
}

#[test]
fn estimator_flag_changes_training() {
    let f = Fixture::new();
    f.pipeline();
    let args = |est: &'static str, out: &str| {
        vec!["--teacher".to_string(), f.p("t.bgt"), "--cache".into(), f.p("c.bgc"), "--estimator".into(), est.into(), "--out".into(), f.p(out)]
    };
    let log = |o: &Output| -> Vec<String> {
        stderr(o).lines().filter(|l| l.starts_with("epoch=")).map(|l| l.split(" secs=").next().unwrap().to_string()).collect()
    };
    let a = args("dirac_gauss", "a.bgr");
    let b = args("ste", "b.bgr");
    let la = log(&f.ok("train", &a.iter().map(String::as_str).collect::<Vec<_>>()));
    let lb = log(&f.ok("train", &b.iter().map(String::as_str).collect::<Vec<_>>()));
    assert_eq!(la.len(), 2);
    assert_eq!(la[0].split(' ').next(), lb[0].split(' ').next());
    assert_ne!(la, lb);
}

#[test]
fn eval_prints_tsv_and_json() {
    let f = Fixture::new();
    f.pipeline();
    let out = f.ok("eval", &["--model", &f.p("s.bgr")]);
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "K\trecall\tndcg");
    assert_eq!(lines.len(), 6);
    for (line, k) in lines[1..].iter().zip([20, 40, 60, 80, 100]) {
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(cols[0], k.to_string());
        for c in &cols[1..] {
            let v: f64 = c.parse().unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
    }

    let float = f.ok("eval", &["--model", &f.p("s.bgr"), "--path", "float", "--ks", "5,10"]);
    let bits = f.ok("eval", &["--model", &f.p("s.bgr"), "--path", "bitwise", "--ks", "5,10", "--threads", "1"]);
    assert_eq!(stdout(&float), stdout(&bits));

    let json = f.ok("eval", &["--model", &f.p("s.bgr"), "--json", "--ks", "5"]);
    let v: serde_json::Value = serde_json::from_str(stdout(&json).trim()).unwrap();
    assert_eq!(v["ks"][0], 5);
    assert!(v["users"].as_u64().unwrap() > 0);

    // Teacher checkpoints evaluate on the full path.
    f.ok("eval", &["--model", &f.p("t.bgt"), "--path", "full", "--ks", "5"]);
    let bad = f.run_with_data("eval", &["--model", &f.p("s.bgr"), "--path", "full"]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn bench_reports_timings_and_sizes() {
    let f = Fixture::new();
    f.pipeline();
    let empty = f.run(&["bench", "--model", &f.p("s.bgr"), "--queries", "0"]);
    assert!(empty.status.success());
    assert_eq!(stdout(&empty), "queries=0\n");

    let out = f.run(&["bench", "--model", &f.p("s.bgr"), "--queries", "20"]);
    assert!(out.status.success());
    let text = stdout(&out);
    for key in ["float_ms_per_query=", "bitwise_ms_per_query=", "speedup=", "model_bytes=", "compression="] {
        assert!(text.contains(key), "missing {key}");
    }
    let bytes = fs::metadata(f.path("s.bgr")).unwrap().len();
    assert!(text.contains(&format!("model_bytes={bytes}\n")));
}

#[test]
fn export_uses_original_ids_and_skips_training_items() {
    let f = Fixture::new();
    f.pipeline();
    let out = f.ok("export-scores", &["--model", &f.p("s.bgr"), "--k", "3"]);
    let text = stdout(&out);
    let train = fs::read_to_string(f.path("train.txt")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("user\trank\titem\tscore"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 12 * 3);
    for row in &rows {
        assert!(row[0].starts_with("user") && row[2].starts_with("item"));
        assert!(!train.contains(&format!("{} {}\n", row[0], row[2])));
        row[3].parse::<f32>().unwrap();
    }
    assert_eq!(rows.iter().take(3).map(|r| r[1]).collect::<Vec<_>>(), ["1", "2", "3"]);
}

#[test]
fn split_holds_out_per_user() {
    let f = Fixture::new();
    let out = f.run(&[
        "split",
        "--input",
        &f.p("train.txt"),
        "--test-fraction",
        "0.25",
        "--seed",
        "3",
        "--train-out",
        &f.p("a.txt"),
        "--test-out",
        &f.p("b.txt"),
    ]);
    assert!(out.status.success());
    let a = fs::read_to_string(f.path("a.txt")).unwrap();
    let b = fs::read_to_string(f.path("b.txt")).unwrap();
    let orig = fs::read_to_string(f.path("train.txt")).unwrap();
    assert_eq!(a.lines().count() + b.lines().count(), orig.lines().filter(|l| !l.starts_with('#')).count());
    assert!(b.lines().all(|l| !a.lines().any(|x| x == l)));
    assert!(Path::new(&f.p("a.txt")).exists());
}

#[test]
fn threads_env_var_is_honoured() {
    let f = Fixture::new();
    let out = Command::new(env!("CARGO_BIN_EXE_bitgear"))
        .args(["pretrain", "--train", &f.p("train.txt"), "--config", &f.p("cfg.txt"), "--out", &f.p("t.bgt")])
        .env("BITGEAR_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
