use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn rtconv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rtconv")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn resolved(o: &Output) -> Value {
    let err = String::from_utf8(o.stderr.clone()).unwrap();
    let line = err.lines().find_map(|l| l.strip_prefix("resolved config: ")).expect("resolved config printed");
    serde_json::from_str(line).unwrap()
}

fn stat(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}: ")))
        .unwrap_or_else(|| panic!("{key} missing in {text}"))
        .parse()
        .unwrap()
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

const MODEL: &str = r#"{"N":2,"M":1,"W":8,"in_channels":3,"num_classes":4,"K0":3,"K":[3,3],"K_e":3,
"pointwise_mode":["float","ternary"],"skip_mode":["trained","identity"],"t":0.5,"seed":9}"#;
const TASK: &str = r#"{"epochs":2,"batch_size":16,"learning_rate":0.05,"momentum":0.9,"data_seed":3,
"dataset_size":64,"T":16,"num_classes":4}"#;

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = path(dir, name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn gen_text_at_t_one_is_all_zero() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "m.txt");
    let o = rtconv(&["gen", "--seed", "1", "--rows", "5", "--cols", "7", "--t", "1", "--out", &out, "--format", "text"]);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text, "0000000\n".repeat(5));
    assert_eq!(stat(&stdout(&o), "sparsity"), 1.0);
}

#[test]
fn gen_is_deterministic_and_inspect_agrees() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (path(&dir, "a.tern"), path(&dir, "b.tern"));
    let args = |out: &str| {
        vec!["gen", "--seed", "42", "--layer-tag", "3", "--rows", "512", "--cols", "512", "--t", "0.9", "--out", out]
            .into_iter()
            .map(String::from)
            .collect::<Vec<_>>()
    };
    let oa = rtconv(&args(&a).iter().map(String::as_str).collect::<Vec<_>>());
    let ob = rtconv(&args(&b).iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(oa.status.code(), Some(0));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(stdout(&oa), stdout(&ob));

    let gen_out = stdout(&oa);
    let sparsity = stat(&gen_out, "sparsity");
    let sigma = (0.9f64 * 0.1 / (512.0 * 512.0)).sqrt();
    assert!((sparsity - 0.9).abs() <= 3.0 * sigma, "sparsity {sparsity}");

    let oi = rtconv(&["inspect", "--in", &a]);
    assert_eq!(oi.status.code(), Some(0));
    let inspect_out = stdout(&oi);
    for key in ["entries", "zeros", "plus", "minus", "sparsity", "plus_fraction"] {
        assert_eq!(stat(&inspect_out, key), stat(&gen_out, key), "{key}");
    }
    assert_eq!(stat(&inspect_out, "seed"), 42.0);
    assert_eq!(stat(&inspect_out, "layer_tag"), 3.0);
    assert_eq!(resolved(&oa)["spec"]["threshold"], 0.9);
}

#[test]
fn inspect_rejects_truncated_files_with_offset() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "m.tern");
    assert_eq!(rtconv(&["gen", "--rows", "8", "--cols", "8", "--out", &out]).status.code(), Some(0));
    let mut bytes = fs::read(&out).unwrap();
    bytes.truncate(bytes.len() - 3);
    fs::write(&out, &bytes).unwrap();
    let o = rtconv(&["inspect", "--in", &out]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains(&format!("offset {}", bytes.len())), "{err}");
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(rtconv(&[]).status.code(), Some(1));
    assert_eq!(rtconv(&["gen", "--rows", "4"]).status.code(), Some(1));
    assert_eq!(rtconv(&["gen", "--rows", "4", "--cols", "4", "--out", "x", "--bogus"]).status.code(), Some(1));
    assert_eq!(rtconv(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(rtconv(&["gen", "--rows", "4", "--cols", "4", "--t", "2", "--out", "x"]).status.code(), Some(1));
    assert_eq!(rtconv(&["bench", "--shapes", "4by4", "--out", "x"]).status.code(), Some(1));
    assert_eq!(rtconv(&["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    assert_eq!(rtconv(&["inspect", "--in", &path(&dir, "missing")]).status.code(), Some(2));
    let bad_dir = dir.path().join("no/such/dir/m.tern");
    let o = rtconv(&["gen", "--rows", "4", "--cols", "4", "--out", bad_dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn count_reports_exact_deltas() {
    let dir = TempDir::new().unwrap();
    let report = |text: &str, name: &str| -> Value {
        let o = rtconv(&["count", "--config", &write(&dir, name, text)]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        serde_json::from_str(&stdout(&o)).unwrap()
    };
    let base = report(MODEL, "base.json");
    let float = report(&MODEL.replace(r#"["float","ternary"]"#, r#"["float","float"]"#), "float.json");
    let trained = report(&MODEL.replace(r#"["trained","identity"]"#, r#"["trained","trained"]"#), "trained.json");
    let n = |v: &Value| v["trainable_float_count"].as_u64().unwrap();
    assert_eq!(n(&float) - n(&base), 8 * 8);
    assert_eq!(n(&trained) - n(&base), 8 * 8);
    let sum: u64 = base["layers"].as_array().unwrap().iter().map(|l| l["trainable"].as_u64().unwrap()).sum();
    assert_eq!(sum, n(&base));
}

#[test]
fn invalid_model_config_exits_one() {
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "bad.json", &MODEL.replace(r#"["trained","identity"]"#, r#"["trained"]"#));
    assert_eq!(rtconv(&["count", "--config", &bad]).status.code(), Some(1));
    let unknown = write(&dir, "unknown.json", &MODEL.replace(r#""seed":9"#, r#""seed":9,"depth":3"#));
    assert_eq!(rtconv(&["count", "--config", &unknown]).status.code(), Some(1));
    let garbage = write(&dir, "garbage.json", "{");
    assert_eq!(rtconv(&["count", "--config", &garbage]).status.code(), Some(1));
}

fn run_train(dir: &TempDir, model: &str, task: &str, out: &str) -> Output {
    let o = rtconv(&["train", "--config", model, "--train-config", task, "--metrics-out", &path(dir, out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    o
}

#[test]
fn train_writes_reproducible_metrics() {
    let dir = TempDir::new().unwrap();
    let (model, task) = (write(&dir, "model.json", MODEL), write(&dir, "task.json", TASK));
    let first = run_train(&dir, &model, &task, "a.csv");
    run_train(&dir, &model, &task, "b.csv");
    let a = fs::read_to_string(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, fs::read_to_string(dir.path().join("b.csv")).unwrap());
    assert!(a.starts_with("epoch,split,loss,accuracy\n"));
    assert_eq!(a.lines().count(), 1 + 2 * 2);

    // The printed configuration reproduces the run.
    let r = resolved(&first);
    let model2 = write(&dir, "model2.json", &r["config"].to_string());
    let task2 = write(&dir, "task2.json", &r["train_config"].to_string());
    run_train(&dir, &model2, &task2, "c.csv");
    assert_eq!(a, fs::read_to_string(dir.path().join("c.csv")).unwrap());
    assert_eq!(r["train_config"]["val_fraction"], 0.2);
}

#[test]
fn sweep_with_one_t_equals_train() {
    let dir = TempDir::new().unwrap();
    let (model, task) = (write(&dir, "model.json", MODEL), write(&dir, "task.json", TASK));
    let out = path(&dir, "sweep.csv");
    let o = rtconv(&["sweep", "--config", &model, "--train-config", &task, "--t-list", "0.5", "--out", &out]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    run_train(&dir, &model, &task, "m.csv");
    let metrics = fs::read_to_string(dir.path().join("m.csv")).unwrap();
    let val_acc = metrics.lines().last().unwrap().rsplit(',').next().unwrap().to_string();
    let sweep = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = sweep.lines().collect();
    assert_eq!(lines[0], "t,params_trainable,accuracy");
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[1].rsplit(',').next().unwrap(), val_acc);

    let multi = path(&dir, "multi.csv");
    let o = rtconv(&[
        "sweep", "--config", &model, "--train-config", &task, "--t-list", "0.9,0,0.5", "--out", &multi, "--jobs", "2",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let ts: Vec<f64> = fs::read_to_string(&multi)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(ts, vec![0.0, 0.5, 0.9]);
}

#[test]
fn bench_writes_csv() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "bench.csv");
    let o = rtconv(&["bench", "--shapes", "16x32", "--t-list", "0,1", "--reps", "3", "--out", &out, "--threads", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(
        text.lines().next(),
        Some("kernel,rows,cols,t,reps,median_ns,multiplications,additions,weight_bytes_read")
    );
    assert_eq!(text.lines().count(), 1 + 2 * 7);
    assert!(Path::new(&out).exists());
}

#[test]
fn shipped_configs_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut models = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let p = entry.unwrap().path();
        let name = p.file_name().unwrap().to_str().unwrap().to_string();
        let text = fs::read_to_string(&p).unwrap();
        if name.starts_with("task") {
            let tc: rtconv::model::TrainConfig = serde_json::from_str(&text).unwrap();
            tc.validate().unwrap();
        } else {
            let o = rtconv(&["count", "--config", p.to_str().unwrap()]);
            assert_eq!(o.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&o.stderr));
            models += 1;
        }
    }
    assert!(models >= 3);
}
