use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use siamcorners::config::{Config, ExtractorKind};
use siamcorners::io;
use siamcorners::synth::SequenceSpec;
use siamcorners::tracker::load_params;
use siamcorners_cli::{cmd_eval, cmd_synth, cmd_track, cmd_train, effective_config, LOSS_FILE, PARAMS_FILE};

fn bin(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_siamcorners")).args(args).current_dir(cwd).output().unwrap()
}

fn small_spec(seed: u64, velocity: [f64; 2]) -> SequenceSpec {
    SequenceSpec { length: 6, frame_width: 160, frame_height: 120, init_box: [50.0, 40.0, 30.0, 24.0], velocity, seed, ..Default::default() }
}

fn write_spec(dir: &Path, spec: &SequenceSpec) -> std::path::PathBuf {
    let p = dir.join("spec.json");
    fs::write(&p, serde_json::to_string(spec).unwrap()).unwrap();
    p
}

#[test]
fn track_without_groundtruth_exits_2_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = tmp.path().join("empty");
    fs::create_dir(&seq).unwrap();
    let out = tmp.path().join("out");
    let r = bin(&["track", seq.to_str().unwrap(), "--out", out.to_str().unwrap()], tmp.path());
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("groundtruth_rect.txt"));
    assert!(!out.exists());
}

#[test]
fn synth_then_track_through_the_binary() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(tmp.path(), &small_spec(3, [1.0, 0.5]));
    let seq = tmp.path().join("seq");
    let r = bin(&["synth", spec.to_str().unwrap(), "--out", seq.to_str().unwrap()], tmp.path());
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert_eq!(io::frame_paths(&seq).unwrap().len(), 6);

    let out = tmp.path().join("track");
    let r = bin(&["track", seq.to_str().unwrap(), "--out", out.to_str().unwrap()], tmp.path());
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert!(String::from_utf8_lossy(&r.stdout).contains("fps"));
    assert_eq!(io::read_boxes(&out.join("boxes.txt")).unwrap().len(), 6);
    assert_eq!(io::frame_paths(&out.join("overlay")).unwrap().len(), 6);
}

#[test]
fn synth_directory_round_trips_boxes() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = small_spec(11, [2.0, -1.0]);
    let p = write_spec(tmp.path(), &spec);
    let seq = cmd_synth(Some(&p), None, &tmp.path().join("s")).unwrap();
    let loaded = io::load_sequence_dir(&tmp.path().join("s")).unwrap();
    assert_eq!(loaded.groundtruth, seq.boxes);
    assert_eq!(loaded.frames.len(), spec.length);
}

#[test]
fn eval_scores_echo_above_frozen_and_rejects_empty_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let echo = tmp.path().join("echo");
    let frozen = tmp.path().join("frozen");
    fs::create_dir_all(&echo).unwrap();
    fs::create_dir_all(&frozen).unwrap();
    for (i, v) in [[3.0, 0.0], [0.0, 3.0]].into_iter().enumerate() {
        let name = format!("seq{i}");
        let seq = cmd_synth(Some(&write_spec(tmp.path(), &small_spec(i as u64, v))), None, &data.join(&name)).unwrap();
        io::write_boxes(&echo.join(format!("{name}.txt")), &seq.boxes).unwrap();
        io::write_boxes(&frozen.join(format!("{name}.txt")), &vec![seq.boxes[0]; seq.boxes.len()]).unwrap();
    }
    let e = cmd_eval(&data, &echo, &tmp.path().join("eval_echo")).unwrap();
    let f = cmd_eval(&data, &frozen, &tmp.path().join("eval_frozen")).unwrap();
    assert_eq!(e.aggregate.success_auc, 1.0);
    assert!(e.aggregate.success_auc > f.aggregate.success_auc);
    assert!(e.aggregate.precision_at_20 >= f.aggregate.precision_at_20);
    for file in ["summary.txt", "aggregate.txt", "aggregate.plot", "seq0.txt", "seq1.plot"] {
        assert!(tmp.path().join("eval_echo").join(file).is_file(), "{file}");
    }

    let empty = tmp.path().join("nothing");
    fs::create_dir(&empty).unwrap();
    let r = bin(&["eval", empty.to_str().unwrap(), echo.to_str().unwrap(), "--out", "o"], tmp.path());
    assert_eq!(r.status.code(), Some(2));
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn eval_flags_sequences_without_results() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let res = tmp.path().join("res");
    fs::create_dir_all(&res).unwrap();
    let a = cmd_synth(Some(&write_spec(tmp.path(), &small_spec(1, [1.0, 0.0]))), None, &data.join("a")).unwrap();
    cmd_synth(Some(&write_spec(tmp.path(), &small_spec(2, [1.0, 0.0]))), None, &data.join("b")).unwrap();
    io::write_boxes(&res.join("a.txt"), &a.boxes).unwrap();
    let r = cmd_eval(&data, &res, &tmp.path().join("out")).unwrap();
    assert!(r.sequences[0].report.is_ok());
    assert!(r.sequences[1].report.is_err());
    let summary = fs::read_to_string(tmp.path().join("out/summary.txt")).unwrap();
    assert!(summary.contains("b skipped"));
}

fn tiny_train_config(steps: usize) -> Config {
    Config {
        extractor: ExtractorKind::Toy,
        template_size: 63,
        search_size: 127,
        toy_widths: [8, 8, 8],
        head_width: 4,
        train_pairs: 2,
        train_steps: steps,
        ..Config::default()
    }
}

#[test]
fn zero_step_training_writes_the_initial_parameters() {
    let tmp = tempfile::tempdir().unwrap();
    let c = tiny_train_config(0);
    let outcome = cmd_train(&c, tmp.path()).unwrap();
    assert_eq!(load_params(&tmp.path().join(PARAMS_FILE)).unwrap(), c.initial_params());
    assert_eq!(outcome.losses.len(), 1);
    assert_eq!(fs::read_to_string(tmp.path().join(LOSS_FILE)).unwrap().lines().count(), 1);
}

#[test]
fn trained_parameters_load_into_a_file_tracker() {
    let tmp = tempfile::tempdir().unwrap();
    let c = tiny_train_config(3);
    let outcome = cmd_train(&c, tmp.path()).unwrap();
    assert!(outcome.losses.last().unwrap() < &outcome.losses[0]);

    let seq_dir = tmp.path().join("seq");
    cmd_synth(Some(&write_spec(tmp.path(), &small_spec(5, [1.0, 1.0]))), None, &seq_dir).unwrap();
    let file = Config { extractor: ExtractorKind::File, params_path: Some(tmp.path().join(PARAMS_FILE)), ..c };
    let r = cmd_track(&seq_dir, &file, &tmp.path().join("track")).unwrap();
    assert_eq!(r.boxes.len(), 6);
}

#[test]
fn dump_config_prints_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let r = bin(&["--dump-config", "--seed", "42", "--extractor", "toy"], tmp.path());
    assert!(r.status.success());
    let c = Config::from_json(&String::from_utf8(r.stdout).unwrap()).unwrap();
    assert_eq!(c.seed, 42);
    assert_eq!(c.extractor, ExtractorKind::Toy);
    assert_eq!(effective_config(None, Some(42), Some("toy")).unwrap(), c);
}

#[test]
fn bad_extractor_and_unknown_config_keys_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(bin(&["--dump-config", "--extractor", "magic"], tmp.path()).status.code(), Some(2));
    fs::write(tmp.path().join("c.json"), "{\"etaa\": 1.0}").unwrap();
    assert_eq!(bin(&["--config", "c.json", "selftest"], tmp.path()).status.code(), Some(2));
}

#[test]
fn selftest_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let r = bin(&["selftest"], tmp.path());
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stdout));
    assert!(!String::from_utf8_lossy(&r.stdout).contains("FAIL"));
}
