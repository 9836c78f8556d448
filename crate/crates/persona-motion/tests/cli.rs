//! End-to-end tests of the `persona-motion` binary: exit codes, output
//! files, and determinism across reruns and thread counts.

mod common;

use std::fs;
use std::path::Path;

use common::{
    run_cli, standing_pose, stderr_of, stdout_of, style_gait, walking_content, write_pose,
};
use persona_motion::personalize::{OptimTrace, StopReason};
use persona_motion::skeleton::load_pose;
use serde_json::Value;

/// First JSON value on stdout (commands may print a trailing status line).
fn leading_json(stdout: &str) -> Value {
    serde_json::Deserializer::from_str(stdout)
        .into_iter::<Value>()
        .next()
        .expect("no JSON on stdout")
        .expect("malformed JSON on stdout")
}

#[test]
fn stylize_is_deterministic_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let content = dir.path().join("content.json");
    let style = dir.path().join("style.json");
    write_pose(&walking_content(12), &content);
    write_pose(&style_gait(10), &style);

    let run = |tag: &str, envs: &[(&str, &str)]| -> (Vec<u8>, Vec<u8>) {
        let out = dir.path().join(format!("out_{tag}.json"));
        let trace = dir.path().join(format!("out_{tag}.trace.jsonl"));
        let result = run_cli(
            &[
                "stylize",
                "--content",
                content.to_str().unwrap(),
                "--style",
                style.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--w-content",
                "50",
                "--w-conn",
                "0.5",
                "--step",
                "0.5",
                "--max-iters",
                "400",
            ],
            envs,
        );
        assert_eq!(
            result.status.code(),
            Some(0),
            "stylize failed: {}",
            stderr_of(&result)
        );
        (fs::read(&out).unwrap(), fs::read(&trace).unwrap())
    };

    let (pose_a, trace_a) = run("a", &[]);
    let (pose_b, trace_b) = run("b", &[("PERSONA_MOTION_THREADS", "1")]);
    let (pose_c, trace_c) = run("c", &[("PERSONA_MOTION_THREADS", "4")]);
    assert_eq!(pose_a, pose_b);
    assert_eq!(pose_a, pose_c);
    assert_eq!(trace_a, trace_b);
    assert_eq!(trace_a, trace_c);
}

#[test]
fn stylize_identical_content_and_style_stays_close() {
    let dir = tempfile::tempdir().unwrap();
    let content_seq = walking_content(6);
    let content = dir.path().join("content.json");
    let out = dir.path().join("out.json");
    write_pose(&content_seq, &content);

    let result = run_cli(
        &[
            "stylize",
            "--content",
            content.to_str().unwrap(),
            "--style",
            content.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(result.status.code(), Some(0), "{}", stderr_of(&result));

    let fused = load_pose(&out).unwrap();
    let n = (content_seq.frames().len()) as f64;
    let rms = (content_seq
        .frames()
        .iter()
        .zip(fused.frames().iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
        .sqrt();
    assert!(rms < 0.2, "default run drifted from content: rms {rms}");
}

#[test]
fn stylize_without_physics_is_a_content_fixpoint() {
    let dir = tempfile::tempdir().unwrap();
    let content = dir.path().join("content.json");
    let out = dir.path().join("out.json");
    write_pose(&walking_content(8), &content);

    let result = run_cli(
        &[
            "stylize",
            "--content",
            content.to_str().unwrap(),
            "--style",
            content.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--w-stability",
            "0",
            "--w-conn",
            "0",
        ],
        &[],
    );
    assert_eq!(result.status.code(), Some(0), "{}", stderr_of(&result));

    // The objective gradient vanishes at the start, so the output is the
    // canonical serialization of the unchanged content.
    assert_eq!(fs::read(&content).unwrap(), fs::read(&out).unwrap());

    let trace_text = fs::read_to_string(dir.path().join("out.trace.jsonl")).unwrap();
    let trace = OptimTrace::from_jsonl(&trace_text).unwrap();
    assert_eq!(trace.stop_reason, StopReason::Converged);
    assert_eq!(trace.iterations.len(), 1);
    assert_eq!(trace.iterations[0].grad_norm, 0.0);
}

#[test]
fn stylize_label_writes_fused_features() {
    let dir = tempfile::tempdir().unwrap();
    let content = dir.path().join("content.json");
    let style = dir.path().join("style.json");
    let out = dir.path().join("out.json");
    let features = dir.path().join("features.json");
    write_pose(&walking_content(5), &content);
    write_pose(&style_gait(4), &style);

    let result = run_cli(
        &[
            "stylize",
            "--content",
            content.to_str().unwrap(),
            "--style",
            style.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--max-iters",
            "5",
            "--label",
            "Walk",
            "--features-out",
            features.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(result.status.code(), Some(0), "{}", stderr_of(&result));
    assert!(stdout_of(&result).contains("fused features for label Walk"));

    let file: Value = serde_json::from_str(&fs::read_to_string(&features).unwrap()).unwrap();
    assert_eq!(file["label"], "Walk");
    assert_eq!(file["d"], 64);
    assert_eq!(file["frames"], 5);
    let rows = file["features"].as_array().unwrap();
    assert_eq!(rows.len(), 5);
    for row in rows {
        let row = row.as_array().unwrap();
        assert_eq!(row.len(), 64);
        assert!(row.iter().all(|v| v.as_f64().unwrap().is_finite()));
    }
}

#[test]
fn stylize_rejects_unknown_label() {
    let dir = tempfile::tempdir().unwrap();
    let content = dir.path().join("content.json");
    write_pose(&walking_content(5), &content);

    let result = run_cli(
        &[
            "stylize",
            "--content",
            content.to_str().unwrap(),
            "--style",
            content.to_str().unwrap(),
            "--out",
            dir.path().join("out.json").to_str().unwrap(),
            "--label",
            "Moonwalk",
        ],
        &[],
    );
    assert_eq!(result.status.code(), Some(3));
    assert!(stderr_of(&result).contains("Moonwalk"));
}

#[test]
fn stylize_rejects_short_content() {
    let dir = tempfile::tempdir().unwrap();
    let content = dir.path().join("content.json");
    let style = dir.path().join("style.json");
    write_pose(&walking_content(2), &content);
    write_pose(&style_gait(4), &style);

    let result = run_cli(
        &[
            "stylize",
            "--content",
            content.to_str().unwrap(),
            "--style",
            style.to_str().unwrap(),
            "--out",
            dir.path().join("out.json").to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(result.status.code(), Some(3));
    assert!(stderr_of(&result).contains("at least 3 frames"));
}

#[test]
fn missing_input_file_exits_two() {
    let result = run_cli(
        &[
            "stylize",
            "--content",
            "/nonexistent/content.json",
            "--style",
            "/nonexistent/style.json",
            "--out",
            "/tmp/unused.json",
        ],
        &[],
    );
    assert_eq!(result.status.code(), Some(2));
    assert!(stderr_of(&result).starts_with("error: file not found:"));
}

#[test]
fn unknown_subcommand_exits_two() {
    let result = run_cli(&["frobnicate"], &[]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn loss_reports_zero_physics_terms_for_static_pose() {
    let dir = tempfile::tempdir().unwrap();
    let pose = dir.path().join("pose.json");
    write_pose(&standing_pose(5), &pose);

    let result = run_cli(&["loss", "--pose", pose.to_str().unwrap()], &[]);
    assert_eq!(result.status.code(), Some(0), "{}", stderr_of(&result));

    let report = leading_json(&stdout_of(&result));
    let stability = report["stability"].as_f64().unwrap();
    let conn_plus = report["conn_plus"].as_f64().unwrap();
    let conn_minus = report["conn_minus"].as_f64().unwrap();
    let total = report["total"].as_f64().unwrap();
    assert_eq!(stability, 0.0);
    assert_eq!(conn_minus, 0.0);
    assert!(conn_plus > 0.0);
    assert_eq!(total, stability + conn_plus + conn_minus);
}

#[test]
fn loss_rejects_short_sequences() {
    let dir = tempfile::tempdir().unwrap();
    let pose = dir.path().join("pose.json");
    write_pose(&standing_pose(2), &pose);

    let result = run_cli(&["loss", "--pose", pose.to_str().unwrap()], &[]);
    assert_eq!(result.status.code(), Some(3));
    assert!(stderr_of(&result).contains("need at least 3 frames"));
}

#[test]
fn loss_output_is_thread_count_independent() {
    let dir = tempfile::tempdir().unwrap();
    let pose = dir.path().join("pose.json");
    // Long enough to engage the parallel per-frame path.
    write_pose(&style_gait(40), &pose);

    let single = run_cli(
        &["loss", "--pose", pose.to_str().unwrap()],
        &[("PERSONA_MOTION_THREADS", "1")],
    );
    let multi = run_cli(
        &["loss", "--pose", pose.to_str().unwrap()],
        &[("PERSONA_MOTION_THREADS", "4")],
    );
    assert_eq!(single.status.code(), Some(0));
    assert_eq!(multi.status.code(), Some(0));
    assert_eq!(single.stdout, multi.stdout);
}

#[test]
fn gradcheck_passes_and_negative_control_fails() {
    let pass = run_cli(
        &["gradcheck", "--trials", "3", "--frames", "8"],
        &[],
    );
    assert_eq!(pass.status.code(), Some(0), "{}", stderr_of(&pass));
    let stdout = stdout_of(&pass);
    assert_eq!(stdout.matches(" PASS").count(), 3);
    assert!(stdout.contains("gradient check passed"));

    let fail = run_cli(&["gradcheck", "--corrupt-gradient"], &[]);
    assert_eq!(fail.status.code(), Some(1));
    assert!(stdout_of(&fail).contains(" FAIL"));

    let short = run_cli(&["gradcheck", "--frames", "2"], &[]);
    assert_eq!(short.status.code(), Some(3));
}

#[test]
fn render_emits_static_and_animated_svg() {
    let dir = tempfile::tempdir().unwrap();
    let still = dir.path().join("still.json");
    let moving = dir.path().join("moving.json");
    write_pose(&standing_pose(1), &still);
    write_pose(&walking_content(8), &moving);

    let out_static = dir.path().join("still.svg");
    let result = run_cli(
        &[
            "render",
            "--pose",
            still.to_str().unwrap(),
            "--out",
            out_static.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(result.status.code(), Some(0), "{}", stderr_of(&result));
    let svg = fs::read_to_string(&out_static).unwrap();
    assert_eq!(svg.matches("<line").count(), 19);
    assert_eq!(svg.matches("<circle").count(), 20);
    assert!(!svg.contains("<animate"));

    let out_anim = dir.path().join("moving.svg");
    let result = run_cli(
        &[
            "render",
            "--pose",
            moving.to_str().unwrap(),
            "--out",
            out_anim.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(result.status.code(), Some(0), "{}", stderr_of(&result));
    let svg = fs::read_to_string(&out_anim).unwrap();
    assert!(svg.contains("<animate"));
    // 8 frames at the default 30 fps.
    assert!(svg.contains("dur=\"0.267s\""));

    // Re-rendering is byte-identical.
    let out_again = dir.path().join("moving2.svg");
    let result = run_cli(
        &[
            "render",
            "--pose",
            moving.to_str().unwrap(),
            "--out",
            out_again.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(result.status.code(), Some(0));
    assert_eq!(fs::read(&out_anim).unwrap(), fs::read(&out_again).unwrap());

    let bad = run_cli(
        &[
            "render",
            "--pose",
            still.to_str().unwrap(),
            "--out",
            dir.path().join("x.svg").to_str().unwrap(),
            "--width",
            "0",
        ],
        &[],
    );
    assert_eq!(bad.status.code(), Some(3));
}

fn write_manifest(path: &Path, entries: &[(&str, &str, usize)]) {
    let list: Vec<Value> = entries
        .iter()
        .map(|(name, pose_path, frames)| {
            serde_json::json!({"name": name, "pose_path": pose_path, "frames": frames})
        })
        .collect();
    fs::write(path, serde_json::to_string(&list).unwrap()).unwrap();
}

#[test]
fn dataset_validate_checks_files_and_expectations() {
    let dir = tempfile::tempdir().unwrap();
    write_pose(&standing_pose(4), &dir.path().join("a.json"));
    write_pose(&standing_pose(6), &dir.path().join("b.json"));
    let manifest = dir.path().join("manifest.json");
    write_manifest(
        &manifest,
        &[
            ("Walk_Trump_01", "a.json", 4),
            ("Dance_D10_01", "b.json", 6),
            ("Walk_D10_02", "a.json", 4),
        ],
    );

    let ok = run_cli(
        &[
            "dataset",
            "validate",
            "--manifest",
            manifest.to_str().unwrap(),
            "--expect-styles",
            "2",
            "--expect-contents",
            "2",
            "--expect-frames",
            "14",
        ],
        &[],
    );
    assert_eq!(ok.status.code(), Some(0), "{}", stderr_of(&ok));
    assert!(stdout_of(&ok).contains("manifest valid"));

    let bad_expect = run_cli(
        &[
            "dataset",
            "validate",
            "--manifest",
            manifest.to_str().unwrap(),
            "--expect-styles",
            "5",
        ],
        &[],
    );
    assert_eq!(bad_expect.status.code(), Some(1));
    let report = leading_json(&stdout_of(&bad_expect));
    assert_eq!(report["expectation_failures"].as_array().unwrap().len(), 1);

    write_manifest(
        &manifest,
        &[
            ("Walk_Trump_01", "a.json", 4),
            ("Walk_Trump_01", "missing.json", 9),
        ],
    );
    let broken = run_cli(
        &[
            "dataset",
            "validate",
            "--manifest",
            manifest.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(broken.status.code(), Some(1));
    let report = leading_json(&stdout_of(&broken));
    assert_eq!(report["duplicates"].as_array().unwrap().len(), 1);
    assert_eq!(report["missing_files"].as_array().unwrap().len(), 1);

    let gone = run_cli(
        &["dataset", "validate", "--manifest", "/nonexistent/m.json"],
        &[],
    );
    assert_eq!(gone.status.code(), Some(2));

    fs::write(&manifest, "not json").unwrap();
    let malformed = run_cli(
        &[
            "dataset",
            "validate",
            "--manifest",
            manifest.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(malformed.status.code(), Some(2));
}

#[test]
fn dataset_stats_sorts_labels() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("manifest.json");
    write_manifest(
        &manifest,
        &[
            ("Walk_B_01", "a.json", 10),
            ("Walk_A_01", "a.json", 20),
            ("Run_A_02", "a.json", 5),
        ],
    );

    let result = run_cli(
        &["dataset", "stats", "--manifest", manifest.to_str().unwrap()],
        &[],
    );
    assert_eq!(result.status.code(), Some(0), "{}", stderr_of(&result));
    let summary = leading_json(&stdout_of(&result));
    assert_eq!(summary["clips"], 3);
    assert_eq!(summary["total_frames"], 35);
    let contents: Vec<&str> = summary["per_content"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["label"].as_str().unwrap())
        .collect();
    assert_eq!(contents, ["Run", "Walk"]);
    let styles: Vec<&str> = summary["per_style"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["label"].as_str().unwrap())
        .collect();
    assert_eq!(styles, ["A", "B"]);
}

#[test]
fn invalid_thread_env_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let pose = dir.path().join("pose.json");
    write_pose(&standing_pose(3), &pose);

    let result = run_cli(
        &["loss", "--pose", pose.to_str().unwrap()],
        &[("PERSONA_MOTION_THREADS", "abc")],
    );
    assert_eq!(result.status.code(), Some(3));
    assert!(stderr_of(&result).contains("PERSONA_MOTION_THREADS"));
}
