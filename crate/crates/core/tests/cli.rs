use std::path::Path;
use std::process::Command;

fn feattrack(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_feattrack")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_track_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("seq");
    let out = feattrack(&[
        "synth", "--out", s(&seq), "--frames", "6", "--width", "120", "--height", "100", "--target-size", "32",
        "--vx", "1", "--vy", "0", "--jitter", "0", "--start", "20,30",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(seq.join("img0006.pgm").exists());

    let traj = dir.path().join("traj.csv");
    let dict = dir.path().join("d.bin");
    let out = feattrack(&[
        "track", "--seq", s(&seq), "--init", "20,30,32,32", "--dict-size", "32", "--seed", "3",
        "--dict-out", s(&dict), "--out", s(&traj),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&traj).unwrap();
    assert!(text.starts_with("frame,x,y,w,h,score\n1,20,30,32,32,"));
    assert_eq!(text.lines().count(), 7);
    assert_eq!(&std::fs::read(&dict).unwrap()[..8], b"FTDICT01");

    let report = dir.path().join("report.csv");
    let out = feattrack(&["eval", "--traj", s(&traj), "--truth", s(&seq.join("groundtruth.txt")), "--out", s(&report)]);
    assert!(out.status.success());
    let rows = std::fs::read_to_string(&report).unwrap();
    assert!(rows.starts_with("frame,vor,cle\n1,1.000000,0.000000\n"));

    // reuse the saved dictionary with another encoder and no updates
    let out = feattrack(&[
        "track", "--seq", s(&seq), "--dict-in", s(&dict), "--encoder", "sa", "--dict-update", "off",
        "--out", s(&traj),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn learn_dict_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("seq");
    assert!(feattrack(&["synth", "--out", s(&seq), "--frames", "4", "--width", "120", "--height", "100", "--target-size", "32"])
        .status
        .success());
    let dict = dir.path().join("km.bin");
    let out = feattrack(&["learn-dict", "--seq", s(&seq), "--method", "kmeans", "--dict-size", "16", "--out", s(&dict)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let bytes = std::fs::read(&dict).unwrap();
    assert_eq!(bytes.len(), 16 + 8 * 64 * 16);

    let table = dir.path().join("sweep.csv");
    let out = feattrack(&[
        "sweep", "--param", "dict-size", "--values", "16,24", "--seq", s(&seq), "--dict-update", "off", "--out",
        s(&table),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&table).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "param,value,sequence,mean_vor,mean_cle");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("dict-size,16,seq,"));
}

#[test]
fn errors_are_one_line_and_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = feattrack(&["track", "--seq", s(&dir.path().join("nope")), "--init", "1,1,10,10", "--out", "x.csv"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with("feattrack: "));

    let out = feattrack(&["synth", "--out", s(&dir.path().join("s")), "--target-size", "500"]);
    assert!(!out.status.success());
}
