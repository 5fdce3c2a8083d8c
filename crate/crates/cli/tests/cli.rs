use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn iris3d(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iris3d"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = iris3d(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Vertices, the `radius` property, and faces of an ASCII PLY file.
fn parse_ply(text: &str) -> (Vec<[f64; 3]>, Vec<f64>, Vec<[usize; 3]>) {
    let mut lines = text.lines();
    let mut props = Vec::new();
    let (mut nv, mut nf) = (0, 0);
    for line in lines.by_ref() {
        let t: Vec<&str> = line.split_whitespace().collect();
        match t.as_slice() {
            ["element", "vertex", n] => nv = n.parse().unwrap(),
            ["element", "face", n] => nf = n.parse().unwrap(),
            ["property", _, name] => props.push(name.to_string()),
            ["end_header"] => break,
            _ => {}
        }
    }
    let col: HashMap<&str, usize> = props.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();
    let mut verts = Vec::new();
    let mut radius = Vec::new();
    for _ in 0..nv {
        let v: Vec<f64> = lines.next().unwrap().split_whitespace().map(|x| x.parse().unwrap()).collect();
        verts.push([v[col["x"]], v[col["y"]], v[col["z"]]]);
        radius.push(v[col["radius"]]);
    }
    let faces = (0..nf)
        .map(|_| {
            let f: Vec<usize> = lines.next().unwrap().split_whitespace().map(|x| x.parse().unwrap()).collect();
            assert_eq!(f[0], 3);
            [f[1], f[2], f[3]]
        })
        .collect();
    (verts, radius, faces)
}

#[test]
fn reconstructed_mesh_passes_invariant_checker() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["--seed", "2", "phantom", "--label", "closure", "--out", "ph"]);
    ok(d, &["reconstruct", "--boundaries", "ph/boundaries.csv", "--out", "rc"]);
    let (verts, radius, faces) = parse_ply(&fs::read_to_string(d.join("rc/mesh.ply")).unwrap());
    assert!(verts.len() > 500);

    // disk samples: no pair closer than the smaller of their radii
    for i in 0..verts.len() {
        for j in i + 1..verts.len() {
            let dd = (0..3).map(|k| (verts[i][k] - verts[j][k]).powi(2)).sum::<f64>().sqrt();
            assert!(dd >= radius[i].min(radius[j]), "vertices {i} and {j} are {dd} apart");
        }
    }
    // edge-manifold, valid indices, no repeated vertices within a face
    let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
    for f in &faces {
        assert!(f.iter().all(|&v| v < verts.len()));
        assert!(f[0] != f[1] && f[1] != f[2] && f[0] != f[2]);
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            *edges.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    assert!(edges.values().all(|&c| c <= 2));
    let manifest = fs::read_to_string(d.join("rc/reconstruct.manifest.json")).unwrap();
    let m: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    assert_eq!(m["inputs_hash"].as_str().unwrap().len(), 64);
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn identical_masks_score_dice_one() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["phantom", "--out", "ph"]);
    let out = ok(
        d,
        &["metrics", "--pred", "ph/masks/slice_005.pgm", "--gt", "ph/masks/slice_005.pgm"],
    );
    assert!(out.contains("\"dice\": 1.000000"), "{out}");
}

#[test]
fn pipeline_reports_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let args = |out: &'static str, jobs: &'static str| {
        vec!["--seed", "7", "--jobs", jobs, "pipeline", "--volumes", "4", "--epochs", "2", "--out", out]
    };
    let a = ok(d, &args("a", "1"));
    let b = ok(d, &args("b", "1"));
    let c = ok(d, &args("c", "2"));
    assert_eq!(a, b);
    assert_eq!(a, c);
    for f in ["report.json", "scores.csv", "psn.ckpt", "experiment.json"] {
        let ra = fs::read(d.join("a").join(f)).unwrap();
        assert_eq!(ra, fs::read(d.join("b").join(f)).unwrap(), "{f}");
        assert_eq!(ra, fs::read(d.join("c").join(f)).unwrap(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_str(&a).unwrap();
    for k in ["accuracy", "sensitivity", "specificity", "auc"] {
        assert!(report[k].is_number(), "{k} missing in {a}");
    }
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("a/pipeline.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 7);
}

#[test]
fn stage_commands_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["--seed", "1", "pipeline", "--volumes", "4", "--epochs", "1", "--save-samples", "--out", "p"]);
    ok(d, &["train", "--train", "p/train.jsonl", "--valid", "p/valid.jsonl", "--epochs", "1", "--out", "t"]);
    let report = ok(d, &["classify", "--model", "t/psn.ckpt", "--samples", "p/valid.jsonl", "--out", "c"]);
    let again = ok(d, &["metrics", "--scores", "c/scores.csv"]);
    assert_eq!(report, again);

    ok(d, &["phantom", "--label", "open", "--out", "ph"]);
    ok(d, &["boundaries", "--masks", "ph/masks", "--out", "b"]);
    let out = ok(
        d,
        &["metrics", "--pred-boundaries", "b/boundaries.csv", "--gt-boundaries", "ph/boundaries.csv"],
    );
    let m: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(m["hausdorff"].as_f64().unwrap() < 1.0);
    ok(d, &["reconstruct", "--boundaries", "b/boundaries.csv", "--out", "r"]);
    ok(d, &["quantify", "--mesh", "r/mesh.ply", "--out", "q"]);
    let csv = fs::read_to_string(d.join("q/curvature.csv")).unwrap();
    assert!(csv.starts_with("vertex,x,y,z,k1,k2,K,H,E,planar\n"));
    ok(d, &["sectors", "--mesh", "r/mesh.ply", "--label", "open", "--out", "s"]);
    let lines = fs::read_to_string(d.join("s/sectors.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 24);
}

#[test]
fn segmentation_train_and_segment() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(
        d.join("cfg.json"),
        r#"{"segnet": {"net": {"height": 16, "width": 16, "widths": [4, 8, 8, 16], "subband_channels": [1, 2, 2]},
            "slices": 4, "holdout": 2, "train": {"epochs": 2}}}"#,
    )
    .unwrap();
    let out = ok(d, &["--config", "cfg.json", "train", "--kind", "segnet", "--out", "sg"]);
    assert!(out.contains("holdout_dice"));
    fs::create_dir(d.join("img")).unwrap();
    let mut pgm = b"P5\n16 16\n255\n".to_vec();
    pgm.extend((0..256).map(|i| if i / 16 > 7 { 200u8 } else { 20 }));
    fs::write(d.join("img/a.pgm"), &pgm).unwrap();
    ok(d, &["segment", "--model", "sg/segnet.ckpt", "--input", "img", "--out", "seg"]);
    assert!(d.join("seg/a.pgm").exists());
    // wrong image extents violate the network's input contract
    fs::write(d.join("img/b.pgm"), b"P5\n8 8\n255\n".iter().copied().chain([0u8; 64]).collect::<Vec<_>>()).unwrap();
    let bad = iris3d(d, &["segment", "--model", "sg/segnet.ckpt", "--input", "img/b.pgm", "--out", "seg2"]);
    assert_eq!(bad.status.code(), Some(3));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let missing = iris3d(d, &["reconstruct", "--boundaries", "absent/b.csv", "--out", "x"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("absent/b.csv"));

    assert_eq!(iris3d(d, &["frobnicate"]).status.code(), Some(4));
    assert_eq!(iris3d(d, &["metrics"]).status.code(), Some(4));
    assert_eq!(iris3d(d, &["--jobs", "0", "metrics", "--scores", "x"]).status.code(), Some(4));
    fs::write(d.join("bad.json"), "{\"seed\": \"seven\"}").unwrap();
    assert_eq!(iris3d(d, &["--config", "bad.json", "metrics"]).status.code(), Some(4));

    fs::write(d.join("b.csv"), "slice_index,half,point_index,x,z\n0,left,0,not-a-number,3\n").unwrap();
    assert_eq!(iris3d(d, &["reconstruct", "--boundaries", "b.csv", "--out", "x"]).status.code(), Some(3));

    let v = iris3d(d, &["--version"]);
    assert_eq!(v.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&v.stdout).contains(env!("CARGO_PKG_VERSION")));
}
