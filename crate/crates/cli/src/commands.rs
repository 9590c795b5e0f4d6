use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use symh::graph::build_graph;
use symh::metrics::{self, EvalResult};
use symh::postprocess::{refine, RefinementReport};
use symh::seed::derive_seed;
use symh::symh::{flatten_tree, serialize_tree, validate_tree, KeypointRecord, Obb, SymhTree};
use symh::synthesis::{
    perturb_keypoints, read_manifest, read_tree, sample_dir, synthesize_sample, write_manifest, Dataset, GenConfig,
    Manifest, ManifestEntry, Split,
};
use symh::training::{prepare, EpochRecord, TrainState, TrainingConfig};

use crate::settings::Settings;
use crate::Failure;

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Failure::io(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

pub fn synth(s: &Settings) -> Result<(), Failure> {
    let out = s.path("out")?;
    let count: usize = s.parse("count")?;
    if count == 0 {
        return Err(Failure::validation("count must be positive"));
    }
    let cfg = GenConfig { seed: s.parse("seed")?, ..GenConfig::default() };
    cfg.validate()?;
    let samples = (0..count).into_par_iter().map(|i| synthesize_sample(&cfg, i)).collect::<symh::Result<Vec<_>>>()?;
    let dataset = Dataset::from_samples(&cfg, samples);
    dataset.save(&out)?;
    s.write_echo(&out)?;
    let m = &dataset.manifest;
    println!(
        "wrote {count} samples to {} (train {}, val {}, test {})",
        out.display(),
        m.ids(Split::Train).len(),
        m.ids(Split::Val).len(),
        m.ids(Split::Test).len()
    );
    Ok(())
}

pub const STATE_FILE: &str = "state.ckpt";
pub const HISTORY_FILE: &str = "history.csv";

pub fn train(s: &Settings) -> Result<(), Failure> {
    let data = Dataset::load(&s.path("data")?)?;
    let out = s.path("out")?;
    let cfg = TrainingConfig {
        epochs: s.parse("epochs")?,
        seed: s.parse("seed")?,
        lr: s.parse("lr")?,
        batch_size: s.parse("batch-size")?,
        augment_noise_sigma: s.parse("noise-sigma")?,
        augment_engine_drop: s.parse("engine-drop")?,
        val_resolution: s.parse("resolution")?,
        ..TrainingConfig::default()
    };
    cfg.validate()?;
    let mut state = match s.optional_path("resume") {
        Some(path) => {
            let mut state = TrainState::load(&path)?;
            if (TrainingConfig { epochs: cfg.epochs, ..state.cfg.clone() }) != cfg {
                return Err(Failure::validation("resumed checkpoint was trained with different settings"));
            }
            state.cfg.epochs = cfg.epochs;
            state
        }
        None => TrainState::new(cfg.clone())?,
    };
    let train = prepare(&data.train, &cfg.model)?;
    let val = prepare(&data.val, &cfg.model)?;
    s.write_echo(&out)?;
    let history_path = out.join(HISTORY_FILE);
    let state_path = out.join(STATE_FILE);
    let mut csv = format!("{}\n", EpochRecord::CSV_HEADER);
    for r in &state.history {
        writeln!(csv, "{}", r.csv_row()).expect("writing to a string");
    }
    write(&history_path, &csv)?;
    println!("{}", EpochRecord::CSV_HEADER);
    while state.epoch < state.cfg.epochs {
        let record = state.train_epoch(&train, &val)?;
        println!("{}", record.csv_row());
        writeln!(csv, "{}", record.csv_row()).expect("writing to a string");
        write(&history_path, &csv)?;
        state.save(&state_path)?;
    }
    state.save(&state_path)?;
    if let Some(best) = &state.best {
        println!("best epoch {} (val loss {:.6})", best.epoch, best.val_loss);
    }
    Ok(())
}

fn check_tree(tree: &SymhTree, what: &str) -> Result<(), Failure> {
    let violations = validate_tree(tree);
    if violations.is_empty() {
        return Ok(());
    }
    let mut msg = format!("{what} is not a valid tree:");
    for v in &violations {
        write!(msg, "\n  {v}").expect("writing to a string");
    }
    Err(Failure::validation(msg))
}

struct Inference {
    tree: SymhTree,
    report: Option<RefinementReport>,
}

/// Decodes a tree for `rec` and returns it in the record's own frame.
fn infer_one(model: &symh::model::Model, rec: &KeypointRecord, do_refine: bool) -> Result<Inference, Failure> {
    let (normalized, norm) = rec.normalized();
    let mut tree = model.infer(&build_graph(&normalized)?)?;
    let mut report = None;
    if do_refine {
        let (refined, r) = refine(&tree, &normalized)?;
        tree = refined;
        report = Some(r);
    }
    let (scale, shift) = norm.inverse3();
    let tree = tree.scaled(scale, &shift);
    check_tree(&tree, "decoded output")?;
    if tree.leaf_obbs().any(|o| !o.to_code().iter().all(|v| v.is_finite())) {
        return Err(Failure::numeric("decoded output contains non-finite values"));
    }
    Ok(Inference { tree, report })
}

fn degrade(s: &Settings, rec: &KeypointRecord, purpose: &str) -> Result<KeypointRecord, Failure> {
    let cfg = GenConfig {
        noise_sigma: s.parse("noise-sigma")?,
        engine_drop: s.parse("engine-drop")?,
        ..GenConfig::default()
    };
    cfg.validate()?;
    if cfg.noise_sigma == 0.0 && cfg.engine_drop == 0.0 {
        return Ok(rec.clone());
    }
    let seed = derive_seed(s.parse("seed")?, &format!("infer/{purpose}"));
    Ok(perturb_keypoints(rec, &cfg, seed))
}

fn report_json(report: &RefinementReport) -> Result<String, Failure> {
    serde_json::to_string_pretty(report).map_err(|e| Failure::io(format!("report: {e}")))
}

fn parse_split(s: &Settings) -> Result<Option<Split>, Failure> {
    Ok(match s.require("split")? {
        "all" => None,
        "train" => Some(Split::Train),
        "val" => Some(Split::Val),
        "test" => Some(Split::Test),
        other => return Err(Failure::validation(format!("unknown split {other}"))),
    })
}

fn selected(manifest: &Manifest, split: Option<Split>) -> Vec<ManifestEntry> {
    manifest.samples.iter().filter(|e| split.is_none_or(|sp| e.split == sp)).cloned().collect()
}

pub fn infer(s: &Settings) -> Result<(), Failure> {
    let state = TrainState::load(&s.path("checkpoint")?)?;
    let model = state.best_model();
    let out = s.path("out")?;
    let do_refine = s.flag("refine")?;
    match (s.optional_path("keypoints"), s.optional_path("data")) {
        (Some(path), None) => {
            let rec = degrade(s, &KeypointRecord::read(&path)?, "single")?;
            let result = infer_one(&model, &rec, do_refine)?;
            s.write_echo(&out)?;
            write(&out.join("tree.symh"), &serialize_tree(&result.tree))?;
            if let Some(report) = &result.report {
                let path = s.optional_path("report").unwrap_or_else(|| out.join("report.json"));
                write(&path, &report_json(report)?)?;
            }
            println!("wrote {}", out.join("tree.symh").display());
        }
        (None, Some(data)) => {
            let manifest = read_manifest(&data)?;
            let entries = selected(&manifest, parse_split(s)?);
            let results = entries
                .par_iter()
                .map(|e| {
                    let rec = KeypointRecord::read(&sample_dir(&data, &e.id).join("keypoints.json"))?;
                    infer_one(&model, &degrade(s, &rec, &e.id)?, do_refine)
                })
                .collect::<Result<Vec<_>, Failure>>()?;
            s.write_echo(&out)?;
            write_manifest(&out, &Manifest { samples: entries.clone(), count: entries.len(), ..manifest })?;
            for (e, r) in entries.iter().zip(&results) {
                let dir = sample_dir(&out, &e.id);
                write(&dir.join("tree.symh"), &serialize_tree(&r.tree))?;
                if let Some(report) = &r.report {
                    write(&dir.join("report.json"), &report_json(report)?)?;
                }
            }
            println!("wrote {} predictions to {}", results.len(), out.display());
        }
        _ => return Err(Failure::validation("infer needs exactly one of --keypoints or --data")),
    }
    Ok(())
}

pub const METRICS_FILE: &str = "metrics.csv";

pub fn eval(s: &Settings) -> Result<(), Failure> {
    let (pred, gt, out) = (s.path("pred")?, s.path("gt")?, s.path("out")?);
    let resolution: usize = s.parse("resolution")?;
    let manifest = read_manifest(&gt)?;
    let entries = selected(&manifest, parse_split(s)?);
    let rows = entries
        .par_iter()
        .map(|e| {
            let p = read_tree(&sample_dir(&pred, &e.id).join("tree.symh"))?;
            check_tree(&p, &format!("prediction {}", e.id))?;
            let g = read_tree(&sample_dir(&gt, &e.id).join("tree.symh"))?;
            check_tree(&g, &format!("ground truth {}", e.id))?;
            let r = metrics::evaluate(&p, &g, resolution)?;
            if ![r.e_h, r.e_h95, r.iou, r.sms].iter().all(|v| v.is_finite()) {
                return Err(Failure::numeric(format!("non-finite metric for {}", e.id)));
            }
            Ok(r)
        })
        .collect::<Result<Vec<EvalResult>, Failure>>()?;
    let mut csv = String::from("id,E_H,E_H95,IoU,SMS\n");
    let line = |csv: &mut String, id: &str, r: &EvalResult| {
        writeln!(csv, "{id},{:.6},{:.6},{:.6},{:.6}", r.e_h, r.e_h95, r.iou, r.sms).expect("writing to a string");
    };
    for (e, r) in entries.iter().zip(&rows) {
        line(&mut csv, &e.id, r);
    }
    let mean = metrics::mean(&rows);
    line(&mut csv, "mean", &mean);
    s.write_echo(&out)?;
    write(&out.join(METRICS_FILE), &csv)?;
    println!(
        "{} samples: E_H {:.4}  E_H95 {:.4}  IoU {:.4}  SMS {:.4}",
        rows.len(),
        mean.e_h,
        mean.e_h95,
        mean.iou,
        mean.sms
    );
    Ok(())
}

/// Quads of a box as corner indices; corner `k` has bit `i` set when it
/// lies on the positive side of axis `i`.
fn box_faces() -> Vec<[usize; 4]> {
    let mut faces = Vec::new();
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in 0..2 {
            let corner = |a: usize, b: usize| side << axis | a << u | b << v;
            faces.push([corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)]);
        }
    }
    faces
}

/// Wavefront OBJ of the flattened boxes: 8 vertices and 12 outward-facing
/// triangles per box.
pub fn obj_mesh(obbs: &[Obb]) -> String {
    let mut s = String::new();
    for (b, obb) in obbs.iter().enumerate() {
        writeln!(s, "o box{b}").expect("writing to a string");
        let c = obb.corners();
        for p in &c {
            writeln!(s, "v {} {} {}", p.x, p.y, p.z).expect("writing to a string");
        }
        for q in box_faces() {
            for tri in [[q[0], q[1], q[2]], [q[0], q[2], q[3]]] {
                let n = (c[tri[1]] - c[tri[0]]).cross(&(c[tri[2]] - c[tri[0]]));
                let mid = (c[tri[0]] + c[tri[1]] + c[tri[2]]) / 3.0;
                let tri = if n.dot(&(mid - obb.center)) < 0.0 { [tri[0], tri[2], tri[1]] } else { tri };
                let base = 8 * b + 1;
                writeln!(s, "f {} {} {}", base + tri[0], base + tri[1], base + tri[2]).expect("writing to a string");
            }
        }
    }
    s
}

pub const MESH_FILE: &str = "mesh.obj";

pub fn export_obj(s: &Settings) -> Result<(), Failure> {
    let tree = read_tree(&s.path("tree")?)?;
    check_tree(&tree, "input")?;
    let obbs = flatten_tree(&tree)?;
    let out = s.path("out")?;
    s.write_echo(&out)?;
    write(&out.join(MESH_FILE), &obj_mesh(&obbs))?;
    println!("wrote {} boxes to {}", obbs.len(), out.join(MESH_FILE).display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use symh::symh::Vec3;

    #[test]
    fn unit_cube_mesh() {
        let mesh = obj_mesh(&[Obb::axis_aligned(Vec3::zeros(), Vec3::repeat(2.0))]);
        let verts: Vec<Vec3> = mesh
            .lines()
            .filter_map(|l| l.strip_prefix("v "))
            .map(|l| {
                let v: Vec<f64> = l.split(' ').map(|x| x.parse().unwrap()).collect();
                Vec3::new(v[0], v[1], v[2])
            })
            .collect();
        let faces: Vec<[usize; 3]> = mesh
            .lines()
            .filter_map(|l| l.strip_prefix("f "))
            .map(|l| {
                let f: Vec<usize> = l.split(' ').map(|x| x.parse::<usize>().unwrap() - 1).collect();
                [f[0], f[1], f[2]]
            })
            .collect();
        assert_eq!((verts.len(), faces.len()), (8, 12));
        // Outward winding: the signed volume is that of the cube.
        let volume: f64 = faces.iter().map(|f| verts[f[0]].dot(&verts[f[1]].cross(&verts[f[2]])) / 6.0).sum();
        assert!((volume - 8.0).abs() < 1e-12, "{volume}");
    }
}
