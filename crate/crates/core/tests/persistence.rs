mod common;

use std::fs;

use common::{instances, random_points, small_model};
use mendkit::checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta, LATENTS_FILE, PARAMS_FILE};
use mendkit::config::ShapeClass;
use mendkit::dataset::{read_samples, write_samples};
use mendkit::MendError;

#[test]
fn samples_round_trip_bit_identically() {
    let inst = instances(ShapeClass::Mugs, 1, 11).remove(0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.occs");
    write_samples(&path, &inst.samples).unwrap();
    let back = read_samples(&path, inst.samples.n_uniform).unwrap();
    assert_eq!(back, inst.samples);
    let again = dir.path().join("b.occs");
    write_samples(&again, &back).unwrap();
    assert_eq!(fs::read(&path).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn truncated_samples_report_offset() {
    let inst = instances(ShapeClass::Boxes, 1, 12).remove(0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.occs");
    write_samples(&path, &inst.samples).unwrap();
    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
    match read_samples(&path, inst.samples.n_uniform) {
        Err(MendError::Format { offset, .. }) => assert!(offset > 0),
        other => panic!("unexpected {:?}", other),
    }
    fs::write(&path, b"NOPE").unwrap();
    assert!(matches!(read_samples(&path, 0), Err(MendError::Format { .. })));
}

#[test]
fn checkpoint_round_trip_is_bit_identical() {
    let model = small_model(3, 2, 6, 3, 7).cast::<f32>();
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let meta = CheckpointMeta::new(model.arch, 0.2, 7);
    save_checkpoint(&a, &model, meta).unwrap();
    let (back, meta_back) = load_checkpoint(&a).unwrap();
    assert_eq!(back.instance_ids(), model.instance_ids());
    assert_eq!(meta_back.architecture, model.arch);
    let pts = random_points(50, 1);
    for k in 0..3 {
        assert_eq!(back.predict(k, &pts).unwrap(), model.predict(k, &pts).unwrap());
    }
    let b = dir.path().join("b");
    save_checkpoint(&b, &back, meta_back).unwrap();
    for f in [PARAMS_FILE, LATENTS_FILE, "checkpoint.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{}", f);
    }
}

#[test]
fn damaged_checkpoint_is_rejected() {
    let model = small_model(2, 2, 4, 1, 8).cast::<f32>();
    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(dir.path(), &model, CheckpointMeta::new(model.arch, 0.0, 0)).unwrap();
    let p = dir.path().join(PARAMS_FILE);
    let mut bytes = fs::read(&p).unwrap();
    bytes.truncate(bytes.len() - 4);
    fs::write(&p, bytes).unwrap();
    assert!(load_checkpoint(dir.path()).is_err());
    assert!(load_checkpoint(&dir.path().join("missing")).is_err());
}
