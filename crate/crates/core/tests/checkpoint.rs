use qrnn::checkpoint::{Checkpoint, Entry, EntryKind};
use qrnn::models::{CellKind, FrameConfig, FrameModel, SumConfig, SumModel};
use qrnn::training::Model;
use qrnn::{Error, Tensor};

fn meta() -> Vec<(String, String)> {
    vec![("task".into(), "sum".into()), ("scheme".into(), "tc-normal".into())]
}

#[test]
fn model_round_trip_through_a_file() {
    let model: SumModel<f32> = SumModel::new(SumConfig { hidden: 8, ..Default::default() }, 1).unwrap();
    let ck = Checkpoint::from_model(&model, meta());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    ck.save(&path).unwrap();
    let back: Checkpoint<f32> = Checkpoint::load(&path).unwrap();
    assert_eq!(back, ck);
    assert_eq!(back.meta("scheme"), Some("tc-normal"));

    let mut other: SumModel<f32> = SumModel::new(SumConfig { hidden: 8, ..Default::default() }, 99).unwrap();
    assert_ne!(other.params().iter().next().unwrap().value, model.params().iter().next().unwrap().value);
    back.apply_to(&mut other).unwrap();
    for (a, b) in other.params().iter().zip(model.params().iter()) {
        assert_eq!(a.value, b.value);
        assert_eq!(a.quantizable, b.quantizable);
    }
}

#[test]
fn buffers_are_saved() {
    let mut model: FrameModel<f32> = FrameModel::new(FrameConfig { size: 8, hidden_channels: 2, ..Default::default() }, 1).unwrap();
    model.set_buffer("bn.running_mean", &Tensor::from_vec(&[2], vec![0.25, -1.0])).unwrap();
    let ck = Checkpoint::from_model(&model, Vec::new());
    let entry = ck.entry("bn.running_mean").unwrap();
    assert_eq!(entry.kind, EntryKind::Buffer);
    let bytes = ck.encode().unwrap();
    let back: Checkpoint<f32> = Checkpoint::decode(&bytes, "mem").unwrap();
    let mut fresh: FrameModel<f32> = FrameModel::new(FrameConfig { size: 8, hidden_channels: 2, ..Default::default() }, 5).unwrap();
    back.apply_to(&mut fresh).unwrap();
    let bufs = fresh.buffers();
    let mean = &bufs.iter().find(|(n, _)| n == "bn.running_mean").unwrap().1;
    assert_eq!(mean.data(), &[0.25, -1.0]);
}

#[test]
fn layout_is_version_manifest_payload() {
    let ck = Checkpoint::<f32> {
        meta: vec![("k".into(), "v w".into())],
        entries: vec![Entry {
            name: "a.W".into(),
            kind: EntryKind::Param,
            quantizable: true,
            tensor: Tensor::from_vec(&[2], vec![1.5, -2.0]),
        }],
    };
    let bytes = ck.encode().unwrap();
    assert_eq!(bytes[0], 1);
    let len = u32::from_le_bytes(bytes[1..5].try_into().unwrap()) as usize;
    let manifest = std::str::from_utf8(&bytes[5..5 + len]).unwrap();
    assert_eq!(manifest, "dtype f32\nmeta k = v w\ntensor a.W param 1 2\n");
    assert_eq!(&bytes[5 + len..5 + len + 4], &1.5f32.to_le_bytes());
    assert_eq!(bytes.len(), 5 + len + 8);
}

#[test]
fn corrupt_files_are_rejected() {
    let model: SumModel<f32> = SumModel::new(SumConfig { hidden: 4, cell: CellKind::Gru, ..Default::default() }, 1).unwrap();
    let bytes = Checkpoint::from_model(&model, meta()).encode().unwrap();
    let parse_err = |b: &[u8]| matches!(Checkpoint::<f32>::decode(b, "x"), Err(Error::Parse { .. }));
    assert!(parse_err(&bytes[..3]));
    assert!(parse_err(&bytes[..bytes.len() - 1]));
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(parse_err(&extra));
    let mut version = bytes.clone();
    version[0] = 9;
    assert!(parse_err(&version));
    // Reading f32 data as f64 is a data error, not a silent cast.
    assert!(matches!(Checkpoint::<f64>::decode(&bytes, "x"), Err(Error::Data(_))));
    assert!(matches!(Checkpoint::<f32>::load("/nonexistent/m.ckpt"), Err(Error::Io { .. })));
}

#[test]
fn mismatched_model_is_a_data_error() {
    let small: SumModel<f32> = SumModel::new(SumConfig { hidden: 4, ..Default::default() }, 1).unwrap();
    let ck = Checkpoint::from_model(&small, Vec::new());
    let mut big: SumModel<f32> = SumModel::new(SumConfig { hidden: 6, ..Default::default() }, 1).unwrap();
    assert!(ck.apply_to(&mut big).is_err());
    let mut gru: SumModel<f32> = SumModel::new(SumConfig { hidden: 4, cell: CellKind::Gru, ..Default::default() }, 1).unwrap();
    assert!(matches!(ck.apply_to(&mut gru), Err(Error::Data(_))));
}
