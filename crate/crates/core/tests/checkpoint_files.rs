use dropkey::cli::{Checkpoint, CheckpointError};
use dropkey::vit::{init_params, TinyViTConfig, TinyViTParams};
use dropkey::Error;

fn model() -> TinyViTConfig {
    TinyViTConfig {
        height: 8,
        width: 8,
        channels: 1,
        patch_size: 4,
        embed_dim: 8,
        heads: 2,
        depth: 2,
        mlp_ratio: 2,
        num_classes: 3,
    }
}

#[test]
fn params_round_trip_through_disk() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("m.dkcp");
    let params = init_params(&model(), 7).unwrap();
    params.to_checkpoint().write(&path).unwrap();
    let back = TinyViTParams::from_checkpoint(&model(), &Checkpoint::read(&path).unwrap()).unwrap();
    for ((na, a), (nb, b)) in params.named().into_iter().zip(back.named()) {
        assert_eq!(na, nb);
        let bits = |t: &dropkey::numerics::Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a), bits(b), "{na}");
    }
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(Checkpoint::decode(&bytes).unwrap().encode(), bytes);
}

#[test]
fn wrong_model_is_rejected() {
    let params = init_params(&model(), 1).unwrap();
    let other = TinyViTConfig { embed_dim: 16, ..model() };
    assert!(TinyViTParams::from_checkpoint(&other, &params.to_checkpoint()).is_err());
}

#[test]
fn unknown_version_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("v.dkcp");
    let mut bytes = init_params(&model(), 1).unwrap().to_checkpoint().encode();
    bytes[4..8].copy_from_slice(&99u32.to_le_bytes());
    std::fs::write(&path, bytes).unwrap();
    assert!(matches!(Checkpoint::read(&path), Err(Error::Checkpoint(CheckpointError::UnsupportedVersion(99)))));
}
