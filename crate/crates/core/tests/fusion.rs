mod common;

use common::criteria::{fusion_fixture, fusion_identities};
use probefuse::features::align;
use probefuse::fusion::early_fuse;
use probefuse::probe::{search_layer, GridSpec, SearchOptions};
use probefuse::synth::layered_pack;

#[test]
fn late_fusion_identities_on_500_samples() {
    fusion_identities().unwrap();
}

#[test]
fn early_fusion_dimension_and_text_signal() {
    let (samples, split) = fusion_fixture(30, 15);
    let audio = layered_pack("audio", &samples, &[1, 2], &[], 6, 31).unwrap();
    let text = layered_pack("text", &samples, &[12], &[(12, 1.5)], 10, 32).unwrap();
    let grid = GridSpec::linear();
    let opts = SearchOptions::default();
    let fused = early_fuse(&audio, &text, &samples, &split, &grid, &opts, true).unwrap();
    assert_eq!(fused.dim, 16);
    assert_eq!(fused.block_dims, vec![6, 10]);
    assert_eq!(fused.model.dim(), 16);

    let noise_view = align(&audio, 2, &samples, &split, true).unwrap();
    let (noise, _) = search_layer(&noise_view, 2, &grid, &opts).unwrap();
    assert!(fused.dev_uar() >= noise.dev_uar, "{} < {}", fused.dev_uar(), noise.dev_uar);
    assert!(fused.dev_uar() >= noise.dev_uar + 0.2);
}
