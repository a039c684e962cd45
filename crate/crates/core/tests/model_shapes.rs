use maepose::model::{
    decode_heatmaps, embed_patches, encode, gaussian_targets, gcn_head, heatmaps_to_skeleton, mlp_head, patchify,
    recon_loss, reconstruct, sample_mask, Bound, Head, ModelConfig, ParamStore, Parts,
};
use maepose_tensor::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(0.0..1.0)).collect()
}

fn small() -> ModelConfig {
    ModelConfig {
        height: 32,
        width: 32,
        patch: [2, 8, 8],
        embed_dim: 16,
        encoder_depth: 2,
        encoder_heads: 2,
        decoder_depth: 1,
        decoder_dim: 8,
        decoder_heads: 2,
        pose_channels: [8, 8, 4],
        mlp_hidden: 8,
        gcn_hidden: 4,
        ..ModelConfig::default()
    }
}

#[test]
fn full_size_token_and_mask_counts() {
    let cfg = ModelConfig::default();
    assert_eq!(cfg.num_tokens(), 1960);
    for seed in 0..5 {
        let plan = sample_mask(cfg.num_tokens(), cfg.mask_ratio, seed).unwrap();
        assert_eq!((plan.masked.len(), plan.visible.len()), (1764, 196));
        let mut all: Vec<usize> = plan.masked.iter().chain(&plan.visible).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..1960).collect::<Vec<_>>());
    }
}

#[test]
fn full_size_pose_decoder_output() {
    let cfg = ModelConfig::default();
    let store = ParamStore::init(&cfg, Parts { recon_decoder: false, head: Some(Head::Heatmap) }, 0).unwrap();
    let p = Bound::frozen(&store, cfg.ln_eps).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let features = Tensor::new(&[1, 1960, 384], random(&mut rng, 1960 * 384)).unwrap();
    let maps = decode_heatmaps(&cfg, &p, &features).unwrap();
    assert_eq!(maps.shape(), &[1, 5, 13, 56, 56]);
    assert!(maps.data().iter().all(|v| v.is_finite()));
}

#[test]
fn full_size_recon_loss_ignores_visible_patches() {
    let cfg = ModelConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let clip = 20 * 224 * 224;
    let frames = random(&mut rng, clip);
    let plan = sample_mask(cfg.num_tokens(), cfg.mask_ratio, 3).unwrap();
    let pred = Tensor::new(&[1, 1764, 512], random(&mut rng, 1764 * 512)).unwrap();

    // pixel index of each patch slot, so visible patches can be overwritten in place
    let index: Vec<f32> = (0..clip).map(|i| i as f32).collect();
    let slots = patchify(&cfg, &index, 1);
    let mut perturbed = frames.clone();
    for &t in &plan.visible {
        for &src in &slots[t * 512..(t + 1) * 512] {
            perturbed[src as usize] = rng.random_range(-5.0..5.0);
        }
    }
    let plans = [plan];
    let a = Tensor::new(&[1, 1, 20, 224, 224], frames).unwrap();
    let b = Tensor::new(&[1, 1, 20, 224, 224], perturbed).unwrap();
    let la = recon_loss(&cfg, &pred, &a, &plans).unwrap().item();
    let lb = recon_loss(&cfg, &pred, &b, &plans).unwrap().item();
    assert_eq!(la.to_bits(), lb.to_bits());
}

#[test]
fn small_model_forward_chain() {
    let cfg = small();
    cfg.validate().unwrap();
    let store = ParamStore::init(&cfg, Parts { recon_decoder: true, head: Some(Head::Heatmap) }, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = Tensor::new(&[2, 1, 20, 32, 32], random(&mut rng, 2 * 20 * 32 * 32)).unwrap();
    let p = Bound::train(&store, cfg.ln_eps).unwrap();

    let tokens = embed_patches(&cfg, &p, &x, "patch_embed").unwrap();
    assert_eq!(tokens.shape(), &[2, 160, 16]);
    let plans: Vec<_> = (0..2).map(|s| sample_mask(160, 0.9, s).unwrap()).collect();
    let visible = encode(&cfg, &p, &tokens, Some(&plans)).unwrap();
    assert_eq!(visible.shape(), &[2, 16, 16]);
    let pred = reconstruct(&cfg, &p, &visible, &plans).unwrap();
    assert_eq!(pred.shape(), &[2, 144, 128]);
    let loss = recon_loss(&cfg, &pred, &x, &plans).unwrap();
    assert!(loss.item().is_finite());
    loss.backward().unwrap();
    let grads = p.grads();
    assert!(grads["patch_embed.weight"].iter().any(|&g| g != 0.0));
    assert!(grads["encoder.blocks.1.mlp.fc2.weight"].iter().any(|&g| g != 0.0));

    let all = encode(&cfg, &p, &tokens, None).unwrap();
    assert_eq!(all.shape(), &[2, 160, 16]);
    assert_eq!(decode_heatmaps(&cfg, &p, &all).unwrap().shape(), &[2, 5, 13, 16, 16]);
}

#[test]
fn regression_heads_emit_unit_coordinates() {
    let cfg = small();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let features = Tensor::new(&[3, 160, 16], random(&mut rng, 3 * 160 * 16)).unwrap();
    for head in [Head::Mlp, Head::Gcn] {
        let store = ParamStore::init(&cfg, Parts { recon_decoder: false, head: Some(head) }, 7).unwrap();
        let p = Bound::frozen(&store, cfg.ln_eps).unwrap();
        let out = match head {
            Head::Mlp => mlp_head(&cfg, &p, &features),
            _ => gcn_head(&cfg, &p, &features),
        }
        .unwrap();
        assert_eq!(out.shape(), &[3, 5, 13, 2]);
        assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn heatmap_round_trip_on_a_thousand_joints() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let labels = random(&mut rng, 2000);
    let maps = gaussian_targets(&labels, 2.0, 56, 56);
    assert_eq!(maps.clamped, 0);
    let back = heatmaps_to_skeleton(&maps.data, 56, 56);
    let worst = labels.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0f32, f32::max);
    assert!(worst <= 1.0 / 56.0, "{worst}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn argmax_decoding_ignores_monotone_transforms(
        maps in prop::collection::vec(-3f32..3.0, 3 * 7 * 5),
        scale in 0.1f32..0.5,
        shift in -2f32..2.0,
    ) {
        let base = heatmaps_to_skeleton(&maps, 7, 5);
        let squashed: Vec<f32> = maps.iter().map(|v| (scale * v).tanh() + shift).collect();
        let cubed: Vec<f32> = maps.iter().map(|v| v * v * v).collect();
        prop_assert_eq!(&base, &heatmaps_to_skeleton(&squashed, 7, 5));
        prop_assert_eq!(&base, &heatmaps_to_skeleton(&cubed, 7, 5));
    }

    #[test]
    fn targets_peak_at_the_label(x in 0f32..1.0, y in 0f32..1.0, sigma in 0.5f64..3.0) {
        let t = gaussian_targets(&[x, y], sigma, 20, 30);
        let back = heatmaps_to_skeleton(&t.data, 20, 30);
        prop_assert!((back[0] - x).abs() <= 1.0 / 30.0 + 1e-6);
        prop_assert!((back[1] - y).abs() <= 1.0 / 20.0 + 1e-6);
    }
}
