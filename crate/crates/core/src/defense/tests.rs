use super::*;
use crate::data::{synthesize, SynthMode};
use crate::error::Error;
use crate::model::{build_cifar_net, build_lenet, forward, prepare_input, seed_weights, LayerSpec, ModelSpec};
use crate::ops::scale;
use crate::profiler::MonteCarlo;

fn images(n: usize, seed: u64) -> crate::data::Dataset {
    synthesize(n, &[1, 28, 28], seed, SynthMode::Uniform).unwrap()
}

#[test]
fn identity_plan_is_identity() {
    let ds = images(5, 1);
    let out = alter_validation(&ds, &ScalePlan::identity()).unwrap();
    assert_eq!(out.dataset.items, ds.items);
    assert!(out.scales.iter().all(|s| s == &[1.0]));
}

#[test]
fn per_image_doubling() {
    let ds = images(1, 2);
    let plan = ScalePlan {
        range: [2.0, 2.0],
        ..ScalePlan::default()
    };
    let half = scale(&ds.items[0].image, 0.5);
    let max = |t: &crate::tensor::Tensor| t.values().fold(f64::MIN, f64::max);
    let ds_half = crate::data::Dataset::new(
        "h",
        vec![crate::data::Item {
            image: half.clone(),
            label: 0,
        }],
        ds.source,
        10,
    )
    .unwrap();
    let out = alter_validation(&ds_half, &plan).unwrap();
    assert_eq!(max(&out.dataset.items[0].image), 2.0 * max(&half));
}

#[test]
fn scales_recorded_and_seeded() {
    let ds = images(4, 3);
    let plan = ScalePlan {
        seed: 5,
        mode: ScaleMode::PerPixel,
        range: [0.5, 2.0],
    };
    let a = alter_validation(&ds, &plan).unwrap();
    assert_eq!(a, alter_validation(&ds, &plan).unwrap());
    assert!(a.scales.iter().all(|s| s.len() == 784));
    assert!(a.scales.iter().flatten().all(|&r| (0.5..=2.0).contains(&r)));
    let b = alter_validation(&ds, &ScalePlan { seed: 6, ..plan }).unwrap();
    assert_ne!(a.scales, b.scales);
}

#[test]
fn plan_validation_and_json() {
    for range in [[0.0, 1.0], [2.0, 1.0], [-1.0, 1.0], [1.0, f64::INFINITY]] {
        assert!(ScalePlan { range, ..ScalePlan::default() }.validate().is_err());
    }
    let plan: ScalePlan = serde_json::from_str(r#"{"seed":3,"mode":"perPixel","range":[0.25,4]}"#).unwrap();
    assert_eq!(plan.mode, ScaleMode::PerPixel);
    assert_eq!(serde_json::to_value(ScalePlan::default()).unwrap()["mode"], "perImage");
}

/// conv then dense with zero biases and no activation.
fn linear_stack() -> ModelSpec {
    let arch = ModelSpec::new(
        "linear",
        vec![1, 28, 28],
        vec![
            LayerSpec::conv("conv1", 3, 5),
            LayerSpec::flatten("flatten"),
            LayerSpec::dense("fc1", 10),
        ],
    )
    .unwrap();
    let mut m = seed_weights(&arch, 4);
    for l in &mut m.layers {
        if let Some(k) = &mut l.params {
            k.bias = scale(&k.bias, 0.0);
        }
    }
    m
}

#[test]
fn scaling_commutes_with_bias_free_linear_stack() {
    let m = linear_stack();
    let ds = images(3, 7);
    for r in [2.0f32, 0.5, 4.0] {
        let plan = ScalePlan {
            range: [r as f64, r as f64],
            ..ScalePlan::default()
        };
        let altered = alter_validation(&ds, &plan).unwrap();
        for (a, d) in ds.items.iter().zip(&altered.dataset.items) {
            let c = forward(&m, &a.image).unwrap();
            let c2 = forward(&m, &d.image).unwrap();
            assert!(c2.output().bitwise_eq(&scale(c.output(), r)));
            assert_eq!(c.final_label, c2.final_label);
        }
    }
}

#[test]
fn zero_weight_model_is_inconclusive() {
    let mut m = seed_weights(&build_lenet(), 0);
    for l in &mut m.layers {
        if let Some(k) = &mut l.params {
            k.tensor = scale(&k.tensor, 0.0);
            k.bias = scale(&k.bias, 0.0);
        }
    }
    let params = AdversaryParams {
        monte_carlo: MonteCarlo { samples: 100, seed: 0 },
        ..AdversaryParams::default()
    };
    let r = evaluate_altered_defense(&m, &images(5, 1), &ScalePlan::default(), &images(5, 2), &params).unwrap();
    assert_eq!(r.verdict, Verdict::Inconclusive);
    assert!(r.detail.unwrap().contains("standard deviation"));
}

#[test]
fn crowded_adversary_bands_still_report() {
    let m = seed_weights(&build_lenet(), 30);
    let (val, stream) = (images(60, 3), images(60, 4));
    let plan = ScalePlan::default();
    let params = AdversaryParams {
        monte_carlo: MonteCarlo { samples: 2000, seed: 1 },
        ..AdversaryParams::default()
    };
    let r = evaluate_altered_defense(&m, &val, &plan, &stream, &params).unwrap();
    assert_ne!(r.verdict, Verdict::Inconclusive);
    let seen = crate::profiler::profile_layer(&m, &alter_validation(&val, &plan).unwrap().dataset, "fc1").unwrap();
    let expected: usize = r.adversary_bands.iter().map(|b| seen.count_in(b.lo, b.hi)).sum();
    assert_eq!(r.adversary_self_collision_count, Some(expected as u64));
    assert!(r.adversary_trigger_rate_designed.is_some() && r.adversary_trigger_rate_actual.is_some());
}

#[test]
fn lenet_cut_before_fc1() {
    let m = build_lenet();
    let views = partition(&m, &PartitionSpec::CutBefore(vec!["fc1".into()])).unwrap();
    assert_eq!(
        views[0].layer_names(),
        ["conv1", "relu1", "pool1", "conv2", "relu2", "pool2", "flatten"]
    );
    assert_eq!(views[1].layer_names(), ["fc1", "relu3", "fc2", "relu4", "fc3"]);
    assert_eq!((views[0].output_dims.clone(), views[1].input_dims.clone()), (vec![256], vec![256]));
}

#[test]
fn group_counts() {
    let m = build_lenet();
    let n = m.layers.len();
    assert!(matches!(partition(&m, &PartitionSpec::Groups(1)), Err(Error::Config(_))));
    assert!(partition(&m, &PartitionSpec::Groups(n + 1)).is_err());
    let singles = partition(&m, &PartitionSpec::Groups(n)).unwrap();
    assert!(singles.iter().all(|v| v.layers.len() == 1));
    let five = partition(&m, &PartitionSpec::Groups(5)).unwrap();
    assert_eq!(five.iter().map(|v| v.layers.len()).collect::<Vec<_>>(), [3, 3, 2, 2, 2]);
    for bad in [vec!["conv1".to_string()], vec!["fc1".into(), "pool1".into()], vec!["nope".into()], vec![]] {
        assert!(partition(&m, &PartitionSpec::CutBefore(bad)).is_err());
    }
}

#[test]
fn chained_views_match_full_forward() {
    for arch in [build_lenet(), build_cifar_net()] {
        let m = seed_weights(&arch, 11);
        let ds = synthesize(3, &m.input_shape, 12, SynthMode::Uniform).unwrap();
        for k in [2, 4, m.layers.len()] {
            let views = partition(&m, &PartitionSpec::Groups(k)).unwrap();
            for it in &ds.items {
                let full = forward(&m, &it.image).unwrap();
                let (out, label) = chain_forward(&views, &prepare_input(&m, &it.image).unwrap()).unwrap();
                assert!(out.bitwise_eq(full.output()));
                assert_eq!(label, full.final_label);
            }
        }
    }
}

#[test]
fn distributed_verdict_and_findings() {
    let m = seed_weights(&build_lenet(), 1);
    let views = partition(&m, &PartitionSpec::CutBefore(vec!["fc1".into()])).unwrap();
    let r = evaluate_distributed_defense(&views, &m).unwrap();
    assert_eq!(r.verdict, Verdict::Effective);
    assert_eq!(r.kind, DefenseKind::Distributed);
    assert!(r.exposure_findings.iter().all(|f| !f.contains("VIOLATION")));
    assert!(r.exposure_findings.iter().any(|f| f.starts_with("group 0: output")));
    assert_eq!(r.adversary_trigger_rate_actual, None);
    let bytes: usize = views.iter().map(DesignerView::parameter_bytes).sum();
    assert_eq!(bytes, m.parameter_bytes());
}

#[test]
fn inconsistent_views_rejected() {
    let m = seed_weights(&build_lenet(), 1);
    let views = partition(&m, &PartitionSpec::Groups(3)).unwrap();
    assert!(evaluate_distributed_defense(&views[..1], &m).is_err());
    assert!(evaluate_distributed_defense(&views[..2], &m).is_err());
    let mut swapped = views.clone();
    swapped.swap(0, 1);
    assert!(evaluate_distributed_defense(&swapped, &m).is_err());
    let mut tampered = views.clone();
    tampered[1].layers.iter_mut().find(|l| l.params.is_some()).unwrap().params = None;
    assert!(evaluate_distributed_defense(&tampered, &m).is_err());
}

#[test]
fn view_files_hold_only_own_group() {
    let m = seed_weights(&build_lenet(), 1);
    let views = partition(&m, &PartitionSpec::Groups(2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for v in &views {
        v.save(dir.path()).unwrap();
    }
    let text = std::fs::read_to_string(dir.path().join("group0.json")).unwrap();
    let frag: ViewFragment = serde_json::from_str(&text).unwrap();
    assert_eq!(frag.input_shape, vec![1, 28, 28]);
    assert!(!text.contains("fc1") && !text.contains("\"params\""));
    let blob = std::fs::read(dir.path().join("group0.dlaw")).unwrap();
    let set = crate::model::decode_tensors(&blob).unwrap();
    assert_eq!(set.keys().collect::<Vec<_>>(), ["conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias"]);
}
