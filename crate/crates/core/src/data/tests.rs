use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::rng::rng_from_seed;
use proptest::prelude::*;

fn small_synth(seed: u64, per_class: usize, noise_std: f64) -> DatasetSplit {
    synth_dataset(&SynthConfig {
        seed,
        per_class,
        resolution: 16,
        noise_std,
    })
    .unwrap()
}

fn toy_split(n: usize) -> DatasetSplit {
    let samples = (0..n)
        .map(|i| {
            let img = Tensor::full(&[1, 2, 2], (i % 5) as f32 / 4.0);
            Sample::new(img, i % 2, format!("s{i}")).unwrap()
        })
        .collect();
    DatasetSplit::new(samples, vec!["a".into(), "b".into()], SplitTag::Train).unwrap()
}

#[test]
fn sample_rejects_out_of_range_pixels() {
    let img = Tensor::new(&[1, 1, 2], vec![0.5, 1.5]).unwrap();
    assert!(matches!(
        Sample::new(img, 0, "x"),
        Err(DataError::PixelRange { index: 1, .. })
    ));
    let nan = Tensor::new(&[1, 1, 1], vec![f32::NAN]).unwrap();
    assert!(Sample::new(nan, 0, "x").is_err());
}

#[test]
fn split_rejects_bad_labels_and_duplicate_ids() {
    let img = Tensor::zeros(&[1, 2, 2]);
    let s = |label, id: &str| Sample::new(img.clone(), label, id).unwrap();
    let names: Vec<String> = vec!["a".into(), "b".into()];
    assert!(matches!(
        DatasetSplit::new(vec![s(2, "x")], names.clone(), SplitTag::Train),
        Err(DataError::Label { label: 2, classes: 2 })
    ));
    assert!(matches!(
        DatasetSplit::new(vec![s(0, "x"), s(1, "x")], names, SplitTag::Train),
        Err(DataError::DuplicateId(_))
    ));
}

#[test]
fn synth_counts_and_determinism() {
    let a = small_synth(3, 10, 0.0);
    assert_eq!(a.len(), 50);
    assert_eq!(a.class_counts(), [10; 5]);
    assert_eq!(a, small_synth(3, 10, 0.0));
    let noisy = small_synth(3, 10, 0.05);
    assert_eq!(noisy, small_synth(3, 10, 0.05));
    assert_ne!(noisy, small_synth(4, 10, 0.05));
    for s in noisy.samples() {
        assert_eq!(s.image().shape(), &[3, 16, 16]);
        // Pixels sit exactly on the 8-bit grid.
        assert!(s.image().data().iter().all(|&v| (v * 255.0).round() / 255.0 == v));
    }
}

#[test]
fn synth_rejects_bad_parameters() {
    let bad = |per_class, noise_std| {
        synth_dataset(&SynthConfig {
            seed: 0,
            per_class,
            resolution: 8,
            noise_std,
        })
        .is_err()
    };
    assert!(bad(0, 0.0));
    assert!(bad(1, -0.1));
    assert!(bad(1, f64::NAN));
}

/// Nearest-centroid classifier on a held-out half of the benchmark.
#[test]
fn synth_classes_are_centroid_separable() {
    let data = synth_dataset(&SynthConfig {
        seed: 17,
        per_class: 60,
        resolution: 32,
        noise_std: 0.05,
    })
    .unwrap();
    let k = data.num_classes();
    let dim = data.samples()[0].image().numel();
    let (fit, held): (Vec<&Sample>, Vec<&Sample>) = data
        .samples()
        .iter()
        .enumerate()
        .partition(|(i, _)| i % 2 == 0)
        .map_pair();
    let mut centroids = vec![vec![0f64; dim]; k];
    let mut counts = vec![0usize; k];
    for s in &fit {
        counts[s.label] += 1;
        for (c, &v) in centroids[s.label].iter_mut().zip(s.image().data()) {
            *c += v as f64;
        }
    }
    for (c, &n) in centroids.iter_mut().zip(&counts) {
        c.iter_mut().for_each(|v| *v /= n as f64);
    }
    let correct = held
        .iter()
        .filter(|s| {
            let dist = |c: &Vec<f64>| -> f64 {
                c.iter()
                    .zip(s.image().data())
                    .map(|(a, &b)| (a - b as f64).powi(2))
                    .sum()
            };
            let best = (0..k)
                .min_by(|&a, &b| dist(&centroids[a]).total_cmp(&dist(&centroids[b])))
                .unwrap();
            best == s.label
        })
        .count();
    let acc = correct as f64 / held.len() as f64;
    assert!(acc > 0.8, "nearest-centroid accuracy {acc}");
}

trait MapPair<'a> {
    fn map_pair(self) -> (Vec<&'a Sample>, Vec<&'a Sample>);
}

impl<'a> MapPair<'a> for (Vec<(usize, &'a Sample)>, Vec<(usize, &'a Sample)>) {
    fn map_pair(self) -> (Vec<&'a Sample>, Vec<&'a Sample>) {
        (
            self.0.into_iter().map(|p| p.1).collect(),
            self.1.into_iter().map(|p| p.1).collect(),
        )
    }
}

#[test]
fn stratified_split_partitions_each_class() {
    let all = small_synth(1, 20, 0.05);
    let s = stratified_split(&all, SplitRatios::default(), 9).unwrap();
    assert_eq!((s.train.len(), s.val.len(), s.test.len()), (80, 10, 10));
    assert_eq!(s.train.class_counts(), [16; 5]);
    assert_eq!(s.val.class_counts(), [2; 5]);
    let mut ids: Vec<&str> = [&s.train, &s.val, &s.test]
        .iter()
        .flat_map(|p| p.samples().iter().map(|x| x.id.as_str()))
        .collect();
    ids.sort_unstable();
    let mut want: Vec<&str> = all.samples().iter().map(|x| x.id.as_str()).collect();
    want.sort_unstable();
    assert_eq!(ids, want);
    assert_eq!(s, stratified_split(&all, SplitRatios::default(), 9).unwrap());
    assert!(stratified_split(
        &all,
        SplitRatios {
            train: 0.5,
            val: 0.5,
            test: 0.5
        },
        0
    )
    .is_err());
}

#[test]
fn batches_cover_the_split() {
    let split = toy_split(10);
    let sizes: Vec<usize> = batch_iterator(&split, 4, None)
        .unwrap()
        .map(|b| b.labels.len())
        .collect();
    assert_eq!(sizes, [4, 4, 2]);
    let order: Vec<usize> = batch_iterator(&split, 4, None)
        .unwrap()
        .flat_map(|b| b.indices)
        .collect();
    assert_eq!(order, (0..10).collect::<Vec<_>>());
    let mut shuffled: Vec<usize> = batch_iterator(&split, 3, Some(5))
        .unwrap()
        .flat_map(|b| b.indices)
        .collect();
    assert_ne!(shuffled, (0..10).collect::<Vec<_>>());
    shuffled.sort_unstable();
    assert_eq!(shuffled, (0..10).collect::<Vec<_>>());
    let b = batch_iterator(&split, 4, None).unwrap().next().unwrap();
    assert_eq!(b.images.shape(), &[4, 1, 2, 2]);
    assert!(batch_iterator(&split, 0, None).is_err());
}

#[test]
fn reflect_index_mirrors_without_edge_repeat() {
    let got: Vec<usize> = (-4..8).map(|i| reflect_for_test(i, 4)).collect();
    assert_eq!(got, [2, 3, 2, 1, 0, 1, 2, 3, 2, 1, 0, 1]);
    assert_eq!(reflect_for_test(-3, 1), 0);
}

fn reflect_for_test(i: isize, n: usize) -> usize {
    augment::reflect(i, n)
}

fn ramp_image() -> Tensor<f32> {
    let data = (0..2 * 6 * 6).map(|i| i as f32 / 71.0).collect();
    Tensor::new(&[2, 6, 6], data).unwrap()
}

#[test]
fn augment_identity_flip_involution_and_shift() {
    let img = ramp_image();
    let still = AugmentDecision {
        flip: false,
        dx: AUGMENT_PAD,
        dy: AUGMENT_PAD,
    };
    assert_eq!(apply_augment(&img, still), img);
    let flip = AugmentDecision { flip: true, ..still };
    assert_eq!(apply_augment(&apply_augment(&img, flip), flip), img);
    let flipped = apply_augment(&img, flip);
    assert_eq!(flipped.data()[0], img.data()[5]);
    // Shift by one column: output (y, x) reads input (y, x + 1), reflected at the edge.
    let shifted = apply_augment(
        &img,
        AugmentDecision {
            flip: false,
            dx: AUGMENT_PAD + 1,
            dy: AUGMENT_PAD,
        },
    );
    assert_eq!(shifted.data()[0], img.data()[1]);
    assert_eq!(shifted.data()[5], img.data()[4]);
}

/// First decisions of the augmentation stream for seed 2024, recorded from
/// the first verified run.
#[test]
fn augment_stream_matches_golden_sequence() {
    let mut rng = rng_from_seed(2024);
    let got: Vec<(bool, usize, usize)> = (0..8)
        .map(|_| {
            let d = draw_augment(&mut rng);
            (d.flip, d.dx, d.dy)
        })
        .collect();
    assert_eq!(got, GOLDEN_AUGMENT);
}

const GOLDEN_AUGMENT: [(bool, usize, usize); 8] = [
    (true, 8, 8),
    (false, 3, 8),
    (false, 1, 4),
    (true, 4, 2),
    (true, 1, 7),
    (false, 5, 5),
    (false, 6, 3),
    (false, 7, 4),
];

#[test]
fn augment_preserves_label_id_and_range() {
    let data = small_synth(2, 2, 0.05);
    let mut rng = rng_from_seed(1);
    for s in data.samples() {
        let a = augment(s, &mut rng);
        assert_eq!((a.label, &a.id), (s.label, &s.id));
        assert!(a.image().data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn gaussian_kernel_is_normalized() {
    let k = gaussian_kernel(1.0).unwrap();
    assert_eq!(k.len(), 7);
    assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert!(gaussian_kernel(0.0).is_err());
    assert!(gaussian_kernel(-1.0).is_err());
}

#[test]
fn blur_of_impulse_is_kernel_outer_product() {
    let mut data = vec![0f32; 15 * 15];
    data[7 * 15 + 7] = 1.0;
    let img = Tensor::new(&[1, 15, 15], data).unwrap();
    let out = gaussian_blur(&img, 1.0).unwrap();
    // Independent oracle: unnormalized exp(-i²/2) weights for i in -3..=3.
    let raw: Vec<f64> = (-3i32..=3).map(|i| (-(i * i) as f64 / 2.0).exp()).collect();
    let z: f64 = raw.iter().sum();
    for dy in -3i32..=3 {
        for dx in -3i32..=3 {
            let want = raw[(dy + 3) as usize] * raw[(dx + 3) as usize] / (z * z);
            let got = out.data()[((7 + dy) * 15 + 7 + dx) as usize] as f64;
            assert!((got - want).abs() < 1e-7, "({dy}, {dx}): {got} vs {want}");
        }
    }
    assert_eq!(out.data()[0], 0.0);
}

#[test]
fn blur_keeps_constant_images() {
    let img = Tensor::full(&[3, 5, 4], 0.375f32);
    assert_eq!(gaussian_blur(&img, 0.8).unwrap(), img);
}

#[test]
fn bilinear_checkerboard_and_ramp() {
    let board: Vec<f32> = (0..16).map(|i| ((i / 4 + i % 4) % 2) as f32).collect();
    let img = Tensor::new(&[1, 4, 4], board).unwrap();
    let out = resize_bilinear(&img, 2, 2).unwrap();
    // Each output centre falls midway between four alternating pixels.
    assert_eq!(out.data(), [0.5; 4]);

    // v(y, x) = 4y + x; source coords 0.5 and 2.5 → 2.5, 4.5, 10.5, 12.5.
    let ramp: Vec<f32> = (0..16).map(|i| i as f32).collect();
    let out = resize_bilinear(&Tensor::new(&[1, 4, 4], ramp).unwrap(), 2, 2).unwrap();
    assert_eq!(out.data(), [2.5, 4.5, 10.5, 12.5]);

    // Upsampling 2 → 4: coords -0.25 (clamped), 0.25, 0.75, 1.25 (clamped).
    let two = Tensor::new(&[1, 1, 2], vec![0.0f32, 1.0]).unwrap();
    let up = resize_bilinear(&two, 1, 4).unwrap();
    assert_eq!(up.data(), [0.0, 0.25, 0.75, 1.0]);

    let same = ramp_image();
    assert_eq!(resize_bilinear(&same, 6, 6).unwrap(), same);
}

fn image_strategy() -> impl Strategy<Value = Tensor<f32>> {
    (1usize..3, 1usize..9, 1usize..9).prop_flat_map(|(c, h, w)| {
        proptest::collection::vec(0f32..=1.0, c * h * w)
            .prop_map(move |d| Tensor::new(&[c, h, w], d).unwrap())
    })
}

proptest! {
    #[test]
    fn preprocessing_stays_in_unit_range(
        img in image_strategy(),
        sigma in 0.1f64..3.0,
        flip: bool,
        dx in 0usize..=8,
        dy in 0usize..=8,
        oh in 1usize..12,
        ow in 1usize..12,
    ) {
        let in_range = |t: &Tensor<f32>| t.data().iter().all(|v| (0.0..=1.0).contains(v));
        prop_assert!(in_range(&gaussian_blur(&img, sigma).unwrap()));
        let decision = AugmentDecision { flip, dx, dy };
        prop_assert!(in_range(&apply_augment(&img, decision)));
        prop_assert!(in_range(&resize_bilinear(&img, oh, ow).unwrap()));
    }

    #[test]
    fn blur_contracts_variance(img in image_strategy(), sigma in 0.3f64..2.0) {
        let var = |t: &Tensor<f32>| {
            let d = t.data();
            let m = d.iter().map(|&v| v as f64).sum::<f64>() / d.len() as f64;
            d.iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>()
        };
        let before = var(&img);
        let after = var(&gaussian_blur(&img, sigma).unwrap());
        prop_assert!(after <= before + 1e-9, "{} > {}", after, before);
    }
}
