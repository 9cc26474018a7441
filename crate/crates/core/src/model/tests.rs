use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::gradcheck::{central_difference, RELATIVE_FLOOR};
use crate::rng::rng_from_seed;
use rand::Rng as _;

fn toy_spec(arch: Architecture) -> ClassifierSpec {
    let mut spec = ClassifierSpec::new(arch);
    spec.resolution = 8;
    spec.channels = 1;
    spec.classes = 3;
    spec.arch = match arch {
        Architecture::Vit => ArchConfig::Vit(VitConfig {
            patch_size: 4,
            embed_dim: 8,
            heads: 2,
            depth: 1,
            mlp_ratio: 2,
        }),
        Architecture::Resnet => ArchConfig::Resnet(ResnetConfig {
            widths: vec![4, 6],
            blocks_per_stage: 1,
        }),
        Architecture::Vgg => ArchConfig::Vgg(VggConfig {
            widths: vec![4, 6],
            convs_per_block: 1,
            hidden: 8,
        }),
    };
    spec
}

fn random_images(n: usize, dims: [usize; 3], seed: u64) -> Tensor<f64> {
    let mut r = rng_from_seed(seed);
    let len = n * dims.iter().product::<usize>();
    let data = (0..len).map(|_| r.random::<f64>()).collect();
    Tensor::new(&[n, dims[0], dims[1], dims[2]], data).unwrap()
}

#[test]
fn vit_parameter_count_matches_closed_form() {
    let spec = ClassifierSpec::new(Architecture::Vit);
    let model = Model::<f32>::new(spec.clone(), 0).unwrap();
    // D=64, P=4·4·3=48, L=65, depth 4, hidden 128, K=5.
    let (d, p, l, hidden, k) = (64, 48, 65, 128, 5);
    let block = 2 * 2 * d + 4 * (d * d + d) + (d * hidden + hidden) + (hidden * d + d);
    let tally = (p * d + d) + d + l * d + 4 * block + 2 * d + (d * k + k);
    assert_eq!(tally, 141_701);
    assert_eq!(model.num_parameters(), tally);
    let ArchConfig::Vit(cfg) = &spec.arch else { unreachable!() };
    assert_eq!(sequence_length(&spec, cfg), 65);
}

#[test]
fn default_models_emit_one_logit_row_per_image() {
    for arch in Architecture::ALL {
        let model = Model::<f32>::new(ClassifierSpec::new(arch), 1).unwrap();
        let x = random_images(2, model.input_dims(), 5).cast::<f32>();
        let logits = forward(&model, &x).unwrap();
        assert_eq!(logits.shape(), &[2, 5], "{arch:?}");
        assert!(logits.all_finite());
    }
}

#[test]
fn initialization_is_seeded_and_bounded() {
    for arch in Architecture::ALL {
        let spec = ClassifierSpec::new(arch);
        let a = Model::<f32>::new(spec.clone(), 9).unwrap();
        let b = Model::<f32>::new(spec.clone(), 9).unwrap();
        let c = Model::<f32>::new(spec, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        for p in a.params().iter() {
            let max = p.tensor.data().iter().fold(0f32, |m, v| m.max(v.abs()));
            if p.name.ends_with(".bias") {
                assert_eq!(max, 0.0, "{}", p.name);
            } else if p.name.ends_with(".gain") {
                assert!(p.tensor.data().iter().all(|&v| v == 1.0));
            } else if p.tensor.ndim() == 4 {
                let fan_in: usize = p.tensor.shape()[1..].iter().product();
                assert!(max as f64 <= (6.0 / fan_in as f64).sqrt(), "{}", p.name);
            } else {
                assert!(max as f64 <= 2.0 * TRUNC_NORMAL_STD + 1e-7, "{}", p.name);
            }
        }
    }
}

#[test]
fn spec_validation_rejects_bad_geometry() {
    let mut spec = ClassifierSpec::new(Architecture::Vit);
    spec.resolution = 30;
    assert!(Model::<f32>::new(spec, 0).is_err());
    let mut spec = ClassifierSpec::new(Architecture::Vgg);
    spec.resolution = 4;
    assert!(Model::<f32>::new(spec, 0).is_err());
    let mut spec = ClassifierSpec::new(Architecture::Resnet);
    spec.classes = 1;
    assert!(Model::<f32>::new(spec, 0).is_err());
}

#[test]
fn wrong_input_shape_is_rejected() {
    let model = Model::<f32>::new(ClassifierSpec::new(Architecture::Vgg), 0).unwrap();
    let x = Tensor::<f32>::zeros(&[1, 3, 16, 16]);
    assert!(matches!(
        forward(&model, &x),
        Err(ModelError::InputShape { .. })
    ));
}

#[test]
fn from_params_checks_layout() {
    let spec = toy_spec(Architecture::Vgg);
    let model = Model::<f64>::new(spec.clone(), 3).unwrap();
    let ok = Model::from_params(spec.clone(), model.params().clone()).unwrap();
    assert_eq!(ok, model);

    let mut bad = ParamStore::new();
    for (i, p) in model.params().iter().enumerate() {
        let t = if i == 0 {
            Tensor::zeros(&[1, 1, 1, 1])
        } else {
            p.tensor.clone()
        };
        bad.insert(p.name.clone(), t).unwrap();
    }
    assert!(matches!(
        Model::from_params(spec.clone(), bad),
        Err(ModelError::ParamShape { .. })
    ));

    let mut short = ParamStore::new();
    for p in model.params().iter().skip(1) {
        short.insert(p.name.clone(), p.tensor.clone()).unwrap();
    }
    assert!(matches!(
        Model::from_params(spec, short),
        Err(ModelError::MissingParam(_))
    ));
}

#[test]
fn argmax_breaks_ties_toward_lowest_index() {
    let t = Tensor::<f32>::new(&[3, 3], vec![1.0, 1.0, 0.0, 0.0, 2.0, 2.0, -1.0, -1.0, -1.0]).unwrap();
    assert_eq!(argmax_rows(&t), [0, 1, 0]);
}

/// Input gradient of every architecture against central differences on an
/// 8×8 grayscale toy, in f64.
#[test]
fn input_gradient_matches_finite_differences() {
    for arch in Architecture::ALL {
        let model = Model::<f64>::new(toy_spec(arch), 11).unwrap();
        let x = random_images(2, model.input_dims(), 12);
        let labels = [0, 2];
        let before = model.clone();
        let analytic = input_gradient(&model, &x, &labels).unwrap();
        assert_eq!(model, before);
        let mut loss = |img: &Tensor<f64>| {
            let logits = forward(&model, img).unwrap();
            let (l, _) = cross_entropy_rows(&logits, &labels).unwrap();
            l.iter().sum::<f64>() / l.len() as f64
        };
        let mut worst: f64 = 0.0;
        for idx in (0..x.numel()).step_by(7) {
            let numeric = central_difference(&x, idx, 1e-6, &mut loss);
            let a = analytic.data()[idx];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
            worst = worst.max(err);
        }
        assert!(worst < 1e-5, "{arch:?}: max relative error {worst:e}");
    }
}

#[test]
fn parameter_gradients_match_finite_differences() {
    for arch in Architecture::ALL {
        let model = Model::<f64>::new(toy_spec(arch), 21).unwrap();
        let x = random_images(3, model.input_dims(), 22);
        let labels = [1, 0, 2];
        let out = model.loss_and_gradients(&x, &labels).unwrap();
        assert_eq!(out.grads.len(), model.params().len());
        let mut worst: f64 = 0.0;
        for (pi, p) in model.params().iter().enumerate() {
            let mut loss = |t: &Tensor<f64>| {
                let mut m = model.clone();
                *m.params_mut().tensors_mut().nth(pi).unwrap() = t.clone();
                m.loss_and_gradients(&x, &labels).unwrap().loss
            };
            let stride = (p.tensor.numel() / 3).max(1);
            for idx in (0..p.tensor.numel()).step_by(stride) {
                let numeric = central_difference(&p.tensor, idx, 1e-6, &mut loss);
                let a = out.grads[pi].data()[idx];
                let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
                worst = worst.max(err);
            }
        }
        assert!(worst < 1e-5, "{arch:?}: max relative error {worst:e}");
    }
}

#[test]
fn f32_and_f64_forward_agree() {
    for arch in Architecture::ALL {
        let model = Model::<f64>::new(ClassifierSpec::new(arch), 4).unwrap();
        let x = random_images(2, model.input_dims(), 6);
        let wide = forward(&model, &x).unwrap();
        let narrow = forward(&model.cast::<f32>(), &x.cast::<f32>()).unwrap();
        let diff: Vec<f64> = wide
            .data()
            .iter()
            .zip(narrow.data())
            .map(|(a, &b)| (a - b as f64).abs())
            .collect();
        assert!(diff.iter().all(|&d| d < 1e-4), "{arch:?}: {diff:?}");
    }
}
