mod common;

use advmark::dataset::{decode_png, encode_png, export_dataset, load_image_directory, quantize_u8};
use advmark_core::data::{synth_dataset, SynthConfig};
use advmark_core::tensor::Tensor;
use image::{Rgb, RgbImage};

#[test]
fn quantization_rounds_half_to_even_and_clamps() {
    assert_eq!(quantize_u8(0.0), 0);
    assert_eq!(quantize_u8(1.0), 255);
    assert_eq!(quantize_u8(-0.5), 0);
    assert_eq!(quantize_u8(2.0), 255);
    assert_eq!(quantize_u8(128.0 / 255.0), 128);
}

#[test]
fn synthetic_export_and_import_is_identity() {
    let all = synth_dataset(&SynthConfig {
        seed: 9,
        per_class: 3,
        resolution: 8,
        noise_std: 0.05,
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = export_dataset(&all, dir.path()).unwrap();
    assert_eq!(written.len(), all.len());
    let back = load_image_directory(dir.path(), 8).unwrap();
    assert_eq!(back.class_names(), all.class_names());
    assert_eq!(back.len(), all.len());
    for (a, b) in all.samples().iter().zip(back.samples()) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.label, b.label);
        assert_eq!(a.image(), b.image());
    }
}

fn save(img: &RgbImage, path: &std::path::Path) {
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    img.save(path).unwrap();
}

#[test]
fn same_size_load_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let img = RgbImage::from_fn(2, 2, |x, y| Rgb([(10 * x) as u8, (100 * y) as u8, 255]));
    save(&img, &dir.path().join("a/p.png"));
    let data = load_image_directory(dir.path(), 2).unwrap();
    let t = data.samples()[0].image();
    assert_eq!(t.shape(), &[3, 2, 2]);
    let expect = [0.0, 10.0, 0.0, 10.0, 0.0, 0.0, 100.0, 100.0, 255.0, 255.0, 255.0, 255.0];
    let expect: Vec<f32> = expect.iter().map(|v| *v as f32 / 255.0).collect();
    assert_eq!(t.data(), &expect[..]);
    assert_eq!(data.samples()[0].id, "a/p");
}

#[test]
fn checkerboard_downsamples_to_uniform_grey() {
    let dir = tempfile::tempdir().unwrap();
    let img = RgbImage::from_fn(4, 4, |x, y| if (x + y) % 2 == 0 { Rgb([255; 3]) } else { Rgb([0; 3]) });
    save(&img, &dir.path().join("c/board.png"));
    let data = load_image_directory(dir.path(), 2).unwrap();
    for v in data.samples()[0].image().data() {
        assert!((v - 0.5).abs() < 1e-6, "{v}");
    }
}

#[test]
fn classes_are_sorted_and_empty_classes_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let px = RgbImage::from_pixel(3, 3, Rgb([1, 2, 3]));
    save(&px, &dir.path().join("zebra/1.png"));
    save(&px, &dir.path().join("ant/2.png"));
    save(&px, &dir.path().join("ant/1.png"));
    let data = load_image_directory(dir.path(), 3).unwrap();
    assert_eq!(data.class_names(), &["ant".to_string(), "zebra".to_string()]);
    let ids: Vec<&str> = data.samples().iter().map(|s| s.id.as_str()).collect();
    assert_eq!(ids, ["ant/1", "ant/2", "zebra/1"]);
    assert_eq!(data.labels(), vec![0, 0, 1]);

    std::fs::create_dir_all(dir.path().join("empty")).unwrap();
    assert!(load_image_directory(dir.path(), 3).is_err());
}

#[test]
fn png_round_trip_on_the_8bit_grid() {
    let data: Vec<f32> = (0..3 * 5 * 4).map(|i| ((i * 37) % 256) as f32 / 255.0).collect();
    let t = Tensor::new(&[3, 5, 4], data).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.png");
    std::fs::write(&path, encode_png(&t).unwrap()).unwrap();
    assert_eq!(decode_png(&path).unwrap(), t);
    assert!(encode_png(&Tensor::new(&[1, 2, 2], vec![0.0; 4]).unwrap()).is_err());
}
