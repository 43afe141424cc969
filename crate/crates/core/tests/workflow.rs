use aquaclear::dataops::{make_pairs, synthetic_scene, DegradationConfig, PairManifest};
use aquaclear::image::to_u8;
use aquaclear::io::save_image;
use aquaclear::msr::{msr_enhance, MsrConfig};
use aquaclear::resize::upscale;
use aquaclear::pipeline::{run_method, Enhancer, Method, MethodContext, Stage, StageOrder};
use aquaclear::srcnn::{load_model, save_model, super_resolve, train, Architecture, TrainConfig, TrainingSet};
use aquaclear::{Image, ImageF, ImageF32, SrcnnModelF};

fn dataset(dir: &std::path::Path, n: u64) -> PairManifest {
    let src = dir.join("src");
    std::fs::create_dir_all(&src).unwrap();
    for seed in 0..n {
        let img: ImageF = synthetic_scene(32, 32, seed).unwrap();
        save_image(&to_u8(&img).unwrap(), src.join(format!("s{seed}.png"))).unwrap();
    }
    make_pairs(&src, &dir.join("pairs"), &DegradationConfig::default()).unwrap()
}

fn small_config() -> TrainConfig {
    TrainConfig {
        iterations: 10,
        batch_size: 2,
        patch_size: 16,
        patch_stride: 16,
        learning_rate: 1e-3,
        architecture: Architecture { f1: 3, f2: 1, f3: 3, n1: 4, n2: 2 },
        ..TrainConfig::default()
    }
}

#[test]
fn manifest_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let made = dataset(dir.path(), 2);
    let loaded = PairManifest::load(dir.path().join("pairs/manifest.json")).unwrap();
    assert_eq!(loaded.pairs, made.pairs);
    assert_eq!(loaded.config_hash, DegradationConfig::default().hash());
    let (deg, gt) = loaded.load_pair::<f64>(1).unwrap();
    assert_eq!((deg.height(), deg.width(), gt.height(), gt.width()), (16, 16, 32, 32));
}

#[test]
fn trained_model_survives_save_and_load() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), 2);
    let pairs = (0..2)
        .map(|i| {
            let (deg, gt) = manifest.load_pair::<f64>(i).unwrap();
            (upscale(&deg, 2).unwrap(), gt)
        })
        .collect();
    let (model, losses): (SrcnnModelF, _) = train(&TrainingSet::new(pairs).unwrap(), &small_config()).unwrap();
    assert_eq!(losses.len(), 10);
    assert!(losses.iter().all(|l| l.is_finite()));

    let path = dir.path().join("m.srcnn");
    save_model(&model, &path).unwrap();
    let back: SrcnnModelF = load_model(&path).unwrap();
    let (deg, _) = manifest.load_pair::<f64>(0).unwrap();
    let a = super_resolve(&model, &deg, 2).unwrap();
    let b = super_resolve(&back, &deg, 2).unwrap();
    let worst = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-5, "{worst}");
}

#[test]
fn every_method_matches_ground_truth_size() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), 1);
    let (deg, gt) = manifest.load_pair::<f64>(0).unwrap();
    let model: SrcnnModelF = aquaclear::srcnn::srcnn_init(&small_config().architecture, 3, 1).unwrap();
    let ctx = MethodContext::new(Some(&model), 2);
    for method in Method::ALL {
        let out = run_method(method, &deg, &ctx).unwrap();
        assert!(out.same_shape(&gt), "{method}");
        assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)), "{method}");
    }
}

#[test]
fn full_stage_is_srcnn_then_msr() {
    let model: SrcnnModelF = aquaclear::srcnn::srcnn_init(&small_config().architecture, 3, 3).unwrap();
    let img: ImageF = synthetic_scene(20, 24, 5).unwrap();
    let msr = MsrConfig::default();
    let full = Enhancer { model: Some(&model), scale_factor: 2, msr: &msr, stage: Stage::Full, order: StageOrder::SrcnnFirst };
    let expected = msr_enhance(&super_resolve(&model, &img, 2).unwrap(), &msr).unwrap();
    assert_eq!(full.enhance(&img).unwrap(), expected);
}

#[test]
fn single_and_double_precision_agree() {
    let img: ImageF = synthetic_scene(24, 24, 9).unwrap();
    let single: ImageF32 = img.cast();
    let msr = MsrConfig::default();
    let a = msr_enhance(&img, &msr).unwrap();
    let b: Image<f64> = msr_enhance(&single, &msr).unwrap().cast();
    let worst = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-3, "{worst}");
}
