//! Command-level behaviour: checkpoints, calibration, label independence,
//! metrics, baselines, split hygiene and task dumps.

use std::collections::hash_map::DefaultHasher;
use std::fs;
use std::hash::{Hash, Hasher};
use std::path::Path;

use lasium_core::data::{split_classes, LabeledDataset, SampleKind, SyntheticSpec};
use lasium_core::genmodel::{Generator, VaeConfig, CALIBRATION_PAIRS};
use lasium_core::harness::{
    cmd_baseline_scratch, cmd_baseline_supervised, cmd_dump_tasks, cmd_evaluate, cmd_make_synthetic, cmd_meta_train,
    cmd_train_gen, GenTrainSet, PolicyName, RunConfig, METRICS_HEADER,
};
use lasium_core::lasium::{generate_task_with, load_task_dump, pgm_dimensions, AnchorSource, Provenance};
use lasium_core::rng::{domain, from_seed, stream};
use lasium_core::Tensor;
use rand::Rng;
use rand_distr::StandardNormal;

fn small_vae() -> VaeConfig {
    VaeConfig { latent_dim: 4, hidden: vec![16], epochs: 3, batch_size: 32, ..VaeConfig::default() }
}

/// Synthetic benchmark with 30 classes of 20 samples in `dir`.
fn synthetic(dir: &Path, seed: u64) -> RunConfig {
    let mut cfg = RunConfig {
        out: dir.to_path_buf(),
        seed,
        synthetic: SyntheticSpec { n_classes: 30, per_class: 20, ..RunConfig::default().synthetic },
        vae: small_vae(),
        ..RunConfig::default()
    };
    cmd_make_synthetic(&cfg).unwrap();
    cfg.dataset = Some(dir.join("dataset.ldat"));
    cfg
}

/// Meta-training setup on the analytic generator with a loose threshold.
fn analytic_run(data: &Path, out: &Path, seed: u64) -> RunConfig {
    RunConfig {
        out: out.to_path_buf(),
        seed,
        deterministic: true,
        policy: PolicyName::Noise,
        eps_dist: Some(1.0),
        meta_iterations: 12,
        n_eval_tasks: 10,
        synthetic: SyntheticSpec { n_classes: 30, per_class: 20, ..RunConfig::default().synthetic },
        dataset: Some(data.join("dataset.ldat")),
        generator: Some(data.join("analytic.lgen")),
        learner_checkpoint: Some(out.join("learner.lgen")),
        ..RunConfig::default()
    }
}

fn file_hash(path: &Path) -> u64 {
    let mut h = DefaultHasher::new();
    fs::read(path).unwrap().hash(&mut h);
    h.finish()
}

#[test]
fn generator_checkpoint_reloads_with_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synthetic(dir.path(), 3);
    let out = cmd_train_gen(&cfg).unwrap();
    let loaded = Generator::load(&out.path).unwrap();
    let mut rng = from_seed(4);
    for _ in 0..5 {
        let z = loaded.sample_prior(&mut rng);
        assert_eq!(out.generator.generate(&z).unwrap().data(), loaded.generate(&z).unwrap().data());
    }
}

#[test]
fn stored_threshold_matches_offline_percentile() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synthetic(dir.path(), 5);
    let gen = Generator::load(cmd_train_gen(&cfg).unwrap().path).unwrap();
    // Independent recomputation: standard normal pairs from the calibration
    // stream, sorted, nearest rank at 30%.
    let l = gen.latent_dim();
    let mut rng = stream(cfg.seed, domain::TRAIN_GEN, 1);
    let mut draw = || (0..l).map(|_| rng.sample::<f64, _>(StandardNormal)).collect::<Vec<_>>();
    let mut d: Vec<f64> = (0..CALIBRATION_PAIRS)
        .map(|_| {
            let (a, b) = (draw(), draw());
            a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
        })
        .collect();
    d.sort_by(f64::total_cmp);
    let rank = (0.3 * CALIBRATION_PAIRS as f64).ceil() as usize;
    assert_eq!(gen.eps_dist(), Some(d[rank - 1]));
}

fn relabelled(ds: &LabeledDataset, map: &[usize]) -> LabeledDataset {
    let labels = ds.labels().iter().map(|&l| map[l]).collect();
    LabeledDataset::new(ds.samples().clone(), labels, ds.n_classes(), ds.kind()).unwrap()
}

#[test]
fn labels_never_reach_generator_training() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synthetic(&dir.path().join("data"), 6);
    let ds = LabeledDataset::load(cfg.dataset.as_ref().unwrap()).unwrap();
    let n = ds.n_classes();
    let train = |ds: &LabeledDataset, name: &str, set: GenTrainSet| {
        let out = dir.path().join(name);
        fs::create_dir_all(&out).unwrap();
        ds.save(out.join("d.ldat")).unwrap();
        let c = RunConfig { out: out.clone(), dataset: Some(out.join("d.ldat")), gen_train_set: set, ..cfg.clone() };
        fs::read(cmd_train_gen(&c).unwrap().path).unwrap()
    };

    // Whole dataset: any relabelling.
    let mut perm: Vec<usize> = (0..n).collect();
    perm.rotate_left(7);
    perm.swap(0, 5);
    assert_eq!(train(&ds, "all_a", GenTrainSet::All), train(&relabelled(&ds, &perm), "all_b", GenTrainSet::All));

    // Train split only: relabel within each part so the unlabelled pool is unchanged.
    let split = split_classes(n, cfg.split, cfg.seed).unwrap();
    let mut map: Vec<usize> = (0..n).collect();
    for part in [&split.train_classes, &split.val_classes, &split.test_classes] {
        for (i, &c) in part.iter().enumerate() {
            map[c] = part[(i + 1) % part.len()];
        }
    }
    assert_ne!(map, (0..n).collect::<Vec<_>>());
    assert_eq!(train(&ds, "tr_a", GenTrainSet::Train), train(&relabelled(&ds, &map), "tr_b", GenTrainSet::Train));
}

#[test]
fn meta_train_metrics_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synthetic(&data, 8);
    let runs: Vec<_> = ["a", "b"]
        .iter()
        .map(|name| {
            let cfg = analytic_run(&data, &dir.path().join(name), 8);
            let out = cmd_meta_train(&cfg).unwrap();
            (cfg, out)
        })
        .collect();
    let (cfg, out) = &runs[0];
    let csv = fs::read_to_string(cfg.out.join("metrics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(METRICS_HEADER));
    assert_eq!(lines.count(), cfg.meta_iterations);
    assert_eq!(out.metrics.len(), cfg.meta_iterations);
    assert!(out.metrics.iter().all(|r| r.wall_ms == 0));
    assert_eq!(file_hash(&cfg.out.join("learner.lgen")), file_hash(&runs[1].0.out.join("learner.lgen")));
    assert_eq!(csv, fs::read_to_string(runs[1].0.out.join("metrics.csv")).unwrap());
}

#[test]
fn first_meta_loss_is_near_chance() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synthetic(&data, 9);
    let cfg = RunConfig { meta_iterations: 1, ..analytic_run(&data, &dir.path().join("run"), 9) };
    let loss = cmd_meta_train(&cfg).unwrap().metrics[0].meta_loss;
    assert!((loss - 5f64.ln()).abs() <= 0.5, "{loss}");
}

#[test]
fn untrainable_scratch_baseline_is_near_chance() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synthetic(&data, 10);
    let cfg =
        RunConfig { scratch_lr: Some(0.0), n_eval_tasks: 200, ..analytic_run(&data, &dir.path().join("run"), 10) };
    let r = cmd_baseline_scratch(&cfg).unwrap();
    assert_eq!(r.n, 200);
    assert!((0.1..=0.3).contains(&r.mean), "{}", r.mean);
    let again = cmd_baseline_scratch(&cfg).unwrap();
    assert_eq!(r.accuracies, again.accuracies);
}

#[test]
fn evaluation_report_covers_every_episode() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synthetic(&data, 11);
    let cfg = analytic_run(&data, &dir.path().join("run"), 11);
    cmd_meta_train(&cfg).unwrap();
    let r = cmd_evaluate(&cfg).unwrap();
    assert_eq!((r.n, r.accuracies.len()), (cfg.n_eval_tasks, cfg.n_eval_tasks));
    let csv = fs::read_to_string(cfg.out.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), cfg.n_eval_tasks + 1);
    assert!(r.mean >= 0.0 && r.mean <= 1.0 && r.ci95 >= 0.0);
}

#[test]
fn supervised_baseline_touches_only_train_classes() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synthetic(&data, 12);
    let cfg = analytic_run(&data, &dir.path().join("run"), 12);
    let out = cmd_baseline_supervised(&cfg).unwrap();
    let split = split_classes(30, cfg.split, cfg.seed).unwrap();
    assert!(!out.audit.touched.is_empty());
    assert!(out.audit.touched.iter().all(|c| split.train_classes.contains(c)));
    let logged: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(cfg.out.join("audit_baseline_supervised.json")).unwrap()).unwrap();
    let touched: Vec<usize> = serde_json::from_value(logged["touched"].clone()).unwrap();
    assert!(touched.iter().all(|c| split.train_classes.contains(c)));
    let eval: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(cfg.out.join("audit_evaluate_supervised.json")).unwrap()).unwrap();
    let eval_touched: Vec<usize> = serde_json::from_value(eval["touched"].clone()).unwrap();
    assert!(eval_touched.iter().all(|c| split.test_classes.contains(c)));

    let again = cmd_baseline_supervised(&RunConfig { out: dir.path().join("again"), ..cfg.clone() }).unwrap();
    assert_eq!(out.report.accuracies, again.report.accuracies);
}

#[test]
fn vector_task_dumps_regenerate_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synthetic(&data, 13);
    let cfg = RunConfig { k_val: 3, ..analytic_run(&data, &dir.path().join("dump"), 13) };
    let gen = Generator::load(data.join("analytic.lgen")).unwrap();
    let dirs = cmd_dump_tasks(&cfg, 3).unwrap();
    assert_eq!(dirs.len(), 3);
    for d in &dirs {
        let (m, task) = load_task_dump(d).unwrap();
        task.validate().unwrap();
        assert_eq!((m.n_way, m.k_train, m.k_val), (5, 1, 3));
        let Provenance::Latent { train, val, .. } = &task.provenance else { panic!("latent provenance") };
        assert_eq!(gen.generate_batch(train).unwrap().data(), task.train.data.as_slice());
        assert_eq!(gen.generate_batch(val).unwrap().data(), task.val.data.as_slice());
        let policy = lasium_core::harness::resolve_policy(&cfg, &gen).unwrap();
        let rebuilt = generate_task_with(&gen, &policy, AnchorSource::Prior, 5, 1, 3, &mut from_seed(m.seed)).unwrap();
        assert_eq!(rebuilt.train.data, task.train.data);
        let (w, h) = pgm_dimensions(&fs::read(d.join("contact.pgm")).unwrap()).unwrap();
        assert_eq!((w, h), (5 * 32, 4));
    }
}

#[test]
fn image_task_dumps_have_grid_contact_sheets() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = from_seed(14);
    let (count, side) = (60, 6);
    let pixels: Vec<f64> = (0..count * side * side).map(|_| f64::from(rng.random_range(0u8..=255)) / 255.0).collect();
    let labels = (0..count).map(|i| i % 6).collect();
    let ds =
        LabeledDataset::new(Tensor::new(vec![count, side, side, 1], pixels).unwrap(), labels, 6, SampleKind::Image)
            .unwrap();
    ds.save(dir.path().join("img.ldat")).unwrap();
    let mut cfg = RunConfig {
        out: dir.path().join("out"),
        seed: 14,
        gen_train_set: GenTrainSet::All,
        vae: small_vae(),
        n_way: 3,
        k_train: 2,
        k_val: 2,
        dataset: Some(dir.path().join("img.ldat")),
        ..RunConfig::default()
    };
    let gen = cmd_train_gen(&cfg).unwrap().generator;
    cfg.generator = Some(cfg.out.join("generator.lgen"));
    for d in cmd_dump_tasks(&cfg, 2).unwrap() {
        let (m, task) = load_task_dump(&d).unwrap();
        let (w, h) = pgm_dimensions(&fs::read(d.join("contact.pgm")).unwrap()).unwrap();
        assert_eq!((w, h), (m.n_way * side, (m.k_train + m.k_val) * side));
        let Provenance::Latent { train, .. } = &task.provenance else { panic!("latent provenance") };
        let regenerated = gen.generate_batch(train).unwrap();
        for (a, b) in regenerated.data().iter().zip(&task.train.data) {
            assert!((a.clamp(0.0, 1.0) - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }
}
