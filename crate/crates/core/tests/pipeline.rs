use std::path::Path;

use flockdet_core::aggregate::{flock_report, size_histogram};
use flockdet_core::ingest::{generate_synthetic, read_dataset, Dataset, ParseOptions, SyntheticConfig};
use flockdet_core::pipeline::{detect_dataset, detect_scenes, train_on_pairs, RunSettings};
use flockdet_core::scene::{
    build_pair_dataset, build_scenes, read_pair_dataset, read_scene_dir, write_pair_dataset, write_scene_dir,
    BlockOptions, PairDatasetSpec,
};
use flockdet_core::seqnet::{load_checkpoint, save_checkpoint, Arch, ModelConfig, TrainConfig};
use flockdet_core::Execution;

fn fixtures() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures"))
}

fn small() -> Dataset {
    generate_synthetic(&SyntheticConfig {
        n_flocks: 8,
        n_singletons: 16,
        duration_ms: 30_000,
        start_spread_ms: 10_000,
        rng_seed: 5,
        ..SyntheticConfig::default()
    })
    .unwrap()
}

#[test]
fn fixture_files_load_as_dataset() {
    let ds = read_dataset(
        &fixtures().join("atc_sample.csv"),
        Some(&fixtures().join("groups_sample.dat")),
        &ParseOptions::default(),
    )
    .unwrap();
    assert_eq!(ds.trajectories.len(), 5);
    assert_eq!(ds.point_count(), 20);
    assert_eq!(ds.groups.len(), 6);
    // 10341400 and 10341500 are annotated but never tracked
    assert_eq!(ds.unresolved_ids, vec![10341400, 10341500]);
}

#[test]
fn scenes_and_pairs_survive_disk() {
    let ds = small();
    let dir = tempfile::tempdir().unwrap();
    let (bins, _, _) = build_scenes(&ds, 60_000, 20, BlockOptions::default()).unwrap();
    write_scene_dir(&dir.path().join("scenes"), &bins).unwrap();
    assert_eq!(read_scene_dir(&dir.path().join("scenes")).unwrap(), bins);

    let pairs = build_pair_dataset(&ds, &PairDatasetSpec::new(20, 5)).unwrap();
    write_pair_dataset(&dir.path().join("pairs"), &pairs).unwrap();
    assert_eq!(read_pair_dataset(&dir.path().join("pairs")).unwrap(), pairs);
}

#[test]
fn sequential_and_parallel_agree_bitwise() {
    let ds = small();
    let pairs = build_pair_dataset(&ds, &PairDatasetSpec::new(20, 5)).unwrap();
    let mut tc = TrainConfig::new(8, 5);
    tc.max_epochs = 15;
    let mut runs = Vec::new();
    for exec in [Execution::Sequential, Execution::Parallel] {
        let mut s = RunSettings::new(ModelConfig::new(Arch::Lstm, 8, 5), tc.clone());
        s.exec = exec;
        runs.push(train_on_pairs(&pairs, &s).unwrap());
    }
    assert_eq!(runs[0].model.params, runs[1].model.params);
    assert_eq!(runs[0].test_loss.to_bits(), runs[1].test_loss.to_bits());

    let (bins, _, _) = build_scenes(&ds, 60_000, 20, BlockOptions::default()).unwrap();
    let a = detect_scenes(&runs[0].model, &bins, 0.9, Execution::Sequential).unwrap();
    let b = detect_scenes(&runs[0].model, &bins, 0.9, Execution::Parallel).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.predictions, y.predictions);
        assert_eq!(x.flocks, y.flocks);
    }
}

#[test]
fn saved_model_detects_the_same_flocks() {
    let ds = small();
    let pairs = build_pair_dataset(&ds, &PairDatasetSpec::new(20, 5)).unwrap();
    let mut tc = TrainConfig::new(8, 2);
    tc.max_epochs = 30;
    let run = train_on_pairs(&pairs, &RunSettings::new(ModelConfig::new(Arch::Rnn, 8, 2), tc)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rnn.ckpt");
    save_checkpoint(&run.model, &path).unwrap();
    let loaded = load_checkpoint(&path).unwrap();

    let report = |m| {
        let det = detect_dataset(m, &ds, 60_000, 0.9, 2, Execution::default()).unwrap();
        let scenes: Vec<_> = det.iter().map(|d| (d.bin_index, d.flocks.clone())).collect();
        (flock_report(&scenes), size_histogram(det.iter().map(|d| &d.flocks)))
    };
    let (r1, h1) = report(&run.model);
    let (r2, h2) = report(&loaded);
    assert_eq!(r1, r2);
    assert_eq!(h1, h2);
    assert!(r1.ends_with("}}\n"), "{r1}");
}
