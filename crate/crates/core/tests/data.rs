use cavp_core::data::{
    build_vocab, detokenize, load_dataset, load_features, synth_dataset, tokenize, write_synth, EncodeOptions, FeatureFile, SynthConfig,
    Target,
};
use cavp_core::Error;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn synthetic_dataset_survives_disk_round_trip() {
    for paragraphs in [false, true] {
        let cfg = SynthConfig { paragraphs, k: 8, n_images: 7, ..SynthConfig::default() };
        let data = synth_dataset(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_synth(dir.path(), &data).unwrap();
        let manifest = dir.path().join("manifest.json");
        let opts = EncodeOptions { min_count: 1, max_len: 16 };
        let loaded = load_dataset::<f64>(&manifest, None, opts).unwrap();
        assert_eq!(loaded, data.dataset::<f64>(16).unwrap());
        for (i, e) in loaded.examples.iter().enumerate() {
            assert_eq!(e.regions, data.features.block::<f64>(i).unwrap());
            assert_eq!(load_features::<f64>(&manifest, &e.image_id).unwrap(), e.regions);
            assert_eq!(matches!(e.target, Target::Paragraph(_)), paragraphs);
        }
    }
}

#[test]
fn missing_and_corrupt_inputs_are_data_errors() {
    let data = synth_dataset(&SynthConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_synth(dir.path(), &data).unwrap();
    let manifest = dir.path().join("manifest.json");
    assert!(matches!(load_features::<f64>(&manifest, "nope"), Err(Error::Data(_))));

    let features = dir.path().join("features.bin");
    let bytes = std::fs::read(&features).unwrap();
    std::fs::write(&features, &bytes[..bytes.len() - 3]).unwrap();
    let opts = EncodeOptions { min_count: 1, max_len: 16 };
    assert!(matches!(load_dataset::<f64>(&manifest, None, opts), Err(Error::Data(_))));
}

proptest! {
    #[test]
    fn detokenize_then_tokenize_is_identity(words in prop::collection::vec("[a-z0-9]{1,8}", 0..30)) {
        prop_assert_eq!(tokenize(&detokenize(&words)), words);
    }

    #[test]
    fn vocabulary_ignores_corpus_order(
        corpus in prop::collection::vec(prop::collection::vec("[a-f]{1,3}", 1..8), 1..10),
        seed in any::<u64>(),
        min_count in 1usize..3,
    ) {
        let mut shuffled = corpus.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        shuffled.shuffle(&mut rng);
        for s in &mut shuffled {
            s.shuffle(&mut rng);
        }
        prop_assert_eq!(build_vocab(&corpus, min_count).ok(), build_vocab(&shuffled, min_count).ok());
    }

    #[test]
    fn feature_file_bytes_round_trip(
        k in 1usize..5,
        dim in 1usize..6,
        blocks in 0usize..4,
        values in prop::collection::vec(-1e3f32..1e3, 120),
    ) {
        let mut f = FeatureFile::new(k, dim).unwrap();
        let mut it = values.iter().cycle();
        for _ in 0..blocks {
            let block: Vec<Vec<f32>> = (0..k).map(|_| (0..dim).map(|_| *it.next().unwrap()).collect()).collect();
            f.push(&block).unwrap();
        }
        let back = FeatureFile::from_bytes(&f.to_bytes()).unwrap();
        prop_assert_eq!(back.to_bytes(), f.to_bytes());
        prop_assert_eq!(back, f);
    }
}
