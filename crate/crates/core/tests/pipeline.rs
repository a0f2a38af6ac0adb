use emrseg::corpus::{
    assign_labels, compose, generate_notes, label_notes, CorpusKind, LabeledNote, SectionGrammar, SectionLabel,
};
use emrseg::embeddings::{save_embeddings, train_on_corpus, SkipGramConfig};
use emrseg::normalize::{Normalizer, RawNote};
use emrseg::pipeline::{evaluate, train_segmenter, PipelineConfig, Segmenter};
use emrseg::sif::{EncoderMode, SifConfig};
use emrseg::tagger::TrainConfig;
use emrseg::Error;

fn corpus(n: usize, seed: u64) -> (Vec<RawNote>, Vec<LabeledNote>) {
    let raw = generate_notes(&SectionGrammar::default(), n, seed);
    let labeled = label_notes(&Normalizer::default(), &raw);
    (raw, labeled)
}

fn quick_model(notes: &[LabeledNote], mode: EncoderMode) -> Segmenter {
    let sg = SkipGramConfig {
        dim: 16,
        epochs: 2,
        seed: 1,
        ..SkipGramConfig::default()
    };
    let (vocab, emb, _) = train_on_corpus(notes, &sg).unwrap();
    let tc = TrainConfig {
        hidden: 8,
        max_epochs: 2,
        seed: 1,
        ..TrainConfig::default()
    };
    train_segmenter(notes, &vocab, &emb, mode, &SifConfig::default(), &tc).unwrap().0
}

#[test]
fn overfit_model_segments_raw_notes() {
    let (raw, labeled) = corpus(10, 21);
    let sg = SkipGramConfig {
        dim: 32,
        epochs: 3,
        seed: 2,
        ..SkipGramConfig::default()
    };
    let (vocab, emb, _) = train_on_corpus(&labeled, &sg).unwrap();
    let tc = TrainConfig {
        hidden: 64,
        learning_rate: 1e-2,
        batch_size: 1,
        max_epochs: 150,
        patience: 150,
        dev_fraction: 0.0,
        seed: 2,
        ..TrainConfig::default()
    };
    let (seg, _) = train_segmenter(&labeled, &vocab, &emb, EncoderMode::Sif, &SifConfig::default(), &tc).unwrap();

    let normalizer = seg.normalizer();
    let (mut right, mut total) = (0, 0);
    let mut family = 0;
    for note in &raw {
        let records = seg.segment(&normalizer, note).unwrap();
        let gold = assign_labels(note).unwrap();
        assert_eq!(records.len(), gold.sentences.len());
        for (r, g) in records.iter().zip(&gold.sentences) {
            assert_eq!(r.note_id, note.note_id);
            assert_eq!(&note.text[r.start..r.end], r.text);
            total += 1;
            right += usize::from(r.label == g.label);
            if g.label == SectionLabel::FamilyHistory {
                family += 1;
                assert_eq!(r.label, SectionLabel::FamilyHistory, "{}", r.text);
            }
        }
    }
    assert!(family > 0);
    assert!(right as f64 >= 0.99 * total as f64, "{right}/{total}");
}

#[test]
fn save_load_is_exact_and_checked() {
    let (_, labeled) = corpus(16, 3);
    let seg = quick_model(&compose(&labeled, CorpusKind::Mixed, 3), EncoderMode::Sif);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bin");
    seg.save(&path).unwrap();
    let back = Segmenter::load(&path).unwrap();
    assert_eq!(back, seg);
    for n in &labeled {
        assert_eq!(back.predict_note(n).unwrap(), seg.predict_note(n).unwrap());
    }

    let mut bytes = std::fs::read(&path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(Segmenter::load(&path), Err(Error::ChecksumMismatch { .. })));

    std::fs::write(&path, b"not a model").unwrap();
    assert!(matches!(Segmenter::load(&path), Err(Error::UnknownHeader)));

    // an embeddings file is a valid container but not a model
    save_embeddings(&path, &seg.vocab, &seg.embeddings).unwrap();
    assert!(matches!(Segmenter::load(&path), Err(Error::MissingTensor(_))));
}

#[test]
fn ave_mode_survives_a_round_trip() {
    let (_, labeled) = corpus(12, 4);
    let seg = quick_model(&labeled, EncoderMode::Ave);
    let back = Segmenter::from_container(&seg.to_container()).unwrap();
    assert_eq!(back.mode, EncoderMode::Ave);
    assert_eq!(back, seg);
}

#[test]
fn evaluation_report_adds_up() {
    let (_, labeled) = corpus(12, 5);
    let mixed = compose(&labeled, CorpusKind::Mixed, 5);
    let seg = quick_model(&mixed, EncoderMode::Sif);
    let r = evaluate(&seg, &mixed).unwrap();
    let sentences: usize = mixed.iter().map(|n| n.sentences.len()).sum();
    assert_eq!(r.sentences, sentences);
    assert_eq!(r.confusion.iter().flatten().sum::<u64>(), sentences as u64);
    assert_eq!(r.per_type.len(), 4);
    let correct: u64 = (0..r.confusion.len()).map(|i| r.confusion[i][i]).sum();
    assert!((r.accuracy - correct as f64 / sentences as f64).abs() < 1e-12);
    let support: u64 = r.per_label.iter().map(|l| l.support).sum();
    assert_eq!(support, sentences as u64);
    assert!(r.to_table().contains("family history"));
}

#[test]
fn segmenting_empty_text_is_an_error() {
    let (_, labeled) = corpus(8, 6);
    let seg = quick_model(&labeled, EncoderMode::Sif);
    let err = seg.segment(&seg.normalizer(), &RawNote::new("e", "  \n\n")).unwrap_err();
    assert!(matches!(err, Error::EmptyNote { .. }));
}

#[test]
fn config_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    std::fs::write(&path, "# small run\nseed = 9\ntagger.hidden = 16  # per direction\n\nencoder = ave\n").unwrap();
    let cfg = PipelineConfig::from_file(&path).unwrap();
    assert_eq!(cfg.seed, 9);
    assert_eq!(cfg.tagger.hidden, 16);
    assert_eq!(cfg.encoder, EncoderMode::Ave);
    assert_ne!(cfg.hash(), PipelineConfig::default().hash());
    assert_ne!(cfg.stage_seed("w2v"), cfg.stage_seed("tagger"));

    let mut again = PipelineConfig::default();
    again.apply_str(&cfg.to_kv_string()).unwrap();
    assert_eq!(again.hash(), cfg.hash());

    std::fs::write(&path, "seed = 1\nbogus = 2\n").unwrap();
    assert!(matches!(PipelineConfig::from_file(&path), Err(Error::Config(_))));
    std::fs::write(&path, "seed 1\n").unwrap();
    assert!(matches!(PipelineConfig::from_file(&path), Err(Error::Parse { line: 1, .. })));
    std::fs::write(&path, "train_fraction = 1.5\n").unwrap();
    assert!(matches!(PipelineConfig::from_file(&path), Err(Error::Config(_))));
}
