use emrseg::embeddings::{
    counts_sidecar, load_embeddings, save_embeddings, save_word2vec_text, train_skipgram, EmbeddingMatrix,
    SkipGramConfig, Vocabulary,
};
use emrseg::Error;
use ndarray::ArrayView1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sentences that each draw all their words from one of two disjoint topics.
fn two_topics(n: usize, seed: u64) -> Vec<Vec<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let topic = if i % 2 == 0 { "a" } else { "b" };
            (0..8).map(|_| format!("{topic}{}", rng.random_range(0..10))).collect()
        })
        .collect()
}

fn cos(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.dot(&b) / (a.dot(&a).sqrt() * b.dot(&b).sqrt())
}

fn train(sentences: &[Vec<String>], cfg: &SkipGramConfig) -> (Vocabulary, EmbeddingMatrix, Vec<f64>) {
    let vocab = Vocabulary::from_sentences(sentences.iter().map(|s| s.as_slice())).unwrap();
    let ids: Vec<Vec<usize>> = sentences.iter().map(|s| vocab.encode(s)).collect();
    let (emb, losses) = train_skipgram(&ids, &vocab, cfg).unwrap();
    (vocab, emb, losses)
}

fn small_cfg() -> SkipGramConfig {
    SkipGramConfig {
        dim: 20,
        window: 4,
        epochs: 5,
        seed: 3,
        ..SkipGramConfig::default()
    }
}

#[test]
fn topics_cluster() {
    let (vocab, emb, _) = train(&two_topics(600, 1), &small_cfg());
    let (mut intra, mut inter) = (Vec::new(), Vec::new());
    for i in 0..vocab.len() {
        for j in i + 1..vocab.len() {
            let same = vocab.token(i)[..1] == vocab.token(j)[..1];
            let c = cos(emb.vector(i), emb.vector(j));
            if same { intra.push(c) } else { inter.push(c) }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&intra) > mean(&inter) + 0.2, "intra {} inter {}", mean(&intra), mean(&inter));
}

#[test]
fn epoch_loss_does_not_rise() {
    let (_, _, losses) = train(&two_topics(400, 2), &small_cfg());
    assert_eq!(losses.len(), 5);
    for w in losses.windows(2) {
        assert!(w[1] <= w[0] * 1.05, "{losses:?}");
    }
    assert!(losses[4] < losses[0]);
}

#[test]
fn training_is_reproducible() {
    let s = two_topics(100, 3);
    let (_, a, la) = train(&s, &small_cfg());
    let (_, b, lb) = train(&s, &small_cfg());
    assert_eq!(a, b);
    assert_eq!(la, lb);
    let other = SkipGramConfig { seed: 4, ..small_cfg() };
    let (_, c, _) = train(&s, &other);
    assert_ne!(a, c);
}

#[test]
fn binary_and_text_round_trips() {
    let (vocab, emb, _) = train(&two_topics(50, 5), &small_cfg());
    let dir = tempfile::tempdir().unwrap();

    let bin = dir.path().join("w.bin");
    save_embeddings(&bin, &vocab, &emb).unwrap();
    let (v2, e2) = load_embeddings(&bin).unwrap();
    assert_eq!(v2, vocab);
    assert_eq!(e2, emb);

    let txt = dir.path().join("w.txt");
    save_word2vec_text(&txt, &vocab, &emb).unwrap();
    assert!(counts_sidecar(&txt).exists());
    let (v3, e3) = load_embeddings(&txt).unwrap();
    assert_eq!(v3, vocab);
    // shortest round-trip float formatting keeps the values exact
    assert_eq!(e3, emb);
}

#[test]
fn text_with_mismatched_sidecar_is_refused() {
    let (vocab, emb, _) = train(&two_topics(50, 6), &small_cfg());
    let dir = tempfile::tempdir().unwrap();
    let txt = dir.path().join("w.txt");
    save_word2vec_text(&txt, &vocab, &emb).unwrap();
    let sidecar = counts_sidecar(&txt);
    // a token the vectors file does not have
    let edited = format!("zzz{}", std::fs::read_to_string(&sidecar).unwrap());
    std::fs::write(&sidecar, edited).unwrap();
    assert!(matches!(load_embeddings(&txt), Err(Error::VocabularyHashMismatch)));
}

#[test]
fn corpus_size_errors() {
    let vocab = Vocabulary::from_sentences([["x".to_string(), "y".to_string()].as_slice()]).unwrap();
    let cfg = small_cfg();
    assert!(matches!(train_skipgram(&[], &vocab, &cfg), Err(Error::EmptyCorpus)));
    assert!(matches!(
        train_skipgram(&[vec![0, 1]], &vocab, &cfg),
        Err(Error::CorpusTooSmall { tokens: 2, window: 4 })
    ));
}
