//! TF-IDF weights and pair features against a direct re-evaluation of the
//! weighting formula on random corpora.

use proptest::prelude::*;

use semrel_core::features::PairFeatures;
use semrel_core::textprep::{TokenStream, TokenizerConfig};
use semrel_core::tfidf::{pair_features, HashProjection, TfidfModel};

/// ln(1 + count in doc) * ln(N / number of docs containing the token), by
/// scanning the corpus for every query.
fn brute_weight(corpus: &[Vec<String>], doc: &[String], token: &str) -> f64 {
    let n = corpus.len() as f64;
    let df = corpus.iter().filter(|d| d.iter().any(|t| t == token)).count() as f64;
    let tf = doc.iter().filter(|t| *t == token).count() as f64;
    if df == 0.0 {
        return 0.0;
    }
    (1.0 + tf).ln() * (n / df).ln()
}

fn corpus_strategy() -> impl Strategy<Value = Vec<Vec<String>>> {
    let vocab = 1usize..=50;
    vocab.prop_flat_map(|v| {
        prop::collection::vec(
            prop::collection::vec((0..v).prop_map(|i| format!("t{i}")), 0..12),
            1..=20,
        )
    })
}

fn stream(doc: &[String]) -> TokenStream {
    doc.iter().cloned().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weights_match_formula(corpus in corpus_strategy(), probe in prop::collection::vec(0usize..60, 0..15)) {
        let docs: Vec<TokenStream> = corpus.iter().map(|d| stream(d)).collect();
        let model = TfidfModel::fit(&docs, TokenizerConfig::default()).unwrap();
        let probe: Vec<String> = probe.iter().map(|i| format!("t{i}")).collect();
        for doc in corpus.iter().chain([&probe]) {
            let v = model.transform(&stream(doc));
            let mut dense = vec![0.0; model.vocabulary_size()];
            for &(c, w) in v.entries() {
                prop_assert!(w != 0.0, "stored zero");
                dense[c] = w;
            }
            for (col, &got) in dense.iter().enumerate() {
                let expected = brute_weight(&corpus, doc, model.token(col));
                let tol = 1e-12 * expected.abs().max(1e-300);
                prop_assert!((got - expected).abs() <= tol, "{} {got} vs {expected}", model.token(col));
            }
            // Tokens outside the vocabulary never contribute.
            for t in doc {
                if model.column(t).is_none() {
                    prop_assert!(corpus.iter().all(|d| !d.contains(t)));
                }
            }
        }
    }

    #[test]
    fn vocabulary_is_sorted_and_excludes_ubiquitous_tokens(corpus in corpus_strategy()) {
        let docs: Vec<TokenStream> = corpus.iter().map(|d| stream(d)).collect();
        let model = TfidfModel::fit(&docs, TokenizerConfig::default()).unwrap();
        let tokens: Vec<&str> = (0..model.vocabulary_size()).map(|c| model.token(c)).collect();
        prop_assert!(tokens.windows(2).all(|w| w[0] < w[1]));
        for t in tokens {
            let df = model.document_frequency(t).unwrap();
            prop_assert!(df >= 1 && df <= corpus.len());
        }
    }

    #[test]
    fn self_pair_features(corpus in corpus_strategy(), pick in any::<prop::sample::Index>()) {
        let docs: Vec<TokenStream> = corpus.iter().map(|d| stream(d)).collect();
        let model = TfidfModel::fit(&docs, TokenizerConfig::default()).unwrap();
        let proj = HashProjection::new(&model, 32, 9).unwrap();
        let doc = &docs[pick.index(docs.len())];
        let f: PairFeatures = pair_features(&model, doc, doc, &proj);
        prop_assert_eq!(f.len(), 65);
        prop_assert!(f.difference().iter().all(|&d| d == 0.0));
        let projected = proj.project(&model.transform(doc));
        if projected.iter().any(|&x| x != 0.0) {
            prop_assert!((f.cosine() - 1.0).abs() < 1e-12);
        } else {
            prop_assert_eq!(f.cosine(), 0.0);
        }
    }

    #[test]
    fn projection_is_a_signed_bucket_sum(corpus in corpus_strategy(), pick in any::<prop::sample::Index>()) {
        let docs: Vec<TokenStream> = corpus.iter().map(|d| stream(d)).collect();
        let model = TfidfModel::fit(&docs, TokenizerConfig::default()).unwrap();
        let proj = HashProjection::new(&model, 16, 0x5EED).unwrap();
        let sparse = model.transform(&docs[pick.index(docs.len())]);
        let mut expected = vec![0.0; 16];
        for &(c, w) in sparse.entries() {
            let (slot, sign) = proj.slot(c);
            prop_assert!(sign == 1.0 || sign == -1.0);
            expected[slot] += sign * w;
        }
        prop_assert_eq!(proj.project(&sparse), expected);
    }
}

#[test]
fn model_json_round_trips_on_random_corpus() {
    let corpus: Vec<Vec<String>> = (0..15)
        .map(|i| (0..(i % 7 + 1)).map(|j| format!("w{}", (i * 3 + j) % 11)).collect())
        .collect();
    let docs: Vec<TokenStream> = corpus.iter().map(|d| stream(d)).collect();
    let model = TfidfModel::fit(&docs, TokenizerConfig::default()).unwrap();
    let back = TfidfModel::from_json(&model.to_json()).unwrap();
    assert_eq!(back, model);
    for d in &docs {
        assert_eq!(back.transform(d), model.transform(d));
    }
}
