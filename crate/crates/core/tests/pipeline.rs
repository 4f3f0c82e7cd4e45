use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mtrank::data::{load_dataset, vectorize, write_dataset, Dataset, EvaluationTuple, Label, VectorizeOptions};
use mtrank::embeddings::{load_embedding_table, EmbeddingTable};
use mtrank::eval::evaluate;
use mtrank::features::bleu_components;
use mtrank::model::{Model, ModelConfig};
use mtrank::training::{train, CostConfig, CostKind, TrainConfig};

fn words(rng: &mut ChaCha8Rng, vocab: usize, max_len: usize) -> Vec<String> {
    let n = rng.gen_range(0..=max_len);
    (0..n).map(|_| format!("w{}", rng.gen_range(0..vocab))).collect()
}

fn random_table(rng: &mut ChaCha8Rng, words: usize, dim: usize) -> EmbeddingTable {
    let entries: Vec<(String, Vec<f64>)> =
        (0..words).map(|w| (format!("w{w}"), (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect())).collect();
    EmbeddingTable::from_entries(dim, entries).unwrap()
}

fn random_dataset(rng: &mut ChaCha8Rng, n: usize) -> Dataset {
    let tuples = (0..n)
        .map(|i| {
            let scores = |rng: &mut ChaCha8Rng| BTreeMap::from([("meteor".to_owned(), rng.gen::<f64>())]);
            EvaluationTuple {
                id: i.to_string(),
                split: ["cz", "de"][i % 2].to_owned(),
                // vocabulary larger than the table, so some tokens are OOV
                reference: words(rng, 120, 12),
                hyp1: words(rng, 120, 12),
                hyp2: words(rng, 120, 12),
                label: if rng.gen_bool(0.5) { Label::T1Better } else { Label::T2Better },
                external_scores_1: scores(rng),
                external_scores_2: scores(rng),
                vectors: None,
            }
        })
        .collect();
    Dataset { tuples, feature_schema: vec!["meteor".into()], sentence_dim: 0 }
}

fn mean_vector(tokens: &[String], table: &EmbeddingTable) -> Vec<f64> {
    let found: Vec<&[f64]> = tokens.iter().filter_map(|t| table.get(t)).collect();
    let mut out = vec![0.0; table.dimension()];
    for v in &found {
        for (o, x) in out.iter_mut().zip(v.iter()) {
            *o += x;
        }
    }
    if !found.is_empty() {
        out.iter_mut().for_each(|o| *o /= found.len() as f64);
    }
    out
}

#[test]
fn embedding_file_round_trip_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let table = random_table(&mut rng, 100, 25);
    let mut text = Vec::new();
    table.write_text(&mut text).unwrap();
    let back = load_embedding_table(text.as_slice(), Some(25)).unwrap();
    assert_eq!(back.len(), 100);
    for (word, v) in table.iter() {
        let w = back.get(word).unwrap();
        assert!(v.iter().zip(w).all(|(a, b)| a.to_bits() == b.to_bits()), "{word}");
    }
}

#[test]
fn vectorize_matches_independent_extraction() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let table = random_table(&mut rng, 100, 4);
    let dataset = random_dataset(&mut rng, 100);
    let v = vectorize(&dataset, Some(&table), &VectorizeOptions::default()).unwrap();
    assert_eq!((v.sentence_dim, v.pairwise_dim), (4, 17));
    assert_eq!(v.feature_names.last().map(String::as_str), Some("meteor"));

    for (t, ex) in dataset.tuples.iter().zip(&v.examples) {
        assert_eq!(ex.input.psi_t1, mean_vector(&t.hyp1, &table));
        assert_eq!(ex.input.psi_t2, mean_vector(&t.hyp2, &table));
        assert_eq!(ex.input.psi_r, mean_vector(&t.reference, &table));
        let mut phi1 = bleu_components(&t.hyp1, &t.reference).flatten().to_vec();
        phi1.push(t.external_scores_1["meteor"]);
        let mut phi2 = bleu_components(&t.hyp2, &t.reference).flatten().to_vec();
        phi2.push(t.external_scores_2["meteor"]);
        assert_eq!(ex.input.phi_t1r, phi1);
        assert_eq!(ex.input.phi_t2r, phi2);
        assert_eq!(ex.label, t.label);
    }
    assert_eq!(vectorize(&dataset, Some(&table), &VectorizeOptions::default()).unwrap(), v);
}

#[test]
fn dataset_survives_a_write_and_reload() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let dataset = random_dataset(&mut rng, 30);
    let mut text = Vec::new();
    write_dataset(&dataset, &mut text).unwrap();
    let (back, report) = load_dataset(text.as_slice()).unwrap();
    assert_eq!(report.records, 30);
    assert_eq!(back, dataset);
}

#[test]
fn trained_checkpoint_evaluates_identically_after_reload() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let table = random_table(&mut rng, 100, 4);
    let dataset = random_dataset(&mut rng, 80);
    let v = vectorize(&dataset, Some(&table), &VectorizeOptions::default()).unwrap();
    let config = ModelConfig { seed: 3, ..ModelConfig::new(v.sentence_dim, v.pairwise_dim) };
    let model = Model::init(config).unwrap();
    let tcfg = TrainConfig { epochs: 4, batch_size: 8, learning_rate: 0.001, ..Default::default() };
    let ccfg = CostConfig::with_kind(CostKind::LogisticThenKendall);
    let (trained, report) = train(&model, &v.examples, &v.examples, &tcfg, &ccfg).unwrap();
    assert_eq!(report.epochs.len(), 4);
    assert_eq!(report.phase_transitions, [3]);

    let reloaded = Model::from_json(&trained.to_json()).unwrap();
    assert_eq!(reloaded, trained);
    let a = evaluate(&trained, &v.examples, 1e-6).unwrap();
    let b = evaluate(&reloaded, &v.examples, 1e-6).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.counts.total(), 80);
    assert_eq!(a.splits.len(), 2);
}
