//! Test fixtures shared by integration targets.
#![allow(dead_code)]

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grams(text: &str) -> HashSet<String> {
    let chars: Vec<char> = text.chars().collect();
    chars.windows(3).map(|w| w.iter().collect()).collect()
}

/// Fraction of the query's character 3-grams that also occur in `doc`.
pub fn gram_share(query: &str, doc: &str) -> f64 {
    let q = grams(query);
    let d = grams(doc);
    q.iter().filter(|g| d.contains(*g)).count() as f64 / q.len() as f64
}

pub struct ToyBenchmark {
    pub docs: Vec<(String, String)>,
    pub queries: Vec<(String, String)>,
    /// `(query id, doc id)`, one positive per query.
    pub qrels: Vec<(String, String)>,
}

fn word(rng: &mut ChaCha8Rng) -> String {
    let len = rng.random_range(5..=9);
    (0..len).map(|_| rng.random_range(b'a'..=b'z') as char).collect()
}

/// `n_docs` documents of random words; query `i` is a 12-word run of doc `i`
/// with two words swapped for fresh ones, so it shares at least 60% of its
/// character 3-grams with that doc and far less with any other.
pub fn toy_benchmark(n_docs: usize, n_queries: usize, seed: u64) -> ToyBenchmark {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab: Vec<String> = (0..3_000).map(|_| word(&mut rng)).collect();
    let docs: Vec<(String, String)> = (0..n_docs)
        .map(|i| {
            let words: Vec<&str> = (0..30).map(|_| vocab.choose(&mut rng).unwrap().as_str()).collect();
            (format!("doc{i:04}"), words.join(" "))
        })
        .collect();
    let mut queries = Vec::new();
    let mut qrels = Vec::new();
    for i in 0..n_queries {
        let words: Vec<&str> = docs[i].1.split(' ').collect();
        let start = rng.random_range(0..=words.len() - 12);
        let mut span: Vec<String> = words[start..start + 12].iter().map(|w| w.to_string()).collect();
        for _ in 0..2 {
            let at = rng.random_range(0..span.len());
            span[at] = word(&mut rng);
        }
        let text = span.join(" ");
        queries.push((format!("q{i:03}"), text));
        qrels.push((format!("q{i:03}"), docs[i].0.clone()));
    }
    ToyBenchmark { docs, queries, qrels }
}

impl ToyBenchmark {
    /// Checks the construction: each query shares ≥ 60% of its 3-grams with
    /// exactly one document, its positive.
    pub fn verify(&self) -> Result<(), String> {
        for ((qid, q), (_, pos)) in self.queries.iter().zip(&self.qrels) {
            for (did, d) in &self.docs {
                let share = gram_share(q, d);
                if (did == pos) != (share >= 0.6) {
                    return Err(format!("{qid} vs {did}: share {share:.3}"));
                }
            }
        }
        Ok(())
    }

    pub fn write_beir(&self, dir: &Path) {
        fs::create_dir_all(dir.join("qrels")).unwrap();
        let mut corpus = String::new();
        for (id, text) in &self.docs {
            let _ = writeln!(corpus, "{}", serde_json::json!({"_id": id, "title": "", "text": text}));
        }
        let mut queries = String::new();
        for (id, text) in &self.queries {
            let _ = writeln!(queries, "{}", serde_json::json!({"_id": id, "text": text}));
        }
        let mut qrels = String::from("query-id\tcorpus-id\tscore\n");
        for (q, d) in &self.qrels {
            let _ = writeln!(qrels, "{q}\t{d}\t1");
        }
        fs::write(dir.join("corpus.jsonl"), corpus).unwrap();
        fs::write(dir.join("queries.jsonl"), queries).unwrap();
        fs::write(dir.join("qrels/test.tsv"), qrels).unwrap();
    }
}

/// Random vectors with entries in [-1, 1).
pub fn random_rows(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

pub fn to_f32(rows: &[Vec<f64>]) -> Vec<Vec<f32>> {
    rows.iter().map(|r| r.iter().map(|&x| x as f32).collect()).collect()
}

/// Rounds through f32 so oracle inputs equal what the library stores.
pub fn through_f32(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| r.iter().map(|&x| x as f32 as f64).collect())
        .collect()
}
