use std::collections::HashMap;

use unicode_segmentation::UnicodeSegmentation;

use super::TextSidecar;
use crate::error::{Error, Result};
use crate::vector::{sort_ranked, ScoredDoc};

pub const K1: f64 = 1.2;
pub const B: f64 = 0.75;

/// Lowercased Unicode words (UAX #29 boundaries, letter/number runs only).
pub fn tokenize(text: &str) -> Vec<String> {
    text.unicode_words().map(str::to_lowercase).collect()
}

/// `ln(1 + (N − df + 0.5) / (df + 0.5))`, never negative.
pub fn idf(n_docs: usize, df: usize) -> f64 {
    let (n, df) = (n_docs as f64, df as f64);
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

/// Inverted index over sidecar texts.
#[derive(Debug, Clone)]
pub struct Bm25Index {
    docs: Vec<TextSidecar>,
    doc_len: Vec<f64>,
    avgdl: f64,
    postings: HashMap<String, Vec<(u32, u32)>>,
}

impl Bm25Index {
    pub fn new(sidecars: &[TextSidecar]) -> Result<Self> {
        if sidecars.is_empty() {
            return Err(Error::InvalidData("BM25 needs at least one document".into()));
        }
        let mut postings: HashMap<String, Vec<(u32, u32)>> = HashMap::new();
        let mut doc_len = Vec::with_capacity(sidecars.len());
        for (i, s) in sidecars.iter().enumerate() {
            let toks = tokenize(&s.text);
            doc_len.push(toks.len() as f64);
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in toks {
                *tf.entry(t).or_default() += 1;
            }
            for (t, c) in tf {
                postings.entry(t).or_default().push((i as u32, c));
            }
        }
        let avgdl = doc_len.iter().sum::<f64>() / doc_len.len() as f64;
        Ok(Self {
            docs: sidecars.to_vec(),
            doc_len,
            avgdl,
            postings,
        })
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Every document's score; repeated query terms count once per occurrence.
    pub fn scores(&self, query: &str) -> Result<Vec<f64>> {
        let terms = tokenize(query);
        if terms.is_empty() {
            return Err(Error::EmptyQuery);
        }
        let n = self.docs.len();
        let mut scores = vec![0.0; n];
        // avgdl is 0 only if every document is empty, in which case no term matches.
        let avgdl = if self.avgdl > 0.0 { self.avgdl } else { 1.0 };
        for t in &terms {
            let Some(list) = self.postings.get(t) else { continue };
            let w = idf(n, list.len());
            for &(d, tf) in list {
                let tf = tf as f64;
                let norm = K1 * (1.0 - B + B * self.doc_len[d as usize] / avgdl);
                scores[d as usize] += w * tf * (K1 + 1.0) / (tf + norm);
            }
        }
        Ok(scores)
    }

    pub fn rank(&self, query: &str, top_n: usize) -> Result<Vec<ScoredDoc>> {
        let scores = self.scores(query)?;
        let mut out: Vec<ScoredDoc> = self
            .docs
            .iter()
            .zip(scores)
            .map(|(s, score)| ScoredDoc::new(s.doc.clone(), score))
            .collect();
        sort_ranked(&mut out);
        out.truncate(top_n);
        Ok(out)
    }
}

/// Okapi BM25 ranking of `sidecars` for `query_text`.
pub fn bm25_rank(query_text: &str, sidecars: &[TextSidecar], top_n: usize) -> Result<Vec<ScoredDoc>> {
    Bm25Index::new(sidecars)?.rank(query_text, top_n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vector::DocId;

    fn side(id: &str, text: &str) -> TextSidecar {
        TextSidecar {
            doc: DocId::new(id).unwrap(),
            text: text.into(),
        }
    }

    #[test]
    fn idf_single_doc_of_three() {
        assert!((idf(3, 1) - 0.980829).abs() < 1e-6);
        assert!(idf(3, 3) > 0.0);
    }

    #[test]
    fn absent_term_scores_zero() {
        let docs = [side("a", "red fox"), side("b", "blue whale"), side("c", "")];
        let r = bm25_rank("zebra", &docs, 10).unwrap();
        assert!(r.iter().all(|s| s.score == 0.0));
        assert_eq!(r.iter().map(|s| s.doc.as_str()).collect::<Vec<_>>(), ["a", "b", "c"]);
    }

    #[test]
    fn verbatim_doc_wins() {
        let docs = [
            side("a", "nothing in common"),
            side("b", "the quick brown fox"),
            side("c", "another unrelated line"),
        ];
        let r = bm25_rank("quick brown fox", &docs, 3).unwrap();
        assert_eq!(r[0].doc.as_str(), "b");
        assert!(r[0].score > 0.0);
    }

    #[test]
    fn hand_computed_score() {
        // One matching doc of length 2, avgdl = 2: tf=1 gives idf * 2.2 / 2.2.
        let docs = [side("a", "alpha beta"), side("b", "gamma delta"), side("c", "eps zeta")];
        let r = bm25_rank("alpha", &docs, 1).unwrap();
        assert!((r[0].score - idf(3, 1)).abs() < 1e-12);
    }

    #[test]
    fn indic_words_stay_whole() {
        let toks = tokenize("नमस्ते दुनिया, Hello-World 42");
        assert_eq!(toks, ["नमस्ते", "दुनिया", "hello", "world", "42"]);
    }

    #[test]
    fn empty_query() {
        let docs = [side("a", "x")];
        assert!(matches!(bm25_rank("  ,;  ", &docs, 1), Err(Error::EmptyQuery)));
    }
}
