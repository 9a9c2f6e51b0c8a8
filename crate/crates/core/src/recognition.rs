//! Picks the best-matching word for an input vector from a candidate set.

use std::fmt;
use std::sync::OnceLock;

use crate::classifier::Network;
use crate::error::{Error, Result};
use crate::features::{features_unchecked, squared_distance};
use crate::geometry::KeyboardLayout;
use crate::lexicon::Lexicon;
use crate::trajectory::{perfect_vector, InputVector};

#[derive(Debug, Clone)]
pub enum Scorer {
    /// Smallest Euclidean distance wins.
    Euclidean,
    /// Largest network score wins.
    Network(Network),
}

impl Scorer {
    pub fn name(&self) -> &'static str {
        match self {
            Scorer::Euclidean => "euclidean",
            Scorer::Network(_) => "network",
        }
    }
}

impl fmt::Display for Scorer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Lazily built perfect vectors for every lexicon word on one layout.
/// Each entry is initialized at most once, also under concurrent access.
pub struct PerfectCache<'a> {
    layout: &'a KeyboardLayout,
    lex: &'a Lexicon,
    n_points: usize,
    vectors: Vec<OnceLock<InputVector>>,
}

impl<'a> PerfectCache<'a> {
    pub fn new(layout: &'a KeyboardLayout, lex: &'a Lexicon, n_points: usize) -> Self {
        PerfectCache {
            layout,
            lex,
            n_points,
            vectors: (0..lex.len()).map(|_| OnceLock::new()).collect(),
        }
    }

    pub fn get(&self, id: u32) -> &InputVector {
        self.vectors[id as usize].get_or_init(|| {
            perfect_vector(self.lex.word(id), self.layout, self.n_points)
                .expect("lexicon words are a-z")
        })
    }

    pub fn layout(&self) -> &KeyboardLayout {
        self.layout
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }
}

pub struct Recognizer<'a> {
    cache: PerfectCache<'a>,
    scorer: &'a Scorer,
}

impl<'a> Recognizer<'a> {
    pub fn new(layout: &'a KeyboardLayout, lex: &'a Lexicon, scorer: &'a Scorer, n_points: usize) -> Self {
        Recognizer {
            cache: PerfectCache::new(layout, lex, n_points),
            scorer,
        }
    }

    pub fn cache(&self) -> &PerfectCache<'a> {
        &self.cache
    }

    /// Best candidate id. Equal scores go to the more frequent word, then the
    /// alphabetically first, which is lexicon id order.
    pub fn recognize(&self, v: &InputVector, candidates: &[u32]) -> Result<u32> {
        if candidates.is_empty() {
            return Err(Error::NoCandidates);
        }
        if v.len() != self.cache.n_points {
            return Err(Error::invalid(format!(
                "input vector has {} points, recognizer expects {}",
                v.len(),
                self.cache.n_points
            )));
        }
        let mut best_id = u32::MAX;
        let mut best = f64::NEG_INFINITY;
        for &id in candidates {
            let perfect = self.cache.get(id);
            // larger is better for both branches
            let score = match self.scorer {
                Scorer::Euclidean => -squared_distance(v, perfect),
                Scorer::Network(net) => net.forward(&features_unchecked(v, perfect)),
            };
            if score > best || (score == best && id < best_id) {
                best = score;
                best_id = id;
            }
        }
        Ok(best_id)
    }
}

/// One-shot recognition over candidate words.
pub fn recognize<'w>(
    v: &InputVector,
    candidates: &[&'w str],
    layout: &KeyboardLayout,
    scorer: &Scorer,
    lex: &Lexicon,
    n_points: usize,
) -> Result<&'w str> {
    let ids: Vec<u32> = candidates
        .iter()
        .map(|w| lex.id(w).ok_or_else(|| Error::invalid(format!("candidate `{w}` is not in the lexicon"))))
        .collect::<Result<_>>()?;
    let r = Recognizer::new(layout, lex, scorer, n_points);
    let best = r.recognize(v, &ids)?;
    Ok(candidates[ids.iter().position(|&i| i == best).unwrap()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{Network, LAYER_SIZES, STEEPNESS};
    use crate::geometry::builtin_layout;
    use crate::trajectory::{perfect_vector, resample, Point};

    #[test]
    fn forced_and_exact_matches() {
        let q = builtin_layout("qwerty").unwrap();
        let lex = Lexicon::parse(crate::lexicon::DEMO).unwrap();
        let v = perfect_vector("people", &q, 50).unwrap();
        assert_eq!(recognize(&v, &["people"], &q, &Scorer::Euclidean, &lex, 50).unwrap(), "people");
        let all: Vec<&str> = lex.words().iter().map(String::as_str).collect();
        assert_eq!(recognize(&v, &all, &q, &Scorer::Euclidean, &lex, 50).unwrap(), "people");
        assert!(matches!(
            recognize(&v, &[], &q, &Scorer::Euclidean, &lex, 50),
            Err(Error::NoCandidates)
        ));
    }

    #[test]
    fn ties_go_to_frequent_word() {
        let q = builtin_layout("qwerty").unwrap();
        let lex = Lexicon::parse("rare 1\ncommon 50\nmid 10").unwrap();
        let v = perfect_vector("rare", &q, 50).unwrap();
        // the zero network scores everything 0.5
        let flat = Scorer::Network(Network::zeros(&LAYER_SIZES, STEEPNESS).unwrap());
        assert_eq!(recognize(&v, &["rare", "mid", "common"], &q, &flat, &lex, 50).unwrap(), "common");
        // identical perfect vectors: "to" and "too" on any layout
        let lex = Lexicon::parse("too 5\nto 7").unwrap();
        let v = perfect_vector("too", &q, 50).unwrap();
        assert_eq!(recognize(&v, &["too", "to"], &q, &Scorer::Euclidean, &lex, 50).unwrap(), "to");
        // equal counts fall back to alphabetical order
        let lex = Lexicon::parse("too 5\nto 5").unwrap();
        assert_eq!(recognize(&v, &["too", "to"], &q, &Scorer::Euclidean, &lex, 50).unwrap(), "to");
    }

    #[test]
    fn frequency_scaling_does_not_change_choice() {
        let q = builtin_layout("qwerty").unwrap();
        let lex = Lexicon::parse("pot 3\npit 2\nput 4\nout 1").unwrap();
        let scaled = Lexicon::from_entries(lex.iter().map(|(w, c)| (w.to_string(), c * 1000))).unwrap();
        let words = ["pot", "pit", "put", "out"];
        for w in words {
            let (x, y) = q.key_center(w.as_bytes()[1] as char);
            let v = resample(&[Point::new(9.4, 0.6), Point::new(x, y)], 50);
            let a = recognize(&v, &words, &q, &Scorer::Euclidean, &lex, 50).unwrap();
            let b = recognize(&v, &words, &q, &Scorer::Euclidean, &scaled, 50).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn cache_is_consistent() {
        let q = builtin_layout("qwerty").unwrap();
        let lex = Lexicon::parse(crate::lexicon::DEMO).unwrap();
        let cache = PerfectCache::new(&q, &lex, 50);
        let id = lex.id("there").unwrap();
        assert_eq!(cache.get(id), &perfect_vector("there", &q, 50).unwrap());
        assert!(std::ptr::eq(cache.get(id), cache.get(id)));
    }
}
