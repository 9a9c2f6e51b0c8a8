//! Frequency-weighted word lists.

use std::collections::{HashMap, HashSet};

use rand::Rng;

use crate::error::{Error, Result};

/// The 1,000 most frequent English words.
pub const DEMO: &str = include_str!("../data/demo.txt");
/// 95,881 English words with occurrence counts per 10^9 tokens.
pub const ENGLISH: &str = include_str!("../data/english.txt");

/// Words sorted by descending frequency (ties alphabetical) with an integer
/// prefix-sum table for sampling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    words: Vec<String>,
    counts: Vec<u64>,
    cumulative: Vec<u64>,
    index: HashMap<String, u32>,
}

fn valid_word(w: &str) -> bool {
    !w.is_empty() && w.bytes().all(|b| b.is_ascii_lowercase())
}

impl Lexicon {
    /// Builds a lexicon from `(word, count)` pairs in any order.
    pub fn from_entries<I, S>(entries: I) -> Result<Lexicon>
    where
        I: IntoIterator<Item = (S, u64)>,
        S: Into<String>,
    {
        let mut rows: Vec<(String, u64)> = Vec::new();
        let mut seen = HashSet::new();
        for (w, c) in entries {
            let w = w.into();
            if !valid_word(&w) {
                return Err(Error::invalid(format!("word `{w}` contains characters outside a-z")));
            }
            if c == 0 {
                return Err(Error::invalid(format!("word `{w}` has non-positive count")));
            }
            if !seen.insert(w.clone()) {
                return Err(Error::invalid(format!("duplicate word `{w}`")));
            }
            rows.push((w, c));
        }
        Ok(Self::from_unique_rows(rows))
    }

    fn from_unique_rows(mut rows: Vec<(String, u64)>) -> Lexicon {
        rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut total = 0u64;
        let cumulative = rows
            .iter()
            .map(|(_, c)| {
                total = total.checked_add(*c).expect("lexicon total overflows u64");
                total
            })
            .collect();
        let index = rows
            .iter()
            .enumerate()
            .map(|(i, (w, _))| (w.clone(), i as u32))
            .collect();
        let (words, counts) = rows.into_iter().unzip();
        Lexicon {
            words,
            counts,
            cumulative,
            index,
        }
    }

    /// Parses `word count` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Lexicon> {
        let mut rows = Vec::new();
        let mut seen = HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let lineno = lineno + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let (Some(word), Some(count), None) = (it.next(), it.next(), it.next()) else {
                return Err(Error::line(lineno, "expected `word count`"));
            };
            if !valid_word(word) {
                return Err(Error::line(lineno, format!("word `{word}` contains characters outside a-z")));
            }
            let count: u64 = match count.parse::<u64>() {
                Ok(c) if c > 0 => c,
                _ => return Err(Error::line(lineno, format!("count `{count}` is not a positive integer"))),
            };
            if !seen.insert(word) {
                return Err(Error::line(lineno, format!("duplicate word `{word}`")));
            }
            rows.push((word.to_string(), count));
        }
        if rows.is_empty() {
            return Err(Error::Parse("empty lexicon".into()));
        }
        Ok(Self::from_unique_rows(rows))
    }

    pub fn to_text(&self) -> String {
        self.iter().map(|(w, c)| format!("{w} {c}\n")).collect()
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.cumulative.last().copied().unwrap_or(0)
    }

    pub fn word(&self, id: u32) -> &str {
        &self.words[id as usize]
    }

    pub fn count(&self, id: u32) -> u64 {
        self.counts[id as usize]
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> + '_ {
        self.words.iter().map(String::as_str).zip(self.counts.iter().copied())
    }

    /// Keeps the words present in at least one allowlist.
    pub fn filter_by_wordlists(&self, allowlists: &[HashSet<String>]) -> Lexicon {
        let rows = self
            .iter()
            .filter(|(w, _)| allowlists.iter().any(|a| a.contains(*w)))
            .map(|(w, c)| (w.to_string(), c))
            .collect();
        Self::from_unique_rows(rows)
    }

    /// The `k` most frequent words and the fraction of total weight they carry.
    pub fn truncate_top(&self, k: usize) -> (Lexicon, f64) {
        let k = k.max(1).min(self.len());
        let rows = self.iter().take(k).map(|(w, c)| (w.to_string(), c)).collect();
        let kept = Self::from_unique_rows(rows);
        let coverage = if self.total() == 0 {
            1.0
        } else {
            kept.total() as f64 / self.total() as f64
        };
        (kept, coverage)
    }

    /// Draws a word id with probability count / total.
    pub fn sample_id<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        assert!(!self.is_empty(), "cannot sample from an empty lexicon");
        let r = rng.random_range(0..self.total());
        self.cumulative.partition_point(|&c| c <= r) as u32
    }

    pub fn sample_word<R: Rng + ?Sized>(&self, rng: &mut R) -> &str {
        self.word(self.sample_id(rng))
    }
}

/// Parses an allowlist file: one word per line, `#` comments.
pub fn parse_wordlist(text: &str) -> HashSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_ascii_lowercase)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parse_basic() {
        let lex = Lexicon::parse("the 100\nof 60").unwrap();
        assert_eq!(lex.len(), 2);
        assert_eq!(lex.total(), 160);
        assert_eq!(lex.word(0), "the");
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(Lexicon::parse("don't 5"), Err(Error::ParseLine { line: 1, .. })));
        assert_eq!(Lexicon::parse("").unwrap_err().to_string(), "empty lexicon");
        assert_eq!(Lexicon::parse("# nothing\n").unwrap_err().to_string(), "empty lexicon");
        assert!(matches!(Lexicon::parse("a 1\na 2"), Err(Error::ParseLine { line: 2, .. })));
        assert!(Lexicon::parse("a 0").is_err());
        assert!(Lexicon::parse("a -3").is_err());
        assert!(Lexicon::parse("Abc 3").is_err());
    }

    #[test]
    fn ties_sort_alphabetically() {
        let lex = Lexicon::parse("zed 5\nabc 5\nmid 9").unwrap();
        assert_eq!(lex.words(), &["mid", "abc", "zed"]);
    }

    #[test]
    fn filtering() {
        let lex = Lexicon::parse("the 100\nteh 50").unwrap();
        let all: HashSet<String> = ["the", "teh"].iter().map(|s| s.to_string()).collect();
        assert_eq!(lex.filter_by_wordlists(&[all]), lex);
        let none: HashSet<String> = ["xyz"].iter().map(|s| s.to_string()).collect();
        assert!(lex.filter_by_wordlists(&[none]).is_empty());
        let the = parse_wordlist("the\n");
        let f = lex.filter_by_wordlists(&[the]);
        assert_eq!(f.to_text(), "the 100\n");
        // union of several lists
        let a = parse_wordlist("teh");
        let b = parse_wordlist("the");
        assert_eq!(lex.filter_by_wordlists(&[a, b]).len(), 2);
    }

    #[test]
    fn truncation() {
        let lex = Lexicon::parse("a 3\nb 1").unwrap();
        let (top, cov) = lex.truncate_top(1);
        assert_eq!(top.to_text(), "a 3\n");
        assert_eq!(cov, 0.75);
        let (all, cov) = lex.truncate_top(2);
        assert_eq!((all, cov), (lex.clone(), 1.0));
        assert_eq!(lex.truncate_top(10).1, 1.0);
    }

    #[test]
    fn sampling() {
        let single = Lexicon::parse("only 7").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..100).all(|_| single.sample_word(&mut rng) == "only"));

        let lex = Lexicon::parse("a 3\nb 1").unwrap();
        let n = 100_000;
        let hits = (0..n).filter(|_| lex.sample_word(&mut rng) == "a").count();
        let sigma = (0.75f64 * 0.25 / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - 0.75).abs() < 5.0 * sigma);

        let draw = |seed| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| lex.sample_id(&mut r)).collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
    }

    #[test]
    fn bundled_lexicons_parse() {
        let demo = Lexicon::parse(DEMO).unwrap();
        assert_eq!(demo.len(), 1000);
        let en = Lexicon::parse(ENGLISH).unwrap();
        assert_eq!(en.len(), 95_881);
        let (top, coverage) = en.truncate_top(20_000);
        assert_eq!(top.len(), 20_000);
        // the bundled corpus is not the one the 97.2% figure came from
        assert!((coverage - 0.972).abs() < 0.01, "coverage {coverage}");
    }

    fn small_lexicon() -> impl Strategy<Value = Vec<(String, u64)>> {
        prop::collection::btree_map("[a-z]{1,6}", 1u64..1000, 1..=10)
            .prop_map(|m| m.into_iter().collect())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn sampling_matches_weights(rows in small_lexicon(), seed in any::<u64>()) {
            let lex = Lexicon::from_entries(rows).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 100_000usize;
            let mut hits = vec![0usize; lex.len()];
            for _ in 0..n {
                hits[lex.sample_id(&mut rng) as usize] += 1;
            }
            for (id, h) in hits.iter().enumerate() {
                let p = lex.count(id as u32) as f64 / lex.total() as f64;
                let sigma = (p * (1.0 - p) / n as f64).sqrt();
                prop_assert!((*h as f64 / n as f64 - p).abs() <= 5.0 * sigma + 1e-12);
            }
        }

        #[test]
        fn text_round_trip(rows in small_lexicon()) {
            let lex = Lexicon::from_entries(rows).unwrap();
            prop_assert_eq!(Lexicon::parse(&lex.to_text()).unwrap(), lex);
        }

        #[test]
        fn coverage_is_exact(rows in small_lexicon(), k in 1usize..12) {
            let lex = Lexicon::from_entries(rows).unwrap();
            let (top, cov) = lex.truncate_top(k);
            let kept: u64 = top.iter().map(|(_, c)| c).sum();
            prop_assert_eq!(cov, kept as f64 / lex.total() as f64);
        }
    }
}
