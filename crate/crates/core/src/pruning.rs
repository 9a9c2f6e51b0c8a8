//! Candidate generation before scoring.
//!
//! A gesture's *string form* is the run-collapsed sequence of keys its samples
//! pass over. A word is a candidate for a string form when its own
//! run-collapsed spelling is a subsequence of it, so doubled letters (which a
//! swipe cannot distinguish) are always allowed. Candidates are found by a
//! walk over a radix tree of the lexicon.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{index_letter, KeyboardLayout, LETTERS};
use crate::lexicon::Lexicon;
use crate::trajectory::{random_vector, InputModelConfig, InputVector};

#[derive(Debug, Clone)]
struct Edge {
    label: Box<[u8]>,
    child: u32,
}

#[derive(Debug, Clone, Default)]
struct Node {
    children: Vec<Edge>,
    word: Option<u32>,
}

/// Compressed prefix tree over lexicon words, storing lexicon ids.
#[derive(Debug, Clone)]
pub struct RadixTree {
    nodes: Vec<Node>,
    words: usize,
}

impl Default for RadixTree {
    fn default() -> Self {
        RadixTree {
            nodes: vec![Node::default()],
            words: 0,
        }
    }
}

impl RadixTree {
    pub fn build(lex: &Lexicon) -> RadixTree {
        let mut tree = RadixTree::default();
        for (id, w) in lex.words().iter().enumerate() {
            tree.insert(w.as_bytes(), id as u32);
        }
        tree
    }

    /// Inserts `word` with `id`; an existing word keeps its first id.
    pub fn insert(&mut self, word: &[u8], id: u32) {
        let mut node = 0usize;
        let mut rest = word;
        loop {
            if rest.is_empty() {
                if self.nodes[node].word.is_none() {
                    self.nodes[node].word = Some(id);
                    self.words += 1;
                }
                return;
            }
            let found = self.nodes[node]
                .children
                .iter()
                .position(|e| e.label[0] == rest[0]);
            let Some(ei) = found else {
                let child = self.push_node(Node {
                    children: Vec::new(),
                    word: Some(id),
                });
                self.nodes[node].children.push(Edge {
                    label: rest.into(),
                    child,
                });
                self.words += 1;
                return;
            };
            let label = self.nodes[node].children[ei].label.clone();
            let common = label.iter().zip(rest).take_while(|(a, b)| a == b).count();
            if common == label.len() {
                node = self.nodes[node].children[ei].child as usize;
                rest = &rest[common..];
                continue;
            }
            // split the edge at the divergence point
            let old_child = self.nodes[node].children[ei].child;
            let mid = self.push_node(Node {
                children: vec![Edge {
                    label: label[common..].into(),
                    child: old_child,
                }],
                word: None,
            });
            let edge = &mut self.nodes[node].children[ei];
            edge.label = label[..common].into();
            edge.child = mid;
            node = mid as usize;
            rest = &rest[common..];
        }
    }

    fn push_node(&mut self, n: Node) -> u32 {
        self.nodes.push(n);
        (self.nodes.len() - 1) as u32
    }

    pub fn len(&self) -> usize {
        self.words
    }

    pub fn is_empty(&self) -> bool {
        self.words == 0
    }

    /// Lexicon id of `word`, if present.
    pub fn lookup(&self, word: &str) -> Option<u32> {
        let mut node = 0usize;
        let mut rest = word.as_bytes();
        while !rest.is_empty() {
            let e = self.nodes[node]
                .children
                .iter()
                .find(|e| rest.starts_with(&e.label))?;
            rest = &rest[e.label.len()..];
            node = e.child as usize;
        }
        self.nodes[node].word
    }

    pub fn contains(&self, word: &str) -> bool {
        self.lookup(word).is_some()
    }

    /// Ids of every word whose run-collapsed spelling is a subsequence of `sf`.
    pub fn candidates_in_string_form(&self, sf: &StringForm) -> Vec<u32> {
        let mut out = Vec::new();
        self.collect_candidates(sf, &mut out);
        out.sort_unstable();
        out
    }

    /// Appends matches to `out` without sorting or deduplicating.
    pub fn collect_candidates(&self, sf: &StringForm, out: &mut Vec<u32>) {
        self.collect_anchored(sf, Anchor::Free, out);
    }

    /// Like [`collect_candidates`](Self::collect_candidates), additionally
    /// requiring the word to start (and, for [`Anchor::Ends`], end) on the
    /// string form's first (and last) letter.
    pub fn collect_anchored(&self, sf: &StringForm, anchor: Anchor, out: &mut Vec<u32>) {
        let Some((&first, &final_letter)) = sf.as_bytes().first().zip(sf.as_bytes().last()) else {
            return;
        };
        let next = NextTable::new(sf.as_bytes());
        // (node, first string-form index still available, last matched letter)
        let mut stack: Vec<(u32, u32, u8)> = vec![(0, 0, NONE)];
        while let Some((node, pos, last)) = stack.pop() {
            for edge in &self.nodes[node as usize].children {
                if node == 0 && anchor != Anchor::Free && edge.label[0] != first {
                    continue;
                }
                let mut pos = pos;
                let mut last = last;
                let mut ok = true;
                for &c in edge.label.iter() {
                    // a repeat of the previous letter is absorbed by the same key
                    if c == last {
                        continue;
                    }
                    match next.find(pos, c) {
                        Some(k) => {
                            pos = k + 1;
                            last = c;
                        }
                        None => {
                            ok = false;
                            break;
                        }
                    }
                }
                if ok {
                    if let Some(id) = self.nodes[edge.child as usize].word {
                        if anchor != Anchor::Ends || last == final_letter {
                            out.push(id);
                        }
                    }
                    stack.push((edge.child, pos, last));
                }
            }
        }
    }
}

const NONE: u8 = u8::MAX;

/// `table[j][c]`: first index `>= j` holding letter `c`.
struct NextTable {
    table: Vec<[u32; LETTERS]>,
}

impl NextTable {
    fn new(sf: &[u8]) -> Self {
        let mut table = vec![[u32::MAX; LETTERS]; sf.len() + 1];
        for j in (0..sf.len()).rev() {
            table[j] = table[j + 1];
            table[j][(sf[j] - b'a') as usize] = j as u32;
        }
        NextTable { table }
    }

    #[inline]
    fn find(&self, pos: u32, c: u8) -> Option<u32> {
        let k = self.table[pos as usize][(c - b'a') as usize];
        (k != u32::MAX).then_some(k)
    }
}

/// Letters a-z with no two consecutive letters equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct StringForm(Vec<u8>);

impl StringForm {
    /// Validates an already-collapsed string.
    pub fn new(s: &str) -> Result<Self> {
        if !s.bytes().all(|b| b.is_ascii_lowercase()) {
            return Err(Error::invalid(format!("string form `{s}` contains characters outside a-z")));
        }
        if s.as_bytes().windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid(format!("string form `{s}` repeats a letter consecutively")));
        }
        Ok(StringForm(s.as_bytes().to_vec()))
    }

    /// Collapses runs of equal letters.
    pub fn collapse(s: &str) -> Result<Self> {
        StringForm::new(&collapse_runs(s))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn as_str(&self) -> &str {
        std::str::from_utf8(&self.0).expect("ascii")
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn push_key(&mut self, idx: usize) {
        let c = index_letter(idx) as u8;
        if self.0.last() != Some(&c) {
            self.0.push(c);
        }
    }
}

impl fmt::Display for StringForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn collapse_runs(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if !out.ends_with(c) {
            out.push(c);
        }
    }
    out
}

/// Treatment of samples that fall on no key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DeadSpace {
    #[default]
    Skip,
    /// Assign to the key with the nearest center.
    Snap,
}

/// Which string-form positions a candidate must start or end on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Anchor {
    /// Any subsequence.
    #[default]
    Free,
    /// First letter must be the string form's first letter.
    First,
    /// First and last letters must match the string form's.
    Ends,
}

impl std::str::FromStr for Anchor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "free" => Ok(Anchor::Free),
            "first" => Ok(Anchor::First),
            "ends" => Ok(Anchor::Ends),
            _ => Err(Error::invalid(format!("unknown anchor `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PruneOptions {
    pub dead_space: DeadSpace,
    pub anchor: Anchor,
}

/// Keys traversed by `v`. `None` when no sample lies on any key.
pub fn string_form(v: &InputVector, layout: &KeyboardLayout, dead_space: DeadSpace) -> Option<StringForm> {
    let mut sf = StringForm::default();
    for p in v.points() {
        let idx = match (layout.key_index_at(p.x, p.y), dead_space) {
            (Some(i), _) => i,
            (None, DeadSpace::Snap) => layout.nearest_key_index(p.x, p.y),
            (None, DeadSpace::Skip) => continue,
        };
        sf.push_key(idx);
    }
    (!sf.is_empty()).then_some(sf)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pruned {
    /// Sorted, deduplicated lexicon ids.
    pub ids: Vec<u32>,
    /// The intended word was missing from every string form and was added.
    pub forced: bool,
}

/// Union of the string-form candidates of `k` random vectors for `word`,
/// always including `word` itself when it is in the tree.
#[allow(clippy::too_many_arguments)]
pub fn prune_candidates<R: Rng + ?Sized>(
    word: &str,
    layout: &KeyboardLayout,
    cfg: &InputModelConfig,
    k: usize,
    tree: &RadixTree,
    opts: PruneOptions,
    rng: &mut R,
) -> Result<Pruned> {
    if k == 0 {
        return Err(Error::invalid("at least one pruning vector is required"));
    }
    let mut ids = Vec::new();
    for _ in 0..k {
        let v = random_vector(word, layout, cfg, rng)?;
        if let Some(sf) = string_form(&v, layout, opts.dead_space) {
            tree.collect_anchored(&sf, opts.anchor, &mut ids);
        }
    }
    ids.sort_unstable();
    ids.dedup();
    let mut forced = false;
    if let Some(own) = tree.lookup(word) {
        if let Err(pos) = ids.binary_search(&own) {
            ids.insert(pos, own);
            forced = true;
        }
    }
    Ok(Pruned { ids, forced })
}

/// Words whose perfect vectors start and end within `threshold` of `v`'s
/// first and last points. Perfect vectors start and end on key centers, so
/// only the first and last letters matter.
pub fn template_prune(lex: &Lexicon, v: &InputVector, layout: &KeyboardLayout, threshold: f64) -> Vec<u32> {
    let near = |p: crate::trajectory::Point| {
        let mut ok = [false; LETTERS];
        for (i, k) in layout.keys().iter().enumerate() {
            ok[i] = (k.center_x - p.x).hypot(k.center_y - p.y) <= threshold;
        }
        ok
    };
    let first_ok = near(v.first());
    let last_ok = near(v.last());
    lex.words()
        .iter()
        .enumerate()
        .filter(|(_, w)| {
            let b = w.as_bytes();
            first_ok[(b[0] - b'a') as usize] && last_ok[(b[b.len() - 1] - b'a') as usize]
        })
        .map(|(i, _)| i as u32)
        .collect()
}

/// Smallest template threshold that keeps the intended word for at least
/// `retain` of `trials` frequency-sampled noisy gestures.
pub fn tune_template_threshold<R: Rng + ?Sized>(
    lex: &Lexicon,
    layout: &KeyboardLayout,
    configs: &[InputModelConfig],
    trials: usize,
    retain: f64,
    rng: &mut R,
) -> Result<f64> {
    if configs.is_empty() || trials == 0 || !(0.0..=1.0).contains(&retain) {
        return Err(Error::invalid("need configs, trials > 0 and retain in [0, 1]"));
    }
    let mut needed: Vec<f64> = (0..trials)
        .map(|i| {
            let word = lex.sample_word(rng);
            let v = random_vector(word, layout, &configs[i % configs.len()], rng)?;
            let b = word.as_bytes();
            let (fx, fy) = layout.key_center(b[0] as char);
            let (lx, ly) = layout.key_center(b[b.len() - 1] as char);
            let d_first = (v.first().x - fx).hypot(v.first().y - fy);
            let d_last = (v.last().x - lx).hypot(v.last().y - ly);
            Ok(d_first.max(d_last))
        })
        .collect::<Result<_>>()?;
    needed.sort_by(f64::total_cmp);
    let idx = ((retain * trials as f64).ceil() as usize).clamp(1, trials) - 1;
    Ok(needed[idx])
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::geometry::builtin_layout;
    use crate::trajectory::{perfect_vector, Interpolation, Point};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Independent check: collapse runs, then greedy subsequence test.
    pub(crate) fn oracle(words: &[String], sf: &str) -> Vec<u32> {
        let is_subseq = |w: &str| {
            let mut it = sf.chars();
            collapse_runs(w).chars().all(|c| it.any(|s| s == c))
        };
        words
            .iter()
            .enumerate()
            .filter(|(_, w)| !sf.is_empty() && is_subseq(w))
            .map(|(i, _)| i as u32)
            .collect()
    }

    fn lex(words: &[&str]) -> Lexicon {
        Lexicon::from_entries(words.iter().enumerate().map(|(i, w)| (*w, 100 - i as u64))).unwrap()
    }

    fn names(lex: &Lexicon, ids: &[u32]) -> Vec<String> {
        let mut v: Vec<String> = ids.iter().map(|&i| lex.word(i).to_string()).collect();
        v.sort();
        v
    }

    #[test]
    fn membership() {
        let l = lex(&["pot", "pit", "put", "pout", "potato"]);
        let t = RadixTree::build(&l);
        for w in l.words() {
            assert!(t.contains(w));
        }
        assert!(!t.contains("po"));
        assert!(!t.contains("potatoes"));
        assert_eq!(t.len(), 5);

        let single = RadixTree::build(&lex(&["word"]));
        assert_eq!(single.nodes.len(), 2);
        assert!(single.contains("word") && !single.contains("wor"));
    }

    #[test]
    fn pot_in_poiuyt() {
        let l = lex(&["pot", "pit", "put", "pout", "potato"]);
        let t = RadixTree::build(&l);
        let got = t.candidates_in_string_form(&StringForm::new("poiuyt").unwrap());
        assert_eq!(names(&l, &got), vec!["pit", "pot", "pout", "put"]);
        assert_eq!(got, oracle(l.words(), "poiuyt"));
        assert!(t.candidates_in_string_form(&StringForm::default()).is_empty());
    }

    #[test]
    fn doubled_letters() {
        let l = lex(&["pool"]);
        let t = RadixTree::build(&l);
        assert_eq!(t.candidates_in_string_form(&StringForm::new("pol").unwrap()), vec![0]);
        assert!(StringForm::new("pool").is_err());
        assert_eq!(StringForm::collapse("pool").unwrap().as_str(), "pol");
    }

    #[test]
    fn string_form_of_traced_centers() {
        let q = builtin_layout("qwerty").unwrap();
        let pts: Vec<Point> = "poiuyt"
            .chars()
            .flat_map(|c| {
                let (x, y) = q.key_center(c);
                [Point::new(x, y), Point::new(x + 0.1, y)]
            })
            .collect();
        let sf = string_form(&InputVector::new(pts), &q, DeadSpace::Skip).unwrap();
        assert_eq!(sf.as_str(), "poiuyt");

        let (gx, gy) = q.key_center('g');
        let inside = InputVector::new(vec![Point::new(gx, gy), Point::new(gx + 0.2, gy - 0.1)]);
        assert_eq!(string_form(&inside, &q, DeadSpace::Skip).unwrap().as_str(), "g");

        let (hx, hy) = q.key_center('h');
        let gappy = InputVector::new(vec![
            Point::new(gx, gy),
            Point::new(50.0, 50.0),
            Point::new(hx, hy),
            Point::new(-50.0, 0.0),
        ]);
        assert_eq!(string_form(&gappy, &q, DeadSpace::Skip).unwrap().as_str(), "gh");
        assert_eq!(string_form(&gappy, &q, DeadSpace::Snap).unwrap().as_str(), "glhq");

        let nowhere = InputVector::new(vec![Point::new(50.0, 50.0); 3]);
        assert_eq!(string_form(&nowhere, &q, DeadSpace::Skip), None);
    }

    #[test]
    fn zero_noise_pruning() {
        let q = builtin_layout("qwerty").unwrap();
        let l = Lexicon::parse(crate::lexicon::DEMO).unwrap();
        let t = RadixTree::build(&l);
        let cfg = InputModelConfig::noiseless(Interpolation::Linear);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let got = prune_candidates("people", &q, &cfg, 1, &t, PruneOptions::default(), &mut rng).unwrap();
        let sf = string_form(&perfect_vector("people", &q, 50).unwrap(), &q, DeadSpace::Skip).unwrap();
        let brute = oracle(l.words(), sf.as_str());
        assert!(!got.forced);
        assert!(got.ids.contains(&l.id("people").unwrap()));
        assert!(got.ids.iter().all(|i| brute.contains(i)));
        assert!(prune_candidates("pot", &q, &cfg, 0, &t, PruneOptions::default(), &mut rng).is_err());
    }

    #[test]
    fn pruning_grows_with_k_and_forces_intended_word() {
        let q = builtin_layout("qwerty").unwrap();
        let l = Lexicon::parse(crate::lexicon::DEMO).unwrap();
        let t = RadixTree::build(&l);
        let cfg = InputModelConfig::for_layout(&q, Interpolation::NaturalCubic);
        let mut prev = 0;
        for k in [1, 2, 5, 10, 20] {
            let got = prune_candidates("people", &q, &cfg, k, &t, PruneOptions::default(), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
            assert!(got.ids.len() >= prev);
            prev = got.ids.len();
        }
        // far more noise than key size: the word is frequently missed and forced in
        let wild = InputModelConfig { sigma_x: 5.0, sigma_y: 5.0, ..cfg };
        let mut forced = 0;
        for s in 0..20 {
            let got = prune_candidates("people", &q, &wild, 1, &t, PruneOptions::default(), &mut ChaCha8Rng::seed_from_u64(s)).unwrap();
            assert!(got.ids.contains(&l.id("people").unwrap()));
            forced += got.forced as usize;
        }
        assert!(forced > 0);
    }

    #[test]
    fn template_pruning() {
        let q = builtin_layout("qwerty").unwrap();
        let l = Lexicon::parse(crate::lexicon::DEMO).unwrap();
        let v = perfect_vector("there", &q, 50).unwrap();
        assert_eq!(template_prune(&l, &v, &q, f64::INFINITY).len(), l.len());
        let exact = names(&l, &template_prune(&l, &v, &q, 0.0));
        assert!(exact.contains(&"there".to_string()));
        assert!(exact.iter().all(|w| w.starts_with('t') && w.ends_with('e')));
        let mut prev = usize::MAX;
        for th in [3.0, 2.0, 1.0, 0.5, 0.0] {
            let n = template_prune(&l, &v, &q, th).len();
            assert!(n <= prev);
            prev = n;
        }
    }

    #[test]
    fn tuned_threshold_retains_intended_words() {
        let q = builtin_layout("qwerty").unwrap();
        let l = Lexicon::parse(crate::lexicon::DEMO).unwrap();
        let cfgs: Vec<_> = Interpolation::ALL.iter().map(|&m| InputModelConfig::for_layout(&q, m)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let th = tune_template_threshold(&l, &q, &cfgs, 2000, 0.99, &mut rng).unwrap();
        // Rayleigh tail for sigma 0.25 at 99% on two independent endpoints is ~0.8
        assert!(th > 0.5 && th < 1.2, "{th}");
    }

    fn arb_instance() -> impl Strategy<Value = (Vec<String>, String)> {
        (
            prop::collection::btree_set("[a-f]{1,6}", 1..=200),
            "[a-f]{0,12}",
        )
            .prop_map(|(words, sf)| (words.into_iter().collect(), collapse_runs(&sf)))
    }

    proptest! {
        #[test]
        fn tree_matches_oracle((words, sf) in arb_instance()) {
            let l = Lexicon::from_entries(words.iter().map(|w| (w.clone(), 1u64))).unwrap();
            let t = RadixTree::build(&l);
            prop_assert_eq!(t.len(), l.len());
            let got = t.candidates_in_string_form(&StringForm::new(&sf).unwrap());
            prop_assert_eq!(got, oracle(l.words(), &sf));
        }
    }
}
