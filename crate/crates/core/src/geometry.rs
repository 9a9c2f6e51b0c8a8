//! Keyboard layouts: key geometry, lookup, permutation and area scaling.
//!
//! Layout units are dimensionless. The built-in layouts use unit-square keys,
//! with `y` growing downwards so the top row has the smallest `y`.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

pub const LETTERS: usize = 26;

/// Index of a lowercase ASCII letter, `a` = 0.
#[inline]
pub fn letter_index(c: char) -> Option<usize> {
    if c.is_ascii_lowercase() {
        Some(c as usize - 'a' as usize)
    } else {
        None
    }
}

#[inline]
pub fn index_letter(i: usize) -> char {
    debug_assert!(i < LETTERS);
    (b'a' + i as u8) as char
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyShape {
    Rectangle,
    /// Flat-topped hexagon inscribed in the key's bounding box.
    Hexagon,
}

impl KeyShape {
    fn token(self) -> &'static str {
        match self {
            KeyShape::Rectangle => "rect",
            KeyShape::Hexagon => "hex",
        }
    }
}

impl FromStr for KeyShape {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rect" => Ok(KeyShape::Rectangle),
            "hex" => Ok(KeyShape::Hexagon),
            other => Err(format!("unknown shape `{other}` (expected rect or hex)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Key {
    pub letter: char,
    pub center_x: f64,
    pub center_y: f64,
    pub width: f64,
    pub height: f64,
    pub shape: KeyShape,
}

impl Key {
    pub fn area(&self) -> f64 {
        match self.shape {
            KeyShape::Rectangle => self.width * self.height,
            KeyShape::Hexagon => self.width * self.height * 0.75,
        }
    }

    /// Inclusive containment test.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let dx = (x - self.center_x).abs();
        let dy = (y - self.center_y).abs();
        let hw = 0.5 * self.width;
        let hh = 0.5 * self.height;
        match self.shape {
            KeyShape::Rectangle => dx <= hw && dy <= hh,
            KeyShape::Hexagon => dy <= hh && dx <= hw - 0.5 * hw * dy / hh,
        }
    }

    fn vertices(&self) -> Vec<(f64, f64)> {
        let (cx, cy) = (self.center_x, self.center_y);
        let hw = 0.5 * self.width;
        let hh = 0.5 * self.height;
        match self.shape {
            KeyShape::Rectangle => vec![
                (cx - hw, cy - hh),
                (cx + hw, cy - hh),
                (cx + hw, cy + hh),
                (cx - hw, cy + hh),
            ],
            KeyShape::Hexagon => vec![
                (cx - hw, cy),
                (cx - 0.5 * hw, cy - hh),
                (cx + 0.5 * hw, cy - hh),
                (cx + hw, cy),
                (cx + 0.5 * hw, cy + hh),
                (cx - 0.5 * hw, cy + hh),
            ],
        }
    }

    fn interiors_overlap(&self, other: &Key) -> bool {
        const EPS: f64 = 1e-9;
        let a = self.vertices();
        let b = other.vertices();
        // Separating axis test over the edge normals of both convex polygons.
        for poly in [&a, &b] {
            for i in 0..poly.len() {
                let (x0, y0) = poly[i];
                let (x1, y1) = poly[(i + 1) % poly.len()];
                let axis = (y0 - y1, x1 - x0);
                let project = |p: &[(f64, f64)]| {
                    p.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(x, y)| {
                        let d = x * axis.0 + y * axis.1;
                        (lo.min(d), hi.max(d))
                    })
                };
                let (alo, ahi) = project(&a);
                let (blo, bhi) = project(&b);
                let scale = (axis.0 * axis.0 + axis.1 * axis.1).sqrt();
                if ahi.min(bhi) - alo.max(blo) <= EPS * scale {
                    return false;
                }
            }
        }
        true
    }
}

/// A full a-z keyboard. Keys are stored indexed by letter.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyboardLayout {
    name: String,
    keys: [Key; LETTERS],
}

impl KeyboardLayout {
    /// Builds a layout from an arbitrary list of keys, checking every invariant.
    pub fn new(name: impl Into<String>, keys: impl IntoIterator<Item = Key>) -> Result<Self> {
        let mut slots: [Option<Key>; LETTERS] = [None; LETTERS];
        for key in keys {
            let idx = letter_index(key.letter)
                .ok_or_else(|| Error::invalid(format!("invalid letter `{}`", key.letter)))?;
            if slots[idx].is_some() {
                return Err(Error::invalid(format!("duplicate letter `{}`", key.letter)));
            }
            check_key(&key).map_err(Error::InvalidArgument)?;
            slots[idx] = Some(key);
        }
        let missing = missing_letters(&slots);
        if !missing.is_empty() {
            return Err(Error::invalid(format!("missing letters: {missing}")));
        }
        let keys = slots.map(|k| k.expect("all letters present"));
        let layout = KeyboardLayout {
            name: name.into(),
            keys,
        };
        layout.check_overlaps()?;
        Ok(layout)
    }

    fn check_overlaps(&self) -> Result<()> {
        for i in 0..LETTERS {
            for j in (i + 1)..LETTERS {
                if self.keys[i].interiors_overlap(&self.keys[j]) {
                    return Err(Error::invalid(format!(
                        "keys `{}` and `{}` overlap",
                        index_letter(i),
                        index_letter(j)
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn keys(&self) -> &[Key; LETTERS] {
        &self.keys
    }

    pub fn key(&self, letter: char) -> Option<&Key> {
        letter_index(letter).map(|i| &self.keys[i])
    }

    /// Center of the key for `letter`. Panics on a character outside a-z.
    pub fn key_center(&self, letter: char) -> (f64, f64) {
        let k = &self.keys[letter_index(letter).expect("letter must be a-z")];
        (k.center_x, k.center_y)
    }

    #[inline]
    pub(crate) fn key_by_index(&self, idx: usize) -> &Key {
        &self.keys[idx]
    }

    /// The letter whose key contains the point. On shared boundaries the
    /// alphabetically smaller letter wins.
    pub fn key_at(&self, x: f64, y: f64) -> Option<char> {
        self.key_index_at(x, y).map(index_letter)
    }

    #[inline]
    pub(crate) fn key_index_at(&self, x: f64, y: f64) -> Option<usize> {
        self.keys.iter().position(|k| k.contains(x, y))
    }

    /// Key whose center is closest to the point (ties to the smaller letter).
    pub(crate) fn nearest_key_index(&self, x: f64, y: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, k) in self.keys.iter().enumerate() {
            let d = (k.center_x - x).powi(2) + (k.center_y - y).powi(2);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    pub fn total_key_area(&self) -> f64 {
        self.keys.iter().map(Key::area).sum()
    }

    /// Mean area of a single key.
    pub fn mean_key_area(&self) -> f64 {
        self.total_key_area() / LETTERS as f64
    }

    /// Exchanges the positions of each pair of letters. Pairs must be disjoint.
    pub fn swap_keys(&self, pairs: &[(char, char)]) -> Result<KeyboardLayout> {
        let mut used = [false; LETTERS];
        let mut out = self.clone();
        for &(a, b) in pairs {
            let ia = letter_index(a).ok_or_else(|| Error::invalid(format!("invalid letter `{a}`")))?;
            let ib = letter_index(b).ok_or_else(|| Error::invalid(format!("invalid letter `{b}`")))?;
            for (idx, c) in [(ia, a), (ib, b)] {
                if used[idx] {
                    return Err(Error::invalid(format!("letter `{c}` appears in more than one pair")));
                }
                used[idx] = true;
            }
            out.swap_indices(ia, ib);
        }
        Ok(out)
    }

    pub(crate) fn swap_indices(&mut self, ia: usize, ib: usize) {
        let (ka, kb) = (self.keys[ia], self.keys[ib]);
        self.keys[ia] = Key { letter: ka.letter, ..kb };
        self.keys[ib] = Key { letter: kb.letter, ..ka };
    }

    /// Random assignment of letters to this layout's key positions.
    pub fn shuffled<R: Rng + ?Sized>(&self, rng: &mut R) -> KeyboardLayout {
        let mut positions: Vec<Key> = self.keys.to_vec();
        positions.shuffle(rng);
        let mut out = self.clone();
        for (i, pos) in positions.into_iter().enumerate() {
            out.keys[i] = Key {
                letter: index_letter(i),
                ..pos
            };
        }
        out
    }

    /// Uniformly rescales coordinates and extents so the keys cover `target_total_area`.
    pub fn normalize_area(&self, target_total_area: f64) -> Result<KeyboardLayout> {
        if !(target_total_area > 0.0 && target_total_area.is_finite()) {
            return Err(Error::invalid("target area must be positive"));
        }
        let s = (target_total_area / self.total_key_area()).sqrt();
        let mut out = self.clone();
        for k in out.keys.iter_mut() {
            k.center_x *= s;
            k.center_y *= s;
            k.width *= s;
            k.height *= s;
        }
        Ok(out)
    }

    /// Parses the line-based layout file format.
    pub fn parse(name: impl Into<String>, text: &str) -> Result<KeyboardLayout> {
        let mut slots: [Option<Key>; LETTERS] = [None; LETTERS];
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = lineno + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 6 {
                return Err(Error::line(
                    lineno,
                    format!("expected `letter center_x center_y width height shape`, got {} fields", fields.len()),
                ));
            }
            let mut chars = fields[0].chars();
            let letter = match (chars.next(), chars.next()) {
                (Some(c), None) if c.is_ascii_lowercase() => c,
                _ => return Err(Error::line(lineno, format!("invalid letter `{}`", fields[0]))),
            };
            let mut nums = [0.0; 4];
            for (slot, (field, what)) in nums
                .iter_mut()
                .zip(fields[1..5].iter().zip(["center_x", "center_y", "width", "height"]))
            {
                *slot = field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::line(lineno, format!("invalid {what} `{field}`")))?;
            }
            let shape = fields[5].parse::<KeyShape>().map_err(|e| Error::line(lineno, e))?;
            let key = Key {
                letter,
                center_x: nums[0],
                center_y: nums[1],
                width: nums[2],
                height: nums[3],
                shape,
            };
            check_key(&key).map_err(|e| Error::line(lineno, e))?;
            let idx = letter_index(letter).unwrap();
            if slots[idx].is_some() {
                return Err(Error::line(lineno, format!("duplicate letter `{letter}`")));
            }
            slots[idx] = Some(key);
        }
        let missing = missing_letters(&slots);
        if !missing.is_empty() {
            return Err(Error::Parse(format!("missing letters: {missing}")));
        }
        let layout = KeyboardLayout {
            name: name.into(),
            keys: slots.map(|k| k.unwrap()),
        };
        layout.check_overlaps()?;
        Ok(layout)
    }

    /// Serializes in the layout file format.
    pub fn to_text(&self) -> String {
        let mut out = format!("# layout: {}\n", self.name);
        for k in &self.keys {
            out.push_str(&format!(
                "{} {} {} {} {} {}\n",
                k.letter,
                k.center_x,
                k.center_y,
                k.width,
                k.height,
                k.shape.token()
            ));
        }
        out
    }

    /// Letters row by row, for display.
    pub fn letters_by_position(&self) -> String {
        let mut keys: Vec<&Key> = self.keys.iter().collect();
        keys.sort_by(|a, b| {
            a.center_y
                .total_cmp(&b.center_y)
                .then(a.center_x.total_cmp(&b.center_x))
        });
        keys.iter().map(|k| k.letter).collect()
    }
}

impl fmt::Display for KeyboardLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]", self.name, self.letters_by_position())
    }
}

fn check_key(key: &Key) -> std::result::Result<(), String> {
    if !(key.width > 0.0) || !(key.height > 0.0) {
        return Err(format!(
            "key `{}` has non-positive extent {} x {}",
            key.letter, key.width, key.height
        ));
    }
    Ok(())
}

fn missing_letters(slots: &[Option<Key>; LETTERS]) -> String {
    slots
        .iter()
        .enumerate()
        .filter(|(_, k)| k.is_none())
        .map(|(i, _)| index_letter(i).to_string())
        .collect::<Vec<_>>()
        .join(",")
}

pub const BUILTIN_LAYOUTS: [&str; 3] = ["qwerty", "dvorak", "alphabetic"];

/// One of the built-in layouts by name.
pub fn builtin_layout(name: &str) -> Result<KeyboardLayout> {
    // Rows of (horizontal offset, row string); '.' marks a non-letter key slot.
    let (rows, display): (&[(f64, &str)], &str) = match name {
        "qwerty" => (&[(0.0, "qwertyuiop"), (0.25, "asdfghjkl"), (0.75, "zxcvbnm")], "qwerty"),
        "dvorak" => (&[(0.0, "...pyfgcrl"), (0.25, "aoeuidhtns"), (0.75, ".qjkxbmwvz")], "dvorak"),
        "alphabetic" | "square-alphabetic" => (
            &[(0.0, "abcdefg"), (0.0, "hijklmn"), (0.0, "opqrstu"), (0.0, "vwxyz")],
            "alphabetic",
        ),
        other => return Err(Error::NotFound(format!("unknown layout `{other}`"))),
    };
    let keys = rows.iter().enumerate().flat_map(|(row, &(offset, letters))| {
        letters.chars().enumerate().filter(|&(_, c)| c != '.').map(move |(col, c)| Key {
            letter: c,
            center_x: offset + col as f64 + 0.5,
            center_y: row as f64 + 0.5,
            width: 1.0,
            height: 1.0,
            shape: KeyShape::Rectangle,
        })
    });
    KeyboardLayout::new(display, keys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn top_row_leftmost(l: &KeyboardLayout) -> char {
        let min_y = l.keys().iter().map(|k| k.center_y).fold(f64::INFINITY, f64::min);
        l.keys()
            .iter()
            .filter(|k| k.center_y == min_y)
            .min_by(|a, b| a.center_x.total_cmp(&b.center_x))
            .unwrap()
            .letter
    }

    #[test]
    fn builtins() {
        let q = builtin_layout("qwerty").unwrap();
        assert_eq!(top_row_leftmost(&q), 'q');
        let d = builtin_layout("dvorak").unwrap();
        let home: Vec<&Key> = d.keys().iter().filter(|k| k.center_y == 1.5).collect();
        let leftmost = home.iter().min_by(|a, b| a.center_x.total_cmp(&b.center_x)).unwrap();
        assert_eq!(leftmost.letter, 'a');
        assert!(matches!(builtin_layout("nosuch"), Err(Error::NotFound(_))));
        assert!(builtin_layout("alphabetic").is_ok());
    }

    #[test]
    fn parse_round_trip_and_errors() {
        let q = builtin_layout("qwerty").unwrap();
        let text = q.to_text();
        let back = KeyboardLayout::parse("qwerty", &text).unwrap();
        assert_eq!(back, q);

        let no_z: String = text.lines().filter(|l| !l.starts_with('z')).map(|l| format!("{l}\n")).collect();
        let err = KeyboardLayout::parse("x", &no_z).unwrap_err();
        assert_eq!(err.to_string(), "missing letters: z");

        let bad = text.replace("a 0.75 1.5 1 1 rect", "a 0 0 -1 1 rect");
        assert_ne!(bad, text);
        match KeyboardLayout::parse("x", &bad).unwrap_err() {
            Error::ParseLine { msg, .. } => assert!(msg.contains("extent"), "{msg}"),
            e => panic!("unexpected {e}"),
        }

        let dup = format!("{text}a 100 100 1 1 rect\n");
        assert!(KeyboardLayout::parse("x", &dup).unwrap_err().to_string().contains("duplicate"));

        let malformed = text.replacen("q 0.5 0.5 1 1 rect", "q 0.5 0.5 1 rect", 1);
        assert!(matches!(KeyboardLayout::parse("x", &malformed), Err(Error::ParseLine { line: 18, .. })));

        let overlapping = text.replace("w 1.5 0.5 1 1 rect", "w 1 0.5 1 1 rect");
        assert!(KeyboardLayout::parse("x", &overlapping).is_err());
    }

    #[test]
    fn swaps() {
        let q = builtin_layout("qwerty").unwrap();
        let once = q.swap_keys(&[('a', 'b')]).unwrap();
        assert_ne!(once, q);
        assert_eq!(once.swap_keys(&[('a', 'b')]).unwrap(), q);
        assert_eq!(q.swap_keys(&[]).unwrap(), q);
        let qp = q.swap_keys(&[('q', 'p')]).unwrap();
        assert_eq!(top_row_leftmost(&qp), 'p');
        assert_eq!(qp.key_center('p'), q.key_center('q'));
        assert!(q.swap_keys(&[('a', 'b'), ('b', 'c')]).is_err());
        assert!(q.swap_keys(&[('a', 'a')]).is_err());
    }

    #[test]
    fn area_normalization() {
        let q = builtin_layout("qwerty").unwrap();
        assert_eq!(q.total_key_area(), 26.0);
        assert_eq!(q.normalize_area(26.0).unwrap(), q);
        let big = q.normalize_area(104.0).unwrap();
        for (a, b) in q.keys().iter().zip(big.keys()) {
            assert_eq!(b.width, 2.0 * a.width);
            assert_eq!(b.center_x, 2.0 * a.center_x);
        }
        let twice = big.normalize_area(104.0).unwrap();
        for (a, b) in big.keys().iter().zip(twice.keys()) {
            assert!((a.center_x - b.center_x).abs() < 1e-9 && (a.width - b.width).abs() < 1e-9);
        }
        let odd = q.normalize_area(7.3).unwrap();
        assert!((odd.total_key_area() - 7.3).abs() / 7.3 < 1e-6);
        assert!(q.normalize_area(0.0).is_err());
    }

    #[test]
    fn hexagon_area_and_containment() {
        let k = Key {
            letter: 'a',
            center_x: 0.0,
            center_y: 0.0,
            width: 2.0,
            height: 3f64.sqrt(),
            shape: KeyShape::Hexagon,
        };
        assert!((k.area() - 3.0 * 3f64.sqrt() / 8.0 * 4.0).abs() < 1e-12);
        assert!(k.contains(0.0, 0.0));
        assert!(k.contains(1.0, 0.0));
        assert!(k.contains(0.5, 3f64.sqrt() / 2.0));
        assert!(!k.contains(0.9, 0.8));
        assert!(!k.contains(1.01, 0.0));
    }

    #[test]
    fn key_lookup() {
        let q = builtin_layout("qwerty").unwrap();
        let (gx, gy) = q.key_center('g');
        assert_eq!(q.key_at(gx, gy), Some('g'));
        assert_eq!(q.key_at(100.0, 100.0), None);
        // q spans [0,1], w spans [1,2] in the top row
        assert_eq!(q.key_at(1.0, 0.5), Some('q'));
        assert_eq!(q.key_at(2.0, 0.5), Some('e'));
        for name in BUILTIN_LAYOUTS {
            let l = builtin_layout(name).unwrap();
            for i in 0..LETTERS {
                let c = index_letter(i);
                let (x, y) = l.key_center(c);
                assert_eq!(l.key_at(x, y), Some(c), "{name} {c}");
            }
        }
    }

    #[test]
    fn shuffle_is_permutation() {
        let q = builtin_layout("qwerty").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = q.shuffled(&mut rng);
        let mut a: Vec<(u64, u64)> = q.keys().iter().map(|k| (k.center_x.to_bits(), k.center_y.to_bits())).collect();
        let mut b: Vec<(u64, u64)> = s.keys().iter().map(|k| (k.center_x.to_bits(), k.center_y.to_bits())).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
        assert_ne!(s, q);
    }
}
