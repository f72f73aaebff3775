//! Words over a frame (`L₁..L_{n−1}`, their conjugates, `N`, `N̄`) and their enumeration.

use std::fmt;

use serde::{Deserialize, Serialize};

/// One letter of a list: a frame slot and a conjugation flag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Letter {
    /// Slots `0..n−1` are tangential fields, slot `n−1` is the normal `N`.
    pub slot: usize,
    pub conj: bool,
}

impl Letter {
    pub fn new(slot: usize, conj: bool) -> Letter {
        Letter { slot, conj }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ListSpec {
    pub word: Vec<Letter>,
}

impl ListSpec {
    pub fn new(word: Vec<Letter>) -> ListSpec {
        ListSpec { word }
    }

    pub fn len(&self) -> usize {
        self.word.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word.is_empty()
    }

    /// `l_i`: occurrences of slot `i` with either conjugation.
    pub fn count(&self, slot: usize) -> usize {
        self.word.iter().filter(|l| l.slot == slot).count()
    }

    /// `l_i¹`: unconjugated occurrences of slot `i`.
    pub fn count_plain(&self, slot: usize) -> usize {
        self.word.iter().filter(|l| l.slot == slot && !l.conj).count()
    }

    /// `l_i²`: conjugated occurrences of slot `i`.
    pub fn count_conj(&self, slot: usize) -> usize {
        self.word.iter().filter(|l| l.slot == slot && l.conj).count()
    }

    /// The word with every letter conjugated.
    pub fn conjugated(&self) -> ListSpec {
        ListSpec { word: self.word.iter().map(|l| Letter::new(l.slot, !l.conj)).collect() }
    }

    /// All words of length exactly `k` over the given slots and both conjugations,
    /// in lexicographic order; there are `(2·|slots|)^k` of them.
    pub fn enumerate_len(slots: &[usize], k: usize) -> Vec<ListSpec> {
        let alphabet: Vec<Letter> =
            slots.iter().flat_map(|&s| [Letter::new(s, false), Letter::new(s, true)]).collect();
        let mut out = vec![ListSpec::new(Vec::new())];
        for _ in 0..k {
            let mut next = Vec::with_capacity(out.len() * alphabet.len());
            for w in &out {
                for &a in &alphabet {
                    let mut v = w.word.clone();
                    v.push(a);
                    next.push(ListSpec::new(v));
                }
            }
            out = next;
        }
        out
    }

    /// All words of length `2..=m`.
    pub fn enumerate(slots: &[usize], m: usize) -> Vec<ListSpec> {
        (2..=m).flat_map(|k| ListSpec::enumerate_len(slots, k)).collect()
    }
}

impl fmt::Display for ListSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, l) in self.word.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            if l.conj {
                write!(f, "~")?;
            }
            write!(f, "X{}", l.slot + 1)?;
        }
        write!(f, ")")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumeration_counts() {
        for k in 0..5 {
            assert_eq!(ListSpec::enumerate_len(&[0, 1], k).len(), 4usize.pow(k as u32));
        }
    }

    #[test]
    fn counters_add_up() {
        let w = ListSpec::new(vec![Letter::new(0, false), Letter::new(0, true), Letter::new(1, true)]);
        assert_eq!(w.count(0), 2);
        assert_eq!(w.count_plain(0) + w.count_conj(0), 2);
        assert_eq!(w.count(0) + w.count(1), w.len());
    }
}
