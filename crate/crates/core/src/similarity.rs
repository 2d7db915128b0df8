//! Binary similarity predicates.
//!
//! Every predicate here is symmetric and subsumes equality. None of them is
//! assumed to be transitive; closures are computed explicitly elsewhere.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::instance::{Value, ValueTag};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SimilarityKind {
    Equality,
    /// Levenshtein distance at most `max_d`. Text only.
    EditDistance {
        max_d: u32,
    },
    /// Stipulated similar pairs, stored with the smaller value first.
    Pairs(BTreeSet<(Value, Value)>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SimilaritySpec {
    kind: SimilarityKind,
    tag: ValueTag,
}

impl SimilaritySpec {
    pub fn equality(tag: ValueTag) -> SimilaritySpec {
        SimilaritySpec { kind: SimilarityKind::Equality, tag }
    }

    pub fn edit_distance(max_d: u32) -> SimilaritySpec {
        SimilaritySpec { kind: SimilarityKind::EditDistance { max_d }, tag: ValueTag::Text }
    }

    pub fn pairs<I>(tag: ValueTag, pairs: I) -> Result<SimilaritySpec>
    where
        I: IntoIterator<Item = (Value, Value)>,
    {
        let mut set = BTreeSet::new();
        for (a, b) in pairs {
            for v in [&a, &b] {
                if v.tag() != tag {
                    return Err(Error::TagMismatch(format!("similar pair value `{v}` is not {tag}")));
                }
            }
            if a == b {
                continue;
            }
            set.insert(if a <= b { (a, b) } else { (b, a) });
        }
        Ok(SimilaritySpec { kind: SimilarityKind::Pairs(set), tag })
    }

    pub fn kind(&self) -> &SimilarityKind {
        &self.kind
    }

    pub fn tag(&self) -> ValueTag {
        self.tag
    }

    pub fn is_equality(&self) -> bool {
        self.kind == SimilarityKind::Equality
    }

    pub(crate) fn check_tag(&self, tag: ValueTag) -> Result<()> {
        if self.tag == tag {
            Ok(())
        } else {
            Err(Error::TagMismatch(format!("similarity `{self}` applies to {}, attribute is {tag}", self.tag)))
        }
    }

    pub fn evaluate(&self, x: &Value, y: &Value) -> Result<bool> {
        if x.tag() != self.tag || y.tag() != self.tag {
            return Err(Error::TagMismatch(format!("similarity over {} applied to `{x}` and `{y}`", self.tag)));
        }
        Ok(self.holds(x, y))
    }

    /// [`evaluate`](Self::evaluate) without the tag check; callers guarantee
    /// both values carry the spec's tag.
    pub fn holds(&self, x: &Value, y: &Value) -> bool {
        if x == y {
            return true;
        }
        match &self.kind {
            SimilarityKind::Equality => false,
            SimilarityKind::EditDistance { max_d } => match (x, y) {
                (Value::Text(a), Value::Text(b)) => within_edit_distance(a, b, *max_d as usize),
                _ => false,
            },
            SimilarityKind::Pairs(set) => {
                let key = if x <= y { (x.clone(), y.clone()) } else { (y.clone(), x.clone()) };
                set.contains(&key)
            }
        }
    }
}

impl fmt::Display for SimilaritySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            SimilarityKind::Equality => f.write_str("eq"),
            SimilarityKind::EditDistance { max_d } => write!(f, "edit({max_d})"),
            SimilarityKind::Pairs(set) => {
                f.write_str("pairs{")?;
                for (i, (a, b)) in set.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{}~{}", quoted(a), quoted(b))?;
                }
                f.write_str("}")
            }
        }
    }
}

/// Values that the MD tokenizer would split are written in single quotes.
fn quoted(v: &Value) -> String {
    let s = v.to_string();
    let plain = !s.is_empty() && s.chars().all(|c| c.is_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if plain {
        s
    } else {
        format!("'{s}'")
    }
}

/// Levenshtein distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Whether `levenshtein(a, b) <= k`, evaluating only the diagonal band of
/// width `2k + 1` and stopping as soon as a whole row exceeds `k`.
pub fn within_edit_distance(a: &str, b: &str, k: usize) -> bool {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.len().abs_diff(b.len()) > k {
        return false;
    }
    let inf = k + 1;
    let m = b.len();
    let mut prev = vec![inf; m + 1];
    let mut cur = vec![inf; m + 1];
    for (j, slot) in prev.iter_mut().enumerate().take(k.min(m) + 1) {
        *slot = j;
    }
    for i in 1..=a.len() {
        let lo = i.saturating_sub(k).max(1);
        let hi = (i + k).min(m);
        cur.iter_mut().for_each(|c| *c = inf);
        if i <= k {
            cur[0] = i;
        }
        let mut row_min = cur[0];
        for j in lo..=hi {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            let v = sub.min(prev[j] + 1).min(cur[j - 1] + 1).min(inf);
            cur[j] = v;
            row_min = row_min.min(v);
        }
        if row_min > k {
            return false;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m] <= k
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Value {
        Value::text(s)
    }

    /// Full quadratic table, kept separate from the banded routine it checks.
    fn textbook(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for (i, row) in d.iter_mut().enumerate() {
            row[0] = i;
        }
        for (j, cell) in d[0].iter_mut().enumerate() {
            *cell = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let cost = if a[i - 1] == b[j - 1] { 0 } else { 1 };
                d[i][j] = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + cost);
            }
        }
        d[a.len()][b.len()]
    }

    fn all_strings(max_len: usize) -> Vec<String> {
        let mut out = vec![String::new()];
        let mut layer = vec![String::new()];
        for _ in 0..max_len {
            let mut next = Vec::new();
            for s in &layer {
                for c in ['a', 'b'] {
                    let mut n = s.clone();
                    n.push(c);
                    next.push(n);
                }
            }
            out.extend(next.iter().cloned());
            layer = next;
        }
        out
    }

    #[test]
    fn edit_distance_matches_textbook_exhaustively() {
        // 511 strings over {a,b} up to length 8; all ordered pairs.
        let strings = all_strings(8);
        for a in &strings {
            for b in &strings {
                let expected = textbook(a, b);
                assert_eq!(levenshtein(a, b), expected, "{a} vs {b}");
                for k in [0, 1, 2, 3] {
                    assert_eq!(within_edit_distance(a, b, k), expected <= k, "{a} vs {b}, k={k}");
                }
            }
        }
    }

    #[test]
    fn equality() {
        let s = SimilaritySpec::equality(ValueTag::Text);
        assert!(s.evaluate(&t("a"), &t("a")).unwrap());
        assert!(!s.evaluate(&t("a"), &t("b")).unwrap());
    }

    #[test]
    fn edit_distance_examples() {
        let s = SimilaritySpec::edit_distance(1);
        assert!(s.evaluate(&t("g"), &t("h")).unwrap());
        assert!(!s.evaluate(&t("h"), &t("msp")).unwrap());
        assert!(s.evaluate(&t("ksp"), &t("msp")).unwrap());
    }

    #[test]
    fn explicit_pairs() {
        let s = SimilaritySpec::pairs(ValueTag::Text, [(t("a1"), t("c1"))]).unwrap();
        assert!(s.evaluate(&t("a1"), &t("c1")).unwrap());
        assert!(s.evaluate(&t("c1"), &t("a1")).unwrap());
        assert!(s.evaluate(&t("b1"), &t("b1")).unwrap());
        assert!(!s.evaluate(&t("b1"), &t("c1")).unwrap());
    }

    #[test]
    fn tag_mismatch() {
        let s = SimilaritySpec::equality(ValueTag::Int);
        assert!(matches!(s.evaluate(&t("a"), &Value::Int(1)), Err(Error::TagMismatch(_))));
        assert!(SimilaritySpec::pairs(ValueTag::Int, [(t("a"), Value::Int(1))]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn symmetric_and_reflexive(x in "[abc]{0,4}", y in "[abc]{0,4}", k in 0u32..3) {
            let specs = [
                SimilaritySpec::equality(ValueTag::Text),
                SimilaritySpec::edit_distance(k),
                SimilaritySpec::pairs(ValueTag::Text, [(t("a"), t("b")), (t("ab"), t("c"))]).unwrap(),
            ];
            for s in &specs {
                proptest::prop_assert_eq!(s.holds(&t(&x), &t(&y)), s.holds(&t(&y), &t(&x)));
                proptest::prop_assert!(s.holds(&t(&x), &t(&x)));
            }
        }
    }
}
