//! Sorted unions of integer intervals, used for local cardinality
//! constraint sets α(v) ⊆ [0, n].

use std::fmt;

/// A finite set of nonnegative integers stored as a sorted list of
/// disjoint, non-adjacent closed intervals.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IntervalSet {
    ivs: Vec<(usize, usize)>,
}

impl IntervalSet {
    pub fn empty() -> Self {
        IntervalSet { ivs: Vec::new() }
    }

    pub fn interval(lo: usize, hi: usize) -> Self {
        if lo > hi {
            Self::empty()
        } else {
            IntervalSet { ivs: vec![(lo, hi)] }
        }
    }

    pub fn singleton(x: usize) -> Self {
        Self::interval(x, x)
    }

    /// Builds from arbitrary (possibly overlapping, unsorted) intervals.
    pub fn from_intervals(intervals: &[(usize, usize)]) -> Self {
        let mut ivs: Vec<(usize, usize)> = intervals.iter().copied().filter(|(l, h)| l <= h).collect();
        ivs.sort_unstable();
        let mut out: Vec<(usize, usize)> = Vec::new();
        for (l, h) in ivs {
            match out.last_mut() {
                Some((_, ph)) if l <= ph.saturating_add(1) => *ph = (*ph).max(h),
                _ => out.push((l, h)),
            }
        }
        IntervalSet { ivs: out }
    }

    pub fn from_values(values: &[usize]) -> Self {
        let pairs: Vec<(usize, usize)> = values.iter().map(|&v| (v, v)).collect();
        Self::from_intervals(&pairs)
    }

    pub fn is_empty(&self) -> bool {
        self.ivs.is_empty()
    }

    pub fn contains(&self, x: usize) -> bool {
        self.ivs.iter().any(|&(l, h)| l <= x && x <= h)
    }

    pub fn min_value(&self) -> Option<usize> {
        self.ivs.first().map(|&(l, _)| l)
    }

    pub fn max_value(&self) -> Option<usize> {
        self.ivs.last().map(|&(_, h)| h)
    }

    /// True iff the set is a single contiguous interval (or empty).
    pub fn is_single_interval(&self) -> bool {
        self.ivs.len() <= 1
    }

    pub fn intersect(&self, other: &IntervalSet) -> IntervalSet {
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.ivs.len() && j < other.ivs.len() {
            let (al, ah) = self.ivs[i];
            let (bl, bh) = other.ivs[j];
            let l = al.max(bl);
            let h = ah.min(bh);
            if l <= h {
                out.push((l, h));
            }
            if ah < bh {
                i += 1;
            } else {
                j += 1;
            }
        }
        IntervalSet { ivs: out }
    }

    /// Intersection with a single interval [lo, hi].
    pub fn restrict(&self, lo: usize, hi: usize) -> IntervalSet {
        self.intersect(&IntervalSet::interval(lo, hi))
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.ivs.iter().flat_map(|&(l, h)| l..=h)
    }

    pub fn len(&self) -> usize {
        self.ivs.iter().map(|&(l, h)| h - l + 1).sum()
    }

    pub fn intervals(&self) -> &[(usize, usize)] {
        &self.ivs
    }
}

impl fmt::Display for IntervalSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ivs.is_empty() {
            return write!(f, "none");
        }
        let parts: Vec<String> = self
            .ivs
            .iter()
            .map(|&(l, h)| if l == h { format!("{l}") } else { format!("{l}-{h}") })
            .collect();
        write!(f, "{}", parts.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merges_overlapping_and_adjacent() {
        let s = IntervalSet::from_intervals(&[(5, 7), (0, 2), (3, 4), (9, 9)]);
        assert_eq!(s.intervals(), &[(0, 7), (9, 9)]);
        assert_eq!(s.len(), 9);
        assert!(s.contains(6));
        assert!(!s.contains(8));
    }

    #[test]
    fn intersection() {
        let a = IntervalSet::from_intervals(&[(0, 3), (6, 9)]);
        let b = IntervalSet::from_intervals(&[(2, 7)]);
        assert_eq!(a.intersect(&b).intervals(), &[(2, 3), (6, 7)]);
        assert!(a.intersect(&IntervalSet::empty()).is_empty());
    }

    #[test]
    fn display_round_trip_shape() {
        let s = IntervalSet::from_intervals(&[(0, 2), (5, 5)]);
        assert_eq!(s.to_string(), "0-2,5");
    }
}
