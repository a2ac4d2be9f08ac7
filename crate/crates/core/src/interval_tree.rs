//! Static centered interval tree for stabbing queries over closed intervals.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval<T> {
    pub lo: f64,
    pub hi: f64,
    pub value: T,
}

#[derive(Debug, Clone)]
struct Node {
    center: f64,
    // Indices of intervals containing `center`.
    by_lo: Vec<usize>,
    by_hi: Vec<usize>,
    left: Option<Box<Node>>,
    right: Option<Box<Node>>,
}

/// Answers `stab(x)`: every interval with `lo <= x <= hi`, in
/// `O(log n + k)`.
#[derive(Debug, Clone)]
pub struct IntervalTree<T> {
    intervals: Vec<Interval<T>>,
    root: Option<Box<Node>>,
}

impl<T> IntervalTree<T> {
    /// Panics if an interval has `lo > hi` or a NaN bound.
    pub fn new(intervals: Vec<Interval<T>>) -> Self {
        for iv in &intervals {
            assert!(iv.lo <= iv.hi, "interval bounds out of order: {} > {}", iv.lo, iv.hi);
        }
        let idx: Vec<usize> = (0..intervals.len()).collect();
        let root = build(&intervals, idx);
        IntervalTree { intervals, root }
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn intervals(&self) -> &[Interval<T>] {
        &self.intervals
    }

    /// Indices (into [`Self::intervals`]) of intervals containing `x`, sorted.
    pub fn stab_indices(&self, x: f64) -> Vec<usize> {
        let mut out = Vec::new();
        let mut node = self.root.as_deref();
        while let Some(n) = node {
            if x < n.center {
                for &i in &n.by_lo {
                    if self.intervals[i].lo > x {
                        break;
                    }
                    out.push(i);
                }
                node = n.left.as_deref();
            } else if x > n.center {
                for &i in &n.by_hi {
                    if self.intervals[i].hi < x {
                        break;
                    }
                    out.push(i);
                }
                node = n.right.as_deref();
            } else {
                out.extend_from_slice(&n.by_lo);
                break;
            }
        }
        out.sort_unstable();
        out
    }

    pub fn stab(&self, x: f64) -> Vec<&T> {
        self.stab_indices(x)
            .into_iter()
            .map(|i| &self.intervals[i].value)
            .collect()
    }
}

fn build<T>(intervals: &[Interval<T>], idx: Vec<usize>) -> Option<Box<Node>> {
    if idx.is_empty() {
        return None;
    }
    let mut endpoints: Vec<f64> = idx
        .iter()
        .flat_map(|&i| [intervals[i].lo, intervals[i].hi])
        .collect();
    endpoints.sort_by(f64::total_cmp);
    let center = endpoints[endpoints.len() / 2];

    let (mut left, mut right, mut here) = (Vec::new(), Vec::new(), Vec::new());
    for i in idx {
        let iv = &intervals[i];
        if iv.hi < center {
            left.push(i);
        } else if iv.lo > center {
            right.push(i);
        } else {
            here.push(i);
        }
    }
    let mut by_lo = here.clone();
    by_lo.sort_by(|&a, &b| intervals[a].lo.total_cmp(&intervals[b].lo));
    let mut by_hi = here;
    by_hi.sort_by(|&a, &b| intervals[b].hi.total_cmp(&intervals[a].hi));
    Some(Box::new(Node {
        center,
        by_lo,
        by_hi,
        left: build(intervals, left),
        right: build(intervals, right),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(ivs: &[(f64, f64)]) -> IntervalTree<usize> {
        IntervalTree::new(
            ivs.iter()
                .enumerate()
                .map(|(i, &(lo, hi))| Interval { lo, hi, value: i })
                .collect(),
        )
    }

    #[test]
    fn overlap_and_miss() {
        let t = tree(&[(1.0, 3.0), (2.0, 4.0)]);
        assert_eq!(t.stab_indices(2.5), vec![0, 1]);
        assert!(t.stab_indices(5.0).is_empty());
        assert_eq!(t.stab_indices(1.0), vec![0]);
        assert_eq!(t.stab_indices(4.0), vec![1]);
    }

    #[test]
    fn empty_tree() {
        let t = tree(&[]);
        assert!(t.stab_indices(0.0).is_empty());
        assert!(t.is_empty());
    }

    #[test]
    fn degenerate_intervals() {
        let t = tree(&[(2.0, 2.0), (2.0, 2.0), (1.0, 2.0)]);
        assert_eq!(t.stab_indices(2.0), vec![0, 1, 2]);
        assert!(t.stab_indices(2.0000001).is_empty());
    }
}
