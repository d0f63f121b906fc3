use crate::error::{Error, Result};

/// A bijection from items to ranks, stored 0-based: `rank_of(i)` is the rank
/// given to item `i`. The item at rank 0 is the top pick.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Permutation {
    ranks: Vec<usize>,
}

impl Permutation {
    pub fn new(ranks: Vec<usize>) -> Result<Self> {
        let n = ranks.len();
        let mut seen = vec![false; n];
        for &r in &ranks {
            if r >= n || seen[r] {
                return Err(Error::invalid(format!("not a permutation of 0..{n}: {ranks:?}")));
            }
            seen[r] = true;
        }
        Ok(Self { ranks })
    }

    /// Build from 1-based ranks, e.g. `(2, 1, 3)`.
    pub fn from_one_based(ranks: &[usize]) -> Result<Self> {
        if ranks.contains(&0) {
            return Err(Error::invalid("one-based ranks must be >= 1"));
        }
        Self::new(ranks.iter().map(|r| r - 1).collect())
    }

    pub fn identity(n: usize) -> Self {
        Self { ranks: (0..n).collect() }
    }

    pub fn reversed(n: usize) -> Self {
        Self { ranks: (0..n).rev().collect() }
    }

    /// Build from a top-to-bottom ordering of items.
    pub fn from_ordering(order: &[usize]) -> Result<Self> {
        let mut ranks = vec![usize::MAX; order.len()];
        for (rank, &item) in order.iter().enumerate() {
            if item >= order.len() || ranks[item] != usize::MAX {
                return Err(Error::invalid(format!("not an ordering: {order:?}")));
            }
            ranks[item] = rank;
        }
        Ok(Self { ranks })
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    pub fn rank_of(&self, item: usize) -> usize {
        self.ranks[item]
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    /// Items listed from rank 0 downward.
    pub fn ordering(&self) -> Vec<usize> {
        let mut order = vec![0; self.ranks.len()];
        for (item, &rank) in self.ranks.iter().enumerate() {
            order[rank] = item;
        }
        order
    }

    /// The item placed at rank 0.
    pub fn top(&self) -> usize {
        self.ranks.iter().position(|&r| r == 0).expect("non-empty permutation")
    }
}

/// Number of discordant pairs between `a` and `b` (equivalently, adjacent
/// transpositions needed to turn one into the other). O(n log n).
pub fn kendall_tau_distance(a: &Permutation, b: &Permutation) -> Result<u64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "permutation lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    // Visit items in b's order; count inversions of their ranks under a.
    let mut seq: Vec<usize> = b.ordering().into_iter().map(|item| a.rank_of(item)).collect();
    let mut buf = vec![0usize; seq.len()];
    Ok(count_inversions(&mut seq, &mut buf))
}

fn count_inversions(v: &mut [usize], buf: &mut [usize]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut inv = {
        let (left, right) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        count_inversions(left, bl) + count_inversions(right, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[i] <= v[j] {
            buf[k] = v[i];
            i += 1;
        } else {
            buf[k] = v[j];
            inv += (mid - i) as u64;
            j += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    inv
}

/// Visit every permutation of `0..n` exactly once (Heap's algorithm).
pub(crate) fn for_each_permutation(n: usize, mut f: impl FnMut(&[usize])) {
    let mut items: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    f(&items);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                items.swap(0, i);
            } else {
                items.swap(c[i], i);
            }
            f(&items);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive(a: &Permutation, b: &Permutation) -> u64 {
        let n = a.len();
        let mut d = 0;
        for i in 0..n {
            for j in i + 1..n {
                let sa = a.rank_of(i) < a.rank_of(j);
                let sb = b.rank_of(i) < b.rank_of(j);
                if sa != sb {
                    d += 1;
                }
            }
        }
        d
    }

    #[test]
    fn hand_examples() {
        let id4 = Permutation::identity(4);
        assert_eq!(kendall_tau_distance(&id4, &id4).unwrap(), 0);
        let a = Permutation::from_one_based(&[2, 1, 3]).unwrap();
        let b = Permutation::from_one_based(&[1, 2, 3]).unwrap();
        assert_eq!(kendall_tau_distance(&a, &b).unwrap(), 1);
        assert_eq!(kendall_tau_distance(&Permutation::reversed(4), &id4).unwrap(), 6);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let err = kendall_tau_distance(&Permutation::identity(3), &Permutation::identity(4));
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn rejects_non_bijections() {
        assert!(Permutation::new(vec![0, 0, 1]).is_err());
        assert!(Permutation::new(vec![0, 3, 1]).is_err());
        assert!(Permutation::from_one_based(&[0, 1]).is_err());
    }

    #[test]
    fn heap_enumeration_covers_all() {
        let mut seen = std::collections::HashSet::new();
        for_each_permutation(5, |p| {
            seen.insert(p.to_vec());
        });
        assert_eq!(seen.len(), 120);
    }

    fn perm_strategy(n: usize) -> impl Strategy<Value = Permutation> {
        Just((0..n).collect::<Vec<_>>())
            .prop_shuffle()
            .prop_map(|v| Permutation::new(v).unwrap())
    }

    proptest! {
        #[test]
        fn distance_matches_pair_count((a, b) in (1usize..40).prop_flat_map(|n| (perm_strategy(n), perm_strategy(n)))) {
            let d = kendall_tau_distance(&a, &b).unwrap();
            prop_assert_eq!(d, naive(&a, &b));
            prop_assert_eq!(d, kendall_tau_distance(&b, &a).unwrap());
            let n = a.len() as u64;
            prop_assert!(d <= n * (n - 1) / 2);
        }

        #[test]
        fn ordering_round_trips(p in (1usize..30).prop_flat_map(perm_strategy)) {
            let back = Permutation::from_ordering(&p.ordering()).unwrap();
            prop_assert_eq!(back, p);
        }
    }
}
