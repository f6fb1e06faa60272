use std::cmp::Ordering;
use std::fmt;

use itertools::Itertools;

/// A set of users `{0, .., 63}` stored as a bitmask.
///
/// Ordering is lexicographic on the ascending member lists, which is the
/// order used for every deterministic tie-break in the crate.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct UserSet(u64);

/// Largest supported number of users.
pub const MAX_USERS: usize = 64;

impl UserSet {
    pub const EMPTY: UserSet = UserSet(0);

    pub fn from_bits(bits: u64) -> Self {
        UserSet(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    /// All users `0..n`.
    pub fn full(n: usize) -> Self {
        debug_assert!(n <= MAX_USERS);
        if n == MAX_USERS {
            UserSet(u64::MAX)
        } else {
            UserSet((1u64 << n) - 1)
        }
    }

    pub fn singleton(user: usize) -> Self {
        UserSet(1u64 << user)
    }

    pub fn from_users<I: IntoIterator<Item = usize>>(users: I) -> Self {
        users.into_iter().fold(Self::EMPTY, |s, u| s.with(u))
    }

    /// Builds a set from 1-based user labels (`{1,2,4}`).
    pub fn from_labels(labels: &[usize]) -> Self {
        Self::from_users(labels.iter().map(|l| l - 1))
    }

    pub fn contains(self, user: usize) -> bool {
        user < MAX_USERS && self.0 & (1u64 << user) != 0
    }

    #[must_use]
    pub fn with(self, user: usize) -> Self {
        UserSet(self.0 | (1u64 << user))
    }

    #[must_use]
    pub fn without(self, user: usize) -> Self {
        UserSet(self.0 & !(1u64 << user))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset_of(self, other: UserSet) -> bool {
        self.0 & !other.0 == 0
    }

    #[must_use]
    pub fn union(self, other: UserSet) -> Self {
        UserSet(self.0 | other.0)
    }

    #[must_use]
    pub fn intersection(self, other: UserSet) -> Self {
        UserSet(self.0 & other.0)
    }

    #[must_use]
    pub fn difference(self, other: UserSet) -> Self {
        UserSet(self.0 & !other.0)
    }

    /// Members in ascending order.
    pub fn iter(self) -> impl Iterator<Item = usize> + Clone {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let u = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(u)
            }
        })
    }

    /// Largest member, if any.
    pub fn max(self) -> Option<usize> {
        (self.0 != 0).then(|| 63 - self.0.leading_zeros() as usize)
    }

    /// All nonempty subsets of `self`, in increasing bitmask order.
    pub fn nonempty_subsets(self) -> impl Iterator<Item = UserSet> {
        // Standard submask walk, reversed to start from the smallest.
        let full = self.0;
        let mut sub: u64 = 0;
        std::iter::from_fn(move || {
            sub = sub.wrapping_sub(full) & full;
            (sub != 0).then_some(UserSet(sub))
        })
    }
}

impl Ord for UserSet {
    fn cmp(&self, other: &Self) -> Ordering {
        self.iter().cmp(other.iter())
    }
}

impl PartialOrd for UserSet {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for UserSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.iter().map(|u| u + 1).join(","))
    }
}

impl fmt::Debug for UserSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromIterator<usize> for UserSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        Self::from_users(iter)
    }
}

/// All `size`-subsets of `{0..n}` in lexicographic order.
pub fn subsets_of_size(n: usize, size: usize) -> Vec<UserSet> {
    (0..n).combinations(size).map(UserSet::from_users).collect()
}

/// Binomial coefficient with `C(a, b) = 0` for `b > a`.
pub fn binomial(a: u64, b: u64) -> u64 {
    if b > a {
        return 0;
    }
    let b = b.min(a - b);
    let mut acc: u128 = 1;
    for j in 0..b {
        acc = acc * u128::from(a - j) / u128::from(j + 1);
    }
    u64::try_from(acc).expect("binomial coefficient overflows u64")
}

/// Binomial coefficient for signed arguments; zero whenever `a < 0`, `b < 0`
/// or `b > a`.
pub fn binomial_i(a: i64, b: i64) -> u64 {
    if a < 0 || b < 0 {
        0
    } else {
        binomial(a as u64, b as u64)
    }
}
