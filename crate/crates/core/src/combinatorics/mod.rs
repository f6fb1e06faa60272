//! Cache placement, subfile indexing and XOR coded-message construction.
//!
//! Subfiles and their fragments are tracked symbolically. A file `n` is split
//! into one subfile per `τ`-subset `v` of users, and user `k` caches
//! `W_{n,v}` iff `k ∈ v`. During delivery every user needs exactly the
//! subfiles of its demanded file whose cache set does not contain it; the
//! [`FragmentLedger`] records how each of those is delivered so that nothing
//! is sent twice.

mod userset;

use std::collections::BTreeMap;
use std::fmt;

use itertools::Itertools;

pub use userset::{binomial, binomial_i, subsets_of_size, UserSet, MAX_USERS};

use crate::{Error, Result};

/// Identifier of a (possibly fragmented) subfile `W_{file, cache_set}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubfileId {
    pub file: usize,
    pub cache_set: UserSet,
    /// 0-based index of the fragment within `split_count` equal parts.
    pub fragment: u32,
    pub split_count: u32,
}

impl SubfileId {
    pub fn whole(file: usize, cache_set: UserSet) -> Self {
        SubfileId { file, cache_set, fragment: 0, split_count: 1 }
    }
}

/// Letter used for file `n` when rendering (`A`, `B`, ...).
pub fn file_label(file: usize) -> String {
    if file < 26 {
        char::from(b'A' + file as u8).to_string()
    } else {
        format!("W{}", file + 1)
    }
}

impl fmt::Display for SubfileId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&file_label(self.file))?;
        if self.split_count > 1 {
            write!(f, "^{}", self.fragment + 1)?;
        }
        let members = self.cache_set.iter().map(|u| u + 1).join(",");
        if self.cache_set.len() == 1 {
            write!(f, "_{members}")
        } else {
            write!(f, "_{{{members}}}")
        }
    }
}

/// Centralized cache placement: every file is split into `C(K, τ)` subfiles
/// and user `k` stores the subfiles whose cache set contains `k`.
#[derive(Debug, Clone)]
pub struct Placement {
    users: usize,
    files: usize,
    memory: f64,
    tau: usize,
    cache_sets: Vec<UserSet>,
}

/// Builds the placement for `k` users, `n` files and a cache of `m` files.
///
/// `tau` must equal `k·m/n` exactly.
pub fn place(k: usize, n: usize, m: f64, tau: usize) -> Result<Placement> {
    if k == 0 || n == 0 {
        return Err(Error::Parameter("K and N must be positive".into()));
    }
    if k > MAX_USERS {
        return Err(Error::Parameter(format!("K = {k} exceeds the supported {MAX_USERS} users")));
    }
    if !(m.is_finite() && m >= 0.0) {
        return Err(Error::Parameter(format!("cache size M = {m} must be finite and nonnegative")));
    }
    let ratio = k as f64 * m / n as f64;
    if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() as usize != tau {
        return Err(Error::Parameter(format!("τ = K·M/N = {ratio} must be the integer {tau}")));
    }
    if tau > k {
        return Err(Error::Parameter(format!("τ = {tau} exceeds K = {k}")));
    }
    Ok(Placement { users: k, files: n, memory: m, tau, cache_sets: subsets_of_size(k, tau) })
}

impl Placement {
    pub fn users(&self) -> usize {
        self.users
    }

    pub fn files(&self) -> usize {
        self.files
    }

    pub fn memory(&self) -> f64 {
        self.memory
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    /// The `τ`-subsets indexing the subfiles of every file, lexicographic.
    pub fn cache_sets(&self) -> &[UserSet] {
        &self.cache_sets
    }

    pub fn subfiles_per_file(&self) -> usize {
        self.cache_sets.len()
    }

    /// The cache content `Z_k` of one user, ordered by file then cache set.
    pub fn cache(&self, user: usize) -> Vec<SubfileId> {
        (0..self.files)
            .flat_map(|n| {
                self.cache_sets.iter().filter(move |v| v.contains(user)).map(move |&v| SubfileId::whole(n, v))
            })
            .collect()
    }

    /// Whether `user` holds the content of `subfile` (any fragment of it).
    pub fn caches(&self, user: usize, subfile: &SubfileId) -> bool {
        subfile.cache_set.contains(user)
    }
}

/// Size of one transmitted subfile, `F / (C(K,τ) · C(K−τ−1, L−1))`.
pub fn subfile_size(k: usize, tau: usize, l: usize, f: f64) -> Result<f64> {
    if tau + 1 > k {
        return Err(Error::Unsupported(format!("τ + 1 = {} exceeds K = {k}", tau + 1)));
    }
    if l == 0 {
        return Err(Error::Parameter("L must be at least 1".into()));
    }
    let denom = binomial(k as u64, tau as u64) * binomial_i((k - tau - 1) as i64, l as i64 - 1);
    if denom == 0 {
        return Err(Error::Unsupported(format!("C(K−τ−1, L−1) vanishes for K = {k}, τ = {tau}, L = {l}")));
    }
    Ok(f / denom as f64)
}

/// An XOR of subfile fragments multicast to a set of users.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedMessage {
    pub recipients: UserSet,
    /// `(intended user, fragment)` pairs combined by XOR.
    pub parts: Vec<(usize, SubfileId)>,
    pub size_bits: f64,
}

impl CodedMessage {
    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// A recipient can decode its own part iff it caches every other part and
    /// does not already cache its own.
    pub fn is_decodable_by(&self, user: usize, placement: &Placement) -> bool {
        if !self.recipients.contains(user) {
            return false;
        }
        self.parts.iter().all(|(intended, sub)| {
            if *intended == user {
                !placement.caches(user, sub)
            } else {
                placement.caches(user, sub)
            }
        })
    }

    /// Decodability for every recipient, plus every part's intended user
    /// being a recipient.
    pub fn is_decodable(&self, placement: &Placement) -> bool {
        self.parts.iter().all(|(u, _)| self.recipients.contains(*u))
            && self.recipients.iter().all(|u| self.is_decodable_by(u, placement))
    }
}

impl fmt::Display for CodedMessage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.parts.is_empty() {
            return f.write_str("∅");
        }
        f.write_str(&self.parts.iter().map(|(_, s)| s.to_string()).join(" ⊕ "))
    }
}

/// How one needed subfile is (or will be) delivered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delivery {
    Pending,
    /// Claimed by a D2D group; `sent` of its `split` fragments are out.
    D2D {
        group: UserSet,
        split: u32,
        sent: u32,
    },
    Downlink,
}

/// Bookkeeping of every subfile a user still needs, keyed by
/// `(user, cache set)`. Implements the fresh-fragment allocation used when
/// building both D2D and downlink messages.
#[derive(Debug, Clone)]
pub struct FragmentLedger {
    users: usize,
    tau: usize,
    demands: Vec<usize>,
    entries: BTreeMap<(usize, UserSet), Delivery>,
}

impl FragmentLedger {
    pub fn new(placement: &Placement, demands: &[usize]) -> Result<Self> {
        if demands.len() != placement.users() {
            return Err(Error::Parameter(format!("{} demands for {} users", demands.len(), placement.users())));
        }
        if let Some(d) = demands.iter().find(|&&d| d >= placement.files()) {
            return Err(Error::Parameter(format!("demand {d} outside the library")));
        }
        let mut entries = BTreeMap::new();
        for k in 0..placement.users() {
            for &v in placement.cache_sets().iter().filter(|v| !v.contains(k)) {
                entries.insert((k, v), Delivery::Pending);
            }
        }
        Ok(FragmentLedger { users: placement.users(), tau: placement.tau(), demands: demands.to_vec(), entries })
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn demands(&self) -> &[usize] {
        &self.demands
    }

    pub fn status(&self, user: usize, cache_set: UserSet) -> Option<Delivery> {
        self.entries.get(&(user, cache_set)).copied()
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, UserSet, Delivery)> + '_ {
        self.entries.iter().map(|(&(k, v), &d)| (k, v, d))
    }

    pub fn is_pending(&self, user: usize, cache_set: UserSet) -> bool {
        self.status(user, cache_set) == Some(Delivery::Pending)
    }

    pub fn pending_count(&self) -> usize {
        self.entries.values().filter(|d| **d == Delivery::Pending).count()
    }

    pub fn pending_for(&self, user: usize) -> usize {
        self.entries
            .range((user, UserSet::EMPTY)..)
            .take_while(|((k, _), _)| *k == user)
            .filter(|(_, d)| **d == Delivery::Pending)
            .count()
    }

    /// Pending subfiles of `receiver` that every other member of `group`
    /// caches, in lexicographic cache-set order.
    pub fn claimable(&self, group: UserSet, receiver: usize) -> Vec<UserSet> {
        let others = group.without(receiver);
        self.entries
            .range((receiver, UserSet::EMPTY)..)
            .take_while(|((k, _), _)| *k == receiver)
            .filter(|((_, v), d)| **d == Delivery::Pending && others.is_subset_of(*v))
            .map(|((_, v), _)| *v)
            .collect()
    }

    /// Number of subfiles a D2D exchange inside `group` would deliver now.
    pub fn group_yield(&self, group: UserSet) -> usize {
        group.iter().map(|k| self.claimable(group, k).len()).sum()
    }

    /// True when all `τ+1` subfiles carried by the downlink message `d` went
    /// through the D2D phase.
    pub fn d2d_covers(&self, d: UserSet) -> bool {
        d.iter().all(|k| matches!(self.status(k, d.without(k)), Some(Delivery::D2D { .. })))
    }

    fn check_members(&self, set: UserSet) -> Result<()> {
        match set.max() {
            Some(u) if u >= self.users => {
                Err(Error::Parameter(format!("user set {set} outside the {} users", self.users)))
            }
            _ => Ok(()),
        }
    }

    /// Builds the D2D transmissions of one group.
    ///
    /// Every member claims its pending subfiles that all other members cache,
    /// splits each into `|group| − 1` fragments, and members transmit in
    /// ascending order. Each transmission XORs one fresh fragment for every
    /// other member that still has one outstanding, so a sender may need
    /// several transmissions when the group is smaller than `τ+1`.
    pub fn d2d_coded_messages(&mut self, group: UserSet, unit_bits: f64) -> Result<Vec<(usize, CodedMessage)>> {
        self.check_members(group)?;
        let g = group.len();
        if g < 2 || g > self.tau + 1 {
            return Err(Error::Parameter(format!(
                "D2D group {group} must have between 2 and τ+1 = {} members",
                self.tau + 1
            )));
        }
        let split = (g - 1) as u32;
        let claims: Vec<(usize, Vec<UserSet>)> = group.iter().map(|k| (k, self.claimable(group, k))).collect();
        for (k, sets) in &claims {
            for v in sets {
                self.entries.insert((*k, *v), Delivery::D2D { group, split, sent: 0 });
            }
        }
        let size_bits = unit_bits / f64::from(split);
        let mut out = Vec::new();
        for sender in group.iter() {
            let rounds = claims.iter().filter(|(k, _)| *k != sender).map(|(_, s)| s.len()).max().unwrap_or(0);
            for t in 0..rounds {
                let mut parts = Vec::new();
                for (k, sets) in claims.iter().filter(|(k, _)| *k != sender) {
                    let Some(&v) = sets.get(t) else { continue };
                    let entry = self.entries.get_mut(&(*k, v)).expect("claimed entry");
                    let Delivery::D2D { sent, .. } = entry else {
                        return Err(Error::Scheduling(format!("entry ({k}, {v}) lost its claim")));
                    };
                    if *sent >= split {
                        return Err(Error::Scheduling(format!("all fragments of subfile ({k}, {v}) already sent")));
                    }
                    parts.push((
                        *k,
                        SubfileId { file: self.demands[*k], cache_set: v, fragment: *sent, split_count: split },
                    ));
                    *sent += 1;
                }
                let recipients = parts.iter().map(|(k, _)| *k).collect();
                out.push((sender, CodedMessage { recipients, parts, size_bits }));
            }
        }
        Ok(out)
    }

    /// Builds the downlink XOR message for the `(τ+1)`-subset `d`, including
    /// only subfiles still pending. Parts already delivered over D2D are
    /// omitted; requesting a subfile that already went out on the downlink is
    /// a scheduling error.
    pub fn dl_coded_message(&mut self, d: UserSet, unit_bits: f64) -> Result<CodedMessage> {
        self.check_members(d)?;
        if d.len() != self.tau + 1 {
            return Err(Error::Parameter(format!("downlink message {d} must have τ+1 = {} members", self.tau + 1)));
        }
        let mut parts = Vec::new();
        for k in d.iter() {
            let v = d.without(k);
            match self.entries.get_mut(&(k, v)) {
                Some(e @ Delivery::Pending) => {
                    *e = Delivery::Downlink;
                    parts.push((k, SubfileId::whole(self.demands[k], v)));
                }
                Some(Delivery::Downlink) => {
                    return Err(Error::Scheduling(format!(
                        "subfile {} for user {} requested twice on the downlink",
                        SubfileId::whole(self.demands[k], v),
                        k + 1
                    )))
                }
                Some(Delivery::D2D { .. }) => {}
                None => return Err(Error::Scheduling(format!("no subfile ({}, {v}) is needed", k + 1))),
            }
        }
        let recipients = parts.iter().map(|(k, _)| *k).collect();
        Ok(CodedMessage { recipients, parts, size_bits: unit_bits })
    }

    /// Every needed subfile delivered, and every D2D-split subfile fully sent.
    pub fn is_complete(&self) -> bool {
        self.entries.values().all(|d| match d {
            Delivery::Pending => false,
            Delivery::D2D { split, sent, .. } => sent == split,
            Delivery::Downlink => true,
        })
    }
}
