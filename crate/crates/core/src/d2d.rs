//! D2D schedules, their TDMA delivery time and the downlink plan they leave.

use std::fmt;

use itertools::Itertools;

use crate::beamforming::{MessagePlan, PlanMessage};
use crate::channel::{self, ChannelRealization, ScenarioConfig};
use crate::combinatorics::{self, subsets_of_size, CodedMessage, FragmentLedger, Placement, UserSet};
use crate::{Error, Result};

/// One selected D2D group and the transmissions it produced.
#[derive(Debug, Clone)]
pub struct GroupRecord {
    pub group: UserSet,
    /// `(sender, message)` in transmission order.
    pub transmissions: Vec<(usize, CodedMessage)>,
}

impl GroupRecord {
    /// Number of messages sent by `member` (`a_k^V`).
    pub fn message_count(&self, member: usize) -> usize {
        self.transmissions.iter().filter(|(s, _)| *s == member).count()
    }

    pub fn subfiles_delivered(&self) -> usize {
        // Every fragment carries 1/split of a subfile.
        self.transmissions
            .iter()
            .flat_map(|(_, m)| &m.parts)
            .map(|(_, s)| 1.0 / f64::from(s.split_count))
            .sum::<f64>()
            .round() as usize
    }
}

/// Groups selected for the D2D phase, in selection order, together with the
/// fragment ledger they act on.
#[derive(Debug, Clone)]
pub struct D2DSchedule {
    placement: Placement,
    unit_bits: f64,
    ledger: FragmentLedger,
    groups: Vec<GroupRecord>,
}

impl D2DSchedule {
    /// An empty schedule; `unit_bits` is the size of one transmitted subfile.
    pub fn new(placement: &Placement, demands: &[usize], unit_bits: f64) -> Result<Self> {
        if !(unit_bits.is_finite() && unit_bits > 0.0) {
            return Err(Error::Parameter(format!("subfile size {unit_bits} must be positive")));
        }
        Ok(D2DSchedule {
            placement: placement.clone(),
            unit_bits,
            ledger: FragmentLedger::new(placement, demands)?,
            groups: Vec::new(),
        })
    }

    pub fn for_config(config: &ScenarioConfig, demands: &[usize]) -> Result<Self> {
        Self::new(&config.placement()?, demands, config.unit_bits()?)
    }

    /// Appends a group; its members exchange every pending subfile they can.
    pub fn add_group(&mut self, group: UserSet) -> Result<&GroupRecord> {
        if self.contains(group) {
            return Err(Error::Parameter(format!("D2D group {group} selected twice")));
        }
        let transmissions = self.ledger.d2d_coded_messages(group, self.unit_bits)?;
        self.groups.push(GroupRecord { group, transmissions });
        Ok(self.groups.last().expect("just pushed"))
    }

    pub fn with_groups<I: IntoIterator<Item = UserSet>>(mut self, groups: I) -> Result<Self> {
        for g in groups {
            self.add_group(g)?;
        }
        Ok(self)
    }

    pub fn contains(&self, group: UserSet) -> bool {
        self.groups.iter().any(|g| g.group == group)
    }

    pub fn groups(&self) -> &[GroupRecord] {
        &self.groups
    }

    pub fn group_sets(&self) -> Vec<UserSet> {
        self.groups.iter().map(|g| g.group).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn ledger(&self) -> &FragmentLedger {
        &self.ledger
    }

    pub fn placement(&self) -> &Placement {
        &self.placement
    }

    pub fn unit_bits(&self) -> f64 {
        self.unit_bits
    }

    /// `I_D2D(D)` for a `(τ+1)`-subset: all its subfiles went over D2D.
    pub fn indicator(&self, d: UserSet) -> bool {
        d.len() == self.ledger.tau() + 1 && self.ledger.d2d_covers(d)
    }

    /// Subfiles the D2D phase delivers (over all users).
    pub fn subfiles_delivered(&self) -> usize {
        self.groups.iter().map(GroupRecord::subfiles_delivered).sum()
    }

    /// Subfiles delivered by groups smaller than `τ+1` (the `m` of the
    /// complexity bounds).
    pub fn small_group_subfiles(&self) -> usize {
        let full = self.ledger.tau() + 1;
        self.groups.iter().filter(|g| g.group.len() < full).map(GroupRecord::subfiles_delivered).sum()
    }

    /// Number of selected groups of size `τ+1`.
    pub fn full_groups(&self) -> usize {
        let full = self.ledger.tau() + 1;
        self.groups.iter().filter(|g| g.group.len() == full).count()
    }
}

impl fmt::Display for D2DSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.groups.iter().map(|g| g.group).join(" "))
    }
}

/// Total TDMA time of the D2D phase: every message at the multicast rate of
/// its weakest receiver.
pub fn t_d2d(schedule: &D2DSchedule, chans: &ChannelRealization, config: &ScenarioConfig) -> Result<f64> {
    let mut total = 0.0;
    for g in &schedule.groups {
        total += group_time(&g.transmissions, chans, config)?;
    }
    Ok(total)
}

pub(crate) fn group_time(
    transmissions: &[(usize, CodedMessage)],
    chans: &ChannelRealization,
    config: &ScenarioConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for (sender, msg) in transmissions {
        let rate = channel::d2d_rate(*sender, msg.recipients, chans, config)?;
        if rate <= 0.0 {
            return Err(Error::ZeroRate(format!("user {} to {}", sender + 1, msg.recipients)));
        }
        total += msg.size_bits / rate;
    }
    Ok(total)
}

/// The downlink messages left after the D2D phase. Messages whose subfiles
/// all went over D2D are dropped; users that already hold their part of a
/// message are removed from its recipients.
pub fn remaining_message_plan(schedule: &D2DSchedule) -> Result<MessagePlan> {
    let mut ledger = schedule.ledger.clone();
    let k = schedule.placement.users();
    let tau = schedule.placement.tau();
    let mut messages = Vec::new();
    for d in subsets_of_size(k, tau + 1) {
        if schedule.indicator(d) {
            continue;
        }
        let content = ledger.dl_coded_message(d, schedule.unit_bits)?;
        messages.push(PlanMessage { members: d, recipients: content.recipients, content: Some(content) });
    }
    MessagePlan::new(k, messages)
}

/// Time of the pure D2D scheme: every `(τ+1)`-subset exchanges its subfiles,
/// each of size `F / C(K, τ)`.
pub fn d2d_only_baseline(
    demands: &[usize],
    placement: &Placement,
    chans: &ChannelRealization,
    config: &ScenarioConfig,
) -> Result<f64> {
    let (k, tau) = (placement.users(), placement.tau());
    if tau == 0 {
        return Err(Error::Unsupported("D2D delivery needs τ ≥ 1".into()));
    }
    let unit = config.f / combinatorics::binomial(k as u64, tau as u64) as f64;
    let schedule = D2DSchedule::new(placement, demands, unit)?.with_groups(subsets_of_size(k, tau + 1))?;
    t_d2d(&schedule, chans, config)
}
