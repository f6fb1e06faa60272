//! Golden vectors for the two small worked examples: `K=3, N=3, M=1` with one
//! subfile per user pair and `K=4, N=4, M=2` with one D2D triple.

use std::fmt;

use crate::beamforming::{enumerate_mac_constraints, MessagePlan};
use crate::combinatorics::{place, FragmentLedger, UserSet};
use crate::d2d::{remaining_message_plan, D2DSchedule};
use crate::Result;

/// One golden comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfTestCheck {
    pub name: &'static str,
    pub expected: String,
    pub actual: String,
}

impl SelfTestCheck {
    pub fn passed(&self) -> bool {
        self.expected == self.actual
    }
}

impl fmt::Display for SelfTestCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        write!(f, "{status} {}: {}", self.name, self.actual)?;
        if !self.passed() {
            write!(f, " (expected {})", self.expected)?;
        }
        Ok(())
    }
}

fn check(name: &'static str, expected: impl Into<String>, actual: impl Into<String>) -> SelfTestCheck {
    SelfTestCheck { name, expected: expected.into(), actual: actual.into() }
}

fn mac_counts(plan: &MessagePlan) -> String {
    let mut per_user = vec![0usize; plan.users()];
    for (k, _) in enumerate_mac_constraints(plan) {
        per_user[k] += 1;
    }
    let total: usize = per_user.iter().sum();
    format!("{per_user:?} = {total}")
}

/// Runs every golden check.
pub fn selftest() -> Result<Vec<SelfTestCheck>> {
    let labels = UserSet::from_labels;
    let mut checks = Vec::new();

    let p1 = place(3, 3, 1.0, 1)?;
    let mut ledger = FragmentLedger::new(&p1, &[0, 1, 2])?;
    let x13 = ledger.dl_coded_message(labels(&[1, 3]), 1.0 / 3.0)?;
    checks.push(check("K=3 downlink X_{1,3}", "A_3 ⊕ C_1", x13.to_string()));
    let s1 = D2DSchedule::new(&p1, &[0, 1, 2], 1.0 / 3.0)?;
    checks.push(check("K=3 MAC constraints", "[3, 3, 3] = 9", mac_counts(&remaining_message_plan(&s1)?)));

    let p2 = place(4, 4, 2.0, 2)?;
    let mut ledger = FragmentLedger::new(&p2, &[0, 1, 2, 3])?;
    let x124 = ledger.dl_coded_message(labels(&[1, 2, 4]), 1.0 / 6.0)?;
    checks.push(check("K=4 downlink X_{1,2,4}", "A_{2,4} ⊕ B_{1,4} ⊕ D_{1,2}", x124.to_string()));

    let mut ledger = FragmentLedger::new(&p2, &[0, 1, 2, 3])?;
    let sent = ledger.d2d_coded_messages(labels(&[1, 2, 3]), 1.0 / 6.0)?;
    let rendered: Vec<String> = sent.iter().map(|(s, m)| format!("user {} sends {m}", s + 1)).collect();
    checks.push(check(
        "K=4 D2D group {1,2,3}",
        "user 1 sends B^1_{1,3} ⊕ C^1_{1,2}; user 2 sends A^1_{2,3} ⊕ C^2_{1,2}; user 3 sends A^2_{2,3} ⊕ B^2_{1,3}",
        rendered.join("; "),
    ));

    let s2 = D2DSchedule::new(&p2, &[0, 1, 2, 3], 1.0 / 6.0)?.with_groups([labels(&[1, 2, 3])])?;
    let plan = remaining_message_plan(&s2)?;
    let sets: Vec<String> = plan.messages().iter().map(|m| m.members.to_string()).collect();
    checks.push(check("K=4 downlink after D2D", "{1,2,4} {1,3,4} {2,3,4}", sets.join(" ")));
    checks.push(check("K=4 MAC constraints after D2D", "[3, 3, 3, 7] = 16", mac_counts(&plan)));
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_golden_checks_pass() {
        let checks = selftest().unwrap();
        assert_eq!(checks.len(), 6);
        for c in &checks {
            assert!(c.passed(), "{c}");
        }
    }

    #[test]
    fn failure_rendering() {
        let c = check("x", "a", "b");
        assert!(!c.passed());
        assert_eq!(c.to_string(), "FAIL x: b (expected a)");
    }
}
