//! Run reports: per-epoch outcomes, the ledger, verdicts derived from the
//! outcomes, and expectation results. Rendering is line-oriented with a
//! fixed field order.

use std::fmt::Write as _;

use crate::headend::CaProtocol;
use crate::ledger::BandwidthLedger;
use crate::scenario::{Expectation, Outcome, ScenarioConfig};

/// What the adversary achieved at one decoder in one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdvMark {
    /// Untouched.
    None,
    /// Chip state still carries an earlier adversary message.
    Tainted,
    /// Messages were sent; none was accepted.
    Rejected,
    /// Something was accepted, but no correct descramble came of it.
    Accepted,
    /// An adversary-made control word descrambled the content.
    Succeeded,
}

impl AdvMark {
    pub fn code(self) -> char {
        match self {
            AdvMark::None => '.',
            AdvMark::Tainted => '~',
            AdvMark::Rejected => 'r',
            AdvMark::Accepted => 'a',
            AdvMark::Succeeded => '!',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochRecord {
    pub epoch: u64,
    pub authorized: Vec<bool>,
    pub outcomes: Vec<Outcome>,
    pub marks: Vec<AdvMark>,
    /// Adversary activity this epoch or lingering chip state from it.
    pub affected: Vec<bool>,
}

impl EpochRecord {
    /// Slots whose chip descrambled the content.
    pub fn derived(&self) -> Vec<usize> {
        (0..self.outcomes.len())
            .filter(|s| self.outcomes[*s] == Outcome::Derived)
            .collect()
    }

    /// Slots authorized this epoch.
    pub fn authorized_slots(&self) -> Vec<usize> {
        (0..self.authorized.len()).filter(|s| self.authorized[*s]).collect()
    }

    /// Derived implies authorized everywhere; authorized implies derived
    /// where the adversary left no trace.
    pub fn key_auth_holds(&self) -> bool {
        (0..self.outcomes.len()).all(|s| {
            let derived = self.outcomes[s] == Outcome::Derived;
            (!derived || self.authorized[s]) && (self.affected[s] || derived == self.authorized[s])
        })
    }

    pub fn adversary_succeeded(&self) -> bool {
        self.marks.contains(&AdvMark::Succeeded)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Verdicts {
    pub implicit_key_auth: bool,
    pub authenticity: bool,
    /// `None` when the run had no recovery.
    pub recovery: Option<bool>,
    pub decoders_replaced: usize,
}

impl Verdicts {
    pub fn from_records(records: &[EpochRecord], recover_epoch: Option<u64>, decoders_replaced: usize) -> Self {
        Self {
            implicit_key_auth: records.iter().all(EpochRecord::key_auth_holds),
            authenticity: !records.iter().any(EpochRecord::adversary_succeeded),
            recovery: recover_epoch.map(|from| {
                records
                    .iter()
                    .filter(|r| r.epoch >= from)
                    .all(|r| r.key_auth_holds() && !r.adversary_succeeded())
            }),
            decoders_replaced,
        }
    }

    /// `(name, value)` pairs in report order.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let word = |ok: bool| if ok { "holds" } else { "violated" }.to_string();
        vec![
            ("implicit_key_auth", word(self.implicit_key_auth)),
            ("authenticity", word(self.authenticity)),
            (
                "recovery",
                match self.recovery {
                    None => "n/a".into(),
                    Some(true) => "success".into(),
                    Some(false) => "failed".into(),
                },
            ),
            ("decoders_replaced", self.decoders_replaced.to_string()),
        ]
    }

    pub fn get(&self, name: &str) -> Option<String> {
        self.pairs().into_iter().find(|(n, _)| *n == name).map(|(_, v)| v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpectationResult {
    pub expectation: Expectation,
    pub passed: bool,
    pub actual: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunReport {
    pub name: String,
    pub seed: u64,
    pub content_len: usize,
    pub ca_systems: Vec<(CaProtocol, u16)>,
    pub decoder_cas: Vec<usize>,
    pub records: Vec<EpochRecord>,
    pub events: Vec<(u64, String)>,
    pub ledger: BandwidthLedger,
    pub verdicts: Verdicts,
    pub expectations: Vec<ExpectationResult>,
}

impl RunReport {
    pub fn new(
        cfg: &ScenarioConfig,
        seed: u64,
        ca_ids: Vec<u16>,
        records: Vec<EpochRecord>,
        events: Vec<(u64, String)>,
        ledger: BandwidthLedger,
        verdicts: Verdicts,
    ) -> Self {
        let mut report = Self {
            name: cfg.name.clone(),
            seed,
            content_len: cfg.content_len,
            ca_systems: cfg.ca_systems.iter().copied().zip(ca_ids).collect(),
            decoder_cas: cfg.decoders.clone(),
            records,
            events,
            ledger,
            verdicts,
            expectations: Vec::new(),
        };
        report.expectations = cfg.expectations.iter().map(|e| report.check(e)).collect();
        report
    }

    fn check(&self, e: &Expectation) -> ExpectationResult {
        let (passed, actual) = match e {
            Expectation::Verdict { name, value } => {
                let actual = self.verdicts.get(name).unwrap_or_default();
                (actual == *value, actual)
            }
            Expectation::Outcome {
                decoder,
                first,
                last,
                outcome,
            } => {
                let seen: String = self
                    .records
                    .iter()
                    .filter(|r| (*first..=*last).contains(&r.epoch))
                    .map(|r| r.outcomes[*decoder].code())
                    .collect();
                let passed = !seen.is_empty() && seen.chars().all(|c| c == outcome.code());
                (passed, run_length(&seen))
            }
        };
        ExpectationResult {
            expectation: e.clone(),
            passed,
            actual,
        }
    }

    pub fn passed(&self) -> bool {
        self.expectations.iter().all(|e| e.passed)
    }

    pub fn outcome(&self, epoch: u64, slot: usize) -> Option<Outcome> {
        self.records.iter().find(|r| r.epoch == epoch).map(|r| r.outcomes[slot])
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let epochs = self.records.len();
        let _ = writeln!(s, "scenario {}", self.name);
        let _ = writeln!(s, "seed {}", self.seed);
        let _ = writeln!(
            s,
            "epochs {epochs} content {} decoders {}",
            self.content_len,
            self.decoder_cas.len()
        );
        for (index, (protocol, id)) in self.ca_systems.iter().enumerate() {
            let slots: Vec<String> = (0..self.decoder_cas.len())
                .filter(|s| self.decoder_cas[*s] == index)
                .map(|s| s.to_string())
                .collect();
            let _ = writeln!(s, "ca {index} {protocol} id={id:#06x} decoders={}", slots.join(","));
        }
        let _ = writeln!(
            s,
            "legend out D=derived X=excluded R=rejected M=mismatch; adv .=none ~=tainted r=rejected a=accepted !=succeeded"
        );
        let mut events = self.events.iter().peekable();
        for r in &self.records {
            while let Some((_, text)) = events.next_if(|(e, _)| *e <= r.epoch) {
                let _ = writeln!(s, "event {} {text}", r.epoch);
            }
            let auth: String = r.authorized.iter().map(|a| if *a { '1' } else { '0' }).collect();
            let out: String = r.outcomes.iter().map(|o| o.code()).collect();
            let adv: String = r.marks.iter().map(|m| m.code()).collect();
            let _ = writeln!(s, "epoch {} auth={auth} out={out} adv={adv}", r.epoch);
        }
        let _ = writeln!(s, "ledger {}", self.ledger);
        for (name, value) in self.verdicts.pairs() {
            let _ = writeln!(s, "verdict {name}={value}");
        }
        for e in &self.expectations {
            let status = if e.passed { "pass" } else { "FAIL" };
            let _ = writeln!(s, "expect {} {status} actual={}", e.expectation, e.actual);
        }
        let _ = writeln!(s, "result {}", if self.passed() { "pass" } else { "fail" });
        s
    }
}

/// `DDDXX` as `D*3,X*2`.
fn run_length(s: &str) -> String {
    let mut runs: Vec<(char, usize)> = Vec::new();
    for c in s.chars() {
        match runs.last_mut() {
            Some((last, n)) if *last == c => *n += 1,
            _ => runs.push((c, 1)),
        }
    }
    let parts: Vec<String> = runs.iter().map(|(c, n)| format!("{c}*{n}")).collect();
    if parts.is_empty() {
        "none".into()
    } else {
        parts.join(",")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_length_encoding() {
        assert_eq!(run_length("DDDXXD"), "D*3,X*2,D*1");
        assert_eq!(run_length(""), "none");
    }

    fn record(auth: &[bool], out: &[Outcome], affected: &[bool]) -> EpochRecord {
        EpochRecord {
            epoch: 0,
            authorized: auth.to_vec(),
            outcomes: out.to_vec(),
            marks: vec![AdvMark::None; out.len()],
            affected: affected.to_vec(),
        }
    }

    #[test]
    fn key_auth_rules() {
        use Outcome::*;
        assert!(record(&[true, false], &[Derived, Excluded], &[false, false]).key_auth_holds());
        assert!(!record(&[true, false], &[Derived, Derived], &[false, true]).key_auth_holds());
        assert!(!record(&[true, false], &[Rejected, Excluded], &[false, false]).key_auth_holds());
        assert!(record(&[true, false], &[Mismatch, Excluded], &[true, false]).key_auth_holds());
    }

    #[test]
    fn verdicts_follow_records() {
        use Outcome::*;
        let mut bad = record(&[false], &[Derived], &[true]);
        bad.marks[0] = AdvMark::Succeeded;
        bad.epoch = 3;
        let good = record(&[true], &[Derived], &[false]);
        let v = Verdicts::from_records(&[good.clone(), bad.clone()], Some(4), 0);
        assert!(!v.implicit_key_auth);
        assert!(!v.authenticity);
        assert_eq!(v.recovery, Some(true));
        assert_eq!(v.get("recovery").as_deref(), Some("success"));
        let v = Verdicts::from_records(&[good], None, 2);
        assert_eq!(v.get("recovery").as_deref(), Some("n/a"));
        assert_eq!(v.get("decoders_replaced").as_deref(), Some("2"));
    }
}
