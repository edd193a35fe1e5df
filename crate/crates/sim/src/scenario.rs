//! Scenario files.
//!
//! One directive per line; `#` starts a comment. Epoch ranges `a..b` are
//! inclusive.
//!
//! ```text
//! name recovery-p2
//! seed 11
//! epochs 80
//! content 184
//! ca p2
//! decoders 8 ca=0
//! authorize from=0 ids=0,1,2,3,4
//! at 50 compromise sender_keys ca=0
//! at 60 recover
//! at 61..70 forge dst=6 key=stolen
//! expect decoders_replaced=0
//! expect decoder=6 epochs=61..70 outcome=M
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::error::{Result, SimError};
use crate::headend::CaProtocol;

pub const DEFAULT_CONTENT_LEN: usize = 184;
pub const MAX_EPOCHS: u64 = 1_000_000;
pub const MAX_DECODERS: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuthSet {
    All,
    None,
    Slots(BTreeSet<usize>),
}

impl AuthSet {
    pub fn contains(&self, slot: usize) -> bool {
        match self {
            AuthSet::All => true,
            AuthSet::None => false,
            AuthSet::Slots(s) => s.contains(&slot),
        }
    }
}

/// From epoch `from` onward the authorized decoders are `set`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthChange {
    pub from: u64,
    pub set: AuthSet,
}

macro_rules! keyword_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn name(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(format!(
                        "unknown {} `{s}` (expected one of: {})",
                        stringify!($name),
                        [$($text),+].join(", ")
                    )),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

keyword_enum!(TamperClass {
    Ecm => "ecm",
    EmmBroadcast => "emm_broadcast",
    EmmEnroll => "emm_enroll",
    Certificate => "certificate",
    Bundle => "bundle",
    PkSet => "pk_set",
    Derive => "derive",
});

impl TamperClass {
    /// Classes that live in the broadcast frame rather than on the chip channel.
    pub fn is_broadcast(self) -> bool {
        matches!(
            self,
            TamperClass::Ecm | TamperClass::EmmBroadcast | TamperClass::EmmEnroll
        )
    }
}

keyword_enum!(ReplayClass {
    Derive => "derive",
    LoadLtk => "load_ltk",
});

keyword_enum!(InjectClass {
    ControlWord => "control_word",
    Derive => "derive",
});

keyword_enum!(ForgeKey {
    Stolen => "stolen",
    Own => "own",
});

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Compromise {
    /// The current `SK_T`.
    TtpKey,
    /// Sender signing keys (and certificates) of one CA system or all.
    SenderKeys { ca: Option<usize> },
    /// CA client state of one decoder or all: channel keys and `LK` copies.
    CaClient { decoder: Option<usize> },
    /// The control word descrambled by `decoder`, each epoch of the range.
    ControlWord { decoder: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    /// Flips bit `bit + stride * (epoch - first)` of one message of `class`.
    Tamper {
        class: TamperClass,
        bit: usize,
        stride: usize,
        dst: Option<usize>,
    },
    /// Sends `src`'s chip-channel message of `class` to `dst`'s chip.
    Replay {
        src: usize,
        dst: usize,
        class: ReplayClass,
    },
    Inject {
        dst: usize,
        class: InjectClass,
    },
    /// Full rogue-sender run against `dst`'s chip.
    Forge {
        dst: usize,
        key: ForgeKey,
    },
    Compromise(Compromise),
    /// TTP rotation, CA client swap, sender re-key and re-enrollment.
    Recover,
    TtpRotate,
    RotateSender {
        ca: usize,
    },
}

impl Action {
    /// Actions that happen once rather than every epoch of a range.
    pub fn is_event(&self) -> bool {
        matches!(
            self,
            Action::Recover
                | Action::TtpRotate
                | Action::RotateSender { .. }
                | Action::Compromise(Compromise::TtpKey | Compromise::SenderKeys { .. } | Compromise::CaClient { .. })
        )
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: &Option<usize>| v.map_or("all".to_string(), |v| v.to_string());
        match self {
            Action::Tamper {
                class,
                bit,
                stride,
                dst,
            } => {
                write!(f, "tamper class={class} bit={bit}")?;
                if *stride != 0 {
                    write!(f, " stride={stride}")?;
                }
                write!(f, " dst={}", opt(dst))
            }
            Action::Replay { src, dst, class } => write!(f, "replay src={src} dst={dst} class={class}"),
            Action::Inject { dst, class } => write!(f, "inject dst={dst} class={class}"),
            Action::Forge { dst, key } => write!(f, "forge dst={dst} key={key}"),
            Action::Compromise(Compromise::TtpKey) => f.write_str("compromise ttp_key"),
            Action::Compromise(Compromise::SenderKeys { ca }) => write!(f, "compromise sender_keys ca={}", opt(ca)),
            Action::Compromise(Compromise::CaClient { decoder }) => {
                write!(f, "compromise ca_client decoder={}", opt(decoder))
            }
            Action::Compromise(Compromise::ControlWord { decoder }) => {
                write!(f, "compromise control_word decoder={decoder}")
            }
            Action::Recover => f.write_str("recover"),
            Action::TtpRotate => f.write_str("ttp-rotate"),
            Action::RotateSender { ca } => write!(f, "rotate-sender ca={ca}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduledAction {
    pub first: u64,
    pub last: u64,
    pub action: Action,
    /// Source line, 0 for configs built in code.
    pub line: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Outcome {
    /// The chip's control word descrambled the content correctly.
    Derived,
    /// Nothing reached the chip, nothing was rejected.
    Excluded,
    /// A message was rejected and no control word was derived.
    Rejected,
    /// The chip derived a control word that does not descramble the content.
    Mismatch,
}

impl Outcome {
    pub fn code(self) -> char {
        match self {
            Outcome::Derived => 'D',
            Outcome::Excluded => 'X',
            Outcome::Rejected => 'R',
            Outcome::Mismatch => 'M',
        }
    }

    pub fn from_code(c: &str) -> Option<Self> {
        match c {
            "D" => Some(Outcome::Derived),
            "X" => Some(Outcome::Excluded),
            "R" => Some(Outcome::Rejected),
            "M" => Some(Outcome::Mismatch),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expectation {
    /// `name=value` against the verdict lines of the report.
    Verdict { name: String, value: String },
    Outcome {
        decoder: usize,
        first: u64,
        last: u64,
        outcome: Outcome,
    },
}

pub const VERDICT_NAMES: &[&str] = &["implicit_key_auth", "authenticity", "recovery", "decoders_replaced"];

impl fmt::Display for Expectation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expectation::Verdict { name, value } => write!(f, "{name}={value}"),
            Expectation::Outcome {
                decoder,
                first,
                last,
                outcome,
            } => write!(f, "decoder={decoder} epochs={first}..{last} outcome={}", outcome.code()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: Option<u64>,
    pub epochs: u64,
    pub content_len: usize,
    pub ca_systems: Vec<CaProtocol>,
    /// CA system index of each decoder slot.
    pub decoders: Vec<usize>,
    pub authorization: Vec<AuthChange>,
    pub actions: Vec<ScheduledAction>,
    pub expectations: Vec<Expectation>,
}

impl ScenarioConfig {
    pub fn new(name: impl Into<String>, epochs: u64) -> Self {
        Self {
            name: name.into(),
            seed: None,
            epochs,
            content_len: DEFAULT_CONTENT_LEN,
            ca_systems: Vec::new(),
            decoders: Vec::new(),
            authorization: Vec::new(),
            actions: Vec::new(),
            expectations: Vec::new(),
        }
    }

    pub fn with_ca(mut self, protocol: CaProtocol, decoders: usize) -> Self {
        let ca = self.ca_systems.len();
        self.ca_systems.push(protocol);
        self.decoders.extend(std::iter::repeat_n(ca, decoders));
        self
    }

    pub fn authorize_from(mut self, from: u64, set: AuthSet) -> Self {
        self.authorization.push(AuthChange { from, set });
        self
    }

    pub fn at(mut self, first: u64, last: u64, action: Action) -> Self {
        self.actions.push(ScheduledAction {
            first,
            last,
            action,
            line: 0,
        });
        self
    }

    /// Authorized set in effect at `epoch`: the latest change at or before it.
    pub fn authorized_at(&self, epoch: u64) -> AuthSet {
        self.authorization
            .iter()
            .filter(|c| c.from <= epoch)
            .max_by_key(|c| c.from)
            .map(|c| c.set.clone())
            .unwrap_or(AuthSet::None)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ScenarioConfig::new("unnamed", 0);
        let mut epochs = None;
        for (index, raw) in text.lines().enumerate() {
            let line = index + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |msg: String| SimError::Scenario { line, msg };
            let mut words = content.split_whitespace();
            let directive = words.next().expect("non-empty line");
            let rest: Vec<&str> = words.collect();
            match directive {
                "name" => cfg.name = single(&rest).map_err(err)?.to_string(),
                "seed" => cfg.seed = Some(number(single(&rest).map_err(err)?).map_err(err)?),
                "epochs" => epochs = Some(number(single(&rest).map_err(err)?).map_err(err)?),
                "content" => cfg.content_len = number(single(&rest).map_err(err)?).map_err(err)?,
                "ca" => {
                    let word = single(&rest).map_err(err)?;
                    let p = CaProtocol::parse(word).ok_or_else(|| err(format!("unknown CA protocol `{word}`")))?;
                    cfg.ca_systems.push(p);
                }
                "decoders" => {
                    let (count, kv) = rest.split_first().ok_or_else(|| err("missing decoder count".into()))?;
                    let count: usize = number(count).map_err(err)?;
                    let kv = KeyValues::parse(kv).map_err(err)?;
                    let ca = kv.opt_number("ca").map_err(err)?.unwrap_or(0);
                    kv.finish().map_err(err)?;
                    cfg.decoders.extend(std::iter::repeat_n(ca, count));
                }
                "authorize" => {
                    let kv = KeyValues::parse(&rest).map_err(err)?;
                    let from = kv.opt_number("from").map_err(err)?.unwrap_or(0);
                    let set = match kv.req("ids").map_err(err)? {
                        "all" => AuthSet::All,
                        "none" => AuthSet::None,
                        list => AuthSet::Slots(
                            list.split(',')
                                .map(number)
                                .collect::<std::result::Result<_, _>>()
                                .map_err(err)?,
                        ),
                    };
                    kv.finish().map_err(err)?;
                    cfg.authorization.push(AuthChange { from, set });
                }
                "at" => {
                    let (range, rest) = rest.split_first().ok_or_else(|| err("missing epoch".into()))?;
                    let (first, last) = epoch_range(range).map_err(err)?;
                    let action = parse_action(rest).map_err(err)?;
                    cfg.actions.push(ScheduledAction {
                        first,
                        last,
                        action,
                        line,
                    });
                }
                "expect" => cfg.expectations.push(parse_expectation(&rest).map_err(err)?),
                other => return Err(err(format!("unknown directive `{other}`"))),
            }
        }
        cfg.epochs = epochs.ok_or(SimError::Scenario {
            line: 0,
            msg: "missing `epochs`".into(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks that every reference points at something that exists.
    pub fn validate(&self) -> Result<()> {
        let fail = |line: usize, msg: String| Err(SimError::Scenario { line, msg });
        if self.ca_systems.is_empty() {
            return fail(0, "at least one `ca` is required".into());
        }
        if self.epochs == 0 || self.epochs > MAX_EPOCHS {
            return fail(0, format!("epochs must be in 1..={MAX_EPOCHS}"));
        }
        if self.decoders.len() > MAX_DECODERS {
            return fail(0, format!("at most {MAX_DECODERS} decoders"));
        }
        if let Some(ca) = self.decoders.iter().find(|ca| **ca >= self.ca_systems.len()) {
            return fail(0, format!("decoders reference CA system {ca}, which does not exist"));
        }
        let slots = self.decoders.len();
        let mut froms = BTreeSet::new();
        for change in &self.authorization {
            if !froms.insert(change.from) {
                return fail(0, format!("two authorization changes at epoch {}", change.from));
            }
            if let AuthSet::Slots(s) = &change.set {
                if let Some(bad) = s.iter().find(|s| **s >= slots) {
                    return fail(0, format!("authorize references decoder {bad}, which does not exist"));
                }
            }
        }
        for a in &self.actions {
            let line = a.line;
            if a.first > a.last || a.last >= self.epochs {
                return fail(
                    line,
                    format!("epoch range {}..{} outside 0..{}", a.first, a.last, self.epochs - 1),
                );
            }
            if a.action.is_event() && a.first != a.last {
                return fail(line, "this action takes a single epoch".into());
            }
            let decoder = |d: usize| -> Result<()> {
                if d >= slots {
                    return fail(line, format!("decoder {d} does not exist"));
                }
                Ok(())
            };
            let ca = |c: usize| -> Result<()> {
                if c >= self.ca_systems.len() {
                    return fail(line, format!("CA system {c} does not exist"));
                }
                Ok(())
            };
            match &a.action {
                Action::Tamper { dst, .. } => dst.map(decoder).transpose().map(|_| ())?,
                Action::Replay { src, dst, .. } => {
                    decoder(*src)?;
                    decoder(*dst)?;
                    if src == dst {
                        return fail(line, "replay needs two different decoders".into());
                    }
                }
                Action::Inject { dst, .. } | Action::Forge { dst, .. } => decoder(*dst)?,
                Action::Compromise(Compromise::SenderKeys { ca: Some(c) }) | Action::RotateSender { ca: c } => {
                    ca(*c)?;
                    if matches!(a.action, Action::RotateSender { .. }) && self.ca_systems[*c] == CaProtocol::Legacy {
                        return fail(line, "legacy CA systems have no sender key".into());
                    }
                }
                Action::Compromise(
                    Compromise::CaClient { decoder: Some(d) } | Compromise::ControlWord { decoder: d },
                ) => decoder(*d)?,
                _ => {}
            }
        }
        for e in &self.expectations {
            match e {
                Expectation::Verdict { name, .. } if !VERDICT_NAMES.contains(&name.as_str()) => {
                    return fail(0, format!("unknown verdict `{name}`"));
                }
                Expectation::Outcome {
                    decoder, first, last, ..
                } if *decoder >= slots || first > last || *last >= self.epochs => {
                    return fail(0, format!("expectation `{e}` is out of range"));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

type ParseResult<T> = std::result::Result<T, String>;

fn single<'a>(rest: &[&'a str]) -> ParseResult<&'a str> {
    match rest {
        [one] => Ok(one),
        _ => Err(format!("expected exactly one value, got {}", rest.len())),
    }
}

fn number<T: FromStr>(s: &str) -> ParseResult<T> {
    s.parse().map_err(|_| format!("`{s}` is not a valid number"))
}

fn epoch_range(s: &str) -> ParseResult<(u64, u64)> {
    match s.split_once("..") {
        Some((a, b)) => Ok((number(a)?, number(b)?)),
        None => {
            let e = number(s)?;
            Ok((e, e))
        }
    }
}

struct KeyValues<'a> {
    map: BTreeMap<&'a str, &'a str>,
    used: std::cell::RefCell<BTreeSet<&'a str>>,
}

impl<'a> KeyValues<'a> {
    fn parse(words: &[&'a str]) -> ParseResult<Self> {
        let mut map = BTreeMap::new();
        for w in words {
            let (k, v) = w
                .split_once('=')
                .ok_or_else(|| format!("expected key=value, got `{w}`"))?;
            if map.insert(k, v).is_some() {
                return Err(format!("`{k}` given twice"));
            }
        }
        Ok(Self {
            map,
            used: Default::default(),
        })
    }

    fn opt(&self, key: &'a str) -> Option<&'a str> {
        self.used.borrow_mut().insert(key);
        self.map.get(key).copied()
    }

    fn req(&self, key: &'a str) -> ParseResult<&'a str> {
        self.opt(key).ok_or_else(|| format!("missing `{key}=`"))
    }

    fn opt_number<T: FromStr>(&self, key: &'a str) -> ParseResult<Option<T>> {
        self.opt(key).map(number).transpose()
    }

    fn req_number<T: FromStr>(&self, key: &'a str) -> ParseResult<T> {
        number(self.req(key)?)
    }

    fn req_parse<T: FromStr<Err = String>>(&self, key: &'a str) -> ParseResult<T> {
        self.req(key)?.parse()
    }

    /// Rejects keys that were never asked for.
    fn finish(self) -> ParseResult<()> {
        let used = self.used.borrow();
        match self.map.keys().find(|k| !used.contains(*k)) {
            Some(k) => Err(format!("unexpected key `{k}`")),
            None => Ok(()),
        }
    }
}

fn parse_action(words: &[&str]) -> ParseResult<Action> {
    let (verb, rest) = words.split_first().ok_or("missing action")?;
    let action = match *verb {
        "tamper" => {
            let kv = KeyValues::parse(rest)?;
            let a = Action::Tamper {
                class: kv.req_parse("class")?,
                bit: kv.req_number("bit")?,
                stride: kv.opt_number("stride")?.unwrap_or(0),
                dst: kv.opt_number("dst")?,
            };
            kv.finish()?;
            a
        }
        "replay" => {
            let kv = KeyValues::parse(rest)?;
            let a = Action::Replay {
                src: kv.req_number("src")?,
                dst: kv.req_number("dst")?,
                class: kv.req_parse("class")?,
            };
            kv.finish()?;
            a
        }
        "inject" => {
            let kv = KeyValues::parse(rest)?;
            let a = Action::Inject {
                dst: kv.req_number("dst")?,
                class: kv.req_parse("class")?,
            };
            kv.finish()?;
            a
        }
        "forge" => {
            let kv = KeyValues::parse(rest)?;
            let a = Action::Forge {
                dst: kv.req_number("dst")?,
                key: kv.req_parse("key")?,
            };
            kv.finish()?;
            a
        }
        "compromise" => {
            let (what, rest) = rest.split_first().ok_or("missing compromise target")?;
            let kv = KeyValues::parse(rest)?;
            let all_or = |v: Option<&str>| -> ParseResult<Option<usize>> {
                match v {
                    None | Some("all") => Ok(None),
                    Some(n) => number(n).map(Some),
                }
            };
            let c = match *what {
                "ttp_key" => Compromise::TtpKey,
                "sender_keys" => Compromise::SenderKeys {
                    ca: all_or(kv.opt("ca"))?,
                },
                "ca_client" => Compromise::CaClient {
                    decoder: all_or(kv.opt("decoder"))?,
                },
                "control_word" => Compromise::ControlWord {
                    decoder: kv.req_number("decoder")?,
                },
                other => return Err(format!("unknown compromise target `{other}`")),
            };
            kv.finish()?;
            Action::Compromise(c)
        }
        "recover" | "ttp-rotate" => {
            if !rest.is_empty() {
                return Err(format!("`{verb}` takes no arguments"));
            }
            if *verb == "recover" {
                Action::Recover
            } else {
                Action::TtpRotate
            }
        }
        "rotate-sender" => {
            let kv = KeyValues::parse(rest)?;
            let a = Action::RotateSender {
                ca: kv.req_number("ca")?,
            };
            kv.finish()?;
            a
        }
        other => return Err(format!("unknown action `{other}`")),
    };
    Ok(action)
}

fn parse_expectation(words: &[&str]) -> ParseResult<Expectation> {
    let kv = KeyValues::parse(words)?;
    if let Some(decoder) = kv.opt_number("decoder")? {
        let (first, last) = epoch_range(kv.req("epochs")?)?;
        let code = kv.req("outcome")?;
        let outcome = Outcome::from_code(code).ok_or_else(|| format!("unknown outcome `{code}`"))?;
        kv.finish()?;
        return Ok(Expectation::Outcome {
            decoder,
            first,
            last,
            outcome,
        });
    }
    match words {
        [one] => {
            let (name, value) = one.split_once('=').expect("parsed as key=value");
            Ok(Expectation::Verdict {
                name: name.to_string(),
                value: value.to_string(),
            })
        }
        _ => Err("expected `expect <verdict>=<value>` or `expect decoder=.. epochs=.. outcome=..`".into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "
        # comment
        name sample
        seed 9
        epochs 20
        ca p2
        ca legacy
        decoders 3 ca=0
        decoders 1 ca=1
        authorize from=0 ids=0,1
        authorize from=10 ids=all
        at 4..6 tamper class=derive bit=3 stride=5 dst=1
        at 5 compromise sender_keys
        at 7 recover
        expect authenticity=holds
        expect decoder=2 epochs=0..9 outcome=X
    ";

    #[test]
    fn parses_sample() {
        let cfg = ScenarioConfig::parse(SAMPLE).unwrap();
        assert_eq!(cfg.name, "sample");
        assert_eq!(cfg.seed, Some(9));
        assert_eq!(cfg.decoders, vec![0, 0, 0, 1]);
        assert_eq!(cfg.authorized_at(3), AuthSet::Slots([0, 1].into()));
        assert_eq!(cfg.authorized_at(15), AuthSet::All);
        assert_eq!(cfg.actions.len(), 3);
        assert_eq!(
            cfg.actions[0].action,
            Action::Tamper {
                class: TamperClass::Derive,
                bit: 3,
                stride: 5,
                dst: Some(1)
            }
        );
        assert_eq!(
            cfg.actions[1].action,
            Action::Compromise(Compromise::SenderKeys { ca: None })
        );
        assert_eq!(cfg.expectations.len(), 2);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = SAMPLE.replace("at 7 recover", "at 7 teleport");
        match ScenarioConfig::parse(&bad) {
            Err(SimError::Scenario { line, msg }) => {
                assert_eq!(line, 14);
                assert!(msg.contains("teleport"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_dangling_references() {
        for (from, to) in [
            ("dst=1", "dst=9"),
            ("ids=0,1", "ids=0,7"),
            ("at 7 recover", "at 7..8 recover"),
            ("at 7 recover", "at 25 recover"),
            ("epochs 20", "epochs 0"),
            ("ca=1", "ca=4"),
            ("expect authenticity=holds", "expect bogus=1"),
            ("bit=3", "bit=3 colour=red"),
        ] {
            let bad = SAMPLE.replace(from, to);
            assert!(ScenarioConfig::parse(&bad).is_err(), "{to}");
        }
    }
}
