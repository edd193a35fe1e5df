use hbkex_sim::headend::CaProtocol;
use hbkex_sim::report::AdvMark;
use hbkex_sim::scenario::{Action, AuthSet, Outcome, ReplayClass, ScenarioConfig};
use hbkex_sim::{run_scenario, World};
use proptest::prelude::*;

fn run(text: &str) -> hbkex_sim::RunReport {
    let cfg = ScenarioConfig::parse(text).unwrap();
    run_scenario(&cfg, cfg.seed.unwrap()).unwrap()
}

fn marks(report: &hbkex_sim::RunReport, slot: usize, from: u64) -> Vec<AdvMark> {
    report
        .records
        .iter()
        .filter(|r| r.epoch >= from)
        .map(|r| r.marks[slot])
        .collect()
}

/// Stolen sender keys alone give the wrong K under hash binding: the chip
/// binds the forged key into K, so without r the adversary only causes a
/// mismatch.
#[test]
fn stolen_sender_key_without_epoch_secret_only_mismatches() {
    let report = run(
        "name t\nseed 4\nepochs 20\nca p2\ndecoders 4 ca=0\nauthorize from=0 ids=0,1\n\
         at 5 compromise sender_keys\nat 5..19 compromise control_word decoder=0\n\
         at 10..19 forge dst=3 key=stolen\n",
    );
    assert!(report.verdicts.authenticity);
    assert!(report.records[10..].iter().all(|r| r.outcomes[3] == Outcome::Mismatch));
}

#[test]
fn stolen_sender_key_with_channel_keys_breaks_unrecovered_binding() {
    let report = run(
        "name t\nseed 4\nepochs 20\nca p2\ndecoders 4 ca=0\nauthorize from=0 ids=0,1\n\
         at 5 compromise sender_keys\nat 5 compromise ca_client decoder=0\n\
         at 10..19 forge dst=3 key=stolen\n",
    );
    assert!(!report.verdicts.authenticity);
    assert!(marks(&report, 3, 10).iter().all(|m| *m == AdvMark::Succeeded));
    assert!(report.records[..10].iter().all(|r| !r.adversary_succeeded()));
}

#[test]
fn stolen_ttp_key_breaks_unrecovered_certificates() {
    let report = run(
        "name t\nseed 4\nepochs 20\nca p1\ndecoders 4 ca=0\nauthorize from=0 ids=0,1\n\
         at 5 compromise ttp_key\nat 5..19 compromise control_word decoder=0\n\
         at 10..19 forge dst=3 key=own\n",
    );
    assert!(!report.verdicts.authenticity);
    assert!(!report.verdicts.implicit_key_auth);
    assert!(marks(&report, 3, 10).iter().all(|m| *m == AdvMark::Succeeded));
}

#[test]
fn legacy_chip_takes_redistributed_control_words() {
    let report = run(
        "name t\nseed 4\nepochs 12\nca legacy\ndecoders 3 ca=0\nauthorize from=0 ids=0\n\
         at 5..11 compromise control_word decoder=0\nat 5..11 inject dst=2 class=control_word\n",
    );
    assert!(!report.verdicts.authenticity);
    assert!(marks(&report, 2, 5).iter().all(|m| *m == AdvMark::Succeeded));
    assert!(marks(&report, 2, 0)[..5].iter().all(|m| *m == AdvMark::None));
}

#[test]
fn compliant_chips_refuse_redistributed_control_words() {
    for proto in ["p1", "p2"] {
        let report = run(&format!(
            "name t\nseed 4\nepochs 12\nca {proto}\ndecoders 3 ca=0\nauthorize from=0 ids=0\n\
             at 5..11 compromise control_word decoder=0\nat 5..11 inject dst=2 class=control_word\n"
        ));
        assert!(report.verdicts.authenticity, "{proto}");
        assert!(report.verdicts.implicit_key_auth, "{proto}");
        assert!(marks(&report, 2, 5).iter().all(|m| *m == AdvMark::Rejected), "{proto}");
    }
}

fn replay_config(protocol: CaProtocol, src: usize, dst: usize, class: ReplayClass, auth: &[usize]) -> ScenarioConfig {
    ScenarioConfig::new("replay", 8)
        .with_ca(protocol, 4)
        .authorize_from(0, AuthSet::Slots(auth.iter().copied().collect()))
        .at(2, 7, Action::Replay { src, dst, class })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    /// A chip message captured at one decoder never makes another decoder
    /// derive, whatever the pair, class, protocol or authorization.
    #[test]
    fn replays_never_carry_over(
        p1 in any::<bool>(),
        src in 0usize..4,
        offset in 1usize..4,
        load in any::<bool>(),
        auth in proptest::collection::btree_set(0usize..4, 0..4),
        seed in any::<u64>(),
    ) {
        let dst = (src + offset) % 4;
        let protocol = if p1 { CaProtocol::P1 } else { CaProtocol::P2 };
        let class = if load { ReplayClass::LoadLtk } else { ReplayClass::Derive };
        let auth: Vec<usize> = auth.into_iter().collect();
        let cfg = replay_config(protocol, src, dst, class, &auth);
        let report = run_scenario(&cfg, seed).unwrap();
        prop_assert!(report.verdicts.authenticity);
        for r in &report.records {
            prop_assert!(!matches!(r.marks[dst], AdvMark::Accepted | AdvMark::Succeeded));
            if !r.authorized[dst] {
                prop_assert_ne!(r.outcomes[dst], Outcome::Derived);
            }
        }
    }

    /// Same config and seed, same report and same capture bytes.
    #[test]
    fn runs_are_reproducible(seed in any::<u64>(), p1 in any::<bool>()) {
        let protocol = if p1 { CaProtocol::P1 } else { CaProtocol::P2 };
        let cfg = ScenarioConfig::new("repro", 5)
            .with_ca(protocol, 3)
            .authorize_from(0, AuthSet::Slots([0, 2].into_iter().collect()));
        let (a, ca) = World::with_capture(&cfg, seed).unwrap().run_with_capture().unwrap();
        let (b, cb) = World::with_capture(&cfg, seed).unwrap().run_with_capture().unwrap();
        prop_assert_eq!(a.render(), b.render());
        prop_assert_eq!(&ca, &cb);
        let (_, cc) = World::with_capture(&cfg, seed ^ 1).unwrap().run_with_capture().unwrap();
        prop_assert_ne!(&ca, &cc);
    }
}
