use mgshield::attacks::{Attack, AttackTarget, LinkInjection};
use mgshield::cases::{paper_scenario, PaperCase};
use mgshield::detection::{detect, estimate_neighbor, InterLayerSignals, LinkKey};
use mgshield::sim::{run, Channel, DetectionSettings};
use proptest::prelude::*;

fn monitored(case: PaperCase) -> mgshield::sim::Scenario {
    let mut s = paper_scenario(case);
    s.detection = DetectionSettings {
        enabled: true,
        ..DetectionSettings::default()
    };
    s
}

#[test]
fn no_false_positives_without_link_attacks() {
    // generator attacks and load steps change the state but not the links
    for case in [PaperCase::NoAttack, PaperCase::LoadPerturb] {
        let s = monitored(case);
        let tr = run(&s).unwrap();
        let rep = detect(&tr, s.detection.threshold, s.detection.dwell);
        assert_eq!(rep.links.len(), 16);
        assert!(rep.flagged().is_empty(), "{case}: {rep}");
        let worst = rep.links.iter().map(|l| l.max_residual).fold(0.0, f64::max);
        assert!(worst < s.detection.threshold, "{case}: {worst}");
    }
}

#[test]
fn estimator_reproduces_states_along_a_run() {
    let s = monitored(PaperCase::AttackAux);
    let tr = run(&s).unwrap();
    let beta = s.control.beta;
    for k in (0..tr.len()).step_by(997) {
        let w = tr.channel(Channel::Omega).row(k);
        let z = tr.channel(Channel::ZOmega).row(k);
        for j in 0..4 {
            let sig = InterLayerSignals::observe((j + 1) % 4, j, z, w, beta);
            assert!((sig.estimate(beta).unwrap() - w[j]).abs() <= 1e-9 * w[j].abs());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn estimator_inverts_any_signals(x in -1e3f64..1e3, z in -1e3f64..1e3, beta in 0.05f64..20.0) {
        let est = estimate_neighbor(beta * z, z - beta * x, beta).unwrap();
        prop_assert!((est - x).abs() <= 1e-9 * (x.abs() + z.abs() / beta + 1.0));
    }

    #[test]
    fn persistent_link_injections_are_flagged(
        edge in 0usize..4,
        reverse in any::<bool>(),
        power in any::<bool>(),
        magnitude in 2.5e-3f64..5.0,
        negative in any::<bool>(),
    ) {
        let mut s = monitored(PaperCase::NoAttack);
        s.integration.horizon = 3.0;
        let (a, b) = [(0, 1), (1, 2), (2, 3), (0, 3)][edge];
        let (receiver, sender) = if reverse { (b, a) } else { (a, b) };
        let target = if power { AttackTarget::Power } else { AttackTarget::Frequency };
        s.attacks.push(Attack::Link(LinkInjection {
            receiver,
            sender,
            target,
            value: if negative { -magnitude } else { magnitude },
            start: 1.0,
            end: None,
        }));
        let tr = run(&s).unwrap();
        let rep = detect(&tr, s.detection.threshold, s.detection.dwell);
        let key = LinkKey { receiver, sender, target };
        prop_assert_eq!(rep.flagged(), vec![key]);
        let flagged = rep.link(key).unwrap().flagged_time.unwrap();
        prop_assert!((flagged - 1.1).abs() < 1e-9, "{}", flagged);
    }
}

#[test]
fn short_glitches_below_dwell_are_ignored() {
    let mut s = monitored(PaperCase::NoAttack);
    s.integration.horizon = 3.0;
    s.attacks.push(Attack::Link(LinkInjection {
        receiver: 1,
        sender: 0,
        target: AttackTarget::Frequency,
        value: 4.0,
        start: 1.0,
        end: Some(1.05),
    }));
    let tr = run(&s).unwrap();
    let rep = detect(&tr, s.detection.threshold, s.detection.dwell);
    assert!(rep.flagged().is_empty());
    assert!(rep.edge_max_residual(0, 1) > 3.9);
}
