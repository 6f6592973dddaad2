use untrusted_qkd::oracle::{
    ground_truth, soundness_campaign, soundness_campaign_with, yn_decomposition_check,
    AdversaryStrategy, CampaignOptions, StateLambdas,
};
use untrusted_qkd::source_model::{PhotonDistribution, SequenceLength, SourceSpec};

fn poisson(mean: f64) -> SourceSpec {
    SourceSpec::new(
        mean,
        PhotonDistribution::PoissonExact,
        SequenceLength::Asymptotic,
    )
    .unwrap()
}

const LAMBDAS: StateLambdas = StateLambdas {
    signal: 0.04,
    decoy: 0.01,
    vacuum: 0.0,
};

#[test]
fn campaign_is_reproducible() {
    let a = soundness_campaign(200, 7);
    let b = soundness_campaign(200, 7);
    assert_eq!(a, b);
    let c = soundness_campaign(200, 8);
    assert_ne!(a, c);
}

#[test]
fn medium_campaign_is_clean() {
    let r = soundness_campaign(2_000, 1);
    assert_eq!(r.violations(), 0);
    assert!(r.records.iter().any(|t| t.q1_wv > 0.0));
    assert!(r.records.iter().any(|t| t.y1_differs));
}

#[test]
fn corrupted_bound_is_caught() {
    let r = soundness_campaign_with(CampaignOptions {
        trials: 50,
        seed: 3,
        corrupt_bound: true,
    });
    assert_eq!(r.violations(), 50);
}

#[test]
fn campaign_csv_has_one_row_per_trial() {
    let r = soundness_campaign(25, 0);
    let mut buf = Vec::new();
    r.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("trial,strategy,source,"));
    assert_eq!(lines.count(), 25);
}

#[test]
fn photon_number_only_attack_keeps_yields_equal() {
    let s = AdversaryStrategy::from_fn(60, |_, n| ((0.3 * n as f64).min(1.0), 0.02)).unwrap();
    let t = ground_truth(&poisson(20.0), 0.2, LAMBDAS, &s).unwrap();
    assert!(!t.y1_differs());
    assert!(yn_decomposition_check(&t));
}

#[test]
fn input_dependent_attack_separates_signal_and_decoy() {
    let s = AdversaryStrategy::from_fn(60, |m, n| {
        let y = if n == 1 && m > 20 { 0.9 } else { 0.1 };
        (y, 0.05)
    })
    .unwrap();
    let t = ground_truth(&poisson(20.0), 0.2, LAMBDAS, &s).unwrap();
    assert!(t.y1_differs());
    assert!(yn_decomposition_check(&t));
    // A larger lambda favours smaller m among single-photon emissions.
    assert!(t.signal.y_n[1] < t.decoy.y_n[1]);
}

#[test]
fn oversized_source_is_rejected() {
    let s = AdversaryStrategy::constant(10, 0.5, 0.1).unwrap();
    assert!(ground_truth(&poisson(1e4), 0.1, LAMBDAS, &s).is_err());
}
