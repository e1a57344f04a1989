use medfx::data::{group_records, ingest_reader, parity_score, Activity, ColumnMapping, LocalTime};
use medfx::regress::{design_with_intercept, newey_west_fit};
use medfx::simgen::{simulate_triplet, triplet_records, write_records_csv, CausalModel, Scheduling, TripletSimConfig};
use medfx::stats::{correlation, mean};

#[test]
fn m8_has_no_treatment_association() {
    let cfg = TripletSimConfig { n: 10_000, seed: 81, ..TripletSimConfig::for_model(CausalModel::M8) };
    let s = simulate_triplet(&cfg).unwrap();
    assert!(correlation(&s.x, &s.y).abs() < 0.05);
}

#[test]
fn m1_shift_moves_time_of_day_by_twice_beta() {
    let cfg = TripletSimConfig { n: 10_000, beta_xt: 2.0, seed: 82, ..TripletSimConfig::for_model(CausalModel::M1) };
    let s = simulate_triplet(&cfg).unwrap();
    let arm = |v: f64| -> Vec<f64> { s.x.iter().zip(&s.t).filter(|(x, _)| **x == v).map(|(_, t)| *t).collect() };
    let diff = mean(&arm(1.0)) - mean(&arm(0.0));
    assert!((diff - 4.0).abs() < 0.15, "difference {diff}");
}

#[test]
fn ar1_errors_have_the_configured_lag_one_correlation() {
    for phi in [0.3, 0.6, -0.5] {
        // zero effects leave y equal to the error process
        let cfg = TripletSimConfig { n: 10_000, beta_treatment: 0.0, ar_phi: phi, seed: 83, ..TripletSimConfig::for_model(CausalModel::M7) };
        let s = simulate_triplet(&cfg).unwrap();
        let r = medfx::regress::acf(&s.y, 1).unwrap();
        assert!((r - phi).abs() < 0.05, "phi {phi}: {r}");
    }
}

#[test]
fn scheduling_sets_parity() {
    for (scheduling, expected) in [(Scheduling::Paired, 1.0), (Scheduling::UnpairedRandom, 0.0)] {
        for model in [CausalModel::M1, CausalModel::M5, CausalModel::M9] {
            let cfg = TripletSimConfig { scheduling, utc_offset_hours: -5.0, seed: 84, ..TripletSimConfig::for_model(model) };
            let recs = triplet_records(&simulate_triplet(&cfg).unwrap(), "P1", Activity::Walk, "y");
            assert_eq!(parity_score(&recs, LocalTime::from_hours(-5.0)).unwrap(), expected, "{model} {scheduling:?}");
        }
    }
}

#[test]
fn csv_round_trips_through_ingest() {
    let cfg = TripletSimConfig { seed: 85, utc_offset_hours: 2.0, ..TripletSimConfig::for_model(CausalModel::M3) };
    let s = simulate_triplet(&cfg).unwrap();
    let recs = triplet_records(&s, "P7", Activity::Voice, "jitter");
    let mut buf = Vec::new();
    write_records_csv(&recs, &mut buf).unwrap();
    let back = ingest_reader(buf.as_slice(), &ColumnMapping::default()).unwrap();
    assert_eq!(back.rejected, 0);
    assert_eq!(back.feature_names, vec!["jitter".to_string()]);
    assert_eq!(back.records.len(), recs.len());
    for (a, b) in recs.iter().zip(&back.records) {
        assert_eq!(a.timestamp, b.timestamp);
        assert_eq!(a.med_status, b.med_status);
        let (va, vb) = (a.feature("jitter").unwrap(), b.feature("jitter").unwrap());
        assert!((va - vb).abs() <= 1e-11 * va.abs().max(1.0));
    }
    let groups = group_records(&back.records);
    let series = medfx::data::build_triplet(groups.values().next().unwrap(), "jitter", LocalTime::from_hours(2.0)).unwrap();
    assert_eq!(series.x, s.x);
    assert_eq!(series.t, s.t);
}

#[test]
fn fixed_seed_is_bit_identical() {
    let cfg = TripletSimConfig { seed: 86, ..TripletSimConfig::for_model(CausalModel::M6) };
    assert_eq!(simulate_triplet(&cfg).unwrap(), simulate_triplet(&cfg).unwrap());
}

#[test]
fn m1_data_has_no_time_of_day_effect_given_treatment() {
    let reps = 500;
    let rejections = (0..reps)
        .filter(|&r| {
            let cfg = TripletSimConfig { n: 500, seed: 10_000 + r, ..TripletSimConfig::for_model(CausalModel::M1) };
            let s = simulate_triplet(&cfg).unwrap();
            let fit = newey_west_fit(&design_with_intercept(&[&s.x, &s.t]), &s.y, None).unwrap();
            fit.pvalue[2] < 0.05
        })
        .count();
    let rate = rejections as f64 / reps as f64;
    // binomial 99% band around 0.05 plus HAC small-sample slack
    assert!((0.02..=0.085).contains(&rate), "H5 rejection rate {rate}");
}
