use std::collections::BTreeMap;

use imac_igs::bound::{fenchel_upper, rate_lower_bound};
use imac_igs::channel::{extend, lift_complex_to_real, load_scenario, ChannelKey, LiftedNetwork, Polar, Scenario};
use imac_igs::linalg::{frobenius_inner, Mat, SpdFactor};
use imac_igs::rates::{achievable_rate, project_proper, proper_rotation, properness_defect, CovarianceSet};
use imac_igs::subproblem::Mode;
use imac_igs::sweep::{emit_table, format_sig, SweepRow, CSV_HEADER};
use proptest::prelude::*;

fn polar() -> impl Strategy<Value = Polar> {
    (0.05f64..4.0, -std::f64::consts::PI..std::f64::consts::PI).prop_map(|(m, p)| Polar::new(m, p))
}

fn spd(n: usize) -> impl Strategy<Value = Mat> {
    prop::collection::vec(-1.0f64..1.0, n * n).prop_map(move |v| {
        let a = Mat::from_vec(n, n, v);
        &a * a.transpose() + Mat::identity(n, n) * 0.05
    })
}

fn spd_pair() -> impl Strategy<Value = (Mat, Mat)> {
    (1usize..=4).prop_flat_map(|k| (spd(2 * k), spd(2 * k)))
}

fn log2_det(m: &Mat) -> f64 {
    SpdFactor::new(m).unwrap().ln_det() / std::f64::consts::LN_2
}

/// Two cells, one user each, single receive antenna.
fn two_link(h: [Polar; 4]) -> Scenario {
    let key = |rx, tx| ChannelKey { rx_cell: rx, user: 0, tx_cell: tx };
    let channels = BTreeMap::from([
        (key(0, 0), vec![h[0]]),
        (key(0, 1), vec![h[1]]),
        (key(1, 0), vec![h[2]]),
        (key(1, 1), vec![h[3]]),
    ]);
    Scenario::new(vec![1, 1], 1, 1.0, channels).unwrap()
}

fn psd2(n: usize) -> impl Strategy<Value = Mat> {
    prop::collection::vec(-1.0f64..1.0, 4 * n * n).prop_map(move |v| {
        let a = Mat::from_vec(2 * n, 2 * n, v);
        &a * a.transpose() * 0.3
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn fenchel_dominates_and_is_tight((b, g) in spd_pair()) {
        let exact = log2_det(&b);
        prop_assert!(fenchel_upper(&b, &g).unwrap() >= exact - 1e-9);
        prop_assert!((fenchel_upper(&b, &b).unwrap() - exact).abs() <= 1e-9);
    }

    #[test]
    fn lower_bound_is_concave_and_below_rate(
        h in prop::array::uniform4(polar()),
        a in prop::array::uniform2(psd2(1)),
        b in prop::array::uniform2(psd2(1)),
        g in prop::array::uniform2(psd2(1)),
        t in 0.0f64..1.0,
    ) {
        let s = two_link(h);
        let net = LiftedNetwork::new(&s, 1).unwrap();
        let qa = CovarianceSet::new(1, a.to_vec()).unwrap();
        let qb = CovarianceSet::new(1, b.to_vec()).unwrap();
        let mix = CovarianceSet::new(1, vec![&a[0] * t + &b[0] * (1.0 - t), &a[1] * t + &b[1] * (1.0 - t)]).unwrap();
        let gamma = &g[1] + Mat::identity(2, 2) * 0.5;
        let f = |q: &CovarianceSet| rate_lower_bound(&net, 0, q, &gamma).unwrap();
        prop_assert!(f(&mix) >= t * f(&qa) + (1.0 - t) * f(&qb) - 1e-9);
        prop_assert!(f(&qa) <= achievable_rate(&net, 0, &qa).unwrap() + 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lifted_gram_is_scaled_identity(h in prop::collection::vec(polar(), 1..4), n in 1usize..4) {
        let g = lift_complex_to_real(&h).unwrap();
        let norm: f64 = h.iter().map(|e| e.mag * e.mag).sum();
        let gram = g.transpose() * &g;
        prop_assert!((gram - Mat::identity(2, 2) * norm).abs().max() <= 1e-12 * norm.max(1.0));
        let gb = extend(&g, n).unwrap();
        let gram = gb.transpose() * &gb;
        prop_assert!((gram - Mat::identity(2 * n, 2 * n) * norm).abs().max() <= 1e-12 * norm.max(1.0));
    }

    #[test]
    fn rate_grows_with_own_power_and_falls_with_interference(
        h in prop::array::uniform4(polar()),
        q0 in psd2(1),
        q1 in psd2(1),
        alpha in 1.0f64..3.0,
    ) {
        let s = two_link(h);
        let net = LiftedNetwork::new(&s, 1).unwrap();
        let q = CovarianceSet::new(1, vec![q0.clone(), q1.clone()]).unwrap();
        let base = achievable_rate(&net, 0, &q).unwrap();
        let louder = achievable_rate(&net, 0, &q.scaled_user(0, alpha)).unwrap();
        let jammed = achievable_rate(&net, 0, &q.scaled_user(1, alpha)).unwrap();
        prop_assert!(base >= 0.0);
        prop_assert!(louder >= base - 1e-12);
        prop_assert!(jammed <= base + 1e-12);
    }

    #[test]
    fn proper_projection_is_orthogonal(q in psd2(2)) {
        let p = project_proper(&q);
        prop_assert!(properness_defect(&p) <= 1e-12);
        prop_assert!((project_proper(&p) - &p).abs().max() <= 1e-12);
        prop_assert!(frobenius_inner(&(&q - &p), &p).abs() <= 1e-10 * (1.0 + q.norm_squared()));
    }

    #[test]
    fn extension_commutes_with_slot_permutations(h in prop::collection::vec(polar(), 1..3), shift in 1usize..3) {
        let n = 3;
        let g = lift_complex_to_real(&h).unwrap();
        let gb = extend(&g, n).unwrap();
        let perm = |blocks: usize, size: usize| {
            let mut p = Mat::zeros(blocks * size, blocks * size);
            for b in 0..blocks {
                for i in 0..size {
                    p[(((b + shift) % blocks) * size + i, b * size + i)] = 1.0;
                }
            }
            p
        };
        let (pr, pt) = (perm(n, 2 * h.len()), perm(n, 2));
        prop_assert_eq!(&pr * &gb * pt.transpose(), gb);
    }

    #[test]
    fn properness_is_commutation_with_rotation(q in psd2(2)) {
        let j = proper_rotation(2);
        let commutator = |m: &Mat| (&j * m - m * &j).abs().max();
        let p = project_proper(&q);
        prop_assert!(properness_defect(&p) <= 1e-12 && commutator(&p) <= 1e-12);
        prop_assert_eq!(properness_defect(&q) <= 1e-12, commutator(&q) <= 1e-12);
        prop_assert!((p.trace() - q.trace()).abs() <= 1e-12 * (1.0 + q.trace()));
    }

    #[test]
    fn scenario_json_round_trip(h in prop::array::uniform4(polar()), sigma2 in 0.1f64..3.0) {
        let s = two_link(h).with_noise_variance(sigma2).unwrap();
        let back = load_scenario(s.to_json().unwrap().as_bytes()).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn csv_fields_round_trip(
        values in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL, 4),
        ranks in prop::collection::vec(0usize..9, 1..5),
    ) {
        let row = SweepRow {
            scenario: "builtin:mi".into(),
            antennas: 2,
            mode: Mode::Improper,
            extension: 2,
            demand: values[0].abs(),
            sum_power: Some(values[1]),
            status: "converged".into(),
            outer_iters: 7,
            min_rate_margin: Some(values[2]),
            max_properness_defect: Some(values[3].abs()),
            ranks: ranks.clone(),
            power_trace: vec![],
            qset: None,
            diagnostic: None,
        };
        let mut buf = Vec::new();
        emit_table(&[row.clone()], &mut buf).unwrap();
        let mut reader = csv::Reader::from_reader(buf.as_slice());
        prop_assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>(), CSV_HEADER.to_vec());
        let rec = reader.records().next().unwrap().unwrap();
        for (field, v) in [(4, row.demand), (5, values[1]), (8, values[2]), (9, row.max_properness_defect.unwrap())] {
            let printed = &rec[field];
            let parsed: f64 = printed.parse().unwrap();
            prop_assert_eq!(format_sig(parsed), printed);
            prop_assert!((parsed - v).abs() <= 1e-11 * v.abs());
        }
        let r: Vec<usize> = rec[10].split(';').map(|x| x.parse().unwrap()).collect();
        prop_assert_eq!(r, ranks);
    }
}
