use proptest::prelude::*;
use rand::SeedableRng;
use xtree::critical_values::generate_cv_table;
use xtree::dist_tests::{chi2_geometric_test, g_test, klp_nb_test, twos_test};
use xtree::indep_tests::{obrien_dyck85_test, wald_wolfowitz_runs, BitOrigin, BitSequence};
use xtree::qv_test::{estimate_qv, normal_gof_tests, time_change_increments};
use xtree::rng::SimRng;
use xtree::series_model::{load_ticks, save_ticks, TickFormat};
use xtree::sim::{hitting_prob, hitting_prob_quadrature, simulate_markov_crossings, ChainKernel, StartLaw};
use xtree::{ProcessSpec, TickSeries};

fn series() -> impl Strategy<Value = TickSeries> {
    prop::collection::vec((1e-6f64..10.0, -1e6f64..1e6), 2..60).prop_map(|v| {
        let mut t = -3.0;
        let (mut times, mut values) = (Vec::new(), Vec::new());
        for (dt, x) in v {
            t += dt;
            times.push(t);
            values.push(x);
        }
        TickSeries::new(times, values, "p").unwrap()
    })
}

fn bits(v: &[bool]) -> BitSequence {
    BitSequence::new(v.iter().map(|&b| b as u8).collect(), BitOrigin::Excursions)
}

proptest! {
    #[test]
    fn interpolation_exact_at_ticks_and_monotone(s in series(), u in prop::collection::vec(0.0f64..1.0, 1..8)) {
        let p = s.interpolated();
        for (t, x) in s.times().iter().zip(s.values()) {
            prop_assert_eq!(p.interpolate_at(*t).unwrap(), *x);
        }
        for w in 0..s.len() - 1 {
            let (t0, t1) = (s.times()[w], s.times()[w + 1]);
            let (x0, x1) = (s.values()[w], s.values()[w + 1]);
            let mut us = u.clone();
            us.sort_by(f64::total_cmp);
            let ys: Vec<f64> = us.iter().map(|f| p.interpolate_at(t0 + f * (t1 - t0)).unwrap()).collect();
            let lo = x0.min(x1);
            let hi = x0.max(x1);
            prop_assert!(ys.iter().all(|y| *y >= lo - 1e-9 * lo.abs().max(1.0) && *y <= hi + 1e-9 * hi.abs().max(1.0)));
            let sign = (x1 - x0).signum();
            prop_assert!(ys.windows(2).all(|y| (y[1] - y[0]) * sign >= -1e-9 * y[0].abs().max(1.0)));
        }
    }

    #[test]
    fn tick_file_round_trip(s in series()) {
        let f = tempfile::NamedTempFile::new().unwrap();
        save_ticks(&s, f.path()).unwrap();
        let (back, rep) = load_ticks(f.path(), &TickFormat::default()).unwrap();
        prop_assert_eq!(rep.collapsed, 0);
        prop_assert_eq!(back.times(), s.times());
        prop_assert_eq!(back.values(), s.values());
    }

    #[test]
    fn runs_and_obrien85_ignore_labels(v in prop::collection::vec(any::<bool>(), 2..300)) {
        let flipped: Vec<bool> = v.iter().map(|b| !b).collect();
        let (a, b) = (bits(&v), bits(&flipped));
        prop_assert_eq!(wald_wolfowitz_runs(&a).unwrap(), wald_wolfowitz_runs(&b).unwrap());
        let (x, y) = (obrien_dyck85_test(&a).unwrap(), obrien_dyck85_test(&b).unwrap());
        prop_assert_eq!(x.reject, y.reject);
        prop_assert_eq!(x.skipped.is_some(), y.skipped.is_some());
        if let (Some(p), Some(q)) = (x.p_value, y.p_value) {
            prop_assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn qv_is_nondecreasing_and_inverse_monotone(xs in prop::collection::vec(-5.0f64..5.0, 6..200), c1 in 0.5f64..4.0, dc in 0.0f64..4.0) {
        let times: Vec<f64> = (0..xs.len()).map(|i| i as f64 * 0.25).collect();
        let s = TickSeries::new(times, xs, "q").unwrap();
        let qv = estimate_qv(&s).unwrap();
        prop_assert!(qv.qv.windows(2).all(|w| w[1] >= w[0]));
        let total = qv.qv[qv.qv.len() - 1];
        prop_assume!(total > 0.0);
        // A smaller QV increment never yields fewer increments.
        let d1 = total / (4.0 + c1 + dc);
        let d2 = total / (4.0 + c1);
        if let (Ok(a), Ok(b)) = (time_change_increments(&qv, d1), time_change_increments(&qv, d2)) {
            // SM telescoping: Σ z = (Y_N − Y_1)/√Δ.
            for inc in [&a, &b] {
                let sum: f64 = inc.z.iter().sum();
                let tel = (inc.y[inc.y.len() - 1] - inc.y[0]) / inc.delta_qv.sqrt();
                prop_assert!((sum - tel).abs() <= 1e-9 * (1.0 + tel.abs()));
                let o = normal_gof_tests(inc, false);
                if let Some(st) = o.sm.statistic {
                    prop_assert!((st - sum / (inc.z.len() as f64).sqrt()).abs() <= 1e-9 * (1.0 + st.abs()));
                }
            }
            prop_assert!(a.n >= b.n);
        }
    }

    #[test]
    fn all_twos_is_rejected(n in 20usize..400) {
        let z = vec![2u32; n];
        let cv = xtree::CvSet::default();
        prop_assert!(twos_test(&z).unwrap().reject);
        prop_assert!(g_test(&z).unwrap().reject);
        prop_assert!(klp_nb_test(&z).unwrap().reject);
        if n > 39 {
            prop_assert!(chi2_geometric_test(&z, cv.get("chi2")).unwrap().reject);
        }
    }

    #[test]
    fn hitting_probabilities_valid(x in -1.5f64..1.5, d in 0.001f64..0.5, alpha in 0.1f64..20.0) {
        for spec in [ProcessSpec::Bm, ProcessSpec::BmDrift { alpha: alpha - 10.0 }, ProcessSpec::Ou { alpha, sigma: 1.0 }] {
            let p = hitting_prob(&spec, x, d).unwrap();
            prop_assert!(p > 0.0 && p < 1.0);
            if !matches!(spec, ProcessSpec::Ou { .. }) {
                prop_assert!((p - hitting_prob_quadrature(&spec, x, d).unwrap()).abs() < 1e-9);
            }
        }
        let feller = ProcessSpec::Feller { kappa: 6.0, mu: 0.2, sigma: 1.0 };
        let y = x.abs() + d + 0.01;
        let p = hitting_prob(&feller, y, d).unwrap();
        prop_assert!(p > 0.0 && p < 1.0);
    }

    #[test]
    fn chains_are_nearest_neighbour(seed in any::<u64>(), alpha in 1.0f64..12.0) {
        let k = ChainKernel::for_spec(ProcessSpec::Ou { alpha, sigma: 1.0 }, 0.06).unwrap();
        let start = StartLaw::ou_stationary(alpha, 1.0, 0.06).unwrap();
        let c = simulate_markov_crossings(&k, 300, &start, &mut SimRng::seed_from_u64(seed)).unwrap();
        prop_assert!(c.ks.windows(2).all(|w| (w[1] - w[0]).abs() == 1));
        let again = simulate_markov_crossings(&k, 300, &start, &mut SimRng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(c, again);
    }
}

#[test]
fn cv_generation_is_deterministic() {
    let a = generate_cv_table("autocorr", &[5, 20], &[0.025, 0.975], 10_000, 77).unwrap();
    let b = generate_cv_table("autocorr", &[5, 20], &[0.025, 0.975], 10_000, 77).unwrap();
    assert_eq!(a.to_text(), b.to_text());
    let c = generate_cv_table("autocorr", &[5, 20], &[0.025, 0.975], 10_000, 78).unwrap();
    assert_ne!(a.to_text(), c.to_text());
}
