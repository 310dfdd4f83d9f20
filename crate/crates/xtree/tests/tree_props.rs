mod common;

use common::{refine, scan_tree, ScanTree};
use proptest::prelude::*;
use xtree::crossing_tree::{build_tree, build_tree_from_walk, CrossingTree};
use xtree::TickSeries;

fn walk_strategy(max_len: usize) -> impl Strategy<Value = Vec<i64>> {
    (any::<i8>(), prop::collection::vec(any::<bool>(), 2..max_len)).prop_map(|(s, steps)| {
        let mut k = s as i64 % 5;
        let mut w = vec![k];
        for up in steps {
            k += if up { 1 } else { -1 };
            w.push(k);
        }
        w
    })
}

fn jumpy_path() -> impl Strategy<Value = (Vec<f64>, Vec<i64>)> {
    prop::collection::vec((-4i64..=4, 0.01f64..3.0), 4..200).prop_map(|steps| {
        let mut k = 0i64;
        let mut t = 0.0;
        let (mut times, mut values) = (vec![0.0], vec![0]);
        for (d, dt) in steps {
            if d == 0 {
                continue;
            }
            k += d;
            t += dt;
            times.push(t);
            values.push(k);
        }
        (times, values)
    })
}

fn assert_matches(tree: &CrossingTree, oracle: &ScanTree, delta: f64, delta0: f64, tol: f64) {
    assert_eq!(tree.max_level() + 1, oracle.levels.len());
    for (l, lvl) in oracle.levels.iter().enumerate() {
        let got = tree.crossings(l);
        assert_eq!(got.len(), lvl.len(), "level {l} count");
        for (g, o) in got.iter().zip(lvl) {
            assert!((g.start_time - o.start).abs() <= tol && (g.end_time - o.end).abs() <= tol, "level {l}");
            assert_eq!(g.start_value, delta0 + o.start_k as f64 * delta);
            assert_eq!(g.orientation, if o.up { 1 } else { -1 });
            assert_eq!(g.level, l);
        }
        assert_eq!(tree.z(l), &oracle.z[l][..], "Z level {l}");
        assert_eq!(tree.v(l), &oracle.v[l][..], "V level {l}");
    }
}

fn walk_pairs(w: &[i64]) -> Vec<(f64, i64)> {
    w.iter().enumerate().map(|(i, &k)| (i as f64, k)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lattice_walk_matches_scanner(w in walk_strategy(500)) {
        let Ok(tree) = build_tree_from_walk(&w, 1.0, 0.0) else { return Ok(()) };
        assert_matches(&tree, &scan_tree(&walk_pairs(&w)), 1.0, 0.0, 0.0);
    }

    #[test]
    fn interpolated_path_matches_scanner((times, values) in jumpy_path(), delta in 0.1f64..4.0, delta0 in -1.0f64..1.0) {
        let s = TickSeries::new(times.clone(), values.iter().map(|&k| delta0 + k as f64 * delta).collect(), "p").unwrap();
        let Ok(tree) = build_tree(&s.interpolated(), delta, delta0, f64::NEG_INFINITY) else { return Ok(()) };
        assert_matches(&tree, &scan_tree(&refine(&times, &values)), delta, delta0, 1e-9 * times[times.len() - 1]);
    }

    #[test]
    fn structural_invariants(w in walk_strategy(2000)) {
        let Ok(tree) = build_tree_from_walk(&w, 1.0, 0.0) else { return Ok(()) };
        for l in 1..=tree.max_level() {
            let z = tree.z(l);
            prop_assert!(z.iter().all(|&k| k >= 2 && k % 2 == 0));
            let parents = tree.crossings(l);
            let kids = tree.crossings(l - 1);
            // Children inside the parents, in order, number Σ Z.
            let consumed: Vec<_> = kids
                .iter()
                .filter(|c| c.start_time >= parents[0].start_time && c.end_time <= parents[parents.len() - 1].end_time)
                .collect();
            prop_assert_eq!(consumed.len() as u32, z.iter().sum::<u32>());
            let mut i = 0;
            for (p, &zk) in parents.iter().zip(z) {
                let word: Vec<i8> = consumed[i..i + zk as usize].iter().map(|c| c.orientation).collect();
                prop_assert!(consumed[i..i + zk as usize].iter().all(|c| c.start_time >= p.start_time && c.end_time <= p.end_time));
                let (pairs, last) = word.split_at(word.len() - 2);
                prop_assert!(pairs.chunks(2).all(|c| c[0] == -c[1]));
                prop_assert!(last[0] == p.orientation && last[1] == p.orientation);
                i += zk as usize;
            }
            // Every child is inside exactly one parent or outside all of them.
            for c in kids {
                let n = parents.iter().filter(|p| c.start_time >= p.start_time && c.end_time <= p.end_time).count();
                prop_assert!(n <= 1);
            }
        }
    }

    #[test]
    fn time_reparameterisation_keeps_z_and_v((times, values) in jumpy_path(), a in 0.1f64..10.0, b in -5.0f64..5.0) {
        let x: Vec<f64> = values.iter().map(|&k| k as f64 * 0.5).collect();
        let s1 = TickSeries::new(times.clone(), x.clone(), "a").unwrap();
        let warped: Vec<f64> = times.iter().map(|t| b + a * t + t.powi(3)).collect();
        let s2 = TickSeries::new(warped, x, "b").unwrap();
        let t1 = build_tree(&s1.interpolated(), 0.5, 0.0, f64::NEG_INFINITY);
        let t2 = build_tree(&s2.interpolated(), 0.5, 0.0, f64::NEG_INFINITY);
        match (t1, t2) {
            (Ok(t1), Ok(t2)) => {
                prop_assert_eq!(t1.max_level(), t2.max_level());
                for l in 0..=t1.max_level() {
                    prop_assert_eq!(t1.z(l), t2.z(l));
                    prop_assert_eq!(t1.v(l), t2.v(l));
                }
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "one parameterisation failed"),
        }
    }
}

#[test]
fn scanner_agrees_on_hand_example() {
    // 0 1 0 1 2 1 2 3 4: level-1 crossings 0->2 (Z=4), 2->4 (Z=4).
    let w = [0, 1, 0, 1, 2, 1, 2, 3, 4];
    let tree = build_tree_from_walk(&w, 1.0, 0.0).unwrap();
    let oracle = scan_tree(&walk_pairs(&w));
    assert_eq!(oracle.z[1], vec![4, 4]);
    assert_eq!(oracle.v[0], vec![0, 1]);
    assert_matches(&tree, &oracle, 1.0, 0.0, 0.0);
}
