use proptest::prelude::*;

use stable_trees::tree::io::{read_binary, read_csv, write_binary, write_csv};
use stable_trees::tree::{build_tree, CodingFunction};

/// Lattice walk reflected above 0 from up/down flags, closed by a descent to 0.
fn lattice_coding(steps: &[bool], delta: f64, gamma: f64) -> CodingFunction {
    let dx = delta.sqrt();
    let mut h = vec![0.0];
    let mut level = 0i64;
    for &up in steps {
        level += if up || level == 0 { 1 } else { -1 };
        h.push(level as f64 * dx);
    }
    while level > 0 {
        level -= 1;
        h.push(level as f64 * dx);
    }
    CodingFunction::new(delta, h, gamma, 0)
}

fn codings() -> impl Strategy<Value = CodingFunction> {
    (
        proptest::collection::vec(any::<bool>(), 2..200),
        1e-4..1.0f64,
        1.05..=2.0f64,
    )
        .prop_map(|(s, d, g)| lattice_coding(&s, d, g))
}

/// Coding with arbitrary nonnegative heights and zero endpoints.
fn rough_codings() -> impl Strategy<Value = CodingFunction> {
    proptest::collection::vec(0.0..5.0f64, 1..120).prop_map(|mut v| {
        v.insert(0, 0.0);
        v.push(0.0);
        v[1] = v[1].max(1e-3);
        CodingFunction::new(0.01, v, 1.5, 7)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distance_is_a_tree_metric(c in rough_codings(), picks in proptest::collection::vec(any::<prop::sample::Index>(), 4)) {
        let t = build_tree(c).unwrap();
        let n = t.n() + 1;
        let [a, b, x, y] = [0, 1, 2, 3].map(|k| picks[k].index(n));
        let d = |i, j| t.distance(i, j).unwrap();
        prop_assert_eq!(d(a, a), 0.0);
        prop_assert_eq!(d(a, b), d(b, a));
        prop_assert!(d(a, b) >= 0.0);
        prop_assert!(d(a, x) <= d(a, b) + d(b, x) + 1e-12);
        prop_assert!(t.four_point_residual(a, b, x, y).unwrap() <= 1e-12);
    }

    #[test]
    fn distance_matches_brute_force(c in codings(), i in any::<prop::sample::Index>(), j in any::<prop::sample::Index>()) {
        let t = build_tree(c).unwrap();
        let n = t.n() + 1;
        let (s, u) = (i.index(n), j.index(n));
        let h = t.values();
        let (l, r) = (s.min(u), s.max(u));
        let m = h[l..=r].iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(t.distance(s, u).unwrap(), h[s] + h[u] - 2.0 * m);
    }

    #[test]
    fn mass_ball_monotone_and_exhaustive(c in rough_codings(), i in any::<prop::sample::Index>()) {
        let t = build_tree(c).unwrap();
        let s = i.index(t.n() + 1);
        let radii: Vec<f64> = (0..=40).map(|k| k as f64 * 0.3).collect();
        let m = t.mass_ball_profile(s, &radii).unwrap();
        prop_assert!(m.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(t.mass_ball(s, 2.0 * t.height()).unwrap(), t.lifetime());
    }

    #[test]
    fn rescaling_scales_distances(c in codings(), f in 0.1..10.0f64, i in any::<prop::sample::Index>(), j in any::<prop::sample::Index>()) {
        let k = f.powf((c.gamma - 1.0) / c.gamma);
        let t = build_tree(c.clone()).unwrap();
        let ts = build_tree(c.rescaled(f)).unwrap();
        let n = t.n() + 1;
        let (s, u) = (i.index(n), j.index(n));
        let (d, ds) = (t.distance(s, u).unwrap(), ts.distance(s, u).unwrap());
        prop_assert!((ds - k * d).abs() <= 1e-9 * (1.0 + ds));
        prop_assert!((ts.lifetime() - f * t.lifetime()).abs() <= 1e-9 * ts.lifetime());
    }

    #[test]
    fn codings_round_trip(c in rough_codings()) {
        let mut bin = Vec::new();
        write_binary(&c, &mut bin).unwrap();
        prop_assert_eq!(read_binary(bin.as_slice()).unwrap(), c.clone());
        let mut csv = Vec::new();
        write_csv(&c, &mut csv).unwrap();
        prop_assert_eq!(read_csv(csv.as_slice()).unwrap(), c);
    }
}
