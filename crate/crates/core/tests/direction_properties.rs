use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use proptest::prelude::*;
use sdlbfgs::direction::{
    compute_direction, compute_gamma, damp_pair, dense_hessian_reconstruct, two_loop,
    DirectionInput,
};
use sdlbfgs::{CurvatureMemory, CurvaturePair, DampingConfig, Direction};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn vec_of(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, d)
}

/// `(d, raw (s, y) pairs, gamma mode)`; `y = A s + e` with a random
/// symmetric `A` so curvature can be negative.
fn raw_pairs() -> impl Strategy<Value = (usize, Vec<(Vec<f64>, Vec<f64>)>, bool)> {
    (1usize..=10, 1usize..=8, any::<bool>()).prop_flat_map(|(d, c, gamma)| {
        (
            Just(d),
            prop::collection::vec(vec_of(d), d),
            -1.0f64..3.0,
            prop::collection::vec((vec_of(d), vec_of(d)), c),
            Just(gamma),
        )
            .prop_map(|(d, b, shift, draws, gamma)| {
                let root_d = (d as f64).sqrt();
                let pairs = draws
                    .into_iter()
                    .map(|(s, e)| {
                        let y = (0..d)
                            .map(|i| {
                                let row: f64 = (0..d)
                                    .map(|j| 0.5 * (b[i][j] + b[j][i]) / (10.0 * root_d) * s[j])
                                    .sum();
                                row + shift * s[i] + 0.03 * e[i]
                            })
                            .collect();
                        (s, y)
                    })
                    .collect();
                (d, pairs, gamma)
            })
    })
}

/// Damps each raw pair the way the engine does and returns the memory with
/// the `h0` the newest pair implies.
fn build_memory(
    d: usize,
    raw: &[(Vec<f64>, Vec<f64>)],
    gamma_mode: bool,
) -> (CurvatureMemory, f64) {
    let cfg = if gamma_mode {
        DampingConfig::gamma(DampingConfig::DEFAULT_DELTA)
    } else {
        DampingConfig::identity()
    };
    let mut mem = CurvatureMemory::new(raw.len()).unwrap();
    let mut h0 = 1.0;
    for (s, y) in raw {
        if s.iter().all(|&v| v == 0.0) {
            continue;
        }
        let hinv = if gamma_mode {
            compute_gamma(s, y, &cfg).unwrap()
        } else {
            1.0
        };
        if let Ok(p) = damp_pair(s, y, hinv, &cfg) {
            mem.push(p).unwrap();
            h0 = 1.0 / hinv;
        }
    }
    assert!(mem.dim().is_none_or(|m| m == d));
    (mem, h0)
}

/// `H g` in exact rational arithmetic from the stored `(s, y_bar)`.
fn exact_apply(mem: &CurvatureMemory, g: &[f64], h0: f64) -> Vec<f64> {
    let q = |v: f64| BigRational::from_float(v).unwrap();
    let qdot = |a: &[BigRational], b: &[BigRational]| {
        a.iter()
            .zip(b)
            .fold(BigRational::zero(), |acc, (x, y)| acc + x * y)
    };
    let pairs: Vec<(Vec<BigRational>, Vec<BigRational>)> = mem
        .iter()
        .map(|p| {
            (
                p.s().iter().map(|&v| q(v)).collect(),
                p.y_bar().iter().map(|&v| q(v)).collect(),
            )
        })
        .collect();
    let rho: Vec<BigRational> = pairs.iter().map(|(s, y)| qdot(s, y).recip()).collect();

    // H = V' H V + rho s s' folded oldest first, applied to g without forming H:
    // recurse on H_j g = V_j' H_{j-1} V_j g + rho_j s_j (s_j' g).
    fn apply(
        j: usize,
        v: Vec<BigRational>,
        pairs: &[(Vec<BigRational>, Vec<BigRational>)],
        rho: &[BigRational],
        h0: &BigRational,
        qdot: &dyn Fn(&[BigRational], &[BigRational]) -> BigRational,
    ) -> Vec<BigRational> {
        if j == 0 {
            return v.iter().map(|x| x * h0).collect();
        }
        let (s, y) = &pairs[j - 1];
        let r = &rho[j - 1];
        let sv = qdot(s, &v);
        // V v = v - rho y (s' v)
        let vv: Vec<BigRational> = v.iter().zip(y).map(|(vi, yi)| vi - r * yi * &sv).collect();
        let w = apply(j - 1, vv, pairs, rho, h0, qdot);
        // V' w = w - rho s (y' w)
        let yw = qdot(y, &w);
        w.iter()
            .zip(s)
            .map(|(wi, si)| wi - r * si * &yw + r * si * &sv)
            .collect()
    }
    let g: Vec<BigRational> = g.iter().map(|&v| q(v)).collect();
    apply(pairs.len(), g, &pairs, &rho, &q(h0), &qdot)
        .iter()
        .map(|v| v.to_f64().unwrap())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn damping_keeps_curvature_above_quarter(
        (s, y) in (1usize..=10).prop_flat_map(|d| (vec_of(d), vec_of(d))),
        log_hinv in -3.0f64..3.0,
        flip in any::<bool>(),
    ) {
        prop_assume!(s.iter().any(|&v| v != 0.0));
        // half the draws are pushed into the adversarial s'y < 0 region
        let y: Vec<f64> = if flip && dot(&s, &y) > 0.0 { y.iter().map(|v| -v).collect() } else { y };
        let hinv = 10f64.powf(log_hinv);
        let p = damp_pair(&s, &y, hinv, &DampingConfig::identity()).unwrap();
        prop_assert!(dot(&s, p.y_bar()) >= 0.25 * hinv * dot(&s, &s) - 1e-12);
        prop_assert!(p.rho() > 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn two_loop_matches_exact_arithmetic((d, raw, gamma) in raw_pairs(), g in vec_of(10)) {
        let (mem, h0) = build_memory(d, &raw, gamma);
        let g = &g[..d];
        let fast = two_loop(&mem, g, h0).unwrap();
        let exact = exact_apply(&mem, g, h0);
        // rounding grows with the size of H, so the bound is relative to it
        let h = dense_hessian_reconstruct(&mem, h0, d).unwrap();
        let h_norm = h.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        let err = norm(&fast.iter().zip(&exact).map(|(a, b)| a - b).collect::<Vec<_>>());
        prop_assert!(err <= 1e-12 * (1.0 + h_norm) * (1.0 + norm(g)), "err {err:e}, |H| {h_norm:e}");
    }

    #[test]
    fn reconstruction_is_positive_definite((d, raw, gamma) in raw_pairs(), zs in prop::collection::vec(vec_of(10), 20)) {
        let (mem, h0) = build_memory(d, &raw, gamma);
        let h = dense_hessian_reconstruct(&mem, h0, d).unwrap();
        for z in &zs {
            let z = &z[..d];
            let n = norm(z);
            prop_assume!(n > 1e-6);
            let z: Vec<f64> = z.iter().map(|v| v / n).collect();
            let hz: Vec<f64> = h.iter().map(|row| dot(row, &z)).collect();
            prop_assert!(dot(&z, &hz) > 0.0);
        }
    }

    #[test]
    fn two_loop_is_linear_in_g((d, raw, gamma) in raw_pairs(), g in vec_of(10), a in -100.0f64..100.0) {
        let (mem, h0) = build_memory(d, &raw, gamma);
        let g = &g[..d];
        let ag: Vec<f64> = g.iter().map(|v| a * v).collect();
        let lhs = two_loop(&mem, &ag, h0).unwrap();
        let rhs: Vec<f64> = two_loop(&mem, g, h0).unwrap().iter().map(|v| a * v).collect();
        let diff = norm(&lhs.iter().zip(&rhs).map(|(x, y)| x - y).collect::<Vec<_>>());
        prop_assert!(diff <= 1e-12 * norm(&rhs).max(f64::MIN_POSITIVE) + 1e-300, "{diff:e}");
    }

    #[test]
    fn identity_mode_directions_have_unit_norm(
        (d, raw, _) in raw_pairs(),
        x in vec_of(10), x_prev in vec_of(10), g in vec_of(10), g_prev in vec_of(10),
        scale in 1e-6f64..1e6,
    ) {
        let (mut mem, _) = build_memory(d, &raw, false);
        let cfg = DampingConfig::identity();
        let (x, x_prev, g_prev) = (&x[..d], &x_prev[..d], &g_prev[..d]);
        let g: Vec<f64> = g[..d].iter().map(|v| v * scale).collect();
        let input = DirectionInput { x, g: &g, prev: Some((x_prev, g_prev)), g_pair: None };
        match compute_direction(&mut mem, &cfg, input).unwrap() {
            Direction::Step(v) => prop_assert!((norm(&v) - 1.0).abs() <= 1e-12),
            Direction::Converged => prop_assert!(norm(&g) < 1.0),
        }
    }

    #[test]
    fn normalized_direction_ignores_gradient_scale((d, raw, _) in raw_pairs(), g in vec_of(10), a in 1e-3f64..1e3) {
        let (mem, _) = build_memory(d, &raw, false);
        let g = &g[..d];
        prop_assume!(norm(g) > 1e-3);
        let ag: Vec<f64> = g.iter().map(|v| a * v).collect();
        let unit = |v: Vec<f64>| { let n = norm(&v); v.into_iter().map(|x| x / n).collect::<Vec<_>>() };
        let u1 = unit(two_loop(&mem, g, 1.0).unwrap());
        let u2 = unit(two_loop(&mem, &ag, 1.0).unwrap());
        prop_assert!(u1.iter().zip(&u2).all(|(p, q)| (p - q).abs() <= 1e-12));
    }

    #[test]
    fn empty_memory_gives_normalized_gradient(g in vec_of(10), d in 1usize..=10) {
        let g = &g[..d];
        prop_assume!(norm(g) > 1e-9);
        let mut mem = CurvatureMemory::new(5).unwrap();
        let x = vec![0.0; d];
        let dir = compute_direction(&mut mem, &DampingConfig::identity(), DirectionInput::first(&x, g)).unwrap();
        let n = norm(g);
        let expect: Vec<f64> = g.iter().map(|v| v / n).collect();
        prop_assert_eq!(dir, Direction::Step(expect));
    }

    #[test]
    fn memory_keeps_the_newest_pairs(p in 1usize..12, n in 0usize..40) {
        let mut mem = CurvatureMemory::new(p).unwrap();
        for i in 0..n {
            let v = (i + 1) as f64;
            mem.push(CurvaturePair::new(vec![v, 1.0], vec![1.0, v]).unwrap()).unwrap();
        }
        prop_assert_eq!(mem.len(), n.min(p));
        let kept: Vec<f64> = mem.iter().map(|q| q.s()[0]).collect();
        let expect: Vec<f64> = (n.saturating_sub(p) + 1..=n).map(|i| i as f64).collect();
        prop_assert_eq!(kept, expect);
    }
}
