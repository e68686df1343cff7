use sdlbfgs::objectives::rosenbrock_eval;
use sdlbfgs_web::{damping_map, rosenbrock_grid, rosenbrock_path, MAX_ITERS};

fn triples(v: &[f64]) -> Vec<[f64; 3]> {
    v.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
}

#[test]
fn path_starts_at_the_standard_point_and_tracks_the_objective() {
    let p = triples(&rosenbrock_path("sdlbfgs", 500, 100, 0.01, 1.0).unwrap());
    assert_eq!(p.len(), 500);
    assert_eq!(p[0], [-1.2, 1.0, rosenbrock_eval([-1.2, 1.0]).0]);
    for [x, y, f] in &p {
        assert_eq!(*f, rosenbrock_eval([*x, *y]).0);
    }
    // unit directions: consecutive points are alpha_k = 1/sqrt(k) apart
    for (k, w) in p.windows(2).enumerate() {
        let step = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
        assert!((step - 1.0 / ((k + 1) as f64).sqrt()).abs() < 1e-12);
    }
}

#[test]
fn gamma_mode_starts_far_higher_than_identity_mode() {
    let peak = |name| {
        triples(&rosenbrock_path(name, 100, 100, 0.01, 1.0).unwrap())
            .iter()
            .map(|t| t[2])
            .fold(f64::NEG_INFINITY, f64::max)
    };
    assert!(peak("sdlbfgs0") >= 10.0 * peak("sdlbfgs"));
}

#[test]
fn divergent_baseline_ends_with_nan() {
    let p = rosenbrock_path("sgd", 1000, 1, 1.0, 1.0).unwrap();
    assert!(p.len() < 3000);
    assert!(p[p.len() - 3..].iter().all(|v| v.is_nan()));
}

#[test]
fn path_rejects_bad_arguments() {
    assert!(rosenbrock_path("adam", 10, 5, 0.01, 1.0).is_err());
    assert!(rosenbrock_path("sdlbfgs", 0, 5, 0.01, 1.0).is_err());
    assert!(rosenbrock_path("sdlbfgs", MAX_ITERS + 1, 5, 0.01, 1.0).is_err());
    assert!(rosenbrock_path("sdlbfgs", 10, 0, 0.01, 1.0).is_err());
    assert!(rosenbrock_path("sdlbfgs0", 10, 5, 0.0, 1.0).is_err());
    assert!(rosenbrock_path("sgd", 10, 5, 0.01, -1.0).is_err());
}

#[test]
fn damping_map_floors_curvature_at_a_quarter() {
    let m = triples(&damping_map(-3.0, 3.0, 61).unwrap());
    assert_eq!(m.len(), 61);
    for [r, theta, r_bar] in m {
        assert!(theta > 0.0 && theta <= 1.0);
        if r >= 0.25 {
            assert_eq!((theta, r_bar), (1.0, r));
        } else {
            assert!((r_bar - 0.25).abs() < 1e-12, "r {r}: {r_bar}");
        }
    }
    assert!(damping_map(1.0, 1.0, 10).is_err());
    assert!(damping_map(0.0, 1.0, 1).is_err());
}

#[test]
fn grid_is_row_major_from_the_top() {
    let g = rosenbrock_grid(-2.0, 2.0, -1.0, 3.0, 5, 5).unwrap();
    assert_eq!(g.len(), 25);
    // column 3 of row 2 is (1, 1), the minimizer
    assert_eq!(g[2 * 5 + 3], 0.0);
    let top_left = (1.0 + rosenbrock_eval([-2.0, 3.0]).0).log10();
    assert!((g[0] - top_left).abs() < 1e-12);
    assert!(rosenbrock_grid(0.0, 0.0, 0.0, 1.0, 5, 5).is_err());
    assert!(rosenbrock_grid(0.0, 1.0, 0.0, 1.0, 1, 5).is_err());
}
