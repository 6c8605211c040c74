use proptest::prelude::*;
use tampc::banded::BandedMatrix;
use tampc::estimator::{bisect, estimate, mark_indicators};
use tampc::fem1d::{assemble_mass, assemble_stiffness, l2_norm_spacetime, mass_norm_sq};
use tampc::grid::{SpaceTimeField, SpatialMesh, TimeGrid};
use tampc::openloop::solve_open_loop;
use tampc::problems::{make_test1, make_test2};
use tampc::spacetime::solve_mixed;

fn sorted_grid(a: f64, mut inner: Vec<f64>, b: f64) -> Option<TimeGrid> {
    inner.push(a);
    inner.push(b);
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    TimeGrid::new(inner).ok()
}

fn grid_strategy(max_inner: usize) -> impl Strategy<Value = TimeGrid> {
    (-2.0..1.0f64, 0.05..3.0f64, prop::collection::vec(0.0..1.0f64, 0..max_inner)).prop_filter_map(
        "degenerate grid",
        |(a, len, u)| {
            let b = a + len;
            sorted_grid(a, u.into_iter().map(|s| a + s * len).collect(), b)
        },
    )
}

proptest! {
    #[test]
    fn marked_set_is_smallest_reaching_theta(
        eta in prop::collection::vec(prop_oneof![Just(0.0), Just(0.5), 0.0..2.0f64], 1..60),
        theta in 0.001..=1.0f64,
    ) {
        let set = mark_indicators(&eta, theta);
        let total: f64 = eta.iter().sum();
        let sum: f64 = set.iter().map(|&i| eta[i]).sum();
        prop_assert!(sum >= theta * total);
        let mut sorted = eta.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let best_shorter: f64 = sorted.iter().take(set.len().saturating_sub(1)).sum();
        prop_assert!(set.is_empty() || best_shorter < theta * total);
        let mut unique = set.clone();
        unique.sort_unstable();
        unique.dedup();
        prop_assert_eq!(unique.len(), set.len());
    }

    #[test]
    fn bisection_nests_and_adds_midpoints(
        grid in grid_strategy(30),
        picks in prop::collection::vec(any::<bool>(), 31),
    ) {
        let marked: Vec<usize> = (0..grid.intervals()).filter(|&i| picks[i]).collect();
        let fine = bisect(&grid, &marked).unwrap();
        prop_assert!(grid.is_nested_in(&fine));
        prop_assert_eq!(fine.len(), grid.len() + marked.len());
        prop_assert_eq!((fine.start(), fine.end()), (grid.start(), grid.end()));
        let ulp = 4.0 * f64::EPSILON * grid.start().abs().max(grid.end().abs());
        prop_assert!(fine.min_step() >= 0.5 * grid.min_step() - ulp);
    }

    #[test]
    fn grid_text_round_trips(grid in grid_strategy(40)) {
        let back = TimeGrid::from_text(&grid.to_text()).unwrap();
        prop_assert_eq!(back, grid);
    }

    #[test]
    fn non_increasing_instances_rejected(
        grid in grid_strategy(10),
        i in 0usize..10,
    ) {
        let mut t = grid.instances().to_vec();
        let i = i % (t.len() - 1);
        t.swap(i, i + 1);
        prop_assert!(TimeGrid::new(t.clone()).is_err());
        t[i + 1] = t[i];
        prop_assert!(TimeGrid::new(t).is_err());
    }

    #[test]
    fn spacetime_norm_is_homogeneous(
        c in -5.0..5.0f64,
        n in 2usize..12,
        grid in grid_strategy(6),
        seed in prop::collection::vec(-1.0..1.0f64, 200),
    ) {
        let mesh = SpatialMesh::new(n).unwrap();
        let rows = (0..grid.len())
            .map(|i| (0..mesh.n_nodes()).map(|j| seed[(i * 13 + j) % 200]).collect())
            .collect();
        let f = SpaceTimeField::from_rows(grid, mesh, rows).unwrap();
        let scaled = f.map(|v| c * v);
        let (a, b) = (l2_norm_spacetime(&scaled), c.abs() * l2_norm_spacetime(&f));
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b));
    }

    #[test]
    fn fem_matrices_are_symmetric_and_definite(
        n in 2usize..40,
        v in prop::collection::vec(-1.0..1.0f64, 41),
    ) {
        let mesh = SpatialMesh::new(n).unwrap();
        let v = &v[..mesh.n_nodes()];
        let (m, k) = (assemble_mass(&mesh), assemble_stiffness(&mesh));
        prop_assert!(m.is_symmetric(0.0) && k.is_symmetric(0.0));
        prop_assert!(v.iter().all(|&x| x == 0.0) || mass_norm_sq(&mesh, v) > 0.0);
        prop_assert!(k.bilinear(v, v) >= -1e-12);
        let ones = vec![1.0; mesh.n_nodes()];
        prop_assert!(k.matvec(&ones).iter().all(|x| x.abs() < 1e-9));
        prop_assert!((m.bilinear(&ones, &ones) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn banded_solve_inverts_matvec(
        dim in 1usize..30,
        lower in 0usize..3,
        upper in 0usize..3,
        entries in prop::collection::vec(-1.0..1.0f64, 30 * 7),
        x in prop::collection::vec(-1.0..1.0f64, 30),
    ) {
        let mut a = BandedMatrix::zeros(dim, lower, upper);
        for i in 0..dim {
            for j in i.saturating_sub(lower)..(i + upper + 1).min(dim) {
                a.set(i, j, entries[i * 7 + j + 3 - i]);
            }
            a.add(i, i, 8.0);
        }
        let x = &x[..dim];
        let solved = a.solve(&a.matvec(x)).unwrap();
        for (s, e) in solved.iter().zip(x) {
            prop_assert!((s - e).abs() < 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn indicators_scale_quadratically_with_data(
        c in prop_oneof![-4.0..-0.1f64, 0.1..4.0f64],
        grid in grid_strategy(8).prop_filter("inside [0, 1]", |g| g.start() >= 0.0 && g.end() <= 1.0),
    ) {
        let p = make_test1(1e-3).unwrap();
        let mesh = SpatialMesh::new(6).unwrap();
        let base = estimate(&solve_mixed(&p, &grid, &mesh).unwrap());
        let scaled = estimate(&solve_mixed(&p.scaled(c), &grid, &mesh).unwrap());
        for (a, b) in scaled.eta_sq_per_interval.iter().zip(&base.eta_sq_per_interval) {
            prop_assert!(*a >= 0.0);
            prop_assert!((a - c * c * b).abs() <= 1e-9 * (c * c * b).max(1e-300));
        }
    }

    #[test]
    fn open_loop_is_linear_in_data(
        c in -3.0..3.0f64,
        k in 2usize..7,
        t0 in 0.0..0.7f64,
    ) {
        let p = make_test2(0.1, 3.0, 1e-2).unwrap();
        let mesh = SpatialMesh::new(9).unwrap();
        let grid = TimeGrid::uniform(t0, t0 + 0.3, k).unwrap();
        let y0 = mesh.sample(|x| p.exact_state(t0, x).unwrap());
        let base = solve_open_loop(&p, &grid, &y0, &mesh).unwrap();
        let y0c: Vec<f64> = y0.iter().map(|v| c * v).collect();
        let scaled = solve_open_loop(&p.scaled(c), &grid, &y0c, &mesh).unwrap();
        let tol = 1e-9 * (1.0 + base.u.values().iter().fold(0.0f64, |m, v| m.max(v.abs())));
        for (a, b) in scaled.u.values().iter().zip(base.u.values()) {
            prop_assert!((a - c * b).abs() <= tol * (1.0 + c.abs()));
        }
        prop_assert!((scaled.cost - c * c * base.cost).abs() <= 1e-9 * (1.0 + c * c * base.cost));
    }
}
