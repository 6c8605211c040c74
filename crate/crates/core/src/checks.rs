//! Invariant and oracle checks runnable outside the test harness.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::error::Result;
use crate::estimator::{bisect, estimate, mark_indicators};
use crate::fem1d::{assemble_mass, assemble_stiffness, discrete_laplacian};
use crate::grid::{SpatialMesh, TimeGrid};
use crate::mpc::{run_mpc, MpcConfig, MpcVariant};
use crate::openloop::{kkt_residuals, solve_open_loop};
use crate::problem::ProblemSpec;
use crate::problems::{make_test1, make_test2, make_zero_problem};
use crate::spacetime::solve_mixed;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &'static str, failure: Option<String>, ok_detail: String) -> Self {
        match failure {
            None => Self {
                name,
                passed: true,
                detail: ok_detail,
            },
            Some(detail) => Self {
                name,
                passed: false,
                detail,
            },
        }
    }
}

/// Runs every check; `seed` drives the randomized inputs.
pub fn run_checks(seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut rng = StdRng::seed_from_u64(seed);
    Ok(vec![
        estimator_signs(&mut rng)?,
        doerfler_minimality(&mut rng),
        bisection_nestedness(&mut rng)?,
        mpc_consistency()?,
        matrix_properties(&mut rng),
        laplacian_eigenfunction(),
        kkt_blocks(&mut rng)?,
    ])
}

fn random_grid(rng: &mut StdRng, a: f64, b: f64, max_points: usize) -> Result<TimeGrid> {
    let count = rng.random_range(2..=max_points);
    let mut t: Vec<f64> = (0..count - 2).map(|_| rng.random_range(a..b)).collect();
    t.push(a);
    t.push(b);
    t.sort_by(f64::total_cmp);
    t.dedup();
    TimeGrid::new(t)
}

fn estimator_signs(rng: &mut StdRng) -> Result<CheckOutcome> {
    let mesh = SpatialMesh::new(5)?;
    let mut failure = None;
    let problems: [ProblemSpec; 2] = [make_test1(1e-3)?, make_test2(0.1, 3.0, 1e-2)?];
    for p in &problems {
        for _ in 0..3 {
            let grid = random_grid(rng, 0.0, 1.0, 30)?;
            let r = estimate(&solve_mixed(p, &grid, &mesh)?);
            let sum: f64 = r.eta_sq_per_interval.iter().sum();
            if r.eta_sq_per_interval.iter().any(|&e| !(e >= 0.0)) {
                failure = Some(format!("negative indicator for {}", p.name()));
            } else if (sum - r.eta_sq_total).abs() > 1e-12 * sum.abs() {
                failure = Some(format!("total {} != sum {sum}", r.eta_sq_total));
            }
        }
    }
    let zero = make_zero_problem();
    let grid = random_grid(rng, 0.0, 1.0, 20)?;
    let r = estimate(&solve_mixed(&zero, &grid, &mesh)?);
    if r.eta_sq_total != 0.0 {
        failure = Some(format!("zero data gives η² = {}", r.eta_sq_total));
    }
    Ok(CheckOutcome::new(
        "estimator non-negativity and zero-data exactness",
        failure,
        "7 grids".into(),
    ))
}

fn doerfler_minimality(rng: &mut StdRng) -> CheckOutcome {
    let mut failure = None;
    for _ in 0..500 {
        let len = rng.random_range(1..40);
        let eta: Vec<f64> = (0..len)
            .map(|_| match rng.random_range(0..4) {
                0 => 0.0,
                1 => 1.0,
                _ => rng.random_range(0.0..1.0),
            })
            .collect();
        let theta = rng.random_range(0.01..=1.0);
        let set = mark_indicators(&eta, theta);
        let total: f64 = eta.iter().sum();
        let goal = theta * total;
        let sum: f64 = set.iter().map(|&i| eta[i]).sum();
        let mut sorted = eta.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let shorter: f64 = sorted.iter().take(set.len().saturating_sub(1)).sum();
        if sum < goal {
            failure = Some(format!("sum {sum} below θ·total {goal}"));
        } else if !set.is_empty() && shorter >= goal {
            failure = Some(format!("a set of size {} already reaches the goal", set.len() - 1));
        } else if set.iter().any(|&i| sum - eta[i] >= goal) {
            failure = Some("a marked interval is superfluous".into());
        }
        if failure.is_some() {
            break;
        }
    }
    CheckOutcome::new("Dörfler minimality", failure, "500 random vectors".into())
}

fn bisection_nestedness(rng: &mut StdRng) -> Result<CheckOutcome> {
    let mut failure = None;
    for _ in 0..200 {
        let grid = random_grid(rng, -1.0, 2.0, 25)?;
        let marked: Vec<usize> = (0..grid.intervals()).filter(|_| rng.random_bool(0.4)).collect();
        let fine = bisect(&grid, &marked)?;
        let t = fine.instances();
        if fine.len() != grid.len() + marked.len() {
            failure = Some("wrong instance count after bisection".into());
        } else if !grid.instances().iter().all(|s| t.contains(s)) {
            failure = Some("an old instance disappeared".into());
        } else if marked
            .iter()
            .any(|&i| !t.contains(&(0.5 * (grid.instances()[i] + grid.instances()[i + 1]))))
        {
            failure = Some("a midpoint is missing".into());
        }
        if failure.is_some() {
            break;
        }
    }
    Ok(CheckOutcome::new("bisection nestedness", failure, "200 random grids".into()))
}

fn mpc_consistency() -> Result<CheckOutcome> {
    let p = make_test1(1e-3)?;
    let fine = SpatialMesh::new(20)?;
    let mut configs = vec![
        MpcConfig::new(MpcVariant::Uniform, 8, 3),
        MpcConfig::new(MpcVariant::Offline, 8, 4),
        MpcConfig::online(MpcVariant::Online, 0.3, 4),
    ];
    let mut failure = None;
    let mut iterations = 0;
    for c in &mut configs {
        c.fine_mesh = fine;
        let run = run_mpc(&p, c)?;
        iterations += run.iterations.len();
        for (i, r) in run.iterations.iter().enumerate() {
            let sol = solve_open_loop(&p, &r.grid, &r.initial_state, &fine)?;
            if sol.u.row(1) != r.applied_control.as_slice()
                || run.feedback_u.row(i + 1) != r.applied_control.as_slice()
            {
                failure = Some(format!("{}: feedback differs at iteration {i}", c.variant));
            }
            if run.closed_loop_y.row(i + 1) != r.terminal_state.as_slice() {
                failure = Some(format!("{}: trajectory row {} differs", c.variant, i + 1));
            }
        }
        for w in run.iterations.windows(2) {
            if w[0].terminal_state != w[1].initial_state || w[0].t_applied != w[1].t_start {
                failure = Some(format!("{}: state jump at iteration {}", c.variant, w[1].index));
            }
        }
    }
    Ok(CheckOutcome::new(
        "MPC feedback consistency and state continuity",
        failure,
        format!("{iterations} iterations"),
    ))
}

fn matrix_properties(rng: &mut StdRng) -> CheckOutcome {
    let mut failure = None;
    for n in [2, 5, 17, 100] {
        let mesh = SpatialMesh::new(n).expect("valid mesh");
        let (m, k) = (assemble_mass(&mesh), assemble_stiffness(&mesh));
        if !m.is_symmetric(0.0) || !k.is_symmetric(0.0) {
            failure = Some(format!("asymmetric matrix at n_cells = {n}"));
        }
        for _ in 0..20 {
            let v: Vec<f64> = (0..=n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (vm, vk) = (m.bilinear(&v, &v), k.bilinear(&v, &v));
            if !(vm > 0.0) || vk < -1e-12 * vm {
                failure = Some(format!("definiteness fails at n_cells = {n}"));
            }
        }
    }
    CheckOutcome::new("mass/stiffness symmetry and definiteness", failure, "4 meshes".into())
}

fn laplacian_eigenfunction() -> CheckOutcome {
    let mesh = SpatialMesh::new(100).expect("valid mesh");
    let v = mesh.sample(|x| (std::f64::consts::PI * x).sin());
    let lap = discrete_laplacian(&v, &mesh);
    let pi2 = std::f64::consts::PI.powi(2);
    let worst = (1..100)
        .map(|j| ((lap[j] / v[j]) + pi2).abs() / pi2)
        .fold(0.0_f64, f64::max);
    let failure = (worst > 1e-3).then(|| format!("relative deviation {worst:e}"));
    CheckOutcome::new(
        "discrete Laplacian eigenfunction",
        failure,
        format!("relative deviation {worst:.2e}"),
    )
}

fn kkt_blocks(rng: &mut StdRng) -> Result<CheckOutcome> {
    let mut failure = None;
    let mesh = SpatialMesh::new(12)?;
    for p in [make_test1(1e-3)?, make_test2(0.1, 3.0, 1e-2)?] {
        for _ in 0..3 {
            let a = rng.random_range(0.0..0.8);
            let grid = random_grid(rng, a, a + 0.2, 8)?;
            let y0 = mesh.sample(|x| p.exact_state(a, x).unwrap_or(0.0));
            let sol = solve_open_loop(&p, &grid, &y0, &mesh)?;
            let r = kkt_residuals(&p, &sol);
            let scale = 1e-9 * (1.0 + sol.y.max_abs() + sol.u.max_abs());
            if r.state > scale || r.adjoint > scale || r.optimality > scale {
                failure = Some(format!("{}: residuals {r:?}", p.name()));
            }
        }
    }
    Ok(CheckOutcome::new("KKT residual blocks", failure, "6 subproblems".into()))
}
