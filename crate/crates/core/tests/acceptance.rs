//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::time::Instant;

use nalgebra::{DMatrix, Matrix3};
use num_bigint::BigUint;
use otlab::dnmap::{alessandrini_residual, assemble_dn, star_norm, star_norm_svd, SobolevScale};
use otlab::fit::loglog_fit;
use otlab::gegenbauer::GegenbauerSpec;
use otlab::grid::GridDomain;
use otlab::medium::{diffusion_tensor, k_admissible_ranges, AprioriData, OpticalMedium};
use otlab::singular::correction::{correction_w, CorrectionOptions};
use otlab::singular::laplace::{newtonian_potential_truncated, truncation_order, PotentialOptions};
use otlab::singular::{bracket_minimum, leading_term, um_via_induction, SingularSolutionSpec, SingularityPoint};
use otlab::solver::{apply_stencil, assemble, constant_stencil, continuum_operator, DEFAULT_TOLERANCE};
use otlab::stability::{delta_h, geometric_sweep, run_stability_experiment, PerturbationSpec};
use otlab::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = (bool, String);

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.2e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn apriori(k: f64, lambda: f64, cal_e: f64, alpha: f64) -> AprioriData {
    AprioriData {
        n: 3,
        p: 8.0,
        lambda,
        sobolev_bound: 100.0,
        cal_e,
        k,
        r0: 0.5,
        lipschitz: 1.0,
        diam: 3f64.sqrt(),
        alpha,
    }
}

/// `floor(sqrt(3) * 10^digits)` by integer square root.
fn sqrt3_scaled(digits: u32) -> BigUint {
    (BigUint::from(3u32) * BigUint::from(10u32).pow(2 * digits)).sqrt()
}

fn k_ranges() -> Outcome {
    // lambda = calE = 1, n = 3 reduces to 4 -/+ 2 sqrt(3)
    let digits = 30;
    let scale = BigUint::from(10u32).pow(digits);
    let s = sqrt3_scaled(digits);
    let four = BigUint::from(4u32) * &scale;
    let two_s = BigUint::from(2u32) * &s;
    let to_f64 = |v: BigUint| {
        let q = &v / &scale;
        let r = &v % &scale;
        let r16 = (r * BigUint::from(10u32).pow(16)) / &scale;
        q.to_string().parse::<f64>().unwrap() + r16.to_string().parse::<f64>().unwrap() * 1e-16
    };
    let lo = to_f64(&four - &two_s);
    let hi = to_f64(&four + &two_s);
    let r = k_admissible_ranges(1.0, 1.0, 3).unwrap();
    let gap = (r.k0 - lo).abs().max((r.k0_tilde - hi).abs());
    (gap <= 1e-6, format!("k0 = {:.9}, k0~ = {:.9}, gap {gap:.1e}", r.k0, r.k0_tilde))
}

fn binomial(n: u64, k: u64) -> f64 {
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128) as f64
}

fn gegenbauer_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut ode, mut end, mut der) = (0.0f64, 0.0f64, 0.0f64);
    for n in 3..=6u32 {
        let lam = (n as f64 - 2.0) / 2.0;
        for m in 0..=8u32 {
            let g = GegenbauerSpec::new(m, n).unwrap();
            for _ in 0..100 {
                let t: f64 = rng.random_range(-1.0..1.0);
                let z = C64::new(t, 0.0);
                let (y, dy, d2y) = (g.eval(z).re, g.derivative(z).re, g.second_derivative(z).re);
                let terms = [(1.0 - t * t) * d2y, (2.0 * lam + 1.0) * t * dy, m as f64 * (m as f64 + 2.0 * lam) * y];
                let size = terms.iter().map(|v| v.abs()).fold(1.0, f64::max);
                ode = ode.max((terms[0] - terms[1] + terms[2]).abs() / size);
                let step = 1e-5;
                let fd = (g.eval_real(t + step) - g.eval_real(t - step)) / (2.0 * step);
                der = der.max((fd - dy).abs() / dy.abs().max(1.0));
            }
            // C_m^lambda(1) = binom(m + n - 3, m)
            let want = binomial((m + n - 3) as u64, m as u64);
            let e = g.endpoint_values().unwrap();
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            end = end.max((e.plus - want).abs() / want).max((e.minus - sign * want).abs() / want);
        }
    }
    (
        ode <= 1e-9 && end <= 1e-12 && der <= 1e-6,
        format!("ode {ode:.1e}, endpoints {end:.1e}, derivative {der:.1e}"),
    )
}

fn random_frozen(rng: &mut ChaCha8Rng, n: usize) -> SingularityPoint {
    let z: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut b = DMatrix::zeros(n, n);
    let s = 0.5 / n as f64;
    for i in 0..n {
        for j in 0..=i {
            let v = rng.random_range(-s..s);
            b[(i, j)] = v;
            b[(j, i)] = v;
        }
    }
    let (mu_a, mu_s, k) = (rng.random_range(0.2..2.0), rng.random_range(0.5..3.0), rng.random_range(0.05..2.0));
    SingularityPoint::from_coefficients(z, mu_a, mu_s, &b, k).unwrap()
}

fn singular_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut gap = 0.0f64;
    for trial in 0..50 {
        let at = random_frozen(&mut rng, 3 + trial % 3);
        for m in 0..=5 {
            let spec = SingularSolutionSpec::new(m, at.clone()).unwrap();
            for _ in 0..4 {
                let x: Vec<f64> = loop {
                    let d: Vec<f64> = at.z().iter().map(|_| rng.random_range(-1.0..1.0)).collect();
                    let r = d.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if r > 0.1 && r < 1.0 {
                        break at.z().iter().zip(&d).map(|(a, b)| a + b).collect();
                    }
                };
                let a = leading_term(&spec, &x).unwrap();
                let b = um_via_induction(&spec, &x).unwrap();
                gap = gap.max((a - b).norm() / a.norm());
            }
        }
    }

    let (mu_a, mu_s, k) = (0.9, 1.4, 0.4);
    let b = Matrix3::new(0.2, 0.1, -0.05, 0.1, -0.1, 0.08, -0.05, 0.08, 0.15);
    let bd = DMatrix::from_fn(3, 3, |i, j| b[(i, j)]);
    let at = SingularityPoint::from_coefficients(vec![0.5, 0.5, -0.4], mu_a, mu_s, &bd, k).unwrap();
    let kz = diffusion_tensor(mu_a, mu_s, &bd, k).unwrap();
    let kz3 = Matrix3::from_fn(|i, j| kz[(i, j)]);
    let mut worst_order = f64::INFINITY;
    for m in 0..=4 {
        let spec = SingularSolutionSpec::new(m, at.clone()).unwrap();
        let (mut hs, mut rs) = (Vec::new(), Vec::new());
        for pts in [17, 25, 33] {
            let grid = GridDomain::new(1.0, pts).unwrap();
            let stencil = constant_stencil(grid.h(), &kz3);
            let u = grid.sample_complex(|x| leading_term(&spec, &x).unwrap());
            let stride = (pts - 1) / 8;
            let r = (0..grid.len())
                .filter(|&p| grid.ijk(p).iter().all(|c| c % stride == 0))
                .filter_map(|p| apply_stencil(&grid, &stencil, &u.values, p))
                .map(|v| v.norm())
                .fold(0.0, f64::max);
            hs.push(grid.h());
            rs.push(r);
        }
        worst_order = worst_order.min(loglog_fit(&hs, &rs).unwrap().slope);
    }
    (
        gap <= 1e-9 && worst_order >= 1.8,
        format!("induction gap {gap:.1e}, discrete residual order {worst_order:.3}"),
    )
}

fn bracket() -> Outcome {
    let mut worst = (f64::INFINITY, 0, 0);
    for n in 3..=5 {
        for m in 0..=8 {
            let (_, v) = bracket_minimum(m, n, 10_000).unwrap();
            if v < worst.0 {
                worst = (v, m, n);
            }
        }
    }
    (worst.0 > 0.0, format!("smallest minimum {:.3e} at m = {}, n = {}", worst.0, worst.1, worst.2))
}

fn potential_decay() -> Outcome {
    let opts = PotentialOptions::default();
    let dir = [0.3f64, -0.2, 0.9];
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    let dir = dir.map(|v| v / norm);
    let mut ok = true;
    let mut msg = Vec::new();
    for (s, lo, hi) in [(3.5, 2, 8), (4.3, 8, 14)] {
        let nu = truncation_order(s, 3).unwrap();
        let f = move |y: [f64; 3]| {
            let rho = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
            C64::new(rho.powf(-s) * y[2] / rho, 0.0)
        };
        let (mut rs, mut us) = (Vec::new(), Vec::new());
        for e in lo..=hi {
            let r = 0.5f64.powi(e);
            let u = newtonian_potential_truncated(&f, nu, [r * dir[0], r * dir[1], r * dir[2]], &opts).unwrap();
            rs.push(r);
            us.push(u.value.norm());
        }
        let slope = loglog_fit(&rs, &us).unwrap().slope;
        ok &= (slope - (2.0 - s)).abs() <= 0.1;
        msg.push(format!("s = {s}: slope {slope:.4} vs {:.1}", 2.0 - s));
    }
    (ok, msg.join(", "))
}

fn solver_convergence() -> Outcome {
    let k = 0.3;
    let mu_a = |x: [f64; 3]| 1.0 + 0.3 * (x[0] + 0.5 * x[1]).sin();
    let mu_s = |x: [f64; 3]| 1.2 + 0.2 * x[2] * x[0];
    let b_field = |x: [f64; 3]| {
        let s = 0.15 * (1.0 + x[1]);
        Matrix3::new(0.1, s, 0.0, s, -0.2, 0.05 * x[2], 0.0, 0.05 * x[2], 0.2)
    };
    let exact = |x: [f64; 3]| C64::new(1.0, x[2].cos()) * (x[0] + x[1]).exp();
    let tensor = |x: [f64; 3]| -> Matrix3<C64> {
        let b = DMatrix::from_fn(3, 3, |i, j| b_field(x)[(i, j)]);
        let kk = diffusion_tensor(mu_a(x), mu_s(x), &b, k).unwrap();
        Matrix3::from_fn(|i, j| kk[(i, j)])
    };
    let reaction = |x: [f64; 3]| C64::new(mu_a(x), -k);
    let (mut hs, mut errs) = (Vec::new(), Vec::new());
    for m in [17, 25, 33] {
        let grid = GridDomain::new(1.0, m).unwrap();
        let med = OpticalMedium::from_fns(grid, apriori(k, 2.0, 2.0, 0.25), mu_a, mu_s, Some(&b_field)).unwrap();
        let op = assemble(&med, true).unwrap();
        let g = grid.sample_complex(exact);
        let f = grid.sample_complex(|x| continuum_operator(&tensor, &reaction, &exact, x, 1e-2));
        let u = op.solve_dirichlet(&g, &f).unwrap();
        hs.push(grid.h());
        errs.push((0..grid.len()).map(|p| (u.values[p] - g.values[p]).norm()).fold(0.0, f64::max));
    }
    let order = loglog_fit(&hs, &errs).unwrap().slope;
    ((order - 2.0).abs() <= 0.2, format!("order {order:.3}, errors {}", sci(&errs)))
}

fn dn_medium(grid: GridDomain, eps: f64) -> OpticalMedium {
    OpticalMedium::from_fns(
        grid,
        apriori(0.1, 2.0, 2.0, 0.25),
        |x| 1.0 + 0.2 * x[0] * x[1] + eps * (3.0 * x[2]).cos() * x[0],
        |x| 1.0 + 0.1 * x[2],
        None,
    )
    .unwrap()
}

fn alessandrini() -> Outcome {
    let data_f = |x: [f64; 3]| C64::new(1.0 + x[0] * x[1], 0.5 * x[2]);
    let data_g = |x: [f64; 3]| C64::new((x[0] + x[2]).cos(), x[1]);
    let (mut hs, mut res) = (Vec::new(), Vec::new());
    let mut same = 0.0f64;
    for m in [9, 13, 17] {
        let grid = GridDomain::new(1.0, m).unwrap();
        let nodes = grid.boundary_nodes();
        let f: Vec<C64> = nodes.iter().map(|&b| data_f(grid.coords(b))).collect();
        let g: Vec<C64> = nodes.iter().map(|&b| data_g(grid.coords(b))).collect();
        let r = alessandrini_residual(&dn_medium(grid, 0.3), &dn_medium(grid, 0.0), &f, &g).unwrap();
        hs.push(grid.h());
        res.push((r.lhs - r.rhs).norm() / r.lhs.norm());
        if m == 9 {
            same = alessandrini_residual(&dn_medium(grid, 0.3), &dn_medium(grid, 0.3), &f, &g).unwrap().residual;
        }
    }
    let order = loglog_fit(&hs, &res).unwrap().slope;
    let decreasing = res.windows(2).all(|w| w[1] < w[0]);
    (
        decreasing && order >= 1.0 && same <= 10.0 * DEFAULT_TOLERANCE,
        format!("order {order:.3}, residuals {}, coincident media {same:.1e}", sci(&res)),
    )
}

fn dn_structure() -> Outcome {
    let grid = GridDomain::new(1.0, 9).unwrap();
    let scale = SobolevScale::new(grid).unwrap();
    let l1 = assemble_dn(&dn_medium(grid, 0.3)).unwrap();
    let l2 = assemble_dn(&dn_medium(grid, 0.0)).unwrap();
    let sym = l1.symmetry_residual().max(l2.symmetry_residual());
    let d = l1.difference(&l2).unwrap();
    let p = star_norm(&d, &scale, 11).unwrap().value;
    let s = star_norm_svd(&d, &scale).unwrap();
    let gap = ((p - s) / s).abs();
    (
        sym <= 10.0 * DEFAULT_TOLERANCE && gap <= 1e-6,
        format!("symmetry {sym:.1e}, star norm {p:.6e} vs svd {s:.6e} (gap {gap:.1e})"),
    )
}

fn stability_base() -> OpticalMedium {
    let ap = AprioriData {
        p: 6.0,
        ..apriori(0.15, 1.5, 1.0, 0.5)
    };
    OpticalMedium::homogeneous(GridDomain::new(1.0, 17).unwrap(), ap, 1.0, 1.0).unwrap()
}

fn lipschitz_sweep() -> Outcome {
    let r = run_stability_experiment(&stability_base(), &PerturbationSpec::default(), 0, &geometric_sweep(0.2, 6), 7).unwrap();
    let slope = r.slopes[0].map(|f| f.slope).unwrap_or(f64::NAN);
    let ratio = r.ratio_bound.unwrap_or(f64::INFINITY);
    (
        r.rows.len() == 6 && (slope - 1.0).abs() <= 0.15 && ratio.is_finite(),
        format!("slope {slope:.3}, sup ratio {ratio:.3}"),
    )
}

fn hoelder_sweep() -> Outcome {
    let spec = PerturbationSpec {
        profile_order: 1,
        alpha: 0.5,
        ..PerturbationSpec::default()
    };
    let r = run_stability_experiment(&stability_base(), &spec, 1, &geometric_sweep(0.5, 6), 7).unwrap();
    let c = &r.one_sided[1];
    let delta = delta_h(0.5, 1).unwrap();
    let finite = c.constant.is_some_and(f64::is_finite);
    (
        (delta - 1.0 / 3.0).abs() < 1e-15 && (c.exponent - delta).abs() < 1e-15 && finite && c.holds(),
        format!("delta_1 {:.6}, C {:?}, violations {:?}", c.exponent, c.constant, c.violations),
    )
}

fn remainder_decay() -> Outcome {
    let mut ok = true;
    let mut msg = Vec::new();
    for m in 0..=1 {
        let grid = GridDomain::new(1.0, 33).unwrap();
        let mu_a = |x: [f64; 3]| {
            let d2 = (x[0] - 0.3).powi(2) + (x[1] - 0.6).powi(2) + (x[2] - 0.5).powi(2);
            0.8 + 0.4 * (-d2 / 0.02).exp()
        };
        let ap = AprioriData {
            p: 6.0,
            ..apriori(0.4, 2.0, 2.0, 0.25)
        };
        let medium = OpticalMedium::from_fns(grid, ap, mu_a, |_| 1.3, None).unwrap();
        let c = grid.index(16, 16, 16);
        let at = SingularityPoint::new(grid.coords(c).to_vec(), medium.tensor_inverse_at_point(c)).unwrap();
        let spec = SingularSolutionSpec::new(m, at).unwrap();
        let d = correction_w(&medium, &spec, &CorrectionOptions::new(2.0 * grid.h(), 0.45)).unwrap().decay;
        let slope = d.fit_w.map(|f| f.slope).unwrap_or(f64::NAN);
        ok &= slope >= d.exponent_proof - 0.15 && !d.fit_rejected;
        msg.push(format!(
            "m = {m}: slope {slope:.3} (2-n+a = {:.2}, 2-n-m+a = {:.2})",
            d.exponent_statement, d.exponent_proof
        ));
    }
    (ok, msg.join(", "))
}

fn determinism() -> Outcome {
    let base = tempfile::tempdir().unwrap();
    let runs: [&[&str]; 4] = [
        &["solve", "--dump-slice", "2:8"],
        &["gegenbauer-table"],
        &["singular"],
        &["stability", "--eps-count", "3"],
    ];
    let mut compared = 0;
    for (i, threads) in ["1", "4"].iter().enumerate() {
        let out = base.path().join(format!("run{i}"));
        for args in runs {
            let mut argv = vec!["otlab", "--threads", threads];
            argv.extend_from_slice(args);
            argv.extend_from_slice(&["--out", out.to_str().unwrap()]);
            let cli = <otlab::cli::Cli as clap::Parser>::try_parse_from(argv).unwrap();
            let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build().unwrap();
            if let Err(e) = pool.install(|| otlab::cli::run(&cli.command)) {
                return (false, format!("run {i} of {args:?} failed: {e}"));
            }
        }
    }
    let mut files: Vec<_> = std::fs::read_dir(base.path().join("run0"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .filter(|n| n.to_string_lossy().ends_with(".json") || n.to_string_lossy().ends_with(".csv"))
        .collect();
    files.sort();
    for f in &files {
        let a = std::fs::read(base.path().join("run0").join(f)).unwrap();
        let b = std::fs::read(base.path().join("run1").join(f)).unwrap_or_default();
        if a != b {
            return (false, format!("{} differs between runs", f.to_string_lossy()));
        }
        compared += 1;
    }
    (compared >= 7, format!("{compared} JSON/CSV files byte-identical across 1 and 4 threads"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("k-range reproduction", k_ranges),
        ("Gegenbauer suite", gegenbauer_suite),
        ("singular-solution oracle", singular_oracle),
        ("gradient bracket positivity", bracket),
        ("truncated potential decay", potential_decay),
        ("solver convergence", solver_convergence),
        ("Alessandrini identity", alessandrini),
        ("D-N structure", dn_structure),
        ("Lipschitz boundary stability", lipschitz_sweep),
        ("Hoelder normal-derivative stability", hoelder_sweep),
        ("remainder decay", remainder_decay),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = format!("{:02}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| id.contains(f.as_str()) || name.contains(f.as_str())) {
            continue;
        }
        let t = Instant::now();
        let (ok, detail) = run();
        if !ok {
            failed += 1;
        }
        println!(
            "{} [{id}] {name}: {detail} ({:.1} s)",
            if ok { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
