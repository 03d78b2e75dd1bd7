use otlab::grid::GridDomain;
use otlab::medium::{AprioriData, OpticalMedium};
use otlab::stability::{delta_h, geometric_sweep, run_stability_experiment, PerturbationSpec};

fn base() -> OpticalMedium {
    let ap = AprioriData {
        n: 3,
        p: 6.0,
        lambda: 1.5,
        sobolev_bound: 100.0,
        cal_e: 1.0,
        k: 0.15,
        r0: 0.5,
        lipschitz: 1.0,
        diam: 3f64.sqrt(),
        alpha: 0.5,
    };
    OpticalMedium::homogeneous(GridDomain::new(1.0, 17).unwrap(), ap, 1.0, 1.0).unwrap()
}

#[test]
fn boundary_values_are_lipschitz_in_the_dn_map() {
    let spec = PerturbationSpec::default();
    let r = run_stability_experiment(&base(), &spec, 0, &geometric_sweep(0.2, 6), 7).unwrap();
    println!("{}", r.to_csv());
    assert_eq!(r.rows.len(), 6);
    let slope = r.slopes[0].unwrap().slope;
    println!("slope {slope} ratio {:?}", r.ratio_bound);
    assert!((slope - 1.0).abs() <= 0.15, "{slope}");
    assert!(r.ratio_bound.unwrap().is_finite());
    // norms grow with eps
    for w in r.rows.windows(2) {
        assert!(w[0].star_norm > w[1].star_norm && w[0].boundary_sup > w[1].boundary_sup);
    }
}

#[test]
fn normal_derivative_obeys_the_hoelder_bound() {
    let spec = PerturbationSpec {
        profile_order: 1,
        alpha: 0.5,
        ..PerturbationSpec::default()
    };
    let r = run_stability_experiment(&base(), &spec, 1, &geometric_sweep(0.5, 6), 7).unwrap();
    println!("{}", r.to_csv());
    println!("{:?}", r.one_sided);
    assert!((r.predicted[1] - delta_h(0.5, 1).unwrap()).abs() < 1e-15);
    // zero trace, nonzero normal derivative
    for row in &r.rows {
        assert_eq!(row.boundary_sup, 0.0);
        assert!(row.normal_derivatives[1] > 0.0);
    }
    assert!(r.one_sided[1].holds(), "{:?}", r.one_sided[1]);
}
