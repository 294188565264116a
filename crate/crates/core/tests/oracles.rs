//! Finite difference and closed form oracles for the geometric operators.

use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use onsager_core::curvature::lattice3::{
    closed_form_routes, lattice3_chart, lattice3_closed_forms, lattice3_general, log_mean_formula, power_mean_formula,
};
use onsager_core::curvature::{ricci_scalar, sectional, MConvention, TensorCache};
use onsager_core::metric::{arc_length, distance, weighted_apply, weighted_form};
use onsager_core::validation::{moderate_potential, random_chain, random_model, random_point, random_potential, rng};
use onsager_core::{
    analyze, chart_curvature, geodesic_ivp, ChartOptions, DivergenceEnergy, Error, LocalGeometry, MobilityModel,
    ReversibleChain, SimplexPoint,
};

fn log_mean(a: f64, b: f64) -> f64 {
    if a == b {
        a
    } else {
        (a - b) / (a.ln() - b.ln())
    }
}

fn alpha_mean(alpha: f64, a: f64, b: f64) -> f64 {
    let fp = |z: f64| {
        if alpha == -1.0 {
            1.0 - 1.0 / z
        } else {
            2.0 / (alpha - 1.0) * (z.powf(0.5 * (alpha - 1.0)) - 1.0)
        }
    };
    (a - b) / (fp(a) - fp(b))
}

#[test]
fn mean_partials_match_finite_differences() {
    type Mean = Box<dyn Fn(f64, f64) -> f64>;
    let cases: Vec<(MobilityModel, Mean)> = vec![
        (MobilityModel::kl(), Box::new(log_mean)),
        (MobilityModel::alpha(-1.0).unwrap(), Box::new(|a, b| alpha_mean(-1.0, a, b))),
        (MobilityModel::alpha(0.5).unwrap(), Box::new(|a, b| alpha_mean(0.5, a, b))),
        (MobilityModel::alpha(4.0).unwrap(), Box::new(|a, b| alpha_mean(4.0, a, b))),
        (MobilityModel::geometric(1.3).unwrap(), Box::new(|a: f64, b: f64| (a * b).powf(1.3))),
    ];
    for (model, m) in &cases {
        for (a, b) in [(0.7, 1.9), (1.2, 1.25), (2.0, 0.4), (0.9, 0.9 * (1.0 + 1e-3))] {
            let jet = model.mean_jet(a, b).unwrap();
            let h = 1e-4;
            let ma = (m(a + h, b) - m(a - h, b)) / (2.0 * h);
            let mb = (m(a, b + h) - m(a, b - h)) / (2.0 * h);
            // Wider stencil for second differences: the near-equal pair loses digits in f'(a) - f'(b).
            let k = 1e-3;
            let maa = (m(a + k, b) - 2.0 * m(a, b) + m(a - k, b)) / (k * k);
            let mab = (m(a + k, b + k) - m(a + k, b - k) - m(a - k, b + k) + m(a - k, b - k)) / (4.0 * k * k);
            assert_relative_eq!(jet.m, m(a, b), max_relative = 1e-12);
            assert_relative_eq!(jet.ma, ma, max_relative = 1e-6);
            assert_relative_eq!(jet.mb, mb, max_relative = 1e-6);
            assert_relative_eq!(jet.maa, maa, max_relative = 1e-4, epsilon = 1e-6);
            assert_relative_eq!(jet.mab, mab, max_relative = 1e-4, epsilon = 1e-6);
        }
    }
}

#[test]
fn theta_partials_match_finite_differences() {
    let mut r = rng(11);
    for case in 0..12 {
        let n = 3 + case % 3;
        let chain = random_chain(&mut r, n);
        let model = random_model(&mut r, case);
        let p = random_point(&mut r, n);
        let jet = model.theta_jet(&chain, &p).unwrap();
        let h = 1e-6;
        for (e, edge) in chain.edges().iter().enumerate() {
            for (k, analytic) in [(edge.i, jet.edges[e].d_i), (edge.j, jet.edges[e].d_j)] {
                let shifted = |s: f64| {
                    let mut q = (*p).clone();
                    q[k] += s;
                    // theta only depends on the two endpoint entries, so mass need not be conserved here
                    let q = SimplexPoint::with_tolerance(q, 1.0).unwrap();
                    model.theta(&chain, &q).unwrap()[e]
                };
                let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
                assert_relative_eq!(analytic, fd, max_relative = 1e-6, epsilon = 1e-9);
            }
        }
    }
}

fn field(chain: &ReversibleChain, model: &MobilityModel, p: &DVector<f64>, phi: &DVector<f64>) -> DVector<f64> {
    let q = SimplexPoint::with_tolerance(p.clone(), 1e-9).unwrap();
    weighted_apply(chain, &model.theta(chain, &q).unwrap(), phi)
}

#[test]
fn directional_theta_and_commutator_match_flows() {
    let mut r = rng(12);
    for case in 0..15 {
        let n = 3 + case % 4;
        let chain = random_chain(&mut r, n);
        let model = random_model(&mut r, case);
        let p = random_point(&mut r, n);
        let geo = LocalGeometry::new(&chain, &model, p.clone()).unwrap();
        let f1 = random_potential(&mut r, n);
        let f2 = random_potential(&mut r, n);
        let v1 = geo.tangent(&f1);
        let v2 = geo.tangent(&f2);
        let h = 1e-5 * p.min() / v1.amax().max(v2.amax());

        let theta_at = |s: f64| model.theta(&chain, &SimplexPoint::with_tolerance(&*p + &v1 * s, 1e-9).unwrap()).unwrap();
        let (up, down) = (theta_at(h), theta_at(-h));
        for (e, d) in geo.directional_theta(&f1).iter().enumerate() {
            assert_relative_eq!(*d, (up[e] - down[e]) / (2.0 * h), max_relative = 1e-6, epsilon = 1e-9);
        }

        let dv2 = (field(&chain, &model, &(&*p + &v1 * h), &f2) - field(&chain, &model, &(&*p - &v1 * h), &f2)) / (2.0 * h);
        let dv1 = (field(&chain, &model, &(&*p + &v2 * h), &f1) - field(&chain, &model, &(&*p - &v2 * h), &f1)) / (2.0 * h);
        let fd = dv2 - dv1;
        let comm = geo.commutator(&f1, &f2);
        assert!((&comm - &fd).amax() <= 1e-6 * comm.amax().max(1.0), "{comm} vs {fd}");
    }
}

#[test]
fn second_directional_matches_iterated_differences() {
    // (V2 (V1 theta))_e = W + 2 N(1,2) with V1 theta computed for the field V1 = L(theta) Phi1.
    let mut r = rng(13);
    for case in 0..10 {
        let n = 3 + case % 3;
        let chain = random_chain(&mut r, n);
        let model = random_model(&mut r, case);
        let p = random_point(&mut r, n);
        let geo = LocalGeometry::new(&chain, &model, p.clone()).unwrap();
        let f1 = random_potential(&mut r, n);
        let f2 = random_potential(&mut r, n);
        let v2 = geo.tangent(&f2);
        let h = 1e-5 * p.min() / v2.amax();
        let dir_at = |s: f64| {
            let q = SimplexPoint::with_tolerance(&*p + &v2 * s, 1e-9).unwrap();
            LocalGeometry::new(&chain, &model, q).unwrap().directional_theta(&f1)
        };
        let (up, down) = (dir_at(h), dir_at(-h));
        let analytic = geo.iterated_directional(&f2, &f1);
        for e in 0..analytic.len() {
            let fd = (up[e] - down[e]) / (2.0 * h);
            assert_relative_eq!(analytic[e], fd, max_relative = 1e-5, epsilon = 1e-8);
        }
        let sd = geo.second_directional(&f1, &f2, MConvention::Symmetrized);
        let sd21 = geo.second_directional(&f2, &f1, MConvention::Symmetrized);
        let sym: Vec<f64> = analytic.iter().zip(geo.iterated_directional(&f1, &f2)).map(|(a, b)| -(a + b)).collect();
        for e in 0..sym.len() {
            assert_relative_eq!(sd.m[e], sym[e], max_relative = 1e-12, epsilon = 1e-14);
            assert_relative_eq!(sd.m[e], sd21.m[e], max_relative = 1e-12, epsilon = 1e-14);
        }
    }
}

#[test]
fn connection_forms_agree() {
    let mut r = rng(14);
    for case in 0..20 {
        let n = 3 + case % 4;
        let chain = random_chain(&mut r, n);
        let model = random_model(&mut r, case);
        let geo = LocalGeometry::new(&chain, &model, random_point(&mut r, n)).unwrap();
        let f: Vec<_> = (0..3).map(|_| random_potential(&mut r, n)).collect();
        let direct = geo.levi_civita(&f[0], &f[1], Some(&f[2])).scalar.unwrap();
        let koszul = geo.levi_civita_gamma_form(&f[0], &f[1], &f[2]);
        assert_relative_eq!(direct, koszul, max_relative = 1e-10, epsilon = 1e-12);
    }
}

#[test]
fn hessian_forms_agree_and_match_geodesic_second_difference() {
    let mut r = rng(15);
    for case in 0..10 {
        let n = 3 + case % 3;
        let chain = random_chain(&mut r, n);
        let model = if case % 2 == 0 { MobilityModel::kl() } else { MobilityModel::alpha(0.5).unwrap() };
        let p = random_point(&mut r, n);
        let geo = LocalGeometry::new(&chain, &model, p.clone()).unwrap();
        let energy = DivergenceEnergy { chain: &chain, model: &model };
        let f1 = moderate_potential(&geo, &random_potential(&mut r, n), 0.3);
        let f2 = random_potential(&mut r, n);
        let a = geo.hessian(&energy, &f1, &f2).unwrap();
        let b = geo.hessian_edge_sum(&energy, &f1, &f2).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-10, epsilon = 1e-12);
        let sym = geo.hessian(&energy, &f2, &f1).unwrap();
        assert_relative_eq!(a, sym, max_relative = 1e-10, epsilon = 1e-12);

        let h = 2e-3;
        let fwd = geodesic_ivp(&chain, &model, &p, &f1, h, h / 8.0).unwrap();
        let bwd = geodesic_ivp(&chain, &model, &p, &(-&f1), h, h / 8.0).unwrap();
        let d = |q: &SimplexPoint| model.divergence(&chain, q).unwrap();
        let second = (d(fwd.points.last().unwrap()) - 2.0 * d(&p) + d(bwd.points.last().unwrap())) / (h * h);
        assert_relative_eq!(geo.hessian(&energy, &f1, &f1).unwrap(), second, max_relative = 1e-5);
    }
}

#[test]
fn geodesic_length_and_distance() {
    let chain = ReversibleChain::triangle_reaction();
    let model = MobilityModel::kl();
    let p0 = SimplexPoint::from_slice(&[0.3, 0.4, 0.3]).unwrap();
    let geo = LocalGeometry::new(&chain, &model, p0.clone()).unwrap();
    let phi = moderate_potential(&geo, &DVector::from_vec(vec![0.4, -0.1, -0.3]), 0.2);
    let path = geodesic_ivp(&chain, &model, &p0, &phi, 1.0, 1e-3).unwrap();
    let len = arc_length(&chain, &model, &path.times, &path.points).unwrap();
    assert_relative_eq!(len, path.speed[0], max_relative = 1e-8);
    let end = path.points.last().unwrap();
    let d = distance(&chain, &model, &p0, end).unwrap();
    assert_relative_eq!(d, len, max_relative = 1e-7);
}

#[test]
fn sectional_is_a_plane_function() {
    let mut r = rng(16);
    for case in 0..10 {
        let n = 3 + case % 3;
        let chain = random_chain(&mut r, n);
        let model = random_model(&mut r, case);
        let geo = LocalGeometry::new(&chain, &model, random_point(&mut r, n)).unwrap();
        let f1 = random_potential(&mut r, n);
        let f2 = random_potential(&mut r, n);
        let k = sectional(&geo, &f1, &f2, MConvention::Symmetrized).unwrap();
        let sheared = &f2 + &f1 * 0.7;
        let scaled = &f1 * -2.5;
        for (a, b) in [(&f1, &sheared), (&scaled, &f2), (&f2, &f1)] {
            let other = sectional(&geo, a, b, MConvention::Symmetrized).unwrap();
            assert_relative_eq!(k, other, max_relative = 1e-9, epsilon = 1e-12);
        }
    }
}

#[test]
fn lattice_frame_plane_and_oracles() {
    let chain = ReversibleChain::lattice3();
    let model = MobilityModel::geometric(1.0).unwrap().with_uniform_scale(9.0).unwrap();
    let p = SimplexPoint::from_slice(&[1.0 / 3.0; 3]).unwrap();
    let geo = LocalGeometry::new(&chain, &model, p.clone()).unwrap();
    let frame = geo.onsager.frame_potentials();
    let k = sectional(&geo, &frame[0], &frame[1], MConvention::Symmetrized).unwrap();
    assert_relative_eq!(k, -13.5, max_relative = 1e-10);
    let chart = lattice3_chart(&chain, &model, &p, &ChartOptions::default()).unwrap();
    assert_relative_eq!(chart, -13.5, max_relative = 1e-5);
}

#[test]
fn log_mean_three_routes() {
    let chain = ReversibleChain::lattice3();
    let model = MobilityModel::kl().with_uniform_scale(3.0).unwrap();
    let p = SimplexPoint::from_slice(&[0.5, 0.3, 0.2]).unwrap();
    let closed = lattice3_closed_forms(&chain, &model, &p).unwrap().k12;
    let general = lattice3_general(&chain, &model, &p, MConvention::Symmetrized).unwrap().k12;
    let chart = lattice3_chart(&chain, &model, &p, &ChartOptions::default()).unwrap();
    assert_relative_eq!(closed, general, max_relative = 1e-10);
    assert_relative_eq!(closed, chart, max_relative = 1e-5);
    assert_relative_eq!(log_mean_formula(3.0, &[0.5, 0.3, 0.2]).unwrap(), closed, max_relative = 1e-10);
}

#[test]
fn power_mean_expression_matches_general_route() {
    let chain = ReversibleChain::lattice3();
    for alpha in [-1.0, 0.0, 0.5, 2.0, 4.0] {
        for c in [1.0, 3.0, 7.5] {
            let model = MobilityModel::alpha(alpha).unwrap().with_uniform_scale(c).unwrap();
            for p in [[0.5, 0.3, 0.2], [0.1, 0.6, 0.3], [0.25, 0.15, 0.6]] {
                let point = SimplexPoint::from_slice(&p).unwrap();
                let general = lattice3_general(&chain, &model, &point, MConvention::Symmetrized).unwrap().k12;
                assert_relative_eq!(power_mean_formula(alpha, c, &p).unwrap(), general, max_relative = 1e-9);
                for route in closed_form_routes(&chain, &model, &point).unwrap() {
                    assert_relative_eq!(route.k12.unwrap(), general, max_relative = 1e-9);
                }
            }
        }
    }
}

#[test]
fn lattice_ricci_spectrum_on_frame() {
    let chain = ReversibleChain::lattice3();
    let model = MobilityModel::geometric(0.8).unwrap();
    let p = SimplexPoint::from_slice(&[0.2, 0.5, 0.3]).unwrap();
    let geo = LocalGeometry::new(&chain, &model, p.clone()).unwrap();
    let frame = geo.onsager.frame_potentials();
    let tensor = TensorCache::new(&geo, &frame, MConvention::Symmetrized).full_tensor();
    let (ric, scalar) = ricci_scalar(&tensor);
    let lat = lattice3_closed_forms(&chain, &model, &p).unwrap();
    // In two dimensions Ric = K g with K = R_1212 / det g = K12 theta1 theta2.
    let gauss = lat.k12 * lat.theta1 * lat.theta2;
    let eig = ric.symmetric_eigen().eigenvalues;
    for e in eig.iter() {
        assert_relative_eq!(*e, gauss, max_relative = 1e-6);
    }
    assert_relative_eq!(scalar, lat.scalar, max_relative = 1e-9);
}

#[test]
fn constant_mobility_is_flat_everywhere() {
    let mut r = rng(17);
    for n in 3..=5 {
        let chain = random_chain(&mut r, n);
        let p = random_point(&mut r, n);
        let report = analyze(&chain, &MobilityModel::constant(), &p, &ChartOptions::default()).unwrap();
        assert_eq!(report.riemann.max_abs(), 0.0);
        assert_eq!(report.scalar, 0.0);
        assert!(report.ricci.iter().flatten().all(|&x| x == 0.0));
        let oracle = chart_curvature(&chain, &MobilityModel::constant(), &p, &ChartOptions::default()).unwrap();
        assert!(oracle.symmetry_defect() < 1e-6);
    }
}

#[test]
fn chart_oracle_symmetries() {
    let mut r = rng(18);
    for case in 0..6 {
        let n = 3 + case % 3;
        let chain = random_chain(&mut r, n);
        let model = random_model(&mut r, case);
        let p = random_point(&mut r, n);
        let oracle = chart_curvature(&chain, &model, &p, &ChartOptions::default()).unwrap();
        let scale = (0..oracle.dim())
            .flat_map(|a| (0..oracle.dim()).map(move |b| (a, b)))
            .map(|(a, b)| oracle.component(a, b, b, a).abs())
            .fold(1.0f64, f64::max);
        assert!(oracle.symmetry_defect() < 1e-6 * scale);
    }
}

#[test]
fn m_conventions_are_distinguished_by_the_oracle() {
    let chain = ReversibleChain::lattice3();
    let model = MobilityModel::kl();
    let p = SimplexPoint::from_slice(&[0.5, 0.3, 0.2]).unwrap();
    let report = analyze(&chain, &model, &p, &ChartOptions::default()).unwrap();
    assert_eq!(report.m_convention, MConvention::Symmetrized);
    for c in &report.convention_residuals {
        if c.convention == MConvention::Symmetrized {
            assert!(c.residual < 1e-6);
        } else {
            assert!(c.residual > 1e-2, "{:?}", c);
        }
    }
    let lat = report.lattice3.unwrap();
    assert!(lat.max_route_deviation < 1e-9);
}

#[test]
fn boundary_and_chain_errors() {
    assert!(matches!(
        SimplexPoint::from_slice(&[0.5, 0.5, 0.0]),
        Err(Error::BoundaryPoint { index: 3, .. })
    ));
    let omega = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    let pi = DVector::from_vec(vec![0.3, 0.3, 0.4]);
    assert!(matches!(ReversibleChain::from_weights(&omega, &pi), Err(Error::DisconnectedGraph(_))));
}

#[test]
fn weighted_form_is_symmetric_bilinear() {
    let mut r = rng(19);
    let chain = random_chain(&mut r, 5);
    let a: Vec<f64> = chain.edges().iter().map(|e| e.weight + 0.3).collect();
    let x = random_potential(&mut r, 5);
    let y = random_potential(&mut r, 5);
    assert_relative_eq!(weighted_form(&chain, &a, &x, &y), weighted_form(&chain, &a, &y, &x), max_relative = 1e-14);
    assert_relative_eq!(weighted_form(&chain, &a, &x, &y), x.dot(&weighted_apply(&chain, &a, &y)), max_relative = 1e-12);
}
