//! Randomized invariants of the library.

use carnot_lab::poly::Poly;
use carnot_lab::profiles::falloff;
use carnot_lab::regime::{classify, exact_thresholds, parabolic_threshold, Rational, Regime};
use carnot_lab::report::{read_sweep_csv, write_sweep_csv};
use carnot_lab::solver::{Kind, LifespanRecord};
use carnot_lab::testfn::{make_bump_with_samples, s_r_eval, temporal_jet};
use carnot_lab::{GridField, GridSpec, GroupPoint, StratifiedAlgebra};
use proptest::prelude::*;

fn algebras() -> Vec<StratifiedAlgebra> {
    vec![
        StratifiedAlgebra::heisenberg(1).unwrap(),
        StratifiedAlgebra::heisenberg(2).unwrap(),
        StratifiedAlgebra::engel().unwrap(),
        StratifiedAlgebra::random_step2(3, 2, 99).unwrap(),
    ]
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    let scale = a.iter().chain(b).fold(1.0f64, |m, x| m.max(x.abs()));
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * scale)
}

fn point(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn group_laws(
        k in 0usize..4,
        xs in point(5),
        ys in point(5),
        zs in point(5),
        lambda in 0.05f64..20.0,
    ) {
        let alg = &algebras()[k];
        let n = alg.total_dim();
        let (x, y, z) = (
            GroupPoint::new(xs[..n].to_vec()),
            GroupPoint::new(ys[..n].to_vec()),
            GroupPoint::new(zs[..n].to_vec()),
        );

        let l = alg.multiply(&alg.multiply(&x, &y).unwrap(), &z).unwrap();
        let r = alg.multiply(&x, &alg.multiply(&y, &z).unwrap()).unwrap();
        prop_assert!(close(&l.coords, &r.coords, 1e-12));

        let e = alg.multiply(&x, &alg.inverse(&x)).unwrap();
        prop_assert!(close(&e.coords, &vec![0.0; n], 1e-12));
        prop_assert_eq!(alg.multiply(&x, &alg.origin()).unwrap().coords, x.coords.clone());

        let d = alg.dilate(lambda, &alg.multiply(&x, &y).unwrap()).unwrap();
        let dd = alg.multiply(&alg.dilate(lambda, &x).unwrap(), &alg.dilate(lambda, &y).unwrap()).unwrap();
        prop_assert!(close(&d.coords, &dd.coords, 1e-12));

        let nx = alg.hom_norm(&x);
        prop_assert!((alg.hom_norm(&alg.dilate(lambda, &x).unwrap()) - lambda * nx).abs() <= 1e-12 * lambda * nx.max(1.0));
        prop_assert!((alg.hom_norm(&alg.inverse(&x)) - nx).abs() <= 1e-12 * nx.max(1.0));

        // The distance is left-invariant.
        let dxy = alg.distance(&x, &y).unwrap();
        let dzxy = alg.distance(&alg.multiply(&z, &x).unwrap(), &alg.multiply(&z, &y).unwrap()).unwrap();
        prop_assert!((dxy - dzxy).abs() <= 1e-9 * dxy.max(1.0));
    }

    #[test]
    fn space_time_gauge_is_homogeneous(
        x in point(3),
        t in -2.0f64..2.0,
        r in 0.1f64..10.0,
        lambda in 0.1f64..10.0,
    ) {
        let alg = StratifiedAlgebra::heisenberg(1).unwrap();
        let s = s_r_eval(&alg, r, t, &x).unwrap();
        let dx = alg.dilate(lambda, &GroupPoint::new(x.clone())).unwrap();
        let sd = s_r_eval(&alg, lambda * r, lambda * t, &dx.coords).unwrap();
        prop_assert!((s - sd).abs() <= 1e-10 * s.max(1.0));
    }

    #[test]
    fn classification_is_monotone(k in 0usize..3, p1 in 1.01f64..4.0, dp in 0.0f64..2.0) {
        // Curvature-dimension parameters exist for the step-2 groups only.
        let alg = &algebras()[[0, 1, 3][k]];
        let (a, b) = (classify(alg, p1).unwrap(), classify(alg, p1 + dp).unwrap());
        let rank = |r: Regime| match r {
            Regime::Subcritical => 0,
            Regime::Critical => 1,
            Regime::Supercritical => 2,
        };
        for (ca, cb) in a.cells().iter().zip(b.cells()) {
            prop_assert!(rank(ca.cell.regime) <= rank(cb.cell.regime));
        }
    }

    #[test]
    fn exact_thresholds_match_formulas(a in 1i64..200, b in 1i64..20) {
        let n = Rational::new(a, b);
        let [par, hyp, sub] = exact_thresholds(n);
        let nf = n.to_f64();
        prop_assert!((par.unwrap().to_f64() - parabolic_threshold(nf).unwrap()).abs() < 1e-12);
        prop_assert_eq!(hyp.is_some(), nf > 1.0);
        prop_assert_eq!(sub.is_some(), nf > 2.0);
        if let Some(h) = hyp {
            prop_assert!((h.to_f64() - (nf + 1.0) / (nf - 1.0)).abs() < 1e-12 * h.to_f64());
        }
        prop_assert_eq!(Rational::recover(nf), Some(n));
    }

    #[test]
    fn bump_is_dominated(p in 1.05f64..4.0, s in 0.5f64..1.0) {
        let b = make_bump_with_samples(p, 4000).unwrap();
        let [g, g1, g2] = b.jet(s);
        prop_assert!((0.0..=1.0).contains(&g));
        // The sampled constant bounds the ratio away from the samples too,
        // up to the sampling resolution.
        prop_assert!((g1.abs() + g2.abs()) <= 1.01 * b.c_g * g.powf(1.0 / p) + 1e-12);
    }

    #[test]
    fn profile_derivatives_match_differences(s in 0.0f64..3.0, alpha in 2.0f64..8.0) {
        let h = 1e-5;
        let f = |x: f64| falloff(x, 1.0, 2.0);
        let [_, d1, d2] = f(s);
        prop_assert!((d1 - (f(s + h)[0] - f(s - h)[0]) / (2.0 * h)).abs() < 1e-5);
        prop_assert!((d2 - (f(s + h)[1] - f(s - h)[1]) / (2.0 * h)).abs() < 1e-4);
        let j = |t: f64| temporal_jet(t, 1.5, alpha);
        let [_, t1, _] = j(s);
        prop_assert!((t1 - (j(s + h)[0] - j(s - h)[0]) / (2.0 * h)).abs() < 1e-5);
    }

    #[test]
    fn polynomial_derivative_matches_difference(c in prop::collection::vec(-2.0f64..2.0, 4), x in point(2)) {
        let p = Poly::monomial(c[0], &[2, 1])
            + Poly::monomial(c[1], &[0, 3])
            + Poly::monomial(c[2], &[1, 0])
            + Poly::constant(2, c[3]);
        let h = 1e-6;
        let fd = (p.eval(&[x[0] + h, x[1]]) - p.eval(&[x[0] - h, x[1]])) / (2.0 * h);
        prop_assert!((p.deriv(0).eval(&x) - fd).abs() < 1e-6 * (1.0 + fd.abs()));
    }

    #[test]
    fn grid_field_round_trip(v in prop::collection::vec(-1e3f64..1e3, 125)) {
        let spec = GridSpec::dirichlet(&[1.0, 1.0, 1.0], &[0.5, 0.5, 0.5]).unwrap();
        prop_assert_eq!(spec.len(), 125);
        let f = GridField::from_values(&spec, v[..spec.len()].to_vec()).unwrap();
        let mut buf = Vec::new();
        f.write_to(&mut buf).unwrap();
        let g = GridField::read_from(buf.as_slice()).unwrap();
        prop_assert_eq!(f.values, g.values);
    }

    #[test]
    fn sweep_csv_round_trip(t in prop::collection::vec(0.01f64..1e4, 5), gap in 0.0f64..0.2) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        let records: Vec<LifespanRecord> = t
            .iter()
            .enumerate()
            .map(|(i, &t)| LifespanRecord {
                kind: Kind::Hyperbolic,
                p: 1.4,
                amplitude: 0.01 * 2f64.powi(i as i32),
                blew_up: true,
                t_measured: t,
                refinement_pair: (t, t),
                refinement_gap: gap,
                boundary_contaminated: false,
                usable: gap <= 0.05,
            })
            .collect();
        write_sweep_csv(&path, &records).unwrap();
        let rows = read_sweep_csv(&path).unwrap();
        for (row, rec) in rows.iter().zip(&records) {
            let back = row.to_record(0.05);
            prop_assert_eq!(back.t_measured, rec.t_measured);
            prop_assert_eq!(back.usable, rec.usable);
        }
    }
}
