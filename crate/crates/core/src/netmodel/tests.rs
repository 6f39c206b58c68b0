use super::*;
use crate::poly::{AffineForm, Monomial};
use alloc::vec;
use proptest::prelude::*;

fn p(s: &str, dim: usize) -> Poly {
    Poly::parse(s, dim).unwrap()
}

fn example2() -> NetworkSpec {
    NetworkSpec::new(
        vec![p("-0.5*x1^3 - 1.5*x1^2 - x2", 2), p("3*x1 - x2", 2)],
        vec![p("x1", 2), p("x2 + 0.5*x2^3", 2)],
        vec![
            vec![2.0, -1.0, -1.0, 0.0],
            vec![-1.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, -1.0],
            vec![-1.0, 0.0, 0.0, 1.0],
        ],
        1.0,
        false,
    )
    .unwrap()
}

fn example1_verbatim() -> NetworkSpec {
    NetworkSpec::new(
        vec![p("x2", 2), p("0.45*(1 - x1^2)*x2 - 0.81*x1^2", 2)],
        vec![p("x1", 2), p("x2", 2)],
        vec![vec![4.0, -2.0, -2.0], vec![-1.0, 2.0, 1.0], vec![-3.0, 0.0, 3.0]],
        0.1,
        true,
    )
    .unwrap()
}

fn toy(n: usize) -> NetworkSpec {
    NetworkSpec::new(
        vec![Poly::zero(n); n],
        (0..n).map(|k| Poly::var(n, k)).collect(),
        vec![vec![1.0, -1.0], vec![-1.0, 1.0]],
        1.0,
        false,
    )
    .unwrap()
}

#[test]
fn laplacian_row_sums_are_checked_unless_exempt() {
    let rows = vec![vec![4.0, -2.0, -2.0], vec![-1.0, 2.0, 1.0], vec![-3.0, 0.0, 3.0]];
    let f = vec![p("x2", 2), p("-x1", 2)];
    let g = vec![p("x1", 2), p("x2", 2)];
    match NetworkSpec::new(f.clone(), g.clone(), rows.clone(), 0.1, false) {
        Err(NetError::RowSum { row: 1, sum }) => assert_eq!(sum, 2.0),
        other => panic!("{other:?}"),
    }
    assert!(NetworkSpec::new(f, g, rows, 0.1, true).is_ok());
}

#[test]
fn single_node_full_dynamics_is_f() {
    let f = vec![p("x2", 2), p("-x1 + x2^3", 2)];
    let spec = NetworkSpec::new(f.clone(), vec![p("x1", 2), p("x2", 2)], vec![vec![0.0]], 1.0, false).unwrap();
    assert_eq!(full_dynamics(&spec).unwrap(), f);
}

#[test]
fn example2_first_component() {
    let dyns = full_dynamics(&example2()).unwrap();
    let expected = p("-0.5*x1^3 - 1.5*x1^2 - x2 - 2*x1 + x3 + x5", 8);
    assert!(dyns[0].max_abs_diff(&expected) < 1e-15, "{}", dyns[0]);
    for d in &dyns {
        assert_eq!(d.evaluate(&[0.0; 8]).unwrap(), 0.0);
    }
}

#[test]
fn example1_pair_error_first_coordinate() {
    let e = error_dynamics(&example1_verbatim(), 0, 1).unwrap();
    let expected = p("x2 - x4 - 0.5*x1 + 0.4*x3 + 0.3*x5", 6);
    assert!(e[0].max_abs_diff(&expected) < 1e-15, "{}", e[0]);
}

#[test]
fn error_dynamics_rejects_bad_pairs() {
    let spec = example2();
    assert_eq!(error_dynamics(&spec, 2, 2), Err(NetError::SameNode(2)));
    assert!(matches!(error_dynamics(&spec, 0, 4), Err(NetError::NodeOutOfRange { .. })));
}

#[test]
fn identical_rows_leave_only_the_f_difference() {
    let f = vec![p("x1^2", 1)];
    let rows = vec![vec![1.0, -1.0, 0.0], vec![1.0, -1.0, 0.0], vec![0.0, -2.0, 2.0]];
    let spec = NetworkSpec::new(f, vec![p("x1", 1)], rows, 0.7, false).unwrap();
    let e = error_dynamics(&spec, 0, 1).unwrap();
    assert_eq!(e[0], p("x1^2 - x2^2", 3));
}

#[test]
fn toy_lie_derivative_of_squared_norm() {
    let spec = toy(2);
    let v = LinPoly::from_poly(&p("x1^2 + x2^2", 2));
    let lv = lie_derivative_pair(&v, &spec, 0, 1).unwrap().collapse(&[]);
    let expected = p("-4*((x1 - x3)^2 + (x2 - x4)^2)", 4);
    assert!(lv.max_abs_diff(&expected) < 1e-14, "{lv}");
}

#[test]
fn constant_v_has_zero_lie_derivative() {
    let spec = example2();
    let v = LinPoly::from_poly(&Poly::constant(2, 3.0));
    assert_eq!(lie_derivative_pair(&v, &spec, 0, 3).unwrap().num_terms(), 0);
    let v = LinPoly::from_poly(&Poly::constant(8, 3.0));
    assert_eq!(lie_derivative_full(&v, &spec).unwrap().num_terms(), 0);
}

#[test]
fn lie_derivative_rejects_wrong_dimension() {
    let v = LinPoly::from_poly(&Poly::constant(3, 1.0));
    assert!(matches!(lie_derivative_pair(&v, &example2(), 0, 1), Err(NetError::Dimension { .. })));
}

#[test]
fn lie_derivative_keeps_decision_variables_affine() {
    let spec = example2();
    let mons = Monomial::all_up_to(2, 2);
    let ids: Vec<usize> = (0..mons.len()).collect();
    let v = LinPoly::from_vars(2, &mons, &ids);
    let lv = lie_derivative_pair(&v, &spec, 1, 2).unwrap();
    assert!(lv.max_var().unwrap() < mons.len());
    // Collapsing at a unit vector picks out the Lie derivative of one monomial.
    for (k, m) in mons.iter().enumerate() {
        let mut vals = vec![0.0; mons.len()];
        vals[k] = 1.0;
        let single = LinPoly::from_poly(&Poly::from_terms(2, [(m.clone(), 1.0)]).unwrap());
        let direct = lie_derivative_pair(&single, &spec, 1, 2).unwrap().collapse(&[]);
        assert!(lv.collapse(&vals).max_abs_diff(&direct) < 1e-12);
    }
}

#[test]
fn region_requires_a_bounding_ball() {
    let spec = example2();
    let per_node: Vec<Poly> =
        (0..4).map(|i| p("1 - x1^2 - x2^2", 2).embed(8, &[2 * i, 2 * i + 1]).unwrap()).collect();
    let region = RegionSpec { state_ineqs: per_node.clone(), target: Target::Ball(0.1), variables: Variables::FullState };
    assert!(region.validate(&spec).is_ok());
    assert!((region.bounding_radius().unwrap() - 2.0).abs() < 1e-12);
    let bad = RegionSpec { state_ineqs: per_node[..3].to_vec(), ..region.clone() };
    assert_eq!(bad.validate(&spec), Err(NetError::Unbounded));
    let eps = RegionSpec { target: Target::Ball(-1.0), ..region };
    assert_eq!(eps.validate(&spec), Err(NetError::Epsilon(-1.0)));
}

#[test]
fn compiled_rhs_matches_symbolic() {
    let spec = example2();
    let dyns = full_dynamics(&spec).unwrap();
    let net = spec.compile();
    let x = [0.1, -0.3, 0.7, 0.2, -0.5, 0.4, 0.9, -0.8];
    let mut out = [0.0; 8];
    net.rhs(&x, &mut out, &mut RhsScratch::default());
    for k in 0..8 {
        assert!((out[k] - dyns[k].evaluate(&x).unwrap()).abs() < 1e-12);
    }
}

fn arb_poly(dim: usize) -> impl Strategy<Value = Poly> {
    proptest::collection::vec((proptest::collection::vec(0u32..3, dim), -2.0f64..2.0), 0..5)
        .prop_map(move |ts| Poly::from_terms(dim, ts.into_iter().map(|(e, c)| (Monomial::new(e), c))).unwrap())
}

fn arb_spec(zero_rows: bool) -> impl Strategy<Value = NetworkSpec> {
    (1usize..3, 2usize..4).prop_flat_map(move |(n, nodes)| {
        (
            proptest::collection::vec(arb_poly(n), n),
            proptest::collection::vec(arb_poly(n), n),
            proptest::collection::vec(proptest::collection::vec(-2.0f64..0.0, nodes), nodes),
            0.1f64..2.0,
        )
            .prop_map(move |(f, g, mut rows, c)| {
                for (i, row) in rows.iter_mut().enumerate() {
                    row[i] = 0.0;
                    let off: f64 = row.iter().sum();
                    row[i] = if zero_rows { -off } else { 1.5 - off };
                }
                NetworkSpec::new(f, g, rows, c, !zero_rows).unwrap()
            })
    })
}

proptest! {
    #[test]
    fn error_dynamics_are_antisymmetric(spec in prop_oneof![arb_spec(false), arb_spec(true)]) {
        let ij = error_dynamics(&spec, 0, 1).unwrap();
        let ji = error_dynamics(&spec, 1, 0).unwrap();
        for (a, b) in ij.iter().zip(&ji) {
            prop_assert!(a.max_abs_diff(&b.neg()) == 0.0);
        }
    }

    #[test]
    fn synchronized_states_move_together(spec in arb_spec(true), x in proptest::collection::vec(-1.0f64..1.0, 2)) {
        let dyns = full_dynamics(&spec).unwrap();
        let node = &x[..spec.n];
        let diag: Vec<f64> = (0..spec.nodes).flat_map(|_| node.iter().copied()).collect();
        for i in 0..spec.nodes {
            for k in 0..spec.n {
                let lhs = dyns[i * spec.n + k].evaluate(&diag).unwrap();
                let rhs = spec.f[k].evaluate(node).unwrap();
                prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
            }
        }
    }

    #[test]
    fn lie_derivative_is_linear(spec in arb_spec(true), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let n = spec.n;
        let v1 = LinPoly::from_poly(&Poly::ball(n, 1.0));
        let mons = Monomial::all_up_to(n, 3);
        let v2 = LinPoly::from_vars(n, &mons, &(0..mons.len()).collect::<Vec<_>>());
        let combo = v1.scale(a).add(&v2.scale(b)).unwrap();
        let lhs = lie_derivative_pair(&combo, &spec, 0, 1).unwrap();
        let rhs = lie_derivative_pair(&v1, &spec, 0, 1).unwrap().scale(a)
            .add(&lie_derivative_pair(&v2, &spec, 0, 1).unwrap().scale(b)).unwrap();
        let diff = lhs.sub(&rhs).unwrap();
        for (_, form) in diff.terms() {
            prop_assert!(form.constant_term().abs() < 1e-10);
            for (_, c) in form.coeffs() {
                prop_assert!(c.abs() < 1e-10);
            }
        }
    }

    #[test]
    fn lie_derivative_matches_finite_differences(x in proptest::collection::vec(-0.8f64..0.8, 8)) {
        let spec = example2();
        let v = p("1 - x1^2 - 0.5*x1*x2 - 2*x2^2 + 0.3*x1^3 + x1^2*x2^2", 2);
        let lv = lie_derivative_pair(&LinPoly::from_poly(&v), &spec, 0, 2).unwrap().collapse(&[]);
        let analytic = lv.evaluate(&x).unwrap();
        let net = spec.compile();
        let mut dx = [0.0; 8];
        net.rhs(&x, &mut dx, &mut RhsScratch::default());
        let h = 1e-5;
        let at = |s: f64| {
            let y: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + s * d).collect();
            v.evaluate(&spec.pair_error(&y, 0, 2)).unwrap()
        };
        let fd = (at(h) - at(-h)) / (2.0 * h);
        prop_assert!((fd - analytic).abs() <= 1e-4 * analytic.abs().max(1.0), "{fd} vs {analytic}");
    }
}

#[test]
fn scaled_decision_variable_survives_substitution() {
    let mut v = LinPoly::zero(1);
    v.add_term(Monomial::var(1, 0), &AffineForm::var(0, 1.0), 2.0);
    let lv = lie_derivative_pair(&v, &toy(1), 0, 1).unwrap();
    assert_eq!(lv.collapse(&[1.0]), p("-4*x1 + 4*x2", 2));
}
