//! Property tests for the invariants of each module.

mod common;

use certify::expr::{BinOp, Func, Node};
use certify::linalg::{loewner_geq, spd_sqrt, spectral_norm};
use certify::{
    chol_sample, composite_q, empirical_w1_detailed, joint_approx, lift_g, parse_expr, predict,
    update, w1_centered_bound, w1_upper_w2, w2_gaussian, BoundAnalysis, BoundMode, ExprAst,
    Gaussian, QuadratureScheme, SpdMatrix, VectorFunction,
};
use common::{fd_error, finite_difference, random_affine, random_smooth, random_spd, rng};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn node(arity: usize) -> impl Strategy<Value = Node> {
    let leaf = prop_oneof![
        (0.0f64..100.0).prop_map(Node::Const),
        (0..arity).prop_map(Node::Var),
    ];
    leaf.prop_recursive(4, 32, 2, |inner| {
        let op = prop_oneof![
            Just(BinOp::Add),
            Just(BinOp::Sub),
            Just(BinOp::Mul),
            Just(BinOp::Div),
            Just(BinOp::Pow),
        ];
        prop_oneof![
            inner.clone().prop_map(|a| Node::Neg(Box::new(a))),
            (op, inner.clone(), inner.clone()).prop_map(|(op, a, b)| Node::binary(op, a, b)),
            (proptest::sample::select(Func::ALL.to_vec()), inner)
                .prop_map(|(f, a)| Node::Call(f, Box::new(a))),
        ]
    })
}

fn point(arity: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-2.0f64..2.0, arity)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn display_then_parse_is_identity(tree in node(3)) {
        let ast = ExprAst::new(tree, 3).unwrap();
        let reparsed = parse_expr(&ast.to_string(), 3).unwrap();
        prop_assert_eq!(reparsed, ast);
    }

    #[test]
    fn dual_value_matches_plain_evaluation(tree in node(3), x in point(3)) {
        let f = VectorFunction::new(vec![ExprAst::new(tree, 3).unwrap()]).unwrap();
        // points outside a function's domain are not of interest here
        let (Ok(plain), Ok(duals)) = (f.eval_value(&x), f.eval_dual2(&x)) else {
            return Ok(());
        };
        prop_assert_eq!(plain[0].to_bits(), duals[0].value().to_bits());
        let h = duals[0].hessian();
        for i in 0..3 {
            for j in 0..3 {
                prop_assert_eq!(h[(i, j)].to_bits(), h[(j, i)].to_bits());
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn smooth_model_derivatives_match_differences(seed in any::<u64>(), x in point(6)) {
        let model = random_smooth(&mut rng(seed));
        let g = lift_g(&model);
        let x = &x[..g.in_dim().min(x.len())];
        prop_assume!(x.len() == g.in_dim());
        for (k, d) in g.eval_dual2(x).unwrap().iter().enumerate() {
            let (fd_grad, fd_hess) = finite_difference(&g, k, x);
            for (a, b) in d.gradient().iter().zip(&fd_grad) {
                prop_assert!(fd_error(*a, *b) < 1e-5, "gradient {} vs {}", a, b);
            }
            for (a, b) in d.hessian().iter().zip(fd_hess.iter()) {
                prop_assert!(fd_error(*a, *b) < 1e-5, "hessian {} vs {}", a, b);
            }
        }
    }

    #[test]
    fn lifted_map_structure(seed in any::<u64>(), raw in proptest::collection::vec(-2.0f64..2.0, 8)) {
        let model = random_smooth(&mut rng(seed));
        let (n, m) = (model.state_dim(), model.meas_dim());
        let w = &raw[..2 * n + m];
        let (x1, x2, x3) = (&w[..n], &w[n..2 * n], &w[2 * n..]);
        let g = lift_g(&model);
        let z = g.eval_value(w).unwrap();
        let fx = model.f().eval_value(x1).unwrap();
        let mut q_in = x1.to_vec();
        q_in.extend_from_slice(x2);
        let q = composite_q(&model).eval_value(&q_in).unwrap();
        for i in 0..n {
            prop_assert_eq!(z[i], fx[i] + x2[i]);
        }
        for r in 0..m {
            prop_assert_eq!(z[n + r], q[r] + x3[r]);
        }

        // Jacobian blocks [[J_f, I, 0], [J_h J_f, J_h, I]] with J_h at f(x1) + x2
        let jf = model.f().jacobian(x1).unwrap();
        let x_pred: Vec<f64> = fx.iter().zip(x2).map(|(a, b)| a + b).collect();
        let jh = model.h().jacobian(&x_pred).unwrap();
        let mut want = DMatrix::zeros(n + m, 2 * n + m);
        want.view_mut((0, 0), (n, n)).copy_from(&jf);
        want.view_mut((0, n), (n, n)).fill_with_identity();
        want.view_mut((n, 0), (m, n)).copy_from(&(&jh * &jf));
        want.view_mut((n, n), (m, n)).copy_from(&jh);
        want.view_mut((n, 2 * n), (m, m)).fill_with_identity();
        let got = g.jacobian(w).unwrap();
        prop_assert!((&got - &want).abs().max() <= 1e-10 * want.abs().max().max(1.0));

        // Hessians: state rows only see x1, measurement rows never see x3
        let duals = g.eval_dual2(w).unwrap();
        for (k, d) in duals.iter().enumerate() {
            let h = d.hessian();
            for i in 0..2 * n + m {
                for j in 0..2 * n + m {
                    let outside = if k < n { i >= n || j >= n } else { i >= 2 * n || j >= 2 * n };
                    if outside {
                        prop_assert_eq!(h[(i, j)], 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn affine_models_have_zero_bounds(seed in any::<u64>()) {
        let model = random_affine(&mut rng(seed));
        let a = BoundAnalysis::compute(&model, &QuadratureScheme::gauss_hermite(3)).unwrap();
        prop_assert!(a.l4.hess_f <= 1e-12 && a.l4.hess_q <= 1e-12);
        for mode in BoundMode::ALL {
            prop_assert!(a.total(mode) <= 1e-6, "{:?} total {}", mode, a.total(mode));
        }
    }

    #[test]
    fn update_shrinks_covariance(seed in any::<u64>(), y in -3.0f64..3.0) {
        let model = random_smooth(&mut rng(seed));
        let scheme = QuadratureScheme::gauss_hermite(6);
        let pred = predict(&model, &scheme).unwrap();
        let joint = joint_approx(&model, &pred, &scheme).unwrap();
        let full = joint.cov_matrix();
        let scale = full.abs().max();
        prop_assert!(loewner_geq(&full, &DMatrix::zeros(full.nrows(), full.ncols()), 1e-10 * scale));
        let post = update(&joint, &DVector::from_element(model.meas_dim(), y)).unwrap();
        prop_assert!(loewner_geq(pred.cov().matrix(), post.cov().matrix(), 1e-10 * scale));
    }

    #[test]
    fn spd_square_root_squares_back(seed in any::<u64>(), d in 1usize..=10) {
        let m = random_spd(&mut rng(seed), d, 1e-3);
        let r = spd_sqrt(&m);
        let err = spectral_norm(&(r.matrix() * r.matrix() - m.matrix())).unwrap();
        prop_assert!(err <= 1e-10 * m.norm());
    }

    #[test]
    fn spectral_norm_of_transpose(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = DMatrix::from_fn(rows, cols, |_, _| r.random_range(-5.0..5.0));
        let (x, y) = (spectral_norm(&a).unwrap(), spectral_norm(&a.transpose()).unwrap());
        prop_assert!((x - y).abs() <= 1e-12 * x.max(1.0));
    }

    #[test]
    fn loewner_order_is_transitive(seed in any::<u64>()) {
        // integer matrices: c symmetric, b = c + P, a = b + Q with P, Q >= I
        let mut r = rng(seed);
        let mut int_psd = || {
            let v = DMatrix::from_fn(3, 3, |_, _| r.random_range(-3i32..=3) as f64);
            &v * v.transpose() + DMatrix::identity(3, 3)
        };
        let c = int_psd() - int_psd();
        let b = &c + int_psd();
        let a = &b + int_psd();
        prop_assert!(loewner_geq(&a, &b, 0.0) && loewner_geq(&b, &c, 0.0));
        prop_assert!(loewner_geq(&a, &c, 0.0));
    }

    #[test]
    fn sampling_is_a_pure_function(seed in any::<u64>(), count in 1usize..2000) {
        let g = Gaussian::new(DVector::from_vec(vec![1.0, -2.0]), random_spd(&mut rng(seed), 2, 0.1)).unwrap();
        prop_assert_eq!(chol_sample(&g, count, seed).unwrap(), chol_sample(&g, count, seed).unwrap());
    }

    #[test]
    fn w2_zero_on_equal_inputs(seed in any::<u64>(), d in 1usize..=4) {
        let mut r = rng(seed);
        let mean = DVector::from_fn(d, |_, _| r.random_range(-3.0..3.0));
        let g = Gaussian::new(mean, random_spd(&mut r, d, 0.05)).unwrap();
        prop_assert!(w2_gaussian(&g, &g).unwrap() <= 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn sampled_w1_respects_closed_form_bounds(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = Gaussian::new(DVector::zeros(2), random_spd(&mut r, 2, 0.1)).unwrap();
        let b = Gaussian::new(DVector::zeros(2), random_spd(&mut r, 2, 0.1)).unwrap();
        let bound = w1_upper_w2(&a, &b).unwrap().min(w1_centered_bound(&a, &b).unwrap());
        let w = empirical_w1_detailed(&chol_sample(&a, 512, seed).unwrap(), &chol_sample(&b, 512, seed ^ 1).unwrap())
            .unwrap();
        prop_assert!(w.distance <= bound + 3.0 * w.std_error, "{} vs {}", w.distance, bound);
    }
}

#[test]
fn spd_matrix_rejects_indefinite_input() {
    assert!(SpdMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
}
