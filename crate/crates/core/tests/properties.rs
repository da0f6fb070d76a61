mod common;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, Array3};
use proptest::prelude::*;
use shl::codebook::{self, Assignment, Codebook, DecisionMatrix};
use shl::evalkit::{hamming, pr_curve, topk_precision};
use shl::kernels::{build_bank, combined_kernel, kernel_eval, KernelSpec};
use shl::mkl::update_theta;
use shl::svm::{self, SvmProblem};
use shl::CodeDatabase;

fn code(bits: usize) -> impl Strategy<Value = Vec<i8>> {
    prop::collection::vec(prop::bool::ANY.prop_map(|b| if b { 1i8 } else { -1 }), bits)
}

fn spec() -> impl Strategy<Value = KernelSpec> {
    prop_oneof![
        Just(KernelSpec::NormalizedLinear),
        (1u32..4, 0.0f64..2.0).prop_map(|(d, b)| KernelSpec::polynomial(d, b)),
        (0.05f64..5.0).prop_map(KernelSpec::gaussian),
    ]
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-3.0f64..3.0, rows * cols)
        .prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hamming_is_a_metric(a in code(9), b in code(9), c in code(9)) {
        let ab = hamming(&a, &b).unwrap();
        prop_assert_eq!(ab, hamming(&b, &a).unwrap());
        prop_assert_eq!(hamming(&a, &a).unwrap(), 0);
        prop_assert!(ab <= 9);
        prop_assert!(hamming(&a, &c).unwrap() <= ab + hamming(&b, &c).unwrap());
    }

    #[test]
    fn hamming_never_exceeds_surrogate(f in prop::collection::vec(-4.0f64..4.0, 1..12), seed in any::<u64>()) {
        let mu: Vec<i8> = f.iter().enumerate().map(|(i, _)| if (seed >> (i % 64)) & 1 == 1 { 1 } else { -1 }).collect();
        let h: Vec<i8> = f.iter().map(|&v| shl::sign(v)).collect();
        prop_assert!(hamming(&h, &mu).unwrap() as f64 <= codebook::dbar(&f, &mu).unwrap());
    }

    #[test]
    fn kernels_are_symmetric_and_bounded(s in spec(), x in matrix(2, 4)) {
        let a = kernel_eval(&s, x.row(0), x.row(1)).unwrap();
        let b = kernel_eval(&s, x.row(1), x.row(0)).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
        prop_assert!(a.is_finite() && a.abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn gram_matrices_are_psd_and_pointwise(s in spec(), x in matrix(10, 3)) {
        let bank = build_bank(std::slice::from_ref(&s), x.view()).unwrap();
        let g = bank.gram(0);
        for i in 0..10 {
            for j in 0..10 {
                prop_assert!((g[[i, j]] - g[[j, i]]).abs() <= 1e-12);
                let k = kernel_eval(&s, x.row(i), x.row(j)).unwrap();
                prop_assert!((g[[i, j]] - k).abs() <= 1e-12);
            }
        }
        let m = DMatrix::from_fn(10, 10, |i, j| g[[i, j]]);
        prop_assert!(SymmetricEigen::new(m).eigenvalues.min() >= -1e-8);
    }

    #[test]
    fn combined_kernel_is_linear_in_theta(x in matrix(6, 2), t1 in prop::collection::vec(0.0f64..1.0, 3), t2 in prop::collection::vec(0.0f64..1.0, 3)) {
        let specs = [KernelSpec::NormalizedLinear, KernelSpec::polynomial(2, 1.0), KernelSpec::gaussian(1.0)];
        let bank = build_bank(&specs, x.view()).unwrap();
        let sum: Vec<f64> = t1.iter().zip(&t2).map(|(a, b)| a + b).collect();
        let lhs = combined_kernel(&bank, &sum).unwrap();
        let rhs = combined_kernel(&bank, &t1).unwrap() + combined_kernel(&bank, &t2).unwrap();
        for (a, b) in lhs.iter().zip(rhs.iter()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn svm_solution_is_feasible_and_weakly_dual(x in matrix(10, 2), labels in prop::collection::vec(prop::bool::ANY, 10), cost in 0.5f64..20.0) {
        let y: Vec<f64> = labels.iter().map(|&b| if b { 1.0 } else { -1.0 }).collect();
        let bank = build_bank(&[KernelSpec::gaussian(1.0)], x.view()).unwrap();
        let k = bank.gram(0).clone();
        let c = vec![cost; 10];
        let problem = SvmProblem::new(k.view(), &y, &c).unwrap();
        let sol = svm::solve(&problem, 1e-6, svm::DEFAULT_MAX_PASSES).unwrap();
        let balance: f64 = sol.alpha.iter().zip(&y).map(|(a, y)| a * y).sum();
        prop_assert!(balance.abs() <= 1e-8);
        prop_assert!(sol.alpha.iter().all(|&a| (0.0..=cost).contains(&a)));
        let primal = svm::primal_objective(&problem, &sol).unwrap();
        prop_assert!(sol.dual_objective <= primal + 1e-6);
    }

    #[test]
    fn svm_dual_grows_with_cost(x in matrix(8, 2), labels in prop::collection::vec(prop::bool::ANY, 8), cost in 0.1f64..5.0) {
        let mut y: Vec<f64> = labels.iter().map(|&b| if b { 1.0 } else { -1.0 }).collect();
        y[0] = 1.0;
        y[1] = -1.0;
        let bank = build_bank(&[KernelSpec::gaussian(0.7)], x.view()).unwrap();
        let k = bank.gram(0).clone();
        let small = vec![cost; 8];
        let large = vec![2.0 * cost; 8];
        let a = svm::solve(&SvmProblem::new(k.view(), &y, &small).unwrap(), 1e-7, 10_000).unwrap();
        let b = svm::solve(&SvmProblem::new(k.view(), &y, &large).unwrap(), 1e-7, 10_000).unwrap();
        prop_assert!(b.dual_objective >= a.dual_objective - 1e-6);
    }

    #[test]
    fn mkl_update_properties(norms in prop::collection::vec(0.001f64..100.0, 2..8), p in 1.1f64..4.0, scale in 0.001f64..1000.0) {
        let (w, _) = update_theta(&norms, p).unwrap();
        prop_assert!(w.theta.iter().all(|&t| t >= 0.0));
        prop_assert!((w.p_norm() - 1.0).abs() <= 1e-9);
        let scaled: Vec<f64> = norms.iter().map(|n| n * scale).collect();
        let (ws, _) = update_theta(&scaled, p).unwrap();
        for (a, b) in w.theta.iter().zip(&ws.theta) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
        for i in 0..norms.len() {
            for j in 0..norms.len() {
                if norms[i] > norms[j] {
                    prop_assert!(w.theta[i] >= w.theta[j]);
                }
            }
        }
    }

    #[test]
    fn prox_is_nonexpansive(v in prop::collection::vec(-2.0f64..2.0, 8), w in prop::collection::vec(-2.0f64..2.0, 8), eta in 0.01f64..3.0) {
        let (a1, b1) = codebook::prox_pair(&v[..4], &v[4..], eta).unwrap();
        let (a2, b2) = codebook::prox_pair(&w[..4], &w[4..], eta).unwrap();
        let out: f64 = a1.iter().chain(&b1).zip(a2.iter().chain(&b2)).map(|(x, y)| (x - y).powi(2)).sum();
        let inp: f64 = v.iter().zip(&w).map(|(x, y)| (x - y).powi(2)).sum();
        prop_assert!(out.sqrt() <= inp.sqrt() + 1e-12);
    }

    #[test]
    fn prox_matches_numeric_minimizer(v in prop::collection::vec(-1.0f64..1.0, 6), eta in 0.01f64..2.0) {
        let (a, b) = codebook::prox_pair(&v[..3], &v[3..], eta).unwrap();
        let (oa, ob) = common::prox_oracle(&v[..3], &v[3..], eta);
        for (x, y) in a.iter().chain(&b).zip(oa.iter().chain(&ob)) {
            prop_assert!((x - y).abs() <= 1e-5);
        }
    }

    #[test]
    fn assignment_is_optimal(f in matrix(6, 4), mu in prop::collection::vec(-1.0f64..1.0, 2 * 2 * 4), labels in prop::collection::vec(prop::option::of(0usize..2), 6)) {
        let cb = Codebook::new(Array3::from_shape_vec((2, 2, 4), mu).unwrap()).unwrap();
        let dm = DecisionMatrix::new(f.clone()).unwrap();
        let a = codebook::assign(&dm, &cb, &labels).unwrap();
        let row = |n: usize| f.row(n).to_vec();
        for (n, label) in labels.iter().enumerate() {
            let (c, s) = a.get(n);
            if let Some(l) = *label {
                prop_assert_eq!(c, l);
            }
            let chosen = codebook::dbar(&row(n), &cb.quantized_codeword(c, s)).unwrap();
            let classes: Vec<usize> = match *label { Some(l) => vec![l], None => vec![0, 1] };
            for &cc in &classes {
                for ss in 0..2 {
                    let other = codebook::dbar(&row(n), &cb.quantized_codeword(cc, ss)).unwrap();
                    prop_assert!(chosen <= other);
                }
            }
        }
    }

    #[test]
    fn single_codeword_update_is_exact(f in matrix(7, 3), classes in prop::collection::vec(0usize..3, 7)) {
        let dm = DecisionMatrix::new(f.clone()).unwrap();
        let a = Assignment { class: classes.clone(), slot: vec![0; 7] };
        let (cb, _) = codebook::optimize_codewords_single(&dm, &a, 3, 3).unwrap();
        let ours = codebook::surrogate_loss(&dm, &cb, &a).unwrap();
        let best = common::exhaustive_single_codebook(f.view(), &classes, 3);
        prop_assert!((ours - best).abs() <= 1e-12);
    }

    #[test]
    fn codeword_update_never_increases_objective(f in matrix(8, 3), mu in prop::collection::vec(-1.0f64..1.0, 2 * 3 * 3), lambda2 in 0.0f64..10.0) {
        let cb = Codebook::new(Array3::from_shape_vec((2, 3, 3), mu).unwrap()).unwrap();
        let dm = DecisionMatrix::new(f).unwrap();
        let a = Assignment { class: (0..8).map(|i| i % 2).collect(), slot: (0..8).map(|i| i % 3).collect() };
        let before = codebook::codeword_objective(&dm, &a, &cb, lambda2).unwrap();
        let out = codebook::optimize_codewords(&dm, &a, &cb, lambda2, 0.1, 20).unwrap();
        let after = codebook::codeword_objective(&dm, &a, &out.codebook, lambda2).unwrap();
        prop_assert!(after <= before + 1e-12);
    }

    #[test]
    fn random_codebooks_are_distinct(classes in 1usize..5, slots in 1usize..3, bits in 3usize..10, seed in any::<u64>()) {
        let cb = Codebook::random(classes, slots, bits, seed).unwrap();
        for c in 0..classes {
            for o in 0..classes {
                if c == o { continue; }
                for s in 0..slots {
                    for t in 0..slots {
                        prop_assert_ne!(cb.quantized_codeword(c, s), cb.quantized_codeword(o, t));
                    }
                }
            }
        }
    }

    #[test]
    fn topk_ignores_database_order(seed in any::<u64>()) {
        // distinct distances: database codes at Hamming distance 0..=6 from the query
        let bits = 6;
        let q = vec![1i8; bits];
        let mut rows: Vec<(Vec<i8>, usize)> = (0..=bits)
            .map(|d| ((0..bits).map(|i| if i < d { -1 } else { 1 }).collect(), (d * 7 + seed as usize) % 3))
            .collect();
        let query = CodeDatabase::new(vec![q], vec![1]).unwrap();
        let db = |rows: &[(Vec<i8>, usize)]| CodeDatabase::new(rows.iter().map(|r| r.0.clone()).collect(), rows.iter().map(|r| r.1).collect()).unwrap();
        let before: Vec<f64> = (1..=7).map(|k| topk_precision(&query, &db(&rows), k, false).unwrap()).collect();
        let shift = (seed % 7) as usize;
        rows.rotate_left(shift);
        rows.reverse();
        let after: Vec<f64> = (1..=7).map(|k| topk_precision(&query, &db(&rows), k, false).unwrap()).collect();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn pr_recall_is_monotone(codes in prop::collection::vec(code(5), 2..15), labels in prop::collection::vec(0usize..2, 15)) {
        let n = codes.len();
        let mut labels = labels[..n].to_vec();
        labels[0] = 0;
        labels[1] = 1;
        let db = CodeDatabase::new(codes.clone(), labels.clone()).unwrap();
        let pr = pr_curve(&db, &db, false).unwrap();
        prop_assert_eq!(pr.len(), 6);
        prop_assert!(pr.windows(2).all(|w| w[1].recall >= w[0].recall));
        prop_assert!((pr[5].recall - 1.0).abs() <= 1e-12);
        prop_assert!(pr.iter().all(|p| p.precision.is_none_or(|v| (0.0..=1.0).contains(&v))));
    }
}
