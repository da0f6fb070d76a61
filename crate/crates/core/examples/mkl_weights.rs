//! Per-kernel RKHS norms of a trained SVM and the closed-form `lp` update of
//! the kernel weights, for several values of `p`.
//!
//! ```text
//! cargo run --example mkl_weights
//! ```

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shl::kernels::{build_bank, combined_kernel, KernelSpec};
use shl::mkl::{rkhs_norms, update_theta};
use shl::svm::{self, SvmProblem};
use shl::MklWeights;

fn main() -> shl::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 60;
    let x = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0));
    // a radial concept favours the narrow gaussian over the linear kernels
    let y: Vec<f64> = x
        .rows()
        .into_iter()
        .map(|r| if r[0] * r[0] + r[1] * r[1] < 0.5 { 1.0 } else { -1.0 })
        .collect();
    let cost = vec![10.0; n];
    let specs = KernelSpec::default_bank();
    let bank = build_bank(&specs, x.view())?;

    for p in [1.25, 2.0, 4.0] {
        let theta = MklWeights::uniform(bank.len(), p)?;
        let gram = combined_kernel(&bank, &theta.theta)?;
        let problem = SvmProblem::new(gram.view(), &y, &cost)?;
        let sol = svm::solve(&problem, svm::DEFAULT_TOL, svm::DEFAULT_MAX_PASSES)?;
        let norms = rkhs_norms(&sol.alpha, &y, &theta, &bank)?;
        let (next, status) = update_theta(&norms, p)?;
        println!("p = {p}  ({status:?}, |theta|_p = {:.6})", next.p_norm());
        for (spec, t) in specs.iter().zip(&next.theta) {
            println!("  {t:.4}  {spec:?}");
        }
        println!(
            "  regularizer {:.4} -> {:.4}",
            theta.regularizer(&norms),
            next.regularizer(&norms)
        );
    }
    Ok(())
}
