//! Solves a small weighted binary SVM dual with the SMO solver and reports
//! the duality gap.
//!
//! ```text
//! cargo run --example svm_dual
//! ```

use ndarray::array;
use shl::kernels::{build_bank, KernelSpec};
use shl::svm::{self, SvmProblem};

fn main() -> shl::Result<()> {
    let x = array![[0.0, 0.0], [0.3, 0.1], [0.1, 0.4], [2.0, 2.0], [2.2, 1.7], [1.6, 2.3], [1.0, 1.1]];
    let y = [1.0, 1.0, 1.0, -1.0, -1.0, -1.0, 1.0];
    let cost = [10.0, 10.0, 10.0, 10.0, 10.0, 10.0, 2.0];

    let bank = build_bank(&[KernelSpec::gaussian(1.0)], x.view())?;
    let problem = SvmProblem::new(bank.gram(0).view(), &y, &cost)?;
    let solution = svm::solve(&problem, svm::DEFAULT_TOL, svm::DEFAULT_MAX_PASSES)?;
    let primal = svm::primal_objective(&problem, &solution)?;
    let f = svm::decision_values(&solution, &y, bank.gram(0).view())?;

    println!("status          {:?} after {} iterations", solution.status, solution.iterations);
    println!("alpha           {:.4?}", solution.alpha);
    println!("beta            {:.4}", solution.beta);
    println!("support         {:?}", solution.support);
    println!("dual objective  {:.6}", solution.dual_objective);
    println!("primal          {:.6}", primal);
    println!("gap             {:.2e}", primal - solution.dual_objective);
    for (i, v) in f.iter().enumerate() {
        println!("f(x{i}) = {v:+.4}  label {:+}", y[i]);
    }
    Ok(())
}
