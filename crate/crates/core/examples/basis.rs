//! Cubic B-splines on the unit interval: evaluation, the roughness penalty
//! and the functional design row of a ring-measured exposure.

use std::sync::Arc;

use funbuffer::basis::{build_basis, functional_design_row, roughness_matrix, BasisSpec};
use funbuffer::survdata::RingExposure;

fn main() -> funbuffer::error::Result<()> {
    let h = build_basis(BasisSpec::uniform(3, 8, 0.0, 1.0))?;
    println!("{} functions on {} intervals", h.n_basis(), h.n_intervals());

    for s in [0.0, 0.13, 0.5, 0.97, 1.0] {
        let (first, vals) = h.nonzero(s);
        let total: f64 = vals.iter().sum();
        println!("s = {s:.2}: B_{first}..B_{} nonzero, sum {total:.15}", first + vals.len() - 1);
    }

    let pen = roughness_matrix(&h)?;
    let ones = vec![1.0; h.n_basis()];
    println!("rank J = {} of {}, J-norm of a constant = {:.2e}", pen.rank(), h.n_basis(), pen.quad(&ones));

    // exposure measured on five rings, linear in between
    let radii: Arc<[f64]> = vec![0.0, 0.1, 0.3, 0.6, 1.0].into();
    let x = RingExposure::new(radii, vec![0.9, 0.7, 0.6, 0.4, 0.4])?;
    let row = functional_design_row(&h, &x)?;
    println!("design row int x(s) B_k(s) ds:");
    for (k, v) in row.iter().enumerate() {
        println!("  k = {k:2}  {v:.6}");
    }
    // the row sums to int x because the basis is a partition of unity
    println!("sum {:.6} = int x {:.6}", row.sum(), h.integrate(|s| funbuffer::basis::Exposure::value(&x, s)));
    Ok(())
}
