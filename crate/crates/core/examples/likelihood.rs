//! The Breslow partial likelihood on a simulated dataset: value, gradient,
//! Hessian and the least-squares surrogate the solver iterates on.

use funbuffer::basis::{build_basis, BasisSpec};
use funbuffer::coxcore::{grad_hess, logpl, surrogate, CoxData};
use funbuffer::simulate::{Generator, Scenario, ScenarioConfig};
use nalgebra::DVector;

fn main() -> funbuffer::error::Result<()> {
    let gen = Generator::new(ScenarioConfig::new(Scenario::II, 300, 1))?;
    let sim = gen.generate_stream(0)?;
    let h = build_basis(BasisSpec::uniform(3, 6, 0.0, 1.0))?;
    let data = gen.design(&sim, &h)?;
    let cox = CoxData::new(&data)?;
    println!("n {}, {} events, {} coefficients", cox.n(), cox.events(), cox.m());

    let zero = DVector::zeros(cox.m());
    println!("l_n(0) = {:.6}", logpl(&cox, &zero));

    let (g, hess) = grad_hess(&cox, &zero);
    println!("|grad| = {:.4}, tr H = {:.4}", g.norm(), hess.trace());

    // one Newton step is the minimizer of the quadratic surrogate
    let s = surrogate(&cox, &zero, 0.0, None)?;
    let step = s.v.clone().qr().solve(&s.y).expect("full rank");
    println!("after one Newton step: l_n = {:.6}", logpl(&cox, &step));
    println!("theta after one step: {:?}", &step.as_slice()[cox.n_spline()..]);
    Ok(())
}
