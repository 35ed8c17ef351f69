//! Closed-form Gaussian KL, moment-matched batch alignment and a
//! finite-difference check of its gradient.
//!
//!     cargo run --example kl_alignment

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xplat3d::nnalign::gradcheck::finite_difference_check;
use xplat3d::nnalign::losses::{batch_kl_alignment, kl_gaussian, GaussianParams};

fn random_gaussian(dim: usize, rng: &mut impl Rng) -> GaussianParams {
    GaussianParams::new(
        (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
        (0..dim).map(|_| rng.random_range(-0.5..0.5)).collect(),
    )
}

fn main() -> xplat3d::Result<()> {
    let p = GaussianParams::new(vec![0.0], vec![0.0]);
    let q = GaussianParams::new(vec![1.0], vec![0.0]);
    println!("KL(N(0,1) || N(1,1)) = {}", kl_gaussian(&p, &q)?);
    println!("KL(p || p) = {}", kl_gaussian(&p, &p)?);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dim = 4;
    let source: Vec<GaussianParams> = (0..6).map(|_| random_gaussian(dim, &mut rng)).collect();
    let target: Vec<GaussianParams> = (0..5).map(|_| random_gaussian(dim, &mut rng)).collect();
    let (kl, grads) = batch_kl_alignment(&source, &target)?;
    println!("batch KL(source || target) = {kl:.6}");

    // flatten target (mu, log_sigma) pairs into one parameter vector
    let flat: Vec<f64> = target.iter().flat_map(|g| g.mu.iter().chain(&g.log_sigma).copied()).collect();
    let analytic: Vec<f64> = grads.iter().flat_map(|g| g.mu.iter().chain(&g.log_sigma).copied()).collect();
    let unflatten = |x: &[f64]| -> Vec<GaussianParams> {
        x.chunks(2 * dim)
            .map(|c| GaussianParams::new(c[..dim].to_vec(), c[dim..].to_vec()))
            .collect()
    };
    let report = finite_difference_check(
        |x| batch_kl_alignment(&source, &unflatten(x)).unwrap().0,
        &flat,
        &analytic,
        20,
        &mut rng,
    )?;
    println!(
        "gradient check over {} coordinates: max relative error {:.2e}",
        report.checked, report.max_rel_error
    );
    Ok(())
}
