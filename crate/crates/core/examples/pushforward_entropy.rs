//! Entropy of a pushforward is the base entropy plus the mean log-determinant,
//! and the pushforward density integrates to one.

use vpg_core::klengine::simpson;
use vpg_core::numcore::RngStream;
use vpg_core::transform::{entropy_of_pushforward, pushforward_logpdf, AffineTransform, BaseDensity, InvertibleTransform};

fn main() -> vpg_core::Result<()> {
    let mut rng = RngStream::new(1, 0);
    let t = AffineTransform::from_sigma(vec![0.5, -1.0, 2.0], &[0.3, 1.0, 2.5])?;
    let base = BaseDensity::standard_normal(3);

    let n = 10_000;
    let neg_logq: Vec<f64> = (0..n)
        .map(|_| {
            let theta = t.forward(&base.sample(&mut rng), None)?;
            Ok(-pushforward_logpdf(&t, &base, &theta, None)?)
        })
        .collect::<vpg_core::Result<_>>()?;
    let mc = neg_logq.iter().sum::<f64>() / n as f64;
    let (via_logdet, _) = entropy_of_pushforward(&t, &base, n, None, &mut rng)?;
    println!("H(q0) + E[log det] = {via_logdet:.4}");
    println!("-E[log q]          = {mc:.4}  (Monte Carlo, n = {n})");

    let t1 = AffineTransform::from_sigma(vec![1.5], &[0.7])?;
    let b1 = BaseDensity::standard_normal(1);
    let mass = simpson(|x| pushforward_logpdf(&t1, &b1, &[x], None).map_or(0.0, f64::exp), -10.0, 12.0, 2000);
    println!("1-D pushforward mass by quadrature: {mass:.8}");
    Ok(())
}
