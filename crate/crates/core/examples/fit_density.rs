//! Fit an affine flow to a Gaussian and to a two-component mixture by
//! descending KL(q || p).

use vpg_core::klengine::{fit_density, quadrature_kl_1d, DiagGaussian, FitConfig, GaussianMixture, Target};
use vpg_core::numcore::RngStream;
use vpg_core::transform::AffineTransform;

fn main() -> vpg_core::Result<()> {
    let target = DiagGaussian::new(vec![1.0, -2.0], vec![2.0, 0.5])?;
    let cfg = FitConfig {
        steps: 3000,
        step_size: 0.05,
        n_particles: 16,
        final_lr_fraction: 0.01,
        ..FitConfig::default()
    };
    let fit = fit_density(&AffineTransform::identity(2), &Target::density(target, 1.0)?, &cfg, &mut RngStream::new(0, 0))?;
    println!("gaussian target  mu [1, -2]  sigma [2, 0.5]");
    println!("fitted           mu {:.3?}  sigma {:.3?}", fit.transform.mu(), fit.transform.sigma());

    let mixture = GaussianMixture::new(
        vec![0.7, 0.3],
        vec![DiagGaussian::new(vec![0.0], vec![1.0])?, DiagGaussian::new(vec![2.0], vec![1.0])?],
    )?;
    let cfg = FitConfig {
        steps: 5000,
        step_size: 0.02,
        n_particles: 8,
        final_lr_fraction: 0.05,
        ..FitConfig::default()
    };
    let fit = fit_density(&AffineTransform::identity(1), &Target::density(mixture.clone(), 1.0)?, &cfg, &mut RngStream::new(0, 1))?;
    for k in [0, 500, 1000, 2500, 5000] {
        println!("step {k:>5}  KL estimate {:.4} (se {:.4})", fit.kl[k], fit.kl_se[k]);
    }
    let kl = quadrature_kl_1d(&fit.transform, &mixture, 1.0, -12.0, 14.0, 4000)?;
    println!("mixture: mu {:.3}  sigma {:.3}  quadrature KL {kl:.4} nats", fit.transform.mu()[0], fit.transform.sigma()[0]);
    Ok(())
}
