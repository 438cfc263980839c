//! Analytic gradients against central finite differences.

use vpg_core::gradcheck::{run_all, GradcheckConfig};

fn main() -> vpg_core::Result<()> {
    let cfg = GradcheckConfig::default();
    for r in run_all(&cfg)? {
        println!("{:<14} {} cases  worst relative error {:.2e}  {}", r.name, r.cases, r.worst, if r.passed() { "ok" } else { "FAIL" });
    }
    Ok(())
}
