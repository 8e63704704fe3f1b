//! Fresh-sample Monte-Carlo measurements of learned hypotheses.

use massart_core::distributions::MarginalSampler;
use massart_core::noise::MassartOracle;
use massart_core::stats::Estimate;
use massart_core::UnitVector;

use crate::error::{HarnessError, Result};

pub const MIN_MEASURE_SAMPLES: usize = 1000;

fn check_n(n: usize) -> Result<()> {
    if n < MIN_MEASURE_SAMPLES {
        return Err(HarnessError::config(
            "samples",
            format!("need at least {MIN_MEASURE_SAMPLES} samples (got {n})"),
        ));
    }
    Ok(())
}

/// `Pr[sign<h,x> != sign<target,x>]` over `n` fresh draws, with the binomial
/// standard error.
pub fn measure_disagreement(
    h: &UnitVector,
    target: &UnitVector,
    sampler: &mut MarginalSampler,
    n: usize,
) -> Result<Estimate> {
    check_n(n)?;
    if h.dim() != target.dim() || h.dim() != sampler.dim() {
        return Err(massart_core::Error::InvalidInput(format!(
            "dimension mismatch: h {}, target {}, marginal {}",
            h.dim(),
            target.dim(),
            sampler.dim()
        ))
        .into());
    }
    let mut x = vec![0.0; h.dim()];
    let mut hits = 0u64;
    for _ in 0..n {
        sampler.sample_into(&mut x);
        if h.predict(&x) != target.predict(&x) {
            hits += 1;
        }
    }
    Ok(Estimate::proportion(hits, n as u64))
}

/// Misclassification error of `h` on `n` fresh noisy examples.
pub fn measure_error(h: &UnitVector, oracle: &mut MassartOracle, n: usize) -> Result<Estimate> {
    check_n(n)?;
    let mut x = vec![0.0; oracle.dim()];
    let mut hits = 0u64;
    for _ in 0..n {
        let (y, _) = oracle.draw_into(&mut x);
        if h.predict(&x) != y {
            hits += 1;
        }
    }
    Ok(Estimate::proportion(hits, n as u64))
}
