//! Benchmark instances for the `poissonpr` solvers.

use std::sync::Arc;

use poissonpr::eval::initialize;
use poissonpr::{phantom, CanonicalDftSpec, FieldTag, ForwardModel, MaskSampling, Objective, SignalVector};

/// A calibrated model with simulated counts and a spectral initialization.
pub struct Instance {
    pub truth: SignalVector,
    pub objective: Objective,
    pub x0: SignalVector,
    pub field: FieldTag,
}

fn finish(mut model: ForwardModel, truth: SignalVector, seed: u64) -> Instance {
    model.calibrate_scale(truth.values(), 0.25).expect("positive intensity");
    let y = model.simulate_poisson(truth.values(), seed).expect("valid").as_f64();
    let field = truth.field();
    let x0 = initialize(&model, &y, field, 100, seed).expect("valid").with_dims(truth.dims());
    Instance {
        truth,
        objective: Objective::poisson(Arc::new(model), y).expect("valid"),
        x0,
        field,
    }
}

/// Blocks phantom of length `n` seen through an `m x n` Gaussian matrix.
pub fn gaussian(n: usize, m: usize, seed: u64) -> Instance {
    let model = ForwardModel::gaussian_random(m, n, seed)
        .and_then(|f| f.with_uniform_background(0.1))
        .expect("valid");
    finish(model, phantom::blocks(n), seed)
}

/// Blocks phantom of length `n` with `masks` masked DFTs.
pub fn masked_dft(n: usize, masks: usize, seed: u64) -> Instance {
    let model = ForwardModel::masked_dft_random(n, masks, MaskSampling::Bernoulli, seed)
        .and_then(|f| f.with_uniform_background(0.1))
        .expect("valid");
    finish(model, phantom::blocks(n), seed)
}

/// `side x side` disk image with a disk reference of the same size.
pub fn canonical_dft(side: usize, seed: u64) -> Instance {
    let reference = phantom::disk(side, side).values().iter().map(|z| z.re).collect();
    let model = ForwardModel::canonical_dft(CanonicalDftSpec::with_defaults((side, side), reference, side))
        .and_then(|f| f.with_uniform_background(0.1))
        .expect("valid");
    finish(model, phantom::disk(side, side), seed)
}
