mod support;

use support::gradcheck::{max_relative_error, TOL};
use wavereg::similarity::{FieldMode, SimilarityKind};
use wavereg::volume::Dims;
use wavereg::wavelet::WaveletKind;

#[test]
fn plain_mode_gradients() {
    let mut seed = 0;
    for kind in [SimilarityKind::Mse, SimilarityKind::Ncc] {
        for wavelet in [WaveletKind::Haar, WaveletKind::Db2] {
            for dims in [Dims::cube(8), Dims::new(16, 8, 16)] {
                seed += 1;
                let rel = max_relative_error(seed, dims, kind, FieldMode::Displacement, wavelet);
                assert!(rel < TOL, "{kind} {wavelet} {dims}: {rel:.2e}");
            }
        }
    }
}

#[test]
fn diffeomorphic_mode_gradients() {
    let mut seed = 100;
    for kind in [SimilarityKind::Mse, SimilarityKind::Ncc] {
        for wavelet in [WaveletKind::Haar, WaveletKind::Db2] {
            for dims in [Dims::cube(8), Dims::cube(16)] {
                seed += 1;
                let rel = max_relative_error(seed, dims, kind, FieldMode::Velocity { steps: 7 }, wavelet);
                assert!(rel < TOL, "{kind} {wavelet} {dims}: {rel:.2e}");
            }
        }
    }
}
