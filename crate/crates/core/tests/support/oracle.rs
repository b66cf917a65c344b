//! Dense-matrix oracles for the wavelet transform and the pyramid chain.
//!
//! The oracle materialises the banded analysis matrices `L` and `H`
//! (`n/2 x n`, rows shifted by two, wrapping circularly) and applies them
//! with explicit triple sums. Sub-band letters name the filter along D, W, H.

use wavereg::volume::Dims;
use wavereg::pyramid::{init_pyramid, CoefficientPyramid, Gate};
use wavereg::wavelet::{FilterBank, Subband};

pub type Matrix = Vec<Vec<f64>>;

pub fn analysis_matrix(taps: &[f64], n: usize) -> Matrix {
    let mut m = vec![vec![0.0; n]; n / 2];
    for (r, row) in m.iter_mut().enumerate() {
        for (k, &t) in taps.iter().enumerate() {
            row[(2 * r + k) % n] += t;
        }
    }
    m
}

pub struct Oracle {
    /// `[low, high]` for D, H and W.
    d: [Matrix; 2],
    h: [Matrix; 2],
    w: [Matrix; 2],
}

impl Oracle {
    pub fn new(fb: &FilterBank, full: Dims) -> Self {
        let pair = |n| [analysis_matrix(fb.low(), n), analysis_matrix(fb.high(), n)];
        Self { d: pair(full.d), h: pair(full.h), w: pair(full.w) }
    }

    /// Filters (D, W, H) selected by a label such as "lhl".
    fn select(&self, label: &str) -> (&Matrix, &Matrix, &Matrix) {
        let pick = |c: u8| (c == b'h') as usize;
        let b = label.as_bytes();
        (&self.d[pick(b[0])], &self.w[pick(b[1])], &self.h[pick(b[2])])
    }

    pub fn analyze(&self, x: &[f64], full: Dims, label: &str) -> Vec<f64> {
        let (md, mw, mh) = self.select(label);
        let half = full.map(|n| n / 2);
        let mut out = vec![0.0; half.len()];
        for i in 0..half.d {
            for j in 0..half.h {
                for l in 0..half.w {
                    let mut acc = 0.0;
                    for d in 0..full.d {
                        for h in 0..full.h {
                            let a = md[i][d] * mh[j][h];
                            if a == 0.0 {
                                continue;
                            }
                            for w in 0..full.w {
                                acc += a * mw[l][w] * x[full.index(d, h, w)];
                            }
                        }
                    }
                    out[half.index(i, j, l)] = acc;
                }
            }
        }
        out
    }

    /// Sum over the eight bands of the transposed products.
    pub fn synthesize(&self, bands: &[(String, Vec<f64>)], full: Dims) -> Vec<f64> {
        let half = full.map(|n| n / 2);
        let mut out = vec![0.0; full.len()];
        for (label, c) in bands {
            let (md, mw, mh) = self.select(label);
            for i in 0..half.d {
                for j in 0..half.h {
                    for l in 0..half.w {
                        let v = c[half.index(i, j, l)];
                        for d in 0..full.d {
                            for h in 0..full.h {
                                let a = v * md[i][d] * mh[j][h];
                                if a == 0.0 {
                                    continue;
                                }
                                for w in 0..full.w {
                                    out[full.index(d, h, w)] += a * mw[l][w];
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

pub const LABELS: [&str; 8] = ["lll", "llh", "lhl", "lhh", "hll", "hlh", "hhl", "hhh"];

pub fn random(rng: &mut rand_chacha::ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rand::Rng::gen_range(rng, -1.0..1.0)).collect()
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Standard multi-level inverse: the low band of each level is the
/// reconstruction of the level below.
pub fn multilevel_inverse(fb: &FilterBank, coarse: &[(String, Vec<f64>)], finer: &[Vec<(String, Vec<f64>)>], full: Dims) -> Vec<f64> {
    let levels = 1 + finer.len();
    let mut dims = full.map(|n| n >> (levels - 1));
    let mut low = Oracle::new(fb, dims).synthesize(coarse, dims);
    for highs in finer {
        dims = dims.map(|n| 2 * n);
        let mut bands = vec![("lll".to_string(), low)];
        bands.extend(highs.iter().cloned());
        low = Oracle::new(fb, dims).synthesize(&bands, dims);
    }
    low
}


/// Channel `c` of the field a pyramid with open gates `(0, 1)` should
/// describe: the standard three-level inverse of its coefficient tree.
pub fn pyramid_tree_inverse(p: &CoefficientPyramid, fb: &FilterBank, c: usize) -> Vec<f64> {
    let chan = |v: &[f64], n: usize| v[c * n..(c + 1) * n].to_vec();
    let n1 = p.phi1.dims().len();
    let coarse: Vec<(String, Vec<f64>)> =
        Subband::ALL.iter().map(|b| (b.label().to_string(), chan(p.phi1.band(*b), n1))).collect();
    let finer: Vec<Vec<(String, Vec<f64>)>> = [&p.res2, &p.res3]
        .iter()
        .map(|res| {
            let n = res.dims().len();
            Subband::HIGH.iter().enumerate().map(|(k, b)| (b.label().to_string(), chan(res.band(k), n))).collect()
        })
        .collect();
    multilevel_inverse(fb, &coarse, &finer, p.full_dims())
}

/// Pyramid with every coefficient drawn from `[-1, 1)` and gates `(0, 1)`.
pub fn random_open_pyramid(rng: &mut rand_chacha::ChaCha8Rng, full: Dims) -> CoefficientPyramid {
    let mut p = init_pyramid(full).unwrap();
    for b in Subband::ALL {
        let v = random(rng, p.phi1.band(b).len());
        p.phi1.band_mut(b).copy_from_slice(&v);
    }
    for k in 0..7 {
        let v = random(rng, p.res2.band(k).len());
        p.res2.band_mut(k).copy_from_slice(&v);
        let v = random(rng, p.res3.band(k).len());
        p.res3.band_mut(k).copy_from_slice(&v);
    }
    p.set_gates(Gate { a: 0.0, b: 1.0 });
    p
}
