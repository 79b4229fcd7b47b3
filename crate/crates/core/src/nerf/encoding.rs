//! Sinusoidal positional encoding.
//!
//! Each input component x expands to [x?, sin(2^j pi x), cos(2^j pi x)] for
//! j = 0..L-1, components interleaved per frequency block.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingConfig {
    /// Frequency count for positions.
    pub l_pos: usize,
    /// Frequency count for view directions.
    pub l_dir: usize,
    /// Prepend the raw input to the features.
    pub include_input: bool,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        EncodingConfig {
            l_pos: 10,
            l_dir: 4,
            include_input: true,
        }
    }
}

/// Feature length for a 3-vector at `levels` frequencies.
pub fn encoded_len(levels: usize, include_input: bool) -> usize {
    3 * (usize::from(include_input) + 2 * levels)
}

/// Encode `v` into `out` (length `encoded_len(levels, include_input)`).
pub fn encode_into(v: [f64; 3], levels: usize, include_input: bool, out: &mut [f64]) {
    debug_assert_eq!(out.len(), encoded_len(levels, include_input));
    let mut w = 0;
    if include_input {
        out[0] = v[0];
        out[1] = v[1];
        out[2] = v[2];
        w = 3;
    }
    for j in 0..levels {
        let freq = std::f64::consts::PI * (1u64 << j) as f64;
        for &x in &v {
            let (s, c) = (freq * x).sin_cos();
            out[w] = s;
            out[w + 1] = c;
            w += 2;
        }
    }
}

pub fn encode(v: [f64; 3], levels: usize, include_input: bool) -> Vec<f64> {
    let mut out = vec![0.0; encoded_len(levels, include_input)];
    encode_into(v, levels, include_input, &mut out);
    out
}

/// Jacobian d(feature_i)/d(v_j); each feature depends on one component.
/// Returned row-major, encoded_len x 3.
pub fn encode_jacobian(v: [f64; 3], levels: usize, include_input: bool) -> Vec<f64> {
    let n = encoded_len(levels, include_input);
    let mut jac = vec![0.0; n * 3];
    let mut w = 0;
    if include_input {
        for j in 0..3 {
            jac[j * 3 + j] = 1.0;
        }
        w = 3;
    }
    for lev in 0..levels {
        let freq = std::f64::consts::PI * (1u64 << lev) as f64;
        for (j, &x) in v.iter().enumerate() {
            let (s, c) = (freq * x).sin_cos();
            jac[w * 3 + j] = freq * c; // d sin / dx
            jac[(w + 1) * 3 + j] = -freq * s; // d cos / dx
            w += 2;
        }
    }
    jac
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn zero_input_gives_zero_sin_unit_cos() {
        let out = encode([0.0; 3], 2, true);
        assert_eq!(out.len(), 3 * (1 + 4));
        assert_eq!(&out[..3], &[0.0, 0.0, 0.0]);
        for block in out[3..].chunks(2) {
            assert_eq!(block[0], 0.0); // sin
            assert_eq!(block[1], 1.0); // cos
        }
    }

    #[test]
    fn length_formula() {
        assert_eq!(encoded_len(10, true), 63);
        assert_eq!(encoded_len(4, true), 27);
        assert_eq!(encoded_len(4, false), 24);
        assert_eq!(encode([0.1, 0.2, 0.3], 10, true).len(), 63);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut rng = Rng::seed_from(8);
        for _ in 0..10 {
            let v = [
                rng.uniform(-2.0, 2.0),
                rng.uniform(-2.0, 2.0),
                rng.uniform(-2.0, 2.0),
            ];
            let jac = encode_jacobian(v, 4, true);
            let n = encoded_len(4, true);
            let h = 1e-6;
            for j in 0..3 {
                let mut vp = v;
                vp[j] += h;
                let mut vm = v;
                vm[j] -= h;
                let fp = encode(vp, 4, true);
                let fm = encode(vm, 4, true);
                for i in 0..n {
                    let fd = (fp[i] - fm[i]) / (2.0 * h);
                    let an = jac[i * 3 + j];
                    let scale = an.abs().max(1.0);
                    assert!(
                        (fd - an).abs() / scale < 1e-6,
                        "feature {i} wrt {j}: fd={fd} an={an}"
                    );
                }
            }
        }
    }
}
