//! Hue-periodic loss and the combined HSV objective.

/// Cyclic hue distance: min(|d|, 1 - |d|) for d = pred - gt. Range [0, 0.5].
pub fn hue_loss(pred: f64, gt: f64) -> f64 {
    let d = (pred - gt).abs();
    d.min(1.0 - d)
}

/// d(hue_loss)/d(pred). The tie |d| = 0.5 resolves to the non-wrapped
/// branch; d = 0 sits at the minimum and returns 0.
pub fn hue_loss_grad(pred: f64, gt: f64) -> f64 {
    let delta = pred - gt;
    let d = delta.abs();
    if d == 0.0 {
        0.0
    } else if d <= 0.5 {
        delta.signum()
    } else {
        -delta.signum()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub hue: f64,
    pub saturation: f64,
    pub value: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.hue + self.saturation + self.value
    }
}

/// Mean over rays of hue_loss + squared saturation error + squared value
/// error, with the three term means reported separately.
pub fn total_loss(pred: &[(f64, f64, f64)], gt: &[(f64, f64, f64)]) -> (f64, LossBreakdown) {
    assert!(!pred.is_empty());
    assert_eq!(pred.len(), gt.len());
    let inv_n = 1.0 / pred.len() as f64;
    let mut breakdown = LossBreakdown::default();
    for (p, g) in pred.iter().zip(gt) {
        breakdown.hue += hue_loss(p.0, g.0) * inv_n;
        breakdown.saturation += (p.1 - g.1).powi(2) * inv_n;
        breakdown.value += (p.2 - g.2).powi(2) * inv_n;
    }
    (breakdown.total(), breakdown)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn reference_values() {
        assert_eq!(hue_loss(0.3, 0.3), 0.0);
        assert!((hue_loss(0.95, 0.05) - 0.1).abs() < 1e-15);
        assert_eq!(hue_loss(0.0, 0.5), 0.5);
    }

    #[test]
    fn symmetry_and_shift_invariance() {
        let mut rng = Rng::seed_from(17);
        for _ in 0..10_000 {
            let a = rng.next_f64();
            let b = rng.next_f64();
            let k = rng.next_f64();
            let base = hue_loss(a, b);
            assert!((base - hue_loss(b, a)).abs() < 1e-12);
            let shifted = hue_loss((a + k).rem_euclid(1.0), (b + k).rem_euclid(1.0));
            assert!((base - shifted).abs() < 1e-12, "a={a} b={b} k={k}");
            assert!((0.0..=0.5).contains(&base));
        }
    }

    #[test]
    fn gradient_branches() {
        // small positive difference: non-wrapped branch, slope +1
        assert_eq!(hue_loss_grad(0.5, 0.2), 1.0);
        // wrapped branch: loss = 1 - |d|, slope flips
        assert_eq!(hue_loss_grad(0.9, 0.2), -1.0);
        assert_eq!(hue_loss_grad(0.2, 0.9), 1.0);
        assert_eq!(hue_loss_grad(0.2, 0.5), -1.0);
        assert_eq!(hue_loss_grad(0.3, 0.3), 0.0);
        // tie resolves to the non-wrapped branch
        assert_eq!(hue_loss_grad(0.7, 0.2), 1.0);
    }

    #[test]
    fn total_loss_reference_points() {
        let gt = [(0.4, 0.5, 0.6)];
        assert_eq!(total_loss(&gt, &gt).0, 0.0);

        let pred = [(0.4, 0.6, 0.8)];
        let (loss, parts) = total_loss(&pred, &gt);
        assert!((loss - 0.05).abs() < 1e-12);
        assert_eq!(parts.hue, 0.0);
        assert!((parts.saturation - 0.01).abs() < 1e-14);
        assert!((parts.value - 0.04).abs() < 1e-14);
    }

    #[test]
    fn total_loss_matches_scalar_loop_oracle() {
        let mut rng = Rng::seed_from(21);
        let n = 7;
        let pred: Vec<(f64, f64, f64)> = (0..n)
            .map(|_| (rng.next_f64(), rng.next_f64(), rng.next_f64()))
            .collect();
        let gt: Vec<(f64, f64, f64)> = (0..n)
            .map(|_| (rng.next_f64(), rng.next_f64(), rng.next_f64()))
            .collect();
        let (loss, _) = total_loss(&pred, &gt);

        let mut oracle = 0.0;
        for i in 0..n {
            let dh = (pred[i].0 - gt[i].0).abs();
            oracle += dh.min(1.0 - dh)
                + (pred[i].1 - gt[i].1) * (pred[i].1 - gt[i].1)
                + (pred[i].2 - gt[i].2) * (pred[i].2 - gt[i].2);
        }
        oracle /= n as f64;
        assert!((loss - oracle).abs() < 1e-12);
    }
}
