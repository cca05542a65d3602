use super::HmmError;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `ln(exp(a) + exp(b))` without overflow; `-inf` is the additive identity.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln Σ exp(x_i)` over a slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    if max == f64::INFINITY {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Gaussian with diagonal covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalGaussian {
    mean: Vec<f64>,
    variance: Vec<f64>,
    inv_variance: Vec<f64>,
    log_norm: f64,
}

impl DiagonalGaussian {
    /// Panics if the lengths differ or any variance is not strictly positive.
    pub fn new(mean: Vec<f64>, variance: Vec<f64>) -> Self {
        assert_eq!(mean.len(), variance.len(), "mean/variance length mismatch");
        assert!(
            variance.iter().all(|&v| v > 0.0 && v.is_finite()),
            "variances must be positive and finite"
        );
        let inv_variance = variance.iter().map(|v| 1.0 / v).collect();
        let log_det: f64 = variance.iter().map(|v| v.ln()).sum();
        let log_norm = -0.5 * (mean.len() as f64 * LN_2PI + log_det);
        DiagonalGaussian {
            mean,
            variance,
            inv_variance,
            log_norm,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variance(&self) -> &[f64] {
        &self.variance
    }

    #[inline]
    pub fn log_density(&self, frame: &[f32]) -> f64 {
        let mut quad = 0.0;
        for ((&x, &m), &iv) in frame.iter().zip(&self.mean).zip(&self.inv_variance) {
            let d = x as f64 - m;
            quad += d * d * iv;
        }
        self.log_norm - 0.5 * quad
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    components: Vec<DiagonalGaussian>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, components: Vec<DiagonalGaussian>) -> Result<Self, HmmError> {
        if components.is_empty() || weights.len() != components.len() {
            return Err(HmmError::InvalidModel(
                "mixture needs one weight per component and at least one component".into(),
            ));
        }
        let dim = components[0].dim();
        if components.iter().any(|c| c.dim() != dim) {
            return Err(HmmError::InvalidModel(
                "mixture components differ in dimension".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|&w| !(0.0..=1.0 + 1e-9).contains(&w)) || (total - 1.0).abs() > 1e-9 {
            return Err(HmmError::InvalidModel(format!(
                "mixture weights must be non-negative and sum to 1 (sum = {total})"
            )));
        }
        Ok(Self::from_parts(weights, components))
    }

    pub(crate) fn from_parts(weights: Vec<f64>, components: Vec<DiagonalGaussian>) -> Self {
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        GaussianMixture {
            weights,
            log_weights,
            components,
        }
    }

    pub fn single(component: DiagonalGaussian) -> Self {
        Self::from_parts(vec![1.0], vec![component])
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[DiagonalGaussian] {
        &self.components
    }

    /// `ln w_g + ln N(frame; g)` for every component, written into `out`.
    #[inline]
    pub fn component_log_joint(&self, frame: &[f32], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.components
                .iter()
                .zip(&self.log_weights)
                .map(|(c, lw)| lw + c.log_density(frame)),
        );
    }

    /// Log density without the dimension check.
    #[inline]
    pub fn log_density_unchecked(&self, frame: &[f32]) -> f64 {
        if self.components.len() == 1 {
            return self.log_weights[0] + self.components[0].log_density(frame);
        }
        let mut acc = f64::NEG_INFINITY;
        for (c, lw) in self.components.iter().zip(&self.log_weights) {
            if *lw == f64::NEG_INFINITY {
                continue;
            }
            acc = log_add(acc, lw + c.log_density(frame));
        }
        acc
    }

    pub fn log_density(&self, frame: &[f32]) -> Result<f64, HmmError> {
        if frame.len() != self.dim() {
            return Err(HmmError::DimensionMismatch {
                expected: self.dim(),
                found: frame.len(),
            });
        }
        Ok(self.log_density_unchecked(frame))
    }
}

/// `ln Σ_g w_g N(frame; μ_g, diag σ²_g)`.
pub fn gmm_log_density(mixture: &GaussianMixture, frame: &[f32]) -> Result<f64, HmmError> {
    mixture.log_density(frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit(dim: usize, mean: Vec<f64>) -> DiagonalGaussian {
        DiagonalGaussian::new(mean, vec![1.0; dim])
    }

    #[test]
    fn density_at_mode_is_normalizer() {
        let d = 4;
        let g = GaussianMixture::single(unit(d, vec![0.5; d]));
        let frame = vec![0.5f32; d];
        let expected = -(d as f64 / 2.0) * (2.0 * std::f64::consts::PI).ln();
        assert_relative_eq!(
            gmm_log_density(&g, &frame).unwrap(),
            expected,
            epsilon = 1e-12
        );
    }

    #[test]
    fn identical_components_collapse() {
        let c = DiagonalGaussian::new(vec![1.0, -2.0], vec![0.5, 3.0]);
        let one = GaussianMixture::single(c.clone());
        let two = GaussianMixture::new(vec![0.5, 0.5], vec![c.clone(), c]).unwrap();
        let x = [0.3f32, 0.7];
        assert_relative_eq!(
            one.log_density(&x).unwrap(),
            two.log_density(&x).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn dimension_mismatch() {
        let g = GaussianMixture::single(unit(3, vec![0.0; 3]));
        assert!(matches!(
            g.log_density(&[0.0, 1.0]),
            Err(HmmError::DimensionMismatch {
                expected: 3,
                found: 2
            })
        ));
    }

    #[test]
    fn bad_weights_rejected() {
        let c = unit(1, vec![0.0]);
        assert!(GaussianMixture::new(vec![0.6, 0.6], vec![c.clone(), c.clone()]).is_err());
        assert!(GaussianMixture::new(vec![1.0], vec![]).is_err());
        assert!(GaussianMixture::new(vec![1.2, -0.2], vec![c.clone(), c]).is_err());
    }

    #[test]
    fn zero_weight_component_is_ignored() {
        let a = unit(1, vec![0.0]);
        let b = unit(1, vec![100.0]);
        let g = GaussianMixture::new(vec![1.0, 0.0], vec![a.clone(), b]).unwrap();
        let single = GaussianMixture::single(a);
        assert_eq!(
            g.log_density(&[0.2]).unwrap(),
            single.log_density(&[0.2]).unwrap()
        );
    }

    #[test]
    fn log_add_identities() {
        assert_eq!(log_add(f64::NEG_INFINITY, 3.0), 3.0);
        assert_relative_eq!(log_add(0.0, 0.0), 2f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(
            log_add(-1000.0, -1000.0),
            -1000.0 + 2f64.ln(),
            epsilon = 1e-12
        );
        assert_relative_eq!(
            log_sum_exp(&[1.0, 2.0, 3.0]),
            log_add(log_add(1.0, 2.0), 3.0),
            epsilon = 1e-14
        );
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
    }
}
