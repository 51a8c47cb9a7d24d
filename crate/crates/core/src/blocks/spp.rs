use crate::error::{Error, Result};
use crate::tensor::{concat_channels, maxpool2d, Shape, Tensor};

/// Parallel stride-1 max pools concatenated after an identity branch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SppConfig {
    pub kernels: Vec<usize>,
}

impl Default for SppConfig {
    fn default() -> Self {
        Self {
            kernels: vec![5, 9, 13],
        }
    }
}

impl SppConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kernels.is_empty() || self.kernels.iter().any(|&k| k == 0 || k % 2 == 0) {
            return Err(Error::Invalid(format!(
                "spp kernels must be odd, got {:?}",
                self.kernels
            )));
        }
        Ok(())
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        Ok(Shape::new(
            input.n,
            input.c * (self.kernels.len() + 1),
            input.h,
            input.w,
        ))
    }

    pub fn build(&self) -> Spp {
        Spp { config: self.clone() }
    }
}

#[derive(Clone, Debug)]
pub struct Spp {
    pub config: SppConfig,
}

impl Spp {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let pooled = self
            .config
            .kernels
            .iter()
            .map(|&k| maxpool2d(x, k, 1))
            .collect::<Result<Vec<_>>>()?;
        let mut parts = vec![x];
        parts.extend(pooled.iter());
        concat_channels(&parts)
    }
}

/// One stride-1 max pool applied `chain` times in sequence; the input and
/// every intermediate are concatenated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SppfConfig {
    pub k: usize,
    pub chain: usize,
}

impl Default for SppfConfig {
    fn default() -> Self {
        Self { k: 5, chain: 3 }
    }
}

impl SppfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k.is_multiple_of(2) || self.chain == 0 {
            return Err(Error::Invalid(format!(
                "sppf needs an odd kernel and a positive chain, got k={} chain={}",
                self.k, self.chain
            )));
        }
        Ok(())
    }

    /// Receptive field of the `m`-th pooled branch (1-based).
    pub fn effective_kernel(&self, m: usize) -> usize {
        m * (self.k - 1) + 1
    }

    /// The SPP configuration this chain reproduces.
    pub fn equivalent_spp(&self) -> SppConfig {
        SppConfig {
            kernels: (1..=self.chain).map(|m| self.effective_kernel(m)).collect(),
        }
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        Ok(Shape::new(input.n, input.c * (self.chain + 1), input.h, input.w))
    }

    pub fn build(&self) -> Sppf {
        Sppf { config: *self }
    }
}

#[derive(Clone, Debug)]
pub struct Sppf {
    pub config: SppfConfig,
}

impl Sppf {
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut pooled = Vec::with_capacity(self.config.chain);
        let mut cur = x.clone();
        for _ in 0..self.config.chain {
            cur = maxpool2d(&cur, self.config.k, 1)?;
            pooled.push(cur.clone());
        }
        let mut parts = vec![x];
        parts.extend(pooled.iter());
        concat_channels(&parts)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn constant_input() {
        let x = Tensor::full(Shape::new(1, 3, 6, 7), 2.5);
        for y in [
            SppConfig::default().build().forward(&x).unwrap(),
            SppfConfig::default().build().forward(&x).unwrap(),
        ] {
            assert_eq!(y.shape(), Shape::new(1, 12, 6, 7));
            assert!(y.data().iter().all(|&v| v == 2.5));
        }
    }

    #[test]
    fn single_pixel() {
        let x = Tensor::from_vec(1, 2, 1, 1, vec![-3.0, 4.0]).unwrap();
        let y = SppConfig::default().build().forward(&x).unwrap();
        assert_eq!(y.data(), &[-3.0, 4.0, -3.0, 4.0, -3.0, 4.0, -3.0, 4.0]);
    }

    #[test]
    fn sppf_equals_spp() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::random_uniform(Shape::new(1, 3, 20, 20), -1.0, 1.0, &mut rng);
        let spp = SppConfig::default().build().forward(&x).unwrap();
        let sppf = SppfConfig::default().build().forward(&x).unwrap();
        assert!(spp.bit_eq(&sppf));
        assert_eq!(SppfConfig::default().equivalent_spp(), SppConfig::default());
    }
}
