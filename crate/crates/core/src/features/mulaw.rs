pub const MU_LAW_LEVELS: usize = 256;

/// µ-law companding with µ = 255 and 256 uniform bins over the companded range.
///
/// Bins are half-open from −1: code `k` covers companded values
/// `[−1 + 2k/256, −1 + 2(k+1)/256)`, with +1 folded into the top bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MuLawCodec {
    pub mu: u32,
    pub levels: usize,
}

impl Default for MuLawCodec {
    fn default() -> Self {
        MuLawCodec {
            mu: 255,
            levels: MU_LAW_LEVELS,
        }
    }
}

impl MuLawCodec {
    pub fn compress(&self, x: f64) -> f64 {
        let mu = self.mu as f64;
        x.signum() * (1.0 + mu * x.abs()).ln() / (1.0 + mu).ln()
    }

    pub fn expand(&self, y: f64) -> f64 {
        let mu = self.mu as f64;
        y.signum() * ((1.0 + mu).powf(y.abs()) - 1.0) / mu
    }

    /// Out-of-range samples are clamped to [-1, 1].
    pub fn encode_sample(&self, x: f32) -> u8 {
        let y = self.compress((x as f64).clamp(-1.0, 1.0));
        let k = ((y + 1.0) / 2.0 * self.levels as f64).floor() as i64;
        k.clamp(0, self.levels as i64 - 1) as u8
    }

    /// Maps a code to the expansion of its bin center.
    pub fn decode_sample(&self, code: u8) -> f32 {
        let y = (code as f64 + 0.5) / self.levels as f64 * 2.0 - 1.0;
        self.expand(y) as f32
    }

    pub fn encode(&self, wave: &[f32]) -> Vec<u8> {
        wave.iter().map(|&x| self.encode_sample(x)).collect()
    }

    pub fn decode(&self, codes: &[u8]) -> Vec<f32> {
        codes.iter().map(|&c| self.decode_sample(c)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchors() {
        let c = MuLawCodec::default();
        assert_eq!(c.encode_sample(0.0), 128);
        assert_eq!(c.encode_sample(1.0), 255);
        assert_eq!(c.encode_sample(-1.0), 0);
        assert_eq!(c.encode_sample(7.0), 255);
        assert_eq!(c.encode_sample(-7.0), 0);
        assert_eq!(c.mu as usize, c.levels - 1);
    }

    #[test]
    fn monotone_on_dense_grid() {
        let c = MuLawCodec::default();
        let mut prev = 0u8;
        for i in 0..=200_000 {
            let x = -1.0 + 2.0 * i as f32 / 200_000.0;
            let k = c.encode_sample(x);
            assert!(k >= prev);
            prev = k;
        }
        assert_eq!(prev, 255);
    }
}
