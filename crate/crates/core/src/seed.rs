//! Deterministic fan-out of one master seed into independent per-stage seeds.

/// Stages that draw random numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Scene = 1,
    Sensor = 2,
    Shuffle = 3,
    Init = 4,
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for `stream` at position `index` (frame, epoch, ...) under `master`.
pub fn derive(master: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ splitmix64(stream as u64)) ^ index)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_and_indices_differ() {
        let a = derive(42, Stream::Scene, 0);
        assert_eq!(a, derive(42, Stream::Scene, 0));
        assert_ne!(a, derive(42, Stream::Sensor, 0));
        assert_ne!(a, derive(42, Stream::Scene, 1));
        assert_ne!(a, derive(43, Stream::Scene, 0));
    }
}
