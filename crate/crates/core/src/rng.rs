//! Keyed random substreams.
//!
//! Every stochastic object is drawn from a ChaCha stream whose key is the
//! master seed and whose 64-bit stream id is derived from a stream tag and a
//! purpose label. Two draws with the same `(master_seed, stream_tag, label)`
//! are bit-identical no matter which thread performs them or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type StreamRng = ChaCha12Rng;

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over the label bytes; stable across platforms and toolchains.
fn label_hash(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325_u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Opens the substream for `(master_seed, stream_tag, label)`.
pub fn substream(master_seed: u64, stream_tag: u64, label: &str) -> StreamRng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&mix64(master_seed).to_le_bytes());
    let mut rng = StreamRng::from_seed(key);
    rng.set_stream(mix64(mix64(stream_tag) ^ label_hash(label)));
    rng
}

/// Combines two integers into one stream tag.
pub fn combine_tags(hi: u64, lo: u64) -> u64 {
    mix64(hi).rotate_left(17) ^ lo
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn identical_keys_give_identical_streams() {
        let a: Vec<u64> = substream(7, 3, "x").random_iter().take(8).collect();
        let b: Vec<u64> = substream(7, 3, "x").random_iter().take(8).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn labels_and_tags_separate_streams() {
        let base: u64 = substream(7, 3, "x").random();
        assert_ne!(base, substream(7, 3, "y").random::<u64>());
        assert_ne!(base, substream(7, 4, "x").random::<u64>());
        assert_ne!(base, substream(8, 3, "x").random::<u64>());
    }
}
