use std::ops::Range;

use super::stft::Spectrogram;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Split `bins` into `parts` contiguous ranges whose sizes differ by at
/// most one; the lower bands take the remainder.
pub fn band_ranges(bins: usize, parts: usize) -> Vec<Range<usize>> {
    let base = bins / parts;
    let rem = bins % parts;
    let mut start = 0;
    (0..parts)
        .map(|i| {
            let len = base + usize::from(i < rem);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// Low, middle and high sub-spectrograms.
pub fn band_split<S: Scalar>(s: &Spectrogram<S>) -> Result<Vec<Tensor<S>>> {
    let bins = s.bins();
    if bins < 3 {
        return Err(Error::invalid("band_split", format!("need >= 3 bins, got {bins}")));
    }
    let frames = s.num_frames();
    band_ranges(bins, 3)
        .into_iter()
        .map(|r| {
            let mut data = Vec::with_capacity(frames * r.len());
            for f in 0..frames {
                data.extend_from_slice(&s.frames.row(f)[r.clone()]);
            }
            Tensor::new(&[frames, r.len()], data)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::StftConfig;
    use crate::rng::Rng;
    use proptest::prelude::*;

    #[test]
    fn equal_split_sizes() {
        let sizes = |bins| band_ranges(bins, 3).iter().map(|r| r.len()).collect::<Vec<_>>();
        assert_eq!(sizes(257), vec![86, 86, 85]);
        assert_eq!(sizes(513), vec![171, 171, 171]);
    }

    #[test]
    fn concatenated_bands_reconstruct_bit_exact() {
        let mut rng = Rng::new(1);
        let frames = Tensor::new(&[7, 257], rng.uniform_vec(7 * 257, 0.0, 3.0)).unwrap();
        let s = Spectrogram {
            frames: frames.clone(),
            config: StftConfig::new(512, 128, 512),
            sample_rate: 48000,
        };
        let bands = band_split(&s).unwrap();
        for f in 0..7 {
            let joined: Vec<f64> = bands.iter().flat_map(|b| b.row(f).to_vec()).collect();
            assert_eq!(joined.as_slice(), frames.row(f));
        }
    }

    proptest! {
        #[test]
        fn ranges_partition_bins(bins in 3usize..5000) {
            let r = band_ranges(bins, 3);
            prop_assert_eq!(r[0].start, 0);
            prop_assert_eq!(r[2].end, bins);
            prop_assert_eq!(r[0].end, r[1].start);
            prop_assert_eq!(r[1].end, r[2].start);
            let lens: Vec<usize> = r.iter().map(|x| x.len()).collect();
            prop_assert!(lens.iter().max().unwrap() - lens.iter().min().unwrap() <= 1);
            prop_assert!(lens[0] >= lens[1] && lens[1] >= lens[2]);
        }
    }
}
