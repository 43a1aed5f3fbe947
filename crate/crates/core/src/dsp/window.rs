use crate::scalar::Scalar;

/// Periodic Hann window, `0.5 - 0.5 cos(2 pi n / N)`.
pub fn hann_periodic<S: Scalar>(n: usize) -> Vec<S> {
    let two_pi = S::TAU();
    let nn = S::lit(n as f64);
    (0..n)
        .map(|i| S::lit(0.5) - S::lit(0.5) * (two_pi * S::lit(i as f64) / nn).cos())
        .collect()
}

/// A Hann window of `win_length` zero-padded on both sides to `fft_size`.
pub fn centered_window<S: Scalar>(win_length: usize, fft_size: usize) -> Vec<S> {
    assert!(win_length <= fft_size, "window longer than fft");
    let mut w = vec![S::zero(); fft_size];
    let off = (fft_size - win_length) / 2;
    w[off..off + win_length].copy_from_slice(&hann_periodic(win_length));
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_hann_overlap_adds_to_one_at_half_hop() {
        let w: Vec<f64> = hann_periodic(128);
        assert_eq!(w[0], 0.0);
        for i in 0..64 {
            assert!((w[i] + w[i + 64] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn centered_window_placement() {
        let w: Vec<f64> = centered_window(4, 8);
        assert_eq!(&w[..2], &[0.0, 0.0]);
        assert_eq!(&w[6..], &[0.0, 0.0]);
        assert!((w[4] - 1.0).abs() < 1e-15);
    }
}
