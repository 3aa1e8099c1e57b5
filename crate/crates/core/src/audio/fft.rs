//! In-place iterative radix-2 FFT.

use core::f64::consts::PI;

/// Forward DFT of `(re, im)` in place. The length must be a power of two.
pub fn fft_in_place(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    debug_assert_eq!(n, im.len());
    debug_assert!(n.is_power_of_two());
    if n < 2 {
        return;
    }
    // Bit-reversal permutation.
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let angle = -2.0 * PI / len as f64;
        let half = len / 2;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let (s, c) = libm::sincos(angle * k as f64);
                let a = start + k;
                let b = a + half;
                let tr = re[b] * c - im[b] * s;
                let ti = re[b] * s + im[b] * c;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
            }
        }
        len <<= 1;
    }
}

/// `|X_k|²` for `k = 0..=n/2` of a real signal zero-padded to `n`.
pub fn power_spectrum(signal: &[f64], n: usize, out: &mut [f64]) {
    debug_assert!(signal.len() <= n && out.len() == n / 2 + 1);
    let mut re = alloc::vec![0.0; n];
    let mut im = alloc::vec![0.0; n];
    re[..signal.len()].copy_from_slice(signal);
    fft_in_place(&mut re, &mut im);
    for (k, o) in out.iter_mut().enumerate() {
        *o = re[k] * re[k] + im[k] * im[k];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_naive_dft() {
        let n = 16;
        let x: alloc::vec::Vec<f64> = (0..n).map(|i| libm::sin(i as f64 * 0.7) + 0.1 * i as f64).collect();
        let mut re = x.clone();
        let mut im = alloc::vec![0.0; n];
        fft_in_place(&mut re, &mut im);
        for k in 0..n {
            let (mut sr, mut si) = (0.0, 0.0);
            for (t, &v) in x.iter().enumerate() {
                let a = -2.0 * PI * (k * t) as f64 / n as f64;
                sr += v * libm::cos(a);
                si += v * libm::sin(a);
            }
            assert!((sr - re[k]).abs() < 1e-10 && (si - im[k]).abs() < 1e-10);
        }
    }
}
