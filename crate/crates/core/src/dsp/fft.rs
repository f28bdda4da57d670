//! Iterative radix-2 FFT on split real/imaginary buffers.
//!
//! Power-of-two lengths only; the analysis frame is 1024 samples and fast
//! convolution pads to the next power of two, so nothing else is needed.

use alloc::vec;
use alloc::vec::Vec;

pub fn is_power_of_two(n: usize) -> bool {
    n != 0 && n & (n - 1) == 0
}

pub fn next_power_of_two(n: usize) -> usize {
    let mut p = 1;
    while p < n {
        p <<= 1;
    }
    p
}

/// In-place FFT (`inverse = false`) or inverse FFT with 1/n scaling
/// (`inverse = true`). Panics if `re`/`im` lengths differ or are not a
/// power of two; callers validate first.
pub fn fft_in_place(re: &mut [f64], im: &mut [f64], inverse: bool) {
    let n = re.len();
    assert_eq!(n, im.len(), "fft: re/im length mismatch");
    assert!(is_power_of_two(n), "fft: length {n} not a power of two");
    if n <= 1 {
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

    // Twiddle table for the full length; stage m strides by n/m.
    let sign = if inverse { 1.0 } else { -1.0 };
    let half = n / 2;
    let mut tw_re = vec![0.0; half];
    let mut tw_im = vec![0.0; half];
    for (k, (tr, ti)) in tw_re.iter_mut().zip(tw_im.iter_mut()).enumerate() {
        let ang = sign * 2.0 * core::f64::consts::PI * k as f64 / n as f64;
        *tr = libm::cos(ang);
        *ti = libm::sin(ang);
    }

    let mut m = 2;
    while m <= n {
        let stride = n / m;
        let hm = m / 2;
        for start in (0..n).step_by(m) {
            for j in 0..hm {
                let wr = tw_re[j * stride];
                let wi = tw_im[j * stride];
                let a = start + j;
                let b = a + hm;
                let tr = wr * re[b] - wi * im[b];
                let ti = wr * im[b] + wi * re[b];
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
            }
        }
        m <<= 1;
    }

    if inverse {
        let s = 1.0 / n as f64;
        for v in re.iter_mut() {
            *v *= s;
        }
        for v in im.iter_mut() {
            *v *= s;
        }
    }
}

/// Linear convolution of two real sequences via zero-padded FFT.
pub fn fft_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let out_len = a.len() + b.len() - 1;
    let n = next_power_of_two(out_len);
    let mut are = vec![0.0; n];
    let mut aim = vec![0.0; n];
    let mut bre = vec![0.0; n];
    let mut bim = vec![0.0; n];
    are[..a.len()].copy_from_slice(a);
    bre[..b.len()].copy_from_slice(b);
    fft_in_place(&mut are, &mut aim, false);
    fft_in_place(&mut bre, &mut bim, false);
    for i in 0..n {
        let r = are[i] * bre[i] - aim[i] * bim[i];
        let im = are[i] * bim[i] + aim[i] * bre[i];
        are[i] = r;
        aim[i] = im;
    }
    fft_in_place(&mut are, &mut aim, true);
    are.truncate(out_len);
    are
}
