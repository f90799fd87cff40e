//! Convolution primitives on channel-major `C x N x H x W` activations.

use super::tensor::{matmul, Scalar};

/// Geometry of a square-kernel convolution from a `big` map to a `small` one.
/// A transposed convolution uses the same geometry in reverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geo {
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub big: (usize, usize),
    pub small: (usize, usize),
}

pub fn conv_out(size: usize, k: usize, stride: usize, pad: usize) -> usize {
    (size + 2 * pad - k) / stride + 1
}

impl Geo {
    pub fn new(k: usize, stride: usize, pad: usize, big: (usize, usize)) -> Self {
        let small = (conv_out(big.0, k, stride, pad), conv_out(big.1, k, stride, pad));
        Self { k, stride, pad, big, small }
    }

    fn big_len(&self) -> usize {
        self.big.0 * self.big.1
    }

    fn small_len(&self) -> usize {
        self.small.0 * self.small.1
    }

    /// Source index in the big map for kernel tap `(ky, kx)` at small cell `(oy, ox)`.
    #[inline]
    fn tap(&self, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<usize> {
        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
        let ix = (ox * self.stride + kx) as isize - self.pad as isize;
        if iy < 0 || ix < 0 || iy as usize >= self.big.0 || ix as usize >= self.big.1 {
            None
        } else {
            Some(iy as usize * self.big.1 + ix as usize)
        }
    }
}

/// Unfolds a big map into a `(c k k) x (n small)` patch matrix.
pub fn im2col<T: Scalar>(x: &[T], c: usize, n: usize, g: &Geo) -> Vec<T> {
    let (bl, sl, kk) = (g.big_len(), g.small_len(), g.k * g.k);
    debug_assert_eq!(x.len(), c * n * bl);
    let np = n * sl;
    let mut cols = vec![T::zero(); c * kk * np];
    for ci in 0..c {
        for t in 0..kk {
            let (ky, kx) = (t / g.k, t % g.k);
            let dst = &mut cols[(ci * kk + t) * np..][..np];
            for ni in 0..n {
                let src = &x[(ci * n + ni) * bl..][..bl];
                let out = &mut dst[ni * sl..][..sl];
                for oy in 0..g.small.0 {
                    for ox in 0..g.small.1 {
                        if let Some(i) = g.tap(oy, ox, ky, kx) {
                            out[oy * g.small.1 + ox] = src[i];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: folds patches back, summing overlaps.
pub fn col2im<T: Scalar>(cols: &[T], c: usize, n: usize, g: &Geo) -> Vec<T> {
    let (bl, sl, kk) = (g.big_len(), g.small_len(), g.k * g.k);
    let np = n * sl;
    debug_assert_eq!(cols.len(), c * kk * np);
    let mut x = vec![T::zero(); c * n * bl];
    for ci in 0..c {
        for t in 0..kk {
            let (ky, kx) = (t / g.k, t % g.k);
            let src = &cols[(ci * kk + t) * np..][..np];
            for ni in 0..n {
                let dst = &mut x[(ci * n + ni) * bl..][..bl];
                let row = &src[ni * sl..][..sl];
                for oy in 0..g.small.0 {
                    for ox in 0..g.small.1 {
                        if let Some(i) = g.tap(oy, ox, ky, kx) {
                            dst[i] = dst[i] + row[oy * g.small.1 + ox];
                        }
                    }
                }
            }
        }
    }
    x
}

pub fn add_bias<T: Scalar>(y: &mut [T], b: &[T]) {
    let per = y.len() / b.len().max(1);
    for (row, &bv) in y.chunks_mut(per.max(1)).zip(b) {
        row.iter_mut().for_each(|v| *v = *v + bv);
    }
}

pub fn bias_grad<T: Scalar>(dy: &[T], db: &mut [T]) {
    let per = dy.len() / db.len().max(1);
    for (row, g) in dy.chunks(per.max(1)).zip(db.iter_mut()) {
        *g = *g + row.iter().copied().sum::<T>();
    }
}

pub fn relu<T: Scalar>(y: &mut [T]) {
    y.iter_mut().for_each(|v| {
        if *v < T::zero() {
            *v = T::zero()
        }
    });
}

/// Zeroes gradient entries whose forward output was clamped.
pub fn relu_back<T: Scalar>(dy: &mut [T], y: &[T]) {
    for (d, &v) in dy.iter_mut().zip(y) {
        if v <= T::zero() {
            *d = T::zero();
        }
    }
}

/// Convolution forward given patches. `w` is `cout x (cin k k)`.
pub fn conv_forward<T: Scalar>(cols: &[T], w: &[T], b: &[T], cout: usize, np: usize) -> Vec<T> {
    let kdim = cols.len() / np.max(1);
    let mut y = vec![T::zero(); cout * np];
    matmul(cout, kdim, np, w, false, cols, false, &mut y, false);
    add_bias(&mut y, b);
    y
}

/// Returns the patch-space input gradient when `want_dx`.
#[allow(clippy::too_many_arguments)]
pub fn conv_backward<T: Scalar>(
    dy: &[T],
    cols: &[T],
    w: &[T],
    cout: usize,
    np: usize,
    dw: &mut [T],
    db: &mut [T],
    want_dx: bool,
) -> Option<Vec<T>> {
    let kdim = cols.len() / np.max(1);
    matmul(cout, np, kdim, dy, false, cols, true, dw, true);
    bias_grad(dy, db);
    want_dx.then(|| {
        let mut dcols = vec![T::zero(); kdim * np];
        matmul(kdim, cout, np, w, true, dy, false, &mut dcols, false);
        dcols
    })
}

/// Transposed convolution from the small map of `g` to its big map.
/// `w` is `cin x (cout k k)`.
pub fn tconv_forward<T: Scalar>(x: &[T], w: &[T], b: &[T], cin: usize, cout: usize, n: usize, g: &Geo) -> Vec<T> {
    let np = n * g.small_len();
    let kdim = cout * g.k * g.k;
    let mut cols = vec![T::zero(); kdim * np];
    matmul(kdim, cin, np, w, true, x, false, &mut cols, false);
    let mut y = col2im(&cols, cout, n, g);
    add_bias(&mut y, b);
    y
}

#[allow(clippy::too_many_arguments)]
pub fn tconv_backward<T: Scalar>(
    dy: &[T],
    x: &[T],
    w: &[T],
    cin: usize,
    cout: usize,
    n: usize,
    g: &Geo,
    dw: &mut [T],
    db: &mut [T],
) -> Vec<T> {
    let np = n * g.small_len();
    let kdim = cout * g.k * g.k;
    let dcols = im2col(dy, cout, n, g);
    matmul(cin, np, kdim, x, false, &dcols, true, dw, true);
    bias_grad(dy, db);
    let mut dx = vec![T::zero(); cin * np];
    matmul(cin, kdim, np, w, false, &dcols, false, &mut dx, false);
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    fn pseudo(n: usize, seed: f64) -> Vec<f64> {
        (0..n).map(|i| ((i as f64 + 1.0) * seed).sin()).collect()
    }

    #[test]
    fn output_sizes() {
        assert_eq!(conv_out(48, 3, 2, 1), 24);
        assert_eq!(conv_out(3, 3, 1, 1), 3);
        assert_eq!(conv_out(6, 3, 2, 1), 3);
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        for (stride, big) in [(1, (5, 4)), (2, (6, 6)), (2, (7, 5))] {
            let g = Geo::new(3, stride, 1, big);
            let (c, n) = (2, 3);
            let x = pseudo(c * n * big.0 * big.1, 0.7);
            let cols = im2col(&x, c, n, &g);
            let y = pseudo(cols.len(), 1.3);
            let back = col2im(&y, c, n, &g);
            assert!((dot(&cols, &y) - dot(&x, &back)).abs() < 1e-10);
        }
    }

    #[test]
    fn conv_matches_direct_sum() {
        let g = Geo::new(3, 2, 1, (6, 5));
        let (cin, cout, n) = (2, 3, 2);
        let x = pseudo(cin * n * 30, 0.3);
        let w = pseudo(cout * cin * 9, 0.11);
        let b = vec![0.5, -0.25, 0.0];
        let y = conv_forward(&im2col(&x, cin, n, &g), &w, &b, cout, n * g.small.0 * g.small.1);
        for co in 0..cout {
            for ni in 0..n {
                for oy in 0..g.small.0 {
                    for ox in 0..g.small.1 {
                        let mut want = b[co];
                        for ci in 0..cin {
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    let iy = (oy * 2 + ky) as isize - 1;
                                    let ix = (ox * 2 + kx) as isize - 1;
                                    if (0..6).contains(&iy) && (0..5).contains(&ix) {
                                        want += w[(co * cin + ci) * 9 + ky * 3 + kx]
                                            * x[((ci * n + ni) * 6 + iy as usize) * 5 + ix as usize];
                                    }
                                }
                            }
                        }
                        let got = y[((co * n + ni) * g.small.0 + oy) * g.small.1 + ox];
                        assert!((got - want).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn tconv_is_adjoint_of_conv_without_bias() {
        let g = Geo::new(3, 2, 1, (8, 8));
        let (cin, cout, n) = (3, 2, 2);
        // Conv maps cout channels (big) -> cin channels (small) with the same weights.
        let w = pseudo(cin * cout * 9, 0.21);
        let small = pseudo(cin * n * 16, 0.5);
        let big = pseudo(cout * n * 64, 0.9);
        let up = tconv_forward(&small, &w, &[0.0; 2], cin, cout, n, &g);
        let down = conv_forward(&im2col(&big, cout, n, &g), &w, &[0.0; 3], cin, n * 16);
        assert!((dot(&up, &big) - dot(&small, &down)).abs() < 1e-10);
    }
}
