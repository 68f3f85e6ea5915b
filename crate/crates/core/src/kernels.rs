//! Low-level numeric kernels shared by the tensor ops and the autograd graph.

use crate::tensor::Scalar;

/// Matrix operand layout: a logical `rows × cols` matrix stored either
/// row-major as-is or as the row-major transpose.
#[derive(Clone, Copy, Debug)]
pub(crate) enum Layout {
    Normal,
    Transposed,
}

/// `c (m×n) = op(a) (m×k) · op(b) (k×n) + beta · c`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    a_layout: Layout,
    b: &[T],
    b_layout: Layout,
    beta: T,
    c: &mut [T],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = match a_layout {
        Layout::Normal => (k as isize, 1),
        Layout::Transposed => (1, m as isize),
    };
    let (rsb, csb) = match b_layout {
        Layout::Normal => (n as isize, 1),
        Layout::Transposed => (1, k as isize),
    };
    // SAFETY: the asserts above guarantee every index addressed by the
    // strides lies inside the slices.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of a same-size (stride 1) convolution over up to three
/// spatial axes. 2-D convolutions use a depth of 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub channels: usize,
    /// (depth, height, width)
    pub dims: [usize; 3],
    pub kernel: [usize; 3],
    /// Zero padding before each axis; padding after is `kernel - 1 - before`.
    pub pad_before: [usize; 3],
}

impl ConvGeom {
    pub fn positions(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn patch(&self) -> usize {
        self.channels * self.kernel.iter().product::<usize>()
    }
}

/// Unfolds one sample `x[C × D × H × W]` into `cols[(C·kd·kh·kw) × (D·H·W)]`.
pub(crate) fn im2col<T: Scalar>(x: &[T], g: &ConvGeom, cols: &mut [T]) {
    let [d, h, w] = g.dims;
    let [kd, kh, kw] = g.kernel;
    let [pd, ph, pw] = g.pad_before;
    let p = g.positions();
    let mut row = 0;
    for c in 0..g.channels {
        let xc = &x[c * p..(c + 1) * p];
        for a in 0..kd {
            for b in 0..kh {
                for e in 0..kw {
                    let out = &mut cols[row * p..(row + 1) * p];
                    for z in 0..d {
                        let zi = z as isize + a as isize - pd as isize;
                        for y in 0..h {
                            let yi = y as isize + b as isize - ph as isize;
                            let base = (z * h + y) * w;
                            if zi < 0 || zi >= d as isize || yi < 0 || yi >= h as isize {
                                out[base..base + w].fill(T::zero());
                                continue;
                            }
                            let src = (zi as usize * h + yi as usize) * w;
                            for xx in 0..w {
                                let xi = xx as isize + e as isize - pw as isize;
                                out[base + xx] = if xi < 0 || xi >= w as isize {
                                    T::zero()
                                } else {
                                    xc[src + xi as usize]
                                };
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates `cols` back into `dx`.
pub(crate) fn col2im_add<T: Scalar>(cols: &[T], g: &ConvGeom, dx: &mut [T]) {
    let [d, h, w] = g.dims;
    let [kd, kh, kw] = g.kernel;
    let [pd, ph, pw] = g.pad_before;
    let p = g.positions();
    let mut row = 0;
    for c in 0..g.channels {
        let dxc = &mut dx[c * p..(c + 1) * p];
        for a in 0..kd {
            for b in 0..kh {
                for e in 0..kw {
                    let src = &cols[row * p..(row + 1) * p];
                    for z in 0..d {
                        let zi = z as isize + a as isize - pd as isize;
                        if zi < 0 || zi >= d as isize {
                            continue;
                        }
                        for y in 0..h {
                            let yi = y as isize + b as isize - ph as isize;
                            if yi < 0 || yi >= h as isize {
                                continue;
                            }
                            let base = (z * h + y) * w;
                            let dst = (zi as usize * h + yi as usize) * w;
                            for xx in 0..w {
                                let xi = xx as isize + e as isize - pw as isize;
                                if xi >= 0 && xi < w as isize {
                                    dxc[dst + xi as usize] += src[base + xx];
                                }
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Batched forward convolution. Returns the output and the unfolded
/// input columns (kept for the backward pass).
pub(crate) fn conv_forward<T: Scalar>(
    x: &[T],
    batch: usize,
    g: &ConvGeom,
    kernel: &[T],
    out_channels: usize,
    bias: &[T],
) -> (Vec<T>, Vec<T>) {
    let p = g.positions();
    let patch = g.patch();
    let in_stride = g.channels * p;
    let out_stride = out_channels * p;
    let mut cols = vec![T::zero(); batch * patch * p];
    let mut out = vec![T::zero(); batch * out_stride];
    for n in 0..batch {
        let col = &mut cols[n * patch * p..(n + 1) * patch * p];
        im2col(&x[n * in_stride..(n + 1) * in_stride], g, col);
        let o = &mut out[n * out_stride..(n + 1) * out_stride];
        for (oc, chunk) in o.chunks_mut(p).enumerate() {
            chunk.fill(bias[oc]);
        }
        gemm(
            out_channels,
            patch,
            p,
            kernel,
            Layout::Normal,
            col,
            Layout::Normal,
            T::one(),
            o,
        );
    }
    (out, cols)
}

/// Gradients of a batched convolution. `dx` is only computed when requested.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward<T: Scalar>(
    dout: &[T],
    cols: &[T],
    batch: usize,
    g: &ConvGeom,
    kernel: &[T],
    out_channels: usize,
    want_dx: bool,
) -> (Option<Vec<T>>, Vec<T>, Vec<T>) {
    let p = g.positions();
    let patch = g.patch();
    let out_stride = out_channels * p;
    let mut dk = vec![T::zero(); out_channels * patch];
    let mut db = vec![T::zero(); out_channels];
    let mut dx = want_dx.then(|| vec![T::zero(); batch * g.channels * p]);
    let mut dcols = if want_dx {
        vec![T::zero(); patch * p]
    } else {
        Vec::new()
    };
    for n in 0..batch {
        let go = &dout[n * out_stride..(n + 1) * out_stride];
        let col = &cols[n * patch * p..(n + 1) * patch * p];
        for (oc, chunk) in go.chunks(p).enumerate() {
            db[oc] += chunk.iter().copied().sum::<T>();
        }
        gemm(
            out_channels,
            p,
            patch,
            go,
            Layout::Normal,
            col,
            Layout::Transposed,
            T::one(),
            &mut dk,
        );
        if let Some(dx) = dx.as_mut() {
            gemm(
                patch,
                out_channels,
                p,
                kernel,
                Layout::Transposed,
                go,
                Layout::Normal,
                T::zero(),
                &mut dcols,
            );
            let in_stride = g.channels * p;
            col2im_add(&dcols, g, &mut dx[n * in_stride..(n + 1) * in_stride]);
        }
    }
    (dx, dk, db)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_handles_transposed_operands() {
        // a = [[1,2,3],[4,5,6]], b = [[1,0],[0,1],[1,1]]
        let a = [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [1.0f64, 0.0, 0.0, 1.0, 1.0, 1.0];
        let mut c = [0.0f64; 4];
        gemm(2, 3, 2, &a, Layout::Normal, &b, Layout::Normal, 0.0, &mut c);
        assert_eq!(c, [4.0, 5.0, 10.0, 11.0]);

        let at = [1.0f64, 4.0, 2.0, 5.0, 3.0, 6.0];
        let bt = [1.0f64, 0.0, 1.0, 0.0, 1.0, 1.0];
        let mut c2 = [0.0f64; 4];
        gemm(2, 3, 2, &at, Layout::Transposed, &bt, Layout::Transposed, 0.0, &mut c2);
        assert_eq!(c2, c);
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        let g = ConvGeom {
            channels: 2,
            dims: [3, 4, 5],
            kernel: [3, 3, 1],
            pad_before: [2, 1, 0],
        };
        let x: Vec<f64> = (0..g.channels * g.positions())
            .map(|i| ((i * 7) % 11) as f64 - 5.0)
            .collect();
        let y: Vec<f64> = (0..g.patch() * g.positions())
            .map(|i| ((i * 3) % 13) as f64 - 6.0)
            .collect();
        let mut cols = vec![0.0; y.len()];
        im2col(&x, &g, &mut cols);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; x.len()];
        col2im_add(&y, &g, &mut back);
        let rhs: f64 = back.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert_eq!(lhs, rhs);
    }
}
