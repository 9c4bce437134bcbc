//! Plain dense kernels shared by graph evaluation and inference.

use alloc::vec;
use alloc::vec::Vec;

/// `out[m×n] += a[m×k] · b[k×n]`.
pub(crate) fn matmul_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let s = a[i * k + p];
            if s == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &v) in row.iter_mut().zip(brow) {
                *o += s * v;
            }
        }
    }
}

pub(crate) fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    matmul_acc(a, b, &mut out, m, k, n);
    out
}

/// `out[m×k] += g[m×n] · b[k×n]ᵀ`.
pub(crate) fn matmul_a_bt_acc(g: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            out[i * k + p] += dot(grow, brow);
        }
    }
}

/// `out[k×n] += a[m×k]ᵀ · g[m×n]`.
pub(crate) fn matmul_at_b_acc(a: &[f64], g: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let s = a[i * k + p];
            if s == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &v) in orow.iter_mut().zip(grow) {
                *o += s * v;
            }
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Geometry of a stride-1, same-padded square-kernel convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub out_channels: usize,
    pub kernel: usize,
}

impl ConvGeom {
    fn pad(&self) -> isize {
        (self.kernel / 2) as isize
    }

    fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn plane(&self) -> usize {
        self.height * self.width
    }

    /// Unfolds one `C×H×W` sample into a `(C·k·k) × (H·W)` column matrix.
    fn im2col(&self, x: &[f64], cols: &mut [f64]) {
        let (h, w, k, pad) = (self.height, self.width, self.kernel, self.pad());
        let plane = self.plane();
        for c in 0..self.channels {
            let xc = &x[c * plane..(c + 1) * plane];
            for ki in 0..k {
                for kj in 0..k {
                    let r = (c * k + ki) * k + kj;
                    let dst = &mut cols[r * plane..(r + 1) * plane];
                    for y in 0..h {
                        let sy = y as isize + ki as isize - pad;
                        let drow = &mut dst[y * w..(y + 1) * w];
                        if sy < 0 || sy >= h as isize {
                            drow.iter_mut().for_each(|v| *v = 0.0);
                            continue;
                        }
                        let srow = &xc[sy as usize * w..(sy as usize + 1) * w];
                        for (xo, d) in drow.iter_mut().enumerate() {
                            let sx = xo as isize + kj as isize - pad;
                            *d = if sx < 0 || sx >= w as isize {
                                0.0
                            } else {
                                srow[sx as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    /// Scatter-adds a column matrix back onto a `C×H×W` gradient.
    fn col2im(&self, cols: &[f64], dx: &mut [f64]) {
        let (h, w, k, pad) = (self.height, self.width, self.kernel, self.pad());
        let plane = self.plane();
        for c in 0..self.channels {
            let dxc = &mut dx[c * plane..(c + 1) * plane];
            for ki in 0..k {
                for kj in 0..k {
                    let r = (c * k + ki) * k + kj;
                    let src = &cols[r * plane..(r + 1) * plane];
                    for y in 0..h {
                        let sy = y as isize + ki as isize - pad;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for xo in 0..w {
                            let sx = xo as isize + kj as isize - pad;
                            if sx >= 0 && sx < w as isize {
                                dxc[sy as usize * w + sx as usize] += src[y * w + xo];
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward(
    geom: ConvGeom,
    batch: usize,
    x: &[f64],
    weight: &[f64],
    bias: &[f64],
) -> Vec<f64> {
    let plane = geom.plane();
    let in_size = geom.channels * plane;
    let out_size = geom.out_channels * plane;
    let rows = geom.col_rows();
    let mut cols = vec![0.0; rows * plane];
    let mut out = vec![0.0; batch * out_size];
    for b in 0..batch {
        geom.im2col(&x[b * in_size..(b + 1) * in_size], &mut cols);
        let ob = &mut out[b * out_size..(b + 1) * out_size];
        for (o, &bo) in bias.iter().enumerate() {
            ob[o * plane..(o + 1) * plane].iter_mut().for_each(|v| *v = bo);
        }
        matmul_acc(weight, &cols, ob, geom.out_channels, rows, plane);
    }
    out
}

/// Accumulates gradients of a convolution. `dx` is skipped when `None`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward(
    geom: ConvGeom,
    batch: usize,
    x: &[f64],
    weight: &[f64],
    grad_out: &[f64],
    mut dx: Option<&mut [f64]>,
    dw: Option<&mut [f64]>,
    db: Option<&mut [f64]>,
) {
    let plane = geom.plane();
    let in_size = geom.channels * plane;
    let out_size = geom.out_channels * plane;
    let rows = geom.col_rows();
    if let Some(db) = db {
        for b in 0..batch {
            let gb = &grad_out[b * out_size..(b + 1) * out_size];
            for (o, d) in db.iter_mut().enumerate() {
                *d += gb[o * plane..(o + 1) * plane].iter().sum::<f64>();
            }
        }
    }
    if dx.is_none() && dw.is_none() {
        return;
    }
    let mut cols = vec![0.0; rows * plane];
    let mut dcols = vec![0.0; rows * plane];
    let mut dw = dw;
    for b in 0..batch {
        let gb = &grad_out[b * out_size..(b + 1) * out_size];
        if let Some(dw) = dw.as_deref_mut() {
            geom.im2col(&x[b * in_size..(b + 1) * in_size], &mut cols);
            matmul_a_bt_acc(gb, &cols, dw, geom.out_channels, rows, plane);
        }
        if let Some(dx) = dx.as_deref_mut() {
            dcols.iter_mut().for_each(|v| *v = 0.0);
            matmul_at_b_acc(weight, gb, &mut dcols, geom.out_channels, rows, plane);
            geom.col2im(&dcols, &mut dx[b * in_size..(b + 1) * in_size]);
        }
    }
}

/// Non-overlapping `size×size` average pooling over `planes` planes of `h×w`.
pub(crate) fn mean_pool_forward(x: &[f64], planes: usize, h: usize, w: usize, size: usize) -> Vec<f64> {
    let (oh, ow) = (h / size, w / size);
    let scale = 1.0 / (size * size) as f64;
    let mut out = vec![0.0; planes * oh * ow];
    for p in 0..planes {
        let xp = &x[p * h * w..(p + 1) * h * w];
        let op = &mut out[p * oh * ow..(p + 1) * oh * ow];
        for y in 0..h {
            let orow = &mut op[(y / size) * ow..(y / size + 1) * ow];
            for (xo, &v) in xp[y * w..(y + 1) * w].iter().enumerate() {
                orow[xo / size] += v;
            }
        }
        op.iter_mut().for_each(|v| *v *= scale);
    }
    out
}

pub(crate) fn mean_pool_backward(
    grad_out: &[f64],
    dx: &mut [f64],
    planes: usize,
    h: usize,
    w: usize,
    size: usize,
) {
    let (oh, ow) = (h / size, w / size);
    let scale = 1.0 / (size * size) as f64;
    for p in 0..planes {
        let gp = &grad_out[p * oh * ow..(p + 1) * oh * ow];
        let dp = &mut dx[p * h * w..(p + 1) * h * w];
        for y in 0..h {
            let grow = &gp[(y / size) * ow..(y / size + 1) * ow];
            for (xo, d) in dp[y * w..(y + 1) * w].iter_mut().enumerate() {
                *d += grow[xo / size] * scale;
            }
        }
    }
}
