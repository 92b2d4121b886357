//! Differentiable layer primitives on flat channel-last buffers.

/// Geometry of a stride-1 circular convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub cin: usize,
    pub cout: usize,
}

impl ConvShape {
    pub fn input_len(&self) -> usize {
        self.h * self.w * self.cin
    }

    pub fn output_len(&self) -> usize {
        self.h * self.w * self.cout
    }

    pub fn kernel_len(&self) -> usize {
        self.kh * self.kw * self.cin * self.cout
    }

    pub fn multiply_adds(&self) -> u64 {
        (self.h * self.w * self.kh * self.kw * self.cin * self.cout) as u64
    }
}

/// Circular (wrap-around) convolution, CNN style:
/// `out[i, j, o] = sum_{a, b, c} k[a, b, c, o] * x[i + a - kh/2, j + b - kw/2, c]`
/// with indices taken modulo the image extents. Kernel layout is
/// `kh x kw x cin x cout`, row-major.
pub fn circconv_forward(kernel: &[f64], x: &[f64], s: ConvShape) -> Vec<f64> {
    debug_assert_eq!(kernel.len(), s.kernel_len());
    debug_assert_eq!(x.len(), s.input_len());
    let (ch, cw) = (s.kh / 2, s.kw / 2);
    let mut out = vec![0.0; s.output_len()];
    for i in 0..s.h {
        for j in 0..s.w {
            let o = (i * s.w + j) * s.cout;
            let out_px = &mut out[o..o + s.cout];
            for a in 0..s.kh {
                let ii = (i + s.h + a - ch) % s.h;
                for b in 0..s.kw {
                    let jj = (j + s.w + b - cw) % s.w;
                    let xi = (ii * s.w + jj) * s.cin;
                    for c in 0..s.cin {
                        let v = x[xi + c];
                        let ko = ((a * s.kw + b) * s.cin + c) * s.cout;
                        for (acc, &kv) in out_px.iter_mut().zip(&kernel[ko..ko + s.cout]) {
                            *acc += kv * v;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Gradients of [`circconv_forward`] with respect to the kernel and the input.
pub fn circconv_backward(
    kernel: &[f64],
    x: &[f64],
    upstream: &[f64],
    s: ConvShape,
) -> (Vec<f64>, Vec<f64>) {
    debug_assert_eq!(upstream.len(), s.output_len());
    let (ch, cw) = (s.kh / 2, s.kw / 2);
    let mut dk = vec![0.0; s.kernel_len()];
    let mut dx = vec![0.0; s.input_len()];
    for i in 0..s.h {
        for j in 0..s.w {
            let o = (i * s.w + j) * s.cout;
            let g = &upstream[o..o + s.cout];
            for a in 0..s.kh {
                let ii = (i + s.h + a - ch) % s.h;
                for b in 0..s.kw {
                    let jj = (j + s.w + b - cw) % s.w;
                    let xi = (ii * s.w + jj) * s.cin;
                    for c in 0..s.cin {
                        let v = x[xi + c];
                        let ko = ((a * s.kw + b) * s.cin + c) * s.cout;
                        let mut acc = 0.0;
                        for ((dkv, &kv), &gv) in dk[ko..ko + s.cout]
                            .iter_mut()
                            .zip(&kernel[ko..ko + s.cout])
                            .zip(g)
                        {
                            *dkv += v * gv;
                            acc += kv * gv;
                        }
                        dx[xi + c] += acc;
                    }
                }
            }
        }
    }
    (dk, dx)
}

/// `y = W x + b` with `W` row-major `rows x cols`.
pub fn dense_forward(weights: &[f64], bias: Option<&[f64]>, x: &[f64], rows: usize) -> Vec<f64> {
    let cols = x.len();
    debug_assert_eq!(weights.len(), rows * cols);
    (0..rows)
        .map(|r| {
            let dot: f64 = weights[r * cols..(r + 1) * cols]
                .iter()
                .zip(x)
                .map(|(w, v)| w * v)
                .sum();
            dot + bias.map_or(0.0, |b| b[r])
        })
        .collect()
}

/// Returns `(dW, db, dx)`; `db` equals the upstream gradient.
pub fn dense_backward(weights: &[f64], x: &[f64], upstream: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (rows, cols) = (upstream.len(), x.len());
    let mut dw = vec![0.0; rows * cols];
    let mut dx = vec![0.0; cols];
    for r in 0..rows {
        let g = upstream[r];
        let wr = &weights[r * cols..(r + 1) * cols];
        for ((d, &xv), (dxv, &wv)) in dw[r * cols..(r + 1) * cols]
            .iter_mut()
            .zip(x)
            .zip(dx.iter_mut().zip(wr))
        {
            *d = g * xv;
            *dxv += g * wv;
        }
    }
    (dw, upstream.to_vec(), dx)
}

pub fn leaky_relu(x: &[f64], alpha: f64) -> Vec<f64> {
    x.iter().map(|&v| if v > 0.0 { v } else { alpha * v }).collect()
}

/// Gradient through leaky ReLU given the pre-activation input.
pub fn leaky_relu_backward(x: &[f64], upstream: &[f64], alpha: f64) -> Vec<f64> {
    x.iter()
        .zip(upstream)
        .map(|(&v, &g)| if v > 0.0 { g } else { alpha * g })
        .collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy of `softmax(logits)` against `label`, with its gradient
/// with respect to the logits.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let p = softmax(logits);
    let loss = -p[label].max(1e-300).ln();
    let mut grad = p;
    grad[label] -= 1.0;
    (loss, grad)
}

/// Gradient reversal: identity forward.
pub fn reverse_grad_forward(x: &[f64]) -> Vec<f64> {
    x.to_vec()
}

/// Gradient reversal: negated upstream gradient.
pub fn reverse_grad_backward(upstream: &[f64]) -> Vec<f64> {
    upstream.iter().map(|g| -g).collect()
}
