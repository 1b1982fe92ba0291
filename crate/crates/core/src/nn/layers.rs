//! Dense and valid-padding 2-D convolution layers over row-major buffers.
//!
//! Feature maps are laid out as (row, col, channel). Convolution weights are
//! stored as (kernel_row, kernel_col, in_channel, out_channel) so the inner
//! loops run over contiguous output channels.

use rand::Rng;

use crate::nn::Tensor;

#[inline]
pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

/// Derivative of [`leaky_relu`]; the kink at zero takes the positive branch.
#[inline]
pub fn leaky_relu_grad(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        slope
    }
}

/// Uniform fan-in scaled initialization for leaky ReLU layers.
fn he_uniform<R: Rng + ?Sized>(t: &mut Tensor, fan_in: usize, slope: f64, rng: &mut R) {
    let bound = (6.0 / ((1.0 + slope * slope) * fan_in as f64)).sqrt();
    for v in t.data_mut() {
        *v = rng.gen_range(-bound..bound);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// Shape (outputs, inputs).
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[outputs, inputs]),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, slope: f64, rng: &mut R) -> Self {
        let mut layer = Self::zeros(inputs, outputs);
        he_uniform(&mut layer.weight, inputs, slope, rng);
        layer
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, x: &[f64], y: &mut [f64]) {
        let n_in = self.inputs();
        debug_assert_eq!(x.len(), n_in);
        for ((out, row), b) in y
            .iter_mut()
            .zip(self.weight.data().chunks_exact(n_in))
            .zip(self.bias.data())
        {
            *out = b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    /// Accumulates parameter gradients and, if requested, writes the input
    /// gradient into `dx`.
    pub fn backward(
        &self,
        x: &[f64],
        dy: &[f64],
        dw: &mut [f64],
        db: &mut [f64],
        dx: Option<&mut [f64]>,
    ) {
        let n_in = self.inputs();
        for ((g, row), b) in dy.iter().zip(dw.chunks_exact_mut(n_in)).zip(db.iter_mut()) {
            if *g == 0.0 {
                continue;
            }
            *b += g;
            for (w, v) in row.iter_mut().zip(x) {
                *w += g * v;
            }
        }
        if let Some(dx) = dx {
            dx.fill(0.0);
            for (g, row) in dy.iter().zip(self.weight.data().chunks_exact(n_in)) {
                if *g == 0.0 {
                    continue;
                }
                for (d, w) in dx.iter_mut().zip(row) {
                    *d += g * w;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    /// Shape (kernel, kernel, in_channels, out_channels).
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
}

impl Conv2d {
    pub fn zeros(kernel: usize, in_channels: usize, out_channels: usize, stride: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[kernel, kernel, in_channels, out_channels]),
            bias: Tensor::zeros(&[out_channels]),
            stride,
        }
    }

    pub fn init<R: Rng + ?Sized>(
        kernel: usize,
        in_channels: usize,
        out_channels: usize,
        stride: usize,
        slope: f64,
        rng: &mut R,
    ) -> Self {
        let mut layer = Self::zeros(kernel, in_channels, out_channels, stride);
        he_uniform(&mut layer.weight, kernel * kernel * in_channels, slope, rng);
        layer
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[2]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[3]
    }

    /// Output spatial size of a valid convolution: `(n − k) / s + 1`.
    pub fn output_dims(&self, rows: usize, cols: usize) -> (usize, usize) {
        let k = self.kernel();
        ((rows - k) / self.stride + 1, (cols - k) / self.stride + 1)
    }

    /// Zero input values are skipped, which makes sparse inputs cheap.
    pub fn forward(&self, input: &[f64], rows: usize, cols: usize, out: &mut [f64]) {
        let (k, cin, cout, s) = (self.kernel(), self.in_channels(), self.out_channels(), self.stride);
        let (orows, ocols) = self.output_dims(rows, cols);
        let w = self.weight.data();
        for oy in 0..orows {
            for ox in 0..ocols {
                let o = &mut out[(oy * ocols + ox) * cout..][..cout];
                o.copy_from_slice(self.bias.data());
                for ky in 0..k {
                    for kx in 0..k {
                        let px = &input[((oy * s + ky) * cols + ox * s + kx) * cin..][..cin];
                        let wk = &w[(ky * k + kx) * cin * cout..][..cin * cout];
                        for (c, &v) in px.iter().enumerate() {
                            if v == 0.0 {
                                continue;
                            }
                            for (acc, wv) in o.iter_mut().zip(&wk[c * cout..(c + 1) * cout]) {
                                *acc += v * wv;
                            }
                        }
                    }
                }
            }
        }
    }

    /// Accumulates weight/bias gradients for upstream gradient `dout`; writes
    /// the input gradient into `din` when given.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        input: &[f64],
        rows: usize,
        cols: usize,
        dout: &[f64],
        dw: &mut [f64],
        db: &mut [f64],
        mut din: Option<&mut [f64]>,
    ) {
        let (k, cin, cout, s) = (self.kernel(), self.in_channels(), self.out_channels(), self.stride);
        let (orows, ocols) = self.output_dims(rows, cols);
        let w = self.weight.data();
        if let Some(d) = din.as_deref_mut() {
            d.fill(0.0);
        }
        for oy in 0..orows {
            for ox in 0..ocols {
                let g = &dout[(oy * ocols + ox) * cout..][..cout];
                for (b, gv) in db.iter_mut().zip(g) {
                    *b += gv;
                }
                for ky in 0..k {
                    for kx in 0..k {
                        let base = ((oy * s + ky) * cols + ox * s + kx) * cin;
                        let px = &input[base..base + cin];
                        let woff = (ky * k + kx) * cin * cout;
                        for (c, &v) in px.iter().enumerate() {
                            if v == 0.0 {
                                continue;
                            }
                            let dwk = &mut dw[woff + c * cout..woff + (c + 1) * cout];
                            for (d, gv) in dwk.iter_mut().zip(g) {
                                *d += v * gv;
                            }
                        }
                        if let Some(d) = din.as_deref_mut() {
                            for c in 0..cin {
                                let wk = &w[woff + c * cout..woff + (c + 1) * cout];
                                d[base + c] += wk.iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
                            }
                        }
                    }
                }
            }
        }
    }
}
