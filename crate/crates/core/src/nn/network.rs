//! The convolutional Q-network: conv(32, 6×6, /2) → conv(64, 3×3, /2) →
//! dense(100) → linear(5), leaky ReLU after every hidden layer.

use rand::Rng;

use crate::encoder::{OccupancyGrid, GRID_CHANNELS, GRID_COLS, GRID_LEN, GRID_ROWS};
use crate::nn::layers::{leaky_relu, leaky_relu_grad, Conv2d, Dense};
use crate::nn::{next_stamp, ForwardCache, NetError, QFunction, Tensor, NUM_ACTIONS};

pub const CONV1_FILTERS: usize = 32;
pub const CONV1_KERNEL: usize = 6;
pub const CONV2_FILTERS: usize = 64;
pub const CONV2_KERNEL: usize = 3;
pub const CONV_STRIDE: usize = 2;
pub const HIDDEN_UNITS: usize = 100;

pub const CONV1_ROWS: usize = (GRID_ROWS - CONV1_KERNEL) / CONV_STRIDE + 1;
pub const CONV1_COLS: usize = (GRID_COLS - CONV1_KERNEL) / CONV_STRIDE + 1;
pub const CONV2_ROWS: usize = (CONV1_ROWS - CONV2_KERNEL) / CONV_STRIDE + 1;
pub const CONV2_COLS: usize = (CONV1_COLS - CONV2_KERNEL) / CONV_STRIDE + 1;
pub const CONV1_LEN: usize = CONV1_ROWS * CONV1_COLS * CONV1_FILTERS;
pub const FLAT_LEN: usize = CONV2_ROWS * CONV2_COLS * CONV2_FILTERS;

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

/// Weights and biases of the Q-network.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub dense: Dense,
    pub output: Dense,
    pub leaky_slope: f64,
    stamp: u64,
}

/// Activations kept from a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub struct QNetworkCache {
    stamp: u64,
    input: Vec<f64>,
    conv1_pre: Vec<f64>,
    conv1_act: Vec<f64>,
    conv2_pre: Vec<f64>,
    conv2_act: Vec<f64>,
    dense_pre: Vec<f64>,
    dense_act: Vec<f64>,
    q: [f64; NUM_ACTIONS],
}

impl QNetworkCache {
    /// Shape of each intermediate feature map, (rows, cols, channels) or (len,).
    pub fn activation_shapes(&self) -> [Vec<usize>; 4] {
        [
            vec![CONV1_ROWS, CONV1_COLS, CONV1_FILTERS],
            vec![CONV2_ROWS, CONV2_COLS, CONV2_FILTERS],
            vec![self.dense_act.len()],
            vec![self.q.len()],
        ]
    }

    pub fn conv1_output(&self) -> &[f64] {
        &self.conv1_act
    }

    pub fn conv2_output(&self) -> &[f64] {
        &self.conv2_act
    }

    pub fn dense_output(&self) -> &[f64] {
        &self.dense_act
    }
}

impl ForwardCache for QNetworkCache {
    fn q_values(&self) -> [f64; NUM_ACTIONS] {
        self.q
    }
}

impl QNetwork {
    /// All-zero parameters.
    pub fn zeros(leaky_slope: f64) -> Self {
        Self {
            conv1: Conv2d::zeros(CONV1_KERNEL, GRID_CHANNELS, CONV1_FILTERS, CONV_STRIDE),
            conv2: Conv2d::zeros(CONV2_KERNEL, CONV1_FILTERS, CONV2_FILTERS, CONV_STRIDE),
            dense: Dense::zeros(FLAT_LEN, HIDDEN_UNITS),
            output: Dense::zeros(HIDDEN_UNITS, NUM_ACTIONS),
            leaky_slope,
            stamp: next_stamp(),
        }
    }

    /// Fan-in scaled uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(leaky_slope: f64, rng: &mut R) -> Self {
        let a = leaky_slope;
        Self {
            conv1: Conv2d::init(CONV1_KERNEL, GRID_CHANNELS, CONV1_FILTERS, CONV_STRIDE, a, rng),
            conv2: Conv2d::init(CONV2_KERNEL, CONV1_FILTERS, CONV2_FILTERS, CONV_STRIDE, a, rng),
            dense: Dense::init(FLAT_LEN, HIDDEN_UNITS, a, rng),
            output: Dense::init(HIDDEN_UNITS, NUM_ACTIONS, 1.0, rng),
            leaky_slope,
            stamp: next_stamp(),
        }
    }

    /// Total number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Parameter shapes in canonical order.
    pub fn expected_shapes() -> [Vec<usize>; 8] {
        [
            vec![CONV1_KERNEL, CONV1_KERNEL, GRID_CHANNELS, CONV1_FILTERS],
            vec![CONV1_FILTERS],
            vec![CONV2_KERNEL, CONV2_KERNEL, CONV1_FILTERS, CONV2_FILTERS],
            vec![CONV2_FILTERS],
            vec![HIDDEN_UNITS, FLAT_LEN],
            vec![HIDDEN_UNITS],
            vec![NUM_ACTIONS, HIDDEN_UNITS],
            vec![NUM_ACTIONS],
        ]
    }

    /// Rebuilds a network from tensors in canonical order.
    pub fn from_tensors(leaky_slope: f64, tensors: Vec<Tensor>) -> Result<Self, NetError> {
        if !(leaky_slope > 0.0 && leaky_slope.is_finite()) {
            return Err(NetError::InvalidHyperparameter("leaky_slope".into()));
        }
        let shapes = Self::expected_shapes();
        if tensors.len() != shapes.len() {
            return Err(NetError::ShapeMismatch {
                expected: format!("{} tensors", shapes.len()),
                found: format!("{} tensors", tensors.len()),
            });
        }
        for (t, s) in tensors.iter().zip(&shapes) {
            if t.shape() != s.as_slice() {
                return Err(NetError::ShapeMismatch {
                    expected: format!("{s:?}"),
                    found: format!("{:?}", t.shape()),
                });
            }
        }
        let mut it = tensors.into_iter();
        let mut next = || it.next().unwrap();
        Ok(Self {
            conv1: Conv2d {
                weight: next(),
                bias: next(),
                stride: CONV_STRIDE,
            },
            conv2: Conv2d {
                weight: next(),
                bias: next(),
                stride: CONV_STRIDE,
            },
            dense: Dense {
                weight: next(),
                bias: next(),
            },
            output: Dense {
                weight: next(),
                bias: next(),
            },
            leaky_slope,
            stamp: next_stamp(),
        })
    }

    pub fn forward_grid(&self, grid: &OccupancyGrid) -> Result<QNetworkCache, NetError> {
        self.forward_slice(grid.as_slice())
    }

    /// Forward pass on a raw (18, 26, C) buffer.
    pub fn forward_slice(&self, input: &[f64]) -> Result<QNetworkCache, NetError> {
        if input.len() != GRID_LEN {
            return Err(NetError::ShapeMismatch {
                expected: format!("{GRID_LEN} input values ({GRID_ROWS}x{GRID_COLS}x{GRID_CHANNELS})"),
                found: format!("{} values", input.len()),
            });
        }
        let a = self.leaky_slope;
        let mut conv1_pre = vec![0.0; CONV1_LEN];
        self.conv1.forward(input, GRID_ROWS, GRID_COLS, &mut conv1_pre);
        let conv1_act: Vec<f64> = conv1_pre.iter().map(|&z| leaky_relu(z, a)).collect();

        let mut conv2_pre = vec![0.0; FLAT_LEN];
        self.conv2.forward(&conv1_act, CONV1_ROWS, CONV1_COLS, &mut conv2_pre);
        let conv2_act: Vec<f64> = conv2_pre.iter().map(|&z| leaky_relu(z, a)).collect();

        let mut dense_pre = vec![0.0; HIDDEN_UNITS];
        self.dense.forward(&conv2_act, &mut dense_pre);
        let dense_act: Vec<f64> = dense_pre.iter().map(|&z| leaky_relu(z, a)).collect();

        let mut q = [0.0; NUM_ACTIONS];
        self.output.forward(&dense_act, &mut q);
        Ok(QNetworkCache {
            stamp: self.stamp,
            input: input.to_vec(),
            conv1_pre,
            conv1_act,
            conv2_pre,
            conv2_act,
            dense_pre,
            dense_act,
            q,
        })
    }
}

impl QFunction for QNetwork {
    type Input = OccupancyGrid;
    type Cache = QNetworkCache;

    fn forward(&self, input: &OccupancyGrid) -> Result<QNetworkCache, NetError> {
        self.forward_grid(input)
    }

    fn backward_into(
        &self,
        cache: &QNetworkCache,
        dq: &[f64; NUM_ACTIONS],
        grads: &mut [Tensor],
    ) -> Result<(), NetError> {
        if cache.stamp != self.stamp {
            return Err(NetError::StaleCache);
        }
        check_grad_shapes(&self.params(), grads)?;
        let a = self.leaky_slope;
        let [g_c1w, g_c1b, g_c2w, g_c2b, g_dw, g_db, g_ow, g_ob] = grads else {
            unreachable!("shape check guarantees eight tensors");
        };

        let mut d_dense = vec![0.0; HIDDEN_UNITS];
        self.output.backward(
            &cache.dense_act,
            dq,
            g_ow.data_mut(),
            g_ob.data_mut(),
            Some(&mut d_dense),
        );
        for (d, &z) in d_dense.iter_mut().zip(&cache.dense_pre) {
            *d *= leaky_relu_grad(z, a);
        }

        let mut d_conv2 = vec![0.0; FLAT_LEN];
        self.dense.backward(
            &cache.conv2_act,
            &d_dense,
            g_dw.data_mut(),
            g_db.data_mut(),
            Some(&mut d_conv2),
        );
        for (d, &z) in d_conv2.iter_mut().zip(&cache.conv2_pre) {
            *d *= leaky_relu_grad(z, a);
        }

        let mut d_conv1 = vec![0.0; CONV1_LEN];
        self.conv2.backward(
            &cache.conv1_act,
            CONV1_ROWS,
            CONV1_COLS,
            &d_conv2,
            g_c2w.data_mut(),
            g_c2b.data_mut(),
            Some(&mut d_conv1),
        );
        for (d, &z) in d_conv1.iter_mut().zip(&cache.conv1_pre) {
            *d *= leaky_relu_grad(z, a);
        }

        self.conv1.backward(
            &cache.input,
            GRID_ROWS,
            GRID_COLS,
            &d_conv1,
            g_c1w.data_mut(),
            g_c1b.data_mut(),
            None,
        );
        Ok(())
    }

    fn params(&self) -> Vec<&Tensor> {
        vec![
            &self.conv1.weight,
            &self.conv1.bias,
            &self.conv2.weight,
            &self.conv2.bias,
            &self.dense.weight,
            &self.dense.bias,
            &self.output.weight,
            &self.output.bias,
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.stamp = next_stamp();
        vec![
            &mut self.conv1.weight,
            &mut self.conv1.bias,
            &mut self.conv2.weight,
            &mut self.conv2.bias,
            &mut self.dense.weight,
            &mut self.dense.bias,
            &mut self.output.weight,
            &mut self.output.bias,
        ]
    }
}

pub(crate) fn check_grad_shapes(params: &[&Tensor], grads: &[Tensor]) -> Result<(), NetError> {
    if params.len() != grads.len()
        || params.iter().zip(grads).any(|(p, g)| p.shape() != g.shape())
    {
        return Err(NetError::ShapeMismatch {
            expected: format!("{:?}", params.iter().map(|p| p.shape()).collect::<Vec<_>>()),
            found: format!("{:?}", grads.iter().map(|g| g.shape()).collect::<Vec<_>>()),
        });
    }
    Ok(())
}
